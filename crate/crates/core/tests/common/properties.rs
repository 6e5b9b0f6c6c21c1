//! Property checks run both by `cargo test` and by the acceptance harness.

use nalgebra::DMatrix;
use pcluster::estimators::{fit_transformed, within_transform};
use pcluster::kmeans::{kmeans_multistart, kmeans_single, kmeanspp_labels};
use pcluster::simulation::{run_monte_carlo, simulate_panel, Dgp, DgpConfig, EstimatorSettings};
use pcluster::Method;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use super::{normal_matrix, random_panel, random_partition, rng};

/// Panel shape, cluster counts and a data seed.
pub fn panel_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, u64)> {
    (2usize..=10, 2usize..=10, 1usize..=2)
        .prop_flat_map(|(n, t, k)| (Just(n), Just(t), Just(k), 1..=n, 1..=t, any::<u64>()))
}

/// Grouped cell sums of the transformed data vanish.
pub fn within_zero_sums(case: (usize, usize, usize, usize, usize, u64)) -> Result<(), TestCaseError> {
    let (n, t, k, g, c, seed) = case;
    let mut r = rng(seed);
    let panel = random_panel(n, t, k, &mut r);
    let units = random_partition(n, g, &mut r);
    let times = random_partition(t, c, &mut r);
    let tp = within_transform(&panel, &units, &times);
    let scale = panel.y().amax().max(panel.x().iter().map(|x| x.amax()).fold(1.0, f64::max));
    for w in std::iter::once(&tp.e_hat).chain(tp.u_hat.iter()) {
        for gi in 0..g {
            for s in 0..t {
                let sum: f64 = (0..n).filter(|&i| units.label(i) == gi).map(|i| w[(i, s)]).sum();
                prop_assert!(sum.abs() <= 1e-10 * scale * n as f64, "unit-cluster sum {sum}");
            }
        }
        for i in 0..n {
            for ci in 0..c {
                let sum: f64 = (0..t).filter(|&s| times.label(s) == ci).map(|s| w[(i, s)]).sum();
                prop_assert!(sum.abs() <= 1e-10 * scale * t as f64, "time-cluster sum {sum}");
            }
        }
    }
    Ok(())
}

/// OLS residuals are orthogonal to every transformed regressor.
pub fn residual_orthogonality(case: (usize, usize, usize, usize, usize, u64)) -> Result<(), TestCaseError> {
    let (n, t, k, g, c, seed) = case;
    let mut r = rng(seed);
    let panel = random_panel(n, t, k, &mut r);
    let units = random_partition(n, g, &mut r);
    let times = random_partition(t, c, &mut r);
    let tp = within_transform(&panel, &units, &times);
    let Ok(fit) = fit_transformed(&tp.e_hat, &tp.u_hat, tp.dof) else {
        // Saturated or collinear designs have nothing to check.
        return Ok(());
    };
    for u in &tp.u_hat {
        let dot: f64 = u.iter().zip(fit.residuals.iter()).map(|(a, b)| a * b).sum();
        let norm = u.norm() * tp.e_hat.norm();
        prop_assert!(dot.abs() <= 1e-9 * norm.max(1e-300), "u'e = {dot}, scale {norm}");
    }
    Ok(())
}

pub fn kmeans_case() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..=30, 1usize..=3).prop_flat_map(|(n, dim)| (Just(n), Just(dim), 1..=n.min(6), any::<u64>()))
}

/// The k-means objective never increases along a run.
pub fn lloyd_monotone(case: (usize, usize, usize, u64)) -> Result<(), TestCaseError> {
    let (n, dim, g, seed) = case;
    let mut r = rng(seed);
    let points = normal_matrix(n, dim, &mut r);
    let labels = kmeanspp_labels(&points, g, &mut r).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let run = kmeans_single(&points, g, &labels).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for w in run.trace.windows(2) {
        prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "objective rose from {} to {}", w[0], w[1]);
    }
    prop_assert!((run.trace.last().copied().unwrap_or(f64::NAN) - run.objective).abs() <= 1e-12 * run.objective.max(1.0));
    Ok(())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Monte Carlo summaries and parallel multistart k-means are identical under
/// one and several worker threads.
pub fn thread_count_determinism(seed: u64) -> Result<(), TestCaseError> {
    let cfg = DgpConfig { burn_in: 200, rho: 0.7, ..DgpConfig::new(12, 12, Dgp::Ces) };
    let methods = [Method::Baseline, Method::Crossfit];
    let settings = EstimatorSettings { n_starts: 5, ..Default::default() };
    let run = || run_monte_carlo(&cfg, &methods, &settings, 3, seed).expect("valid config");
    // Debug output is exact for f64 and treats NaN summaries as equal.
    let one = format!("{:?}", in_pool(1, run));
    let many = format!("{:?}", in_pool(3, run));
    prop_assert_eq!(one, many);

    let points = normal_matrix(12, 2, &mut rng(seed));
    let km = |threads| in_pool(threads, || kmeans_multistart(&points, 3, 70, seed).expect("valid input"));
    prop_assert_eq!(km(1), km(4));
    Ok(())
}

pub fn dgp_case() -> impl Strategy<Value = (usize, usize, bool, f64, f64, f64, u64)> {
    (2usize..=15, 2usize..=15, any::<bool>(), 0.0f64..0.95, 0.0f64..0.95, -3.0f64..3.0, any::<u64>())
}

/// `x = h + u` and `y = xβ + f + v` hold exactly on every draw.
pub fn reconstruction(case: (usize, usize, bool, f64, f64, f64, u64)) -> Result<(), TestCaseError> {
    let (n, t, ces, rho, kappa, beta, seed) = case;
    let dgp = if ces { Dgp::Ces } else { Dgp::Polynomial };
    let cfg = DgpConfig { rho, kappa, beta, burn_in: 50, ..DgpConfig::new(n, t, dgp) };
    let draw = simulate_panel(&cfg, &mut rng(seed)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let x: DMatrix<f64> = &draw.h_vals + &draw.u;
    prop_assert_eq!(&draw.panel.x()[0], &x);
    prop_assert_eq!(draw.panel.y(), &(&x * beta + &draw.f_vals + &draw.v));
    Ok(())
}

/// Runs `check` on `cases` generated inputs; returns the failure message.
pub fn run_property<S, F>(cases: u32, strategy: S, check: F) -> Result<u32, String>
where
    S: Strategy,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, check).map(|_| cases).map_err(|e| e.to_string())
}
