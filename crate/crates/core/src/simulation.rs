//! Monte Carlo engine for the two simulation designs.
//!
//! `y_it = x_it β + f(α_i, γ_t) + v_it` and `x_it = h(α_i, γ_t) + u_it`, with
//! `α_i ~ Gamma(1, 1)`, `γ_t` a Gamma-innovation AR(1) and `u`, `v` Gaussian
//! AR(1) errors with unit stationary variance.
//!
//! Replication `r` draws its data from stream `(seed, [r, 0])` and seeds the
//! clustering step with `derive_seed(seed, [r, 1])`. Per-replication results
//! are collected in replication order and reduced sequentially, so summaries
//! do not depend on the number of threads.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::benchmarks;
use crate::clustering::{ClusteringOptions, NumClusters};
use crate::error::{Error, Result};
use crate::estimators::{self, CrossFitCounts};
use crate::kmeans;
use crate::panel::PanelData;
use crate::result::{ClusterCount, EstimateResult, Method};
use crate::seeding;

/// `Φ^{-1}(0.975)`.
pub const CRITICAL_VALUE: f64 = 1.959964;
pub const DEFAULT_BURN_IN: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dgp {
    /// CES-type: `f = (α^10/2 + γ^10/2)^{1/10}`, `h = f^2`.
    Ces,
    /// `f = α² + αγ + sin(αγ)`, `h = γ² + αγ + sin(αγ)`.
    Polynomial,
}

impl Dgp {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Dgp::Ces),
            2 => Ok(Dgp::Polynomial),
            _ => Err(Error::InvalidInput(format!("unknown DGP {id}, expected 1 or 2"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Dgp::Ces => 1,
            Dgp::Polynomial => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub dgp: Dgp,
    /// AR coefficient of `γ_t`.
    pub rho: f64,
    /// AR coefficient of `u_it` and `v_it`.
    pub kappa: f64,
    pub beta: f64,
    pub burn_in: usize,
}

impl DgpConfig {
    pub fn new(n: usize, t: usize, dgp: Dgp) -> Self {
        Self { n, t, dgp, rho: 0.0, kappa: 0.0, beta: 1.0, burn_in: DEFAULT_BURN_IN }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 2 {
            return Err(Error::InvalidInput(format!("need N, T >= 2, got N={}, T={}", self.n, self.t)));
        }
        for (name, v) in [("rho", self.rho), ("kappa", self.kappa)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !self.beta.is_finite() {
            return Err(Error::NonFinite("beta".into()));
        }
        Ok(())
    }
}

/// One simulated panel with its latent components.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpDraw {
    pub panel: PanelData,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub f_vals: DMatrix<f64>,
    pub h_vals: DMatrix<f64>,
}

/// Shape and scale of the `γ_t` innovations. The second parameter
/// `(1-ρ)/(1-ρ²)` is applied as a rate, which gives `γ_t` stationary mean
/// and variance 1 for every `ρ`.
pub fn gamma_innovation_params(rho: f64) -> (f64, f64) {
    let shape = (1.0 - rho).powi(2) / (1.0 - rho * rho);
    let rate = (1.0 - rho) / (1.0 - rho * rho);
    (shape, 1.0 / rate)
}

/// AR(1) with Gamma innovations started from `Gamma(1, 1)`; the first
/// `burn_in` values are discarded.
pub fn draw_gamma_ar1(t: usize, rho: f64, burn_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let start = Gamma::new(1.0, 1.0).expect("valid Gamma(1, 1)");
    let (shape, scale) = gamma_innovation_params(rho);
    let innovation = Gamma::new(shape, scale).expect("rho in [0, 1) gives positive parameters");
    let mut g: f64 = start.sample(rng);
    for _ in 0..burn_in {
        g = rho * g + innovation.sample(rng);
    }
    (0..t)
        .map(|_| {
            g = rho * g + innovation.sample(rng);
            g
        })
        .collect()
}

/// Independent rows of a Gaussian AR(1) with unit stationary variance,
/// started at `N(0, 1)`.
pub fn draw_errors_ar1(n: usize, t: usize, kappa: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let sd = (1.0 - kappa * kappa).sqrt();
    let mut w = DMatrix::zeros(n, t);
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(rng);
        w[(i, 0)] = prev;
        for s in 1..t {
            let e: f64 = StandardNormal.sample(rng);
            prev = kappa * prev + sd * e;
            w[(i, s)] = prev;
        }
    }
    w
}

/// `(f, h)` at one `(α, γ)` pair.
pub fn dgp_functions(dgp: Dgp, alpha: f64, gamma: f64) -> Result<(f64, f64)> {
    match dgp {
        Dgp::Ces => {
            if alpha < 0.0 || gamma < 0.0 {
                return Err(Error::DomainError(format!(
                    "CES design needs nonnegative alpha and gamma, got ({alpha}, {gamma})"
                )));
            }
            let s = 0.5 * alpha.powi(10) + 0.5 * gamma.powi(10);
            Ok((s.powf(0.1), s.powf(0.2)))
        }
        Dgp::Polynomial => {
            let ag = alpha * gamma;
            Ok((alpha * alpha + ag + ag.sin(), gamma * gamma + ag + ag.sin()))
        }
    }
}

/// Assembles a draw from given latent components and errors.
pub fn assemble_draw(
    config: &DgpConfig,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
) -> Result<DgpDraw> {
    let (n, t) = (alpha.len(), gamma.len());
    if u.shape() != (n, t) || v.shape() != (n, t) {
        return Err(Error::InvalidInput("error matrices do not match N x T".into()));
    }
    let mut f_vals = DMatrix::zeros(n, t);
    let mut h_vals = DMatrix::zeros(n, t);
    for i in 0..n {
        for s in 0..t {
            let (f, h) = dgp_functions(config.dgp, alpha[i], gamma[s])?;
            f_vals[(i, s)] = f;
            h_vals[(i, s)] = h;
        }
    }
    let x = &h_vals + &u;
    let y = &x * config.beta + &f_vals + &v;
    let panel = PanelData::from_matrices(y, vec![x])?;
    Ok(DgpDraw { panel, alpha, gamma, u, v, f_vals, h_vals })
}

/// Draws `α`, then `γ`, then `u`, then `v` from `rng`.
pub fn simulate_panel(config: &DgpConfig, rng: &mut impl Rng) -> Result<DgpDraw> {
    config.validate()?;
    let unit = Gamma::new(1.0, 1.0).expect("valid Gamma(1, 1)");
    let alpha: Vec<f64> = (0..config.n).map(|_| unit.sample(rng)).collect();
    let gamma = draw_gamma_ar1(config.t, config.rho, config.burn_in, rng);
    let u = draw_errors_ar1(config.n, config.t, config.kappa, rng);
    let v = draw_errors_ar1(config.n, config.t, config.kappa, rng);
    assemble_draw(config, alpha, gamma, u, v)
}

/// Tuning shared by every estimator in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSettings {
    pub unit_clusters: NumClusters,
    pub time_clusters: NumClusters,
    pub n_starts: usize,
    /// `None` uses `floor(sqrt(T))`.
    pub interactive_factors: Option<usize>,
    pub tolerance: f64,
    pub max_iter: usize,
    pub max_factors: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            unit_clusters: NumClusters::Auto,
            time_clusters: NumClusters::Auto,
            n_starts: kmeans::DEFAULT_STARTS,
            interactive_factors: None,
            tolerance: benchmarks::DEFAULT_TOLERANCE,
            max_iter: benchmarks::DEFAULT_MAX_ITER,
            max_factors: benchmarks::DEFAULT_MAX_FACTORS,
        }
    }
}

/// Runs one estimator on one panel. `seed` drives the clustering step.
pub fn run_estimator(method: Method, panel: &PanelData, settings: &EstimatorSettings, seed: u64) -> Result<EstimateResult> {
    let opts = ClusteringOptions { n_starts: settings.n_starts, seed };
    let (g, c) = (settings.unit_clusters, settings.time_clusters);
    match method {
        Method::Baseline => estimators::estimate_baseline(panel, g, c, &opts),
        Method::Blm1 => estimators::estimate_blm1(panel, g, c, &opts),
        Method::Blm2 => estimators::estimate_blm2(panel, g, c, &opts),
        Method::Crossfit => {
            let counts = match (g, c) {
                (NumClusters::Fixed(g), NumClusters::Fixed(c)) => CrossFitCounts::Fixed([(g, c); 4]),
                _ => CrossFitCounts::Auto,
            };
            estimators::estimate_crossfit(panel, counts, &opts)
        }
        Method::Twfe => benchmarks::estimate_twfe(panel),
        Method::Interactive => {
            let r = settings
                .interactive_factors
                .unwrap_or_else(|| benchmarks::default_interactive_factors(panel.n_periods()));
            benchmarks::estimate_interactive_fe(panel, r, settings.tolerance, settings.max_iter).map(|f| f.estimate)
        }
        Method::Cce => benchmarks::estimate_cce(panel),
        Method::Fa => benchmarks::estimate_factor_augmented(panel, settings.max_factors).map(|f| f.estimate),
    }
}

/// What a single replication contributes to a summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub beta: f64,
    pub se: f64,
    pub unit_clusters: Option<f64>,
    pub time_clusters: Option<f64>,
}

impl RepOutcome {
    pub fn from_estimate(est: &EstimateResult) -> Self {
        Self {
            beta: est.beta[0],
            se: est.se[0],
            unit_clusters: est.unit_clusters.as_ref().map(ClusterCount::mean),
            time_clusters: est.time_clusters.as_ref().map(ClusterCount::mean),
        }
    }
}

/// Monte Carlo performance of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub method: Method,
    pub bias: f64,
    /// Sample variance (divisor `n - 1`); 0 with a single replication.
    pub variance: f64,
    pub coverage: f64,
    pub width: f64,
    pub mean_g: Option<f64>,
    pub mean_c: Option<f64>,
    /// Successful replications.
    pub n_reps: usize,
    /// Replications where the estimator returned an error.
    pub n_failed: usize,
}

impl McSummary {
    pub fn failure_rate(&self) -> f64 {
        let total = self.n_reps + self.n_failed;
        if total == 0 {
            0.0
        } else {
            self.n_failed as f64 / total as f64
        }
    }
}

/// Neumaier-compensated mean.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut count) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let s = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
        sum = s;
        count += 1;
    }
    if count == 0 {
        f64::NAN
    } else {
        (sum + comp) / count as f64
    }
}

/// Bias, variance, coverage and width over the successful replications.
pub fn summarize(method: Method, outcomes: &[Result<RepOutcome>], true_beta: f64) -> McSummary {
    let ok: Vec<&RepOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let n = ok.len();
    let avg = mean(ok.iter().map(|o| o.beta));
    let variance = if n > 1 {
        mean(ok.iter().map(|o| (o.beta - avg).powi(2))) * n as f64 / (n - 1) as f64
    } else if n == 1 {
        0.0
    } else {
        f64::NAN
    };
    let covered = ok.iter().filter(|o| (o.beta - true_beta).abs() <= CRITICAL_VALUE * o.se).count();
    let clusters = |pick: fn(&RepOutcome) -> Option<f64>| {
        let vals: Vec<f64> = ok.iter().filter_map(|o| pick(o)).collect();
        (!vals.is_empty()).then(|| mean(vals.into_iter()))
    };
    McSummary {
        method,
        bias: avg - true_beta,
        variance,
        coverage: if n > 0 { covered as f64 / n as f64 } else { f64::NAN },
        width: mean(ok.iter().map(|o| 2.0 * CRITICAL_VALUE * o.se)),
        mean_g: clusters(|o| o.unit_clusters),
        mean_c: clusters(|o| o.time_clusters),
        n_reps: n,
        n_failed: outcomes.len() - n,
    }
}

/// Runs `n_reps` replications, every method on the same draw, and returns
/// one summary per method in the order given.
pub fn run_monte_carlo(
    config: &DgpConfig,
    methods: &[Method],
    settings: &EstimatorSettings,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<McSummary>> {
    config.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidInput("n_reps must be at least 1".into()));
    }
    let per_rep: Vec<Vec<Result<RepOutcome>>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seeding::stream(seed, &[rep, 0]);
            let est_seed = seeding::derive_seed(seed, &[rep, 1]);
            match simulate_panel(config, &mut rng) {
                Ok(draw) => methods
                    .iter()
                    .map(|&m| run_estimator(m, &draw.panel, settings, est_seed).map(|e| RepOutcome::from_estimate(&e)))
                    .collect(),
                Err(e) => methods.iter().map(|_| Err(e.clone())).collect(),
            }
        })
        .collect();
    Ok(methods
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let column: Vec<Result<RepOutcome>> = per_rep.iter().map(|rep| rep[j].clone()).collect();
            summarize(m, &column, config.beta)
        })
        .collect())
}
