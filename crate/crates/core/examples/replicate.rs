//! Monte Carlo table for one design point.
//!
//! `cargo run --release --example replicate -- [reps] [T] [rho] [kappa] [dgp]`

use std::time::Instant;

use pcluster::simulation::{run_monte_carlo, Dgp, DgpConfig, EstimatorSettings};
use pcluster::Method;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps = arg(&args, 1, 100usize);
    let t = arg(&args, 2, 50usize);
    let rho = arg(&args, 3, 0.0f64);
    let kappa = arg(&args, 4, 0.0f64);
    let dgp = Dgp::from_id(arg(&args, 5, 1u8)).expect("dgp must be 1 or 2");
    let config = DgpConfig { rho, kappa, ..DgpConfig::new(50, t, dgp) };
    let start = Instant::now();
    let rows = run_monte_carlo(&config, &Method::ALL, &EstimatorSettings::default(), reps, 20240601)
        .expect("valid configuration");
    println!("{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6}", "estimator", "bias", "var", "cov", "wid", "G", "C", "fail");
    for s in rows {
        println!(
            "{:<12} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7} {:>7} {:>6}",
            s.method.name(),
            s.bias,
            s.variance,
            s.coverage,
            s.width,
            s.mean_g.map_or("-".into(), |g| format!("{g:.3}")),
            s.mean_c.map_or("-".into(), |c| format!("{c:.3}")),
            s.n_failed
        );
    }
    eprintln!("{reps} replications in {:.1?}", start.elapsed());
}
