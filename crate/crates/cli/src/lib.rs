//! Command-line front end for `pcluster`: CSV ingestion, estimation,
//! cluster export and Monte Carlo experiments.
//!
//! Exit status is 0 on success, 2 for input errors and 3 for estimation
//! errors (including too many failed Monte Carlo replications).

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

pub use args::{Cli, Command, OutputFormat};
pub use error::{CliError, CliResult};

/// Runs a parsed command line, inside a dedicated thread pool when
/// `--threads` is given.
pub fn run(cli: &Cli) -> CliResult<()> {
    let dispatch = || match &cli.command {
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Cluster(a) => commands::cmd_cluster(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
    };
    match cli.threads {
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(e.to_string()))?
            .install(dispatch),
        None => dispatch(),
    }
}
