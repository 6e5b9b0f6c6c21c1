use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use pcluster::clustering::{two_way_cluster, ClusteringOptions, Selection};
use pcluster::simulation::{run_estimator, run_monte_carlo, DgpConfig, EstimatorSettings, McSummary};
use pcluster::{ClusterCount, EstimateResult, Method, PanelData, Partition, Standardization};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::args::{ClusterArgs, EstimateArgs, OutputFormat, SimulateArgs, SEED_ENV};
use crate::error::{estimation, input, CliError, CliResult};
use crate::io::{read_panel_csv, LoadedPanel};

/// `--seed`, unless `PCLUSTER_SEED` is set.
pub fn resolve_seed(flag: u64) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{SEED_ENV}: expected an unsigned integer, got '{raw}'"))),
        Err(_) => Ok(flag),
    }
}

/// Two-sided normal p-value of `estimate / se`.
pub fn p_value(estimate: f64, se: f64) -> f64 {
    let z = (estimate / se).abs();
    if z.is_nan() {
        return f64::NAN;
    }
    let normal = Normal::standard();
    2.0 * normal.sf(z)
}

/// `***` below 0.01, `**` below 0.05, `*` below 0.10.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

fn count_label(count: Option<&ClusterCount>) -> String {
    match count {
        None => String::new(),
        Some(ClusterCount::Single(g)) => g.to_string(),
        Some(ClusterCount::PerFold(gs)) => gs.map(|g| g.to_string()).join("/"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub variable: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: Method,
    pub standardized: bool,
    pub seed: u64,
    pub n_starts: usize,
    pub n_units: usize,
    pub n_periods: usize,
    pub n_obs: usize,
    pub dof: usize,
    #[serde(rename = "G")]
    pub g: Option<ClusterCount>,
    #[serde(rename = "C")]
    pub c: Option<ClusterCount>,
    pub coefficients: Vec<CoefficientRow>,
}

impl EstimateReport {
    fn new(est: &EstimateResult, names: &[String], standardized: bool, seed: u64, n_starts: usize, panel: &PanelData) -> Self {
        let coefficients = names
            .iter()
            .zip(est.beta.iter().zip(&est.se))
            .map(|(name, (&b, &se))| {
                let p = p_value(b, se);
                CoefficientRow { variable: name.clone(), estimate: b, std_error: se, z_value: b / se, p_value: p, stars: stars(p) }
            })
            .collect();
        Self {
            estimator: est.method,
            standardized,
            seed,
            n_starts,
            n_units: panel.n_units(),
            n_periods: panel.n_periods(),
            n_obs: est.n_obs,
            dof: est.dof,
            g: est.unit_clusters.clone(),
            c: est.time_clusters.clone(),
            coefficients,
        }
    }

    pub fn render(&self, format: OutputFormat) -> CliResult<String> {
        match format {
            OutputFormat::Json => serde_json::to_string_pretty(self).map(|s| s + "\n").map_err(input),
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["variable", "estimate", "std_error", "z_value", "p_value", "stars", "estimator", "G", "C", "dof", "n_obs", "seed"])
                    .map_err(input)?;
                for row in &self.coefficients {
                    w.write_record([
                        row.variable.clone(),
                        format!("{:e}", row.estimate),
                        format!("{:e}", row.std_error),
                        format!("{:e}", row.z_value),
                        format!("{:e}", row.p_value),
                        row.stars.to_string(),
                        self.estimator.name().to_string(),
                        count_label(self.g.as_ref()),
                        count_label(self.c.as_ref()),
                        self.dof.to_string(),
                        self.n_obs.to_string(),
                        self.seed.to_string(),
                    ])
                    .map_err(input)?;
                }
                String::from_utf8(w.into_inner().map_err(input)?).map_err(input)
            }
            OutputFormat::Table => {
                let mut out = String::new();
                let _ = write!(out, "{}: N = {}, T = {}, dof = {}", self.estimator, self.n_units, self.n_periods, self.dof);
                if let Some(g) = &self.g {
                    let _ = write!(out, ", G = {}", count_label(Some(g)));
                }
                if let Some(c) = &self.c {
                    let _ = write!(out, ", C = {}", count_label(Some(c)));
                }
                if self.standardized {
                    out.push_str(", standardized");
                }
                let _ = writeln!(out, "\n{:<12} {:>10} {:>10} {:>8} {:>8}", "variable", "estimate", "std.err", "z", "p");
                for r in &self.coefficients {
                    let _ = writeln!(
                        out,
                        "{:<12} {:>10.3} {:>10.3} {:>8.3} {:>8.3} {}",
                        r.variable, r.estimate, r.std_error, r.z_value, r.p_value, r.stars
                    );
                }
                out.push_str("*** p<0.01, ** p<0.05, * p<0.10\n");
                Ok(out)
            }
        }
    }
}

fn emit(text: &str, output: Option<&Path>) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(input),
    }
}

fn standardize(panel: &PanelData) -> CliResult<(Standardization, PanelData)> {
    let st = Standardization::of(panel).map_err(input)?;
    let scaled = st.apply(panel).map_err(input)?;
    Ok((st, scaled))
}

/// Runs one estimator on a loaded panel and rescales to original units when
/// standardizing.
pub fn estimate(loaded: &LoadedPanel, args: &EstimateArgs, seed: u64) -> CliResult<EstimateReport> {
    let standardized = args.standardize || (args.paper_application && args.estimator != Method::Twfe);
    let n_starts = args.clustering.starts(args.paper_application);
    let settings = EstimatorSettings {
        unit_clusters: args.clustering.g,
        time_clusters: args.clustering.c,
        n_starts,
        interactive_factors: args.factors,
        max_factors: args.max_factors,
        ..EstimatorSettings::default()
    };
    let est = if standardized {
        let (st, scaled) = standardize(&loaded.panel)?;
        let mut est = run_estimator(args.estimator, &scaled, &settings, seed).map_err(estimation)?;
        for k in 0..est.beta.len() {
            est.beta[k] = st.rescale(k, est.beta[k]);
            est.se[k] = st.rescale(k, est.se[k]);
        }
        est
    } else {
        run_estimator(args.estimator, &loaded.panel, &settings, seed).map_err(estimation)?
    };
    Ok(EstimateReport::new(&est, &loaded.regressors, standardized, seed, n_starts, &loaded.panel))
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let seed = resolve_seed(args.clustering.seed)?;
    let loaded = read_panel_csv(&args.input)?;
    let report = estimate(&loaded, args, seed)?;
    emit(&report.render(args.format)?, args.output.as_deref())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionDiagnostics {
    pub n_clusters: usize,
    pub cap: usize,
    pub v_hat: f64,
    /// `Q(1), Q(2), ..` up to the selected count.
    pub q_values: Vec<f64>,
    pub objective: f64,
    pub sizes: Vec<usize>,
    /// One row per cluster; columns follow `variables`.
    pub centers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub seed: u64,
    pub n_starts: usize,
    pub standardized: bool,
    /// Center column names: the regressors, then `y`.
    pub variables: Vec<String>,
    pub units: DimensionDiagnostics,
    pub times: DimensionDiagnostics,
    #[serde(skip)]
    pub unit_partition: Partition,
    #[serde(skip)]
    pub time_partition: Partition,
}

fn diagnostics(sel: &Selection, partition: &Partition) -> DimensionDiagnostics {
    let centers = partition
        .centers()
        .map(|c: &DMatrix<f64>| (0..c.nrows()).map(|r| c.row(r).iter().copied().collect()).collect())
        .unwrap_or_default();
    DimensionDiagnostics {
        n_clusters: sel.n_clusters,
        cap: sel.cap,
        v_hat: sel.v_hat,
        q_values: sel.q_values.clone(),
        objective: sel.kmeans.objective,
        sizes: partition.sizes(),
        centers,
    }
}

/// Two-way k-means clustering with labels renumbered by first appearance.
pub fn cluster(loaded: &LoadedPanel, args: &ClusterArgs, seed: u64) -> CliResult<ClusterReport> {
    let standardized = args.standardize || args.paper_application;
    let n_starts = args.clustering.starts(args.paper_application);
    let scaled;
    let panel = if standardized {
        scaled = standardize(&loaded.panel)?.1;
        &scaled
    } else {
        &loaded.panel
    };
    let opts = ClusteringOptions { n_starts, seed };
    let clusters = two_way_cluster(panel, args.clustering.g, args.clustering.c, &opts).map_err(estimation)?;
    let unit_partition = clusters.unit_partition().canonical();
    let time_partition = clusters.time_partition().canonical();
    let mut variables = loaded.regressors.clone();
    variables.push("y".into());
    Ok(ClusterReport {
        seed,
        n_starts,
        standardized,
        variables,
        units: diagnostics(&clusters.units, &unit_partition),
        times: diagnostics(&clusters.times, &time_partition),
        unit_partition,
        time_partition,
    })
}

fn assignments_csv(ids: &[String], partition: &Partition) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["entity_id", "cluster"]).map_err(input)?;
    for (id, &label) in ids.iter().zip(partition.labels()) {
        w.write_record([id.as_str(), &(label + 1).to_string()]).map_err(input)?;
    }
    String::from_utf8(w.into_inner().map_err(input)?).map_err(input)
}

fn diagnostics_csv(report: &ClusterReport) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dimension", "G", "Q", "V_hat", "selected"]).map_err(input)?;
    for (name, d) in [("unit", &report.units), ("time", &report.times)] {
        let first = d.n_clusters + 1 - d.q_values.len();
        for (j, q) in d.q_values.iter().enumerate() {
            let g = first + j;
            w.write_record([name.to_string(), g.to_string(), format!("{q:e}"), format!("{:e}", d.v_hat), (g == d.n_clusters).to_string()])
                .map_err(input)?;
        }
    }
    String::from_utf8(w.into_inner().map_err(input)?).map_err(input)
}

fn centers_csv(variables: &[String], d: &DimensionDiagnostics) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["cluster".to_string(), "size".to_string()];
    header.extend(variables.iter().cloned());
    w.write_record(&header).map_err(input)?;
    for (g, row) in d.centers.iter().enumerate() {
        let mut record = vec![(g + 1).to_string(), d.sizes[g].to_string()];
        record.extend(row.iter().map(|v| format!("{v:e}")));
        w.write_record(&record).map_err(input)?;
    }
    String::from_utf8(w.into_inner().map_err(input)?).map_err(input)
}

fn summary_table(report: &ClusterReport) -> String {
    let mut out = String::new();
    for (name, d) in [("unit", &report.units), ("time", &report.times)] {
        let q = d.q_values.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{name} clusters: {} (cap {}), Q = {q:.3}, V_hat = {:.3}, sizes {:?}",
            d.n_clusters, d.cap, d.v_hat, d.sizes
        );
        for (g, row) in d.centers.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            let _ = writeln!(out, "  center {}: {}", g + 1, cells.join(", "));
        }
    }
    out
}

pub fn cmd_cluster(args: &ClusterArgs) -> CliResult<()> {
    let seed = resolve_seed(args.clustering.seed)?;
    let loaded = read_panel_csv(&args.input)?;
    let report = cluster(&loaded, args, seed)?;
    let dir = &args.output;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    };
    write("unit_clusters.csv", assignments_csv(loaded.panel.unit_ids(), &report.unit_partition)?)?;
    write("time_clusters.csv", assignments_csv(loaded.panel.time_ids(), &report.time_partition)?)?;
    write("unit_centers.csv", centers_csv(&report.variables, &report.units)?)?;
    write("time_centers.csv", centers_csv(&report.variables, &report.times)?)?;
    match args.format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&report).map_err(input)? + "\n";
            write("diagnostics.json", text.clone())?;
            emit(&text, None)
        }
        OutputFormat::Csv => {
            let text = diagnostics_csv(&report)?;
            write("diagnostics.csv", text.clone())?;
            emit(&text, None)
        }
        OutputFormat::Table => {
            write("diagnostics.csv", diagnostics_csv(&report)?)?;
            emit(&summary_table(&report), None)
        }
    }
}

/// One summary row per estimator and panel length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRow {
    pub estimator: Method,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub bias: f64,
    pub var: f64,
    pub cov: f64,
    pub wid: f64,
    #[serde(rename = "G_hat")]
    pub g_hat: Option<f64>,
    #[serde(rename = "C_hat")]
    pub c_hat: Option<f64>,
    pub n_reps: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl SimulationRow {
    fn new(s: &McSummary, n: usize, t: usize, seed: u64) -> Self {
        Self {
            estimator: s.method,
            n,
            t,
            bias: s.bias,
            var: s.variance,
            cov: s.coverage,
            wid: s.width,
            g_hat: s.mean_g,
            c_hat: s.mean_c,
            n_reps: s.n_reps,
            n_failed: s.n_failed,
            seed,
        }
    }

    pub fn failure_rate(&self) -> f64 {
        let total = self.n_reps + self.n_failed;
        if total == 0 {
            0.0
        } else {
            self.n_failed as f64 / total as f64
        }
    }
}

/// Runs every requested experiment; each panel length reuses the master seed.
pub fn simulate(args: &SimulateArgs, seed: u64) -> CliResult<Vec<SimulationRow>> {
    if args.estimator.is_empty() || args.t.is_empty() {
        return Err(CliError::Input("need at least one estimator and one value of T".into()));
    }
    let settings = EstimatorSettings {
        unit_clusters: args.clustering.g,
        time_clusters: args.clustering.c,
        n_starts: args.clustering.starts(false),
        ..EstimatorSettings::default()
    };
    let mut rows = Vec::new();
    for &t in &args.t {
        let config = DgpConfig { rho: args.rho, kappa: args.kappa, beta: args.beta, ..DgpConfig::new(args.n, t, args.dgp) };
        config.validate().map_err(input)?;
        let summaries = run_monte_carlo(&config, &args.estimator, &settings, args.reps, seed).map_err(input)?;
        rows.extend(summaries.iter().map(|s| SimulationRow::new(s, args.n, t, seed)));
    }
    Ok(rows)
}

fn opt_cell(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn render_simulation(rows: &[SimulationRow], format: OutputFormat, seed: u64) -> CliResult<String> {
    match format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                seed: u64,
                rows: &'a [SimulationRow],
            }
            serde_json::to_string_pretty(&Out { seed, rows }).map(|s| s + "\n").map_err(input)
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["estimator", "N", "T", "bias", "var", "cov", "wid", "G_hat", "C_hat", "n_reps", "n_failed", "seed"])
                .map_err(input)?;
            for r in rows {
                let e = |v: f64| format!("{v:e}");
                w.write_record([
                    r.estimator.name().to_string(),
                    r.n.to_string(),
                    r.t.to_string(),
                    e(r.bias),
                    e(r.var),
                    e(r.cov),
                    e(r.wid),
                    opt_cell(r.g_hat, e),
                    opt_cell(r.c_hat, e),
                    r.n_reps.to_string(),
                    r.n_failed.to_string(),
                    r.seed.to_string(),
                ])
                .map_err(input)?;
            }
            String::from_utf8(w.into_inner().map_err(input)?).map_err(input)
        }
        OutputFormat::Table => {
            let mut out = format!(
                "{:<12} {:>4} {:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}\n",
                "estimator", "N", "T", "bias", "var", "cov", "wid", "G_hat", "C_hat", "failed"
            );
            for r in rows {
                let f = |v: f64| format!("{v:.3}");
                let _ = writeln!(
                    out,
                    "{:<12} {:>4} {:>4} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8} {:>8} {:>6}",
                    r.estimator.name(),
                    r.n,
                    r.t,
                    r.bias,
                    r.var,
                    r.cov,
                    r.wid,
                    opt_cell(r.g_hat, f),
                    opt_cell(r.c_hat, f),
                    r.n_failed
                );
            }
            let _ = writeln!(out, "seed {seed}");
            Ok(out)
        }
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let seed = resolve_seed(args.clustering.seed)?;
    let rows = simulate(args, seed)?;
    emit(&render_simulation(&rows, args.format, seed)?, args.output.as_deref())?;
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| r.failure_rate() > args.max_failure_rate)
        .map(|r| format!("{} (T = {}): {} of {} replications failed", r.estimator, r.t, r.n_failed, r.n_failed + r.n_reps))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(estimation(format!("failure rate above {}: {}", args.max_failure_rate, failing.join("; "))))
    }
}
