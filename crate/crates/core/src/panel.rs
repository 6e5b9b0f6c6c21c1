//! Balanced panel container, cluster partitions and cell means.
//!
//! Units and periods are ordered once, at construction, by their external
//! labels. Every index used elsewhere in the crate is positional with respect
//! to that ordering.

use std::cmp::Ordering;
use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One observation as read from a long-format source.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub unit: String,
    pub time: String,
    pub y: f64,
    pub x: Vec<f64>,
}

/// A balanced N x T panel with one outcome and K regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    y: DMatrix<f64>,
    x: Vec<DMatrix<f64>>,
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
}

impl PanelData {
    /// Builds a panel from wide matrices. `x[k]` holds regressor `k` as an
    /// N x T matrix. Labels default to `1..=N` and `1..=T`.
    pub fn from_matrices(y: DMatrix<f64>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        let unit_ids = (1..=y.nrows()).map(|i| i.to_string()).collect();
        let time_ids = (1..=y.ncols()).map(|t| t.to_string()).collect();
        Self::with_labels(y, x, unit_ids, time_ids)
    }

    pub fn with_labels(
        y: DMatrix<f64>,
        x: Vec<DMatrix<f64>>,
        unit_ids: Vec<String>,
        time_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = y.shape();
        if n < 2 || t < 2 {
            return Err(Error::InvalidInput(format!(
                "panel needs N >= 2 and T >= 2, got N={n}, T={t}"
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("panel needs at least one regressor".into()));
        }
        for (k, xk) in x.iter().enumerate() {
            if xk.shape() != (n, t) {
                return Err(Error::InvalidInput(format!(
                    "regressor {} has shape {:?}, expected ({n}, {t})",
                    k + 1,
                    xk.shape()
                )));
            }
        }
        if unit_ids.len() != n || time_ids.len() != t {
            return Err(Error::InvalidInput("label count does not match panel shape".into()));
        }
        if !all_unique(&unit_ids) || !all_unique(&time_ids) {
            return Err(Error::InvalidInput("unit and time labels must be unique".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y".into()));
        }
        for (k, xk) in x.iter().enumerate() {
            if xk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("x{}", k + 1)));
            }
        }
        Ok(Self { y, x, unit_ids, time_ids })
    }

    pub fn n_units(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.len()
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    /// The clustering variables `z_it = (x_it1, .., x_itK, y_it)`, one N x T
    /// matrix per component, outcome last.
    pub fn z_components(&self) -> Vec<&DMatrix<f64>> {
        self.x.iter().chain(std::iter::once(&self.y)).collect()
    }

    /// Applies `f` to the outcome and to every regressor matrix.
    pub fn map_variables<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(Variable, &DMatrix<f64>) -> DMatrix<f64>,
    {
        let y = f(Variable::Outcome, &self.y);
        let x = self
            .x
            .iter()
            .enumerate()
            .map(|(k, xk)| f(Variable::Regressor(k), xk))
            .collect();
        Self::with_labels(y, x, self.unit_ids.clone(), self.time_ids.clone())
    }

    /// Sub-panel on contiguous unit and time ranges.
    pub fn slice(&self, units: std::ops::Range<usize>, times: std::ops::Range<usize>) -> Result<Self> {
        let view = |m: &DMatrix<f64>| {
            m.view((units.start, times.start), (units.len(), times.len()))
                .into_owned()
        };
        Self::with_labels(
            view(&self.y),
            self.x.iter().map(view).collect(),
            self.unit_ids[units.clone()].to_vec(),
            self.time_ids[times.clone()].to_vec(),
        )
    }

    /// Long-format rows in unit-major, time-minor order.
    pub fn to_rows(&self) -> Vec<RawRow> {
        let mut rows = Vec::with_capacity(self.n_obs());
        for i in 0..self.n_units() {
            for t in 0..self.n_periods() {
                rows.push(RawRow {
                    unit: self.unit_ids[i].clone(),
                    time: self.time_ids[t].clone(),
                    y: self.y[(i, t)],
                    x: self.x.iter().map(|xk| xk[(i, t)]).collect(),
                });
            }
        }
        rows
    }
}

/// Full-sample means and sample standard deviations (divisor `NT - 1`) used
/// to standardize a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub y_mean: f64,
    pub y_sd: f64,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
}

fn mean_sd(w: &DMatrix<f64>) -> (f64, f64) {
    let m = w.mean();
    let ss: f64 = w.iter().map(|v| (v - m) * (v - m)).sum();
    (m, (ss / (w.len() - 1) as f64).sqrt())
}

impl Standardization {
    pub fn of(panel: &PanelData) -> Result<Self> {
        let (y_mean, y_sd) = mean_sd(&panel.y);
        let (x_means, x_sds): (Vec<f64>, Vec<f64>) = panel.x.iter().map(mean_sd).unzip();
        if !(y_sd > 0.0) || x_sds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidInput("cannot standardize a constant variable".into()));
        }
        Ok(Self { y_mean, y_sd, x_means, x_sds })
    }

    pub fn apply(&self, panel: &PanelData) -> Result<PanelData> {
        panel.map_variables(|var, w| {
            let (m, sd) = match var {
                Variable::Outcome => (self.y_mean, self.y_sd),
                Variable::Regressor(k) => (self.x_means[k], self.x_sds[k]),
            };
            w.map(|v| (v - m) / sd)
        })
    }

    /// Maps a coefficient (or standard error) on standardized data back to
    /// original units: `b * sd(y) / sd(x_k)`.
    pub fn rescale(&self, k: usize, value: f64) -> f64 {
        value * self.y_sd / self.x_sds[k]
    }
}

/// Identifies one of the panel's variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Outcome,
    Regressor(usize),
}

fn all_unique(labels: &[String]) -> bool {
    let mut seen = std::collections::HashSet::with_capacity(labels.len());
    labels.iter().all(|l| seen.insert(l.as_str()))
}

/// Orders labels numerically when every label parses as a number, and
/// lexicographically otherwise.
fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => labels.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        }),
        None => labels.sort(),
    }
}

/// Assembles a balanced panel from long-format rows.
pub fn validate_panel(rows: &[RawRow]) -> Result<PanelData> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidInput("no observations".into()))?;
    let k = first.x.len();
    if k == 0 {
        return Err(Error::InvalidInput("rows carry no regressors".into()));
    }

    let mut units: Vec<String> = Vec::new();
    let mut times: Vec<String> = Vec::new();
    {
        let mut seen_u = std::collections::HashSet::new();
        let mut seen_t = std::collections::HashSet::new();
        for (r, row) in rows.iter().enumerate() {
            if row.x.len() != k {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} regressors, expected {k}",
                    r + 1,
                    row.x.len()
                )));
            }
            if !row.y.is_finite() || row.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "row {} (unit {}, time {})",
                    r + 1,
                    row.unit,
                    row.time
                )));
            }
            if seen_u.insert(row.unit.as_str()) {
                units.push(row.unit.clone());
            }
            if seen_t.insert(row.time.as_str()) {
                times.push(row.time.clone());
            }
        }
    }
    sort_labels(&mut units);
    sort_labels(&mut times);
    let (n, t) = (units.len(), times.len());
    if rows.len() != n * t {
        return Err(Error::UnbalancedPanel(format!(
            "{} rows for {n} units x {t} periods",
            rows.len()
        )));
    }

    let unit_pos: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let time_pos: HashMap<&str, usize> = times.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut filled = vec![false; n * t];
    let mut y = DMatrix::zeros(n, t);
    let mut x = vec![DMatrix::zeros(n, t); k];
    for row in rows {
        let (i, s) = (unit_pos[row.unit.as_str()], time_pos[row.time.as_str()]);
        if std::mem::replace(&mut filled[i * t + s], true) {
            return Err(Error::UnbalancedPanel(format!(
                "duplicate cell (unit {}, time {})",
                row.unit, row.time
            )));
        }
        y[(i, s)] = row.y;
        for (xk, v) in x.iter_mut().zip(&row.x) {
            xk[(i, s)] = *v;
        }
    }
    PanelData::with_labels(y, x, units, times)
}

/// Assignment of `n` items to `G` non-empty clusters.
///
/// Labels are zero-based (`0..G`). Centers are optional and, when present,
/// hold one row per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
    centers: Option<DMatrix<f64>>,
}

impl Partition {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if n_clusters == 0 || labels.is_empty() {
            return Err(Error::InvalidInput("partition must have at least one item and cluster".into()));
        }
        let mut sizes = vec![0usize; n_clusters];
        for &l in &labels {
            if l >= n_clusters {
                return Err(Error::InvalidInput(format!("label {l} out of range 0..{n_clusters}")));
            }
            sizes[l] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("cluster {g} is empty")));
        }
        Ok(Self { labels, n_clusters, centers: None })
    }

    /// Every item in one cluster.
    pub fn single(n: usize) -> Self {
        Self { labels: vec![0; n], n_clusters: 1, centers: None }
    }

    /// Every item in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self { labels: (0..n).collect(), n_clusters: n, centers: None }
    }

    pub fn with_centers(mut self, centers: DMatrix<f64>) -> Self {
        debug_assert_eq!(centers.nrows(), self.n_clusters);
        self.centers = Some(centers);
        self
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, item: usize) -> usize {
        self.labels[item]
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn centers(&self) -> Option<&DMatrix<f64>> {
        self.centers.as_ref()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Relabels clusters in order of first appearance, so that two partitions
    /// describing the same grouping compare equal.
    pub fn canonical(&self) -> Partition {
        let mut map = vec![usize::MAX; self.n_clusters];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        let centers = self.centers.as_ref().map(|c| {
            let mut out = c.clone();
            for (old, &new) in map.iter().enumerate() {
                out.set_row(new, &c.row(old));
            }
            out
        });
        Partition { labels, n_clusters: self.n_clusters, centers }
    }
}

/// Cluster cell means of an N x T matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans {
    /// G x T: mean over units of group g at period t.
    pub group_time: DMatrix<f64>,
    /// N x C: mean over periods of time-cluster c for unit i.
    pub unit_cluster: DMatrix<f64>,
    /// G x C: mean over the product cell.
    pub group_cluster: DMatrix<f64>,
}

pub fn cell_means(w: &DMatrix<f64>, units: &Partition, times: &Partition) -> CellMeans {
    let (n, t) = w.shape();
    assert_eq!(units.len(), n, "unit partition does not match rows");
    assert_eq!(times.len(), t, "time partition does not match columns");
    let (g_count, c_count) = (units.n_clusters(), times.n_clusters());
    let n_g = units.sizes();
    let t_c = times.sizes();

    let mut group_time = DMatrix::zeros(g_count, t);
    let mut unit_cluster = DMatrix::zeros(n, c_count);
    let mut group_cluster = DMatrix::zeros(g_count, c_count);
    for s in 0..t {
        let c = times.label(s);
        for i in 0..n {
            let g = units.label(i);
            let v = w[(i, s)];
            group_time[(g, s)] += v;
            unit_cluster[(i, c)] += v;
            group_cluster[(g, c)] += v;
        }
    }
    for g in 0..g_count {
        for s in 0..t {
            group_time[(g, s)] /= n_g[g] as f64;
        }
        for c in 0..c_count {
            group_cluster[(g, c)] /= (n_g[g] * t_c[c]) as f64;
        }
    }
    for i in 0..n {
        for c in 0..c_count {
            unit_cluster[(i, c)] /= t_c[c] as f64;
        }
    }
    CellMeans { group_time, unit_cluster, group_cluster }
}
