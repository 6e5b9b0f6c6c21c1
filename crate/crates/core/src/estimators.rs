//! Second step: OLS on grouped within-transformed data.
//!
//! Rows are stacked unit-major, time-minor (`r = i * T + t`). Standard
//! errors are clustered by unit with the factor `sqrt(NT / dof)`.

use nalgebra::{DMatrix, DVector};

use crate::clustering::{self, ClusteringOptions, NumClusters, TwoWayClusters};
use crate::error::{Error, Result};
use crate::folds::FoldLayout;
use crate::panel::{cell_means, PanelData, Partition};
use crate::result::{ClusterCount, EstimateResult, Method};
use crate::seeding;

/// Gram matrices with condition number above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Within-transformed outcome and regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    pub e_hat: DMatrix<f64>,
    pub u_hat: Vec<DMatrix<f64>>,
    /// Residual degrees of freedom; may be zero or negative for saturated
    /// cluster counts.
    pub dof: i64,
}

/// Which grouped fixed effects are purged before OLS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupedEffects {
    /// `delta_{i,c_t} + nu_{g_i,t}`: the two-way grouped transform.
    Additive,
    /// `nu_{g_i,t}` only: subtract unit-cluster-by-period means.
    UnitClusterByPeriod,
    /// `xi_{g_i,c_t}`: subtract interacted cell means.
    Interacted,
}

impl GroupedEffects {
    fn dof(self, n: usize, t: usize, g: usize, c: usize) -> i64 {
        let (n, t, g, c) = (n as i64, t as i64, g as i64, c as i64);
        match self {
            GroupedEffects::Additive => n * t - n * c - t * g,
            GroupedEffects::UnitClusterByPeriod => n * t - t * g,
            GroupedEffects::Interacted => n * t - g * c,
        }
    }

    fn apply(self, w: &DMatrix<f64>, units: &Partition, times: &Partition) -> DMatrix<f64> {
        let m = cell_means(w, units, times);
        DMatrix::from_fn(w.nrows(), w.ncols(), |i, t| {
            let (g, c) = (units.label(i), times.label(t));
            match self {
                GroupedEffects::Additive => {
                    w[(i, t)] - m.group_time[(g, t)] - m.unit_cluster[(i, c)] + m.group_cluster[(g, c)]
                }
                GroupedEffects::UnitClusterByPeriod => w[(i, t)] - m.group_time[(g, t)],
                GroupedEffects::Interacted => w[(i, t)] - m.group_cluster[(g, c)],
            }
        })
    }
}

pub fn transform(panel: &PanelData, units: &Partition, times: &Partition, effects: GroupedEffects) -> TransformedPanel {
    assert_eq!(units.len(), panel.n_units(), "unit partition does not cover the panel");
    assert_eq!(times.len(), panel.n_periods(), "time partition does not cover the panel");
    TransformedPanel {
        e_hat: effects.apply(panel.y(), units, times),
        u_hat: panel.x().iter().map(|x| effects.apply(x, units, times)).collect(),
        dof: effects.dof(panel.n_units(), panel.n_periods(), units.n_clusters(), times.n_clusters()),
    }
}

/// `w_it - w_{g_i t} - w_{i c_t} + w_{g_i c_t}` for outcome and regressors.
pub fn within_transform(panel: &PanelData, units: &Partition, times: &Partition) -> TransformedPanel {
    transform(panel, units, times, GroupedEffects::Additive)
}

/// Stacks N x T matrices into an NT x K design, unit-major.
pub fn stack_columns(columns: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (n, t) = columns[0].shape();
    DMatrix::from_fn(n * t, columns.len(), |r, k| columns[k][(r / t, r % t)])
}

pub fn stack_vector(w: &DMatrix<f64>) -> DVector<f64> {
    let t = w.ncols();
    DVector::from_fn(w.len(), |r, _| w[(r / t, r % t)])
}

/// Inverse of a symmetric positive semi-definite Gram matrix, refusing
/// ill-conditioned ones.
pub fn checked_inverse(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = gram.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || !smin.is_finite() || smin * MAX_CONDITION < smax {
        return Err(Error::SingularDesign { smallest_singular_value: smin });
    }
    svd.pseudo_inverse(0.0).map_err(|_| Error::SingularDesign { smallest_singular_value: smin })
}

/// `(U'U)^{-1} U'e`.
pub fn pooled_ols(u: &DMatrix<f64>, e: &DVector<f64>) -> Result<DVector<f64>> {
    assert_eq!(u.nrows(), e.len(), "design and response lengths differ");
    let gram = u.transpose() * u;
    Ok(checked_inverse(&gram)? * (u.transpose() * e))
}

/// Sandwich standard errors with scores summed within clusters of rows:
/// `dof_factor * sqrt(diag(A^{-1} B A^{-1} / n))` where `A = U'U / n` and
/// `B = sum_g s_g s_g' / n`.
pub fn clustered_se(
    u: &DMatrix<f64>,
    residuals: &DVector<f64>,
    cluster_of_row: &[usize],
    dof_factor: f64,
) -> Result<Vec<f64>> {
    let (n, k) = u.shape();
    assert_eq!(residuals.len(), n);
    assert_eq!(cluster_of_row.len(), n);
    let n_clusters = cluster_of_row.iter().max().map_or(0, |m| m + 1);
    let mut scores = DMatrix::zeros(n_clusters, k);
    for r in 0..n {
        let g = cluster_of_row[r];
        for j in 0..k {
            scores[(g, j)] += u[(r, j)] * residuals[r];
        }
    }
    let nf = n as f64;
    let a_inv = checked_inverse(&(u.transpose() * u / nf))?;
    let b = scores.transpose() * &scores / nf;
    let v = &a_inv * b * &a_inv / nf;
    Ok((0..k).map(|j| dof_factor * v[(j, j)].max(0.0).sqrt()).collect())
}

/// Unit index of every stacked row.
pub fn unit_of_rows(n: usize, t: usize) -> Vec<usize> {
    (0..n * t).map(|r| r / t).collect()
}

/// Slope estimate and unit-clustered standard errors from already
/// transformed data.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub residuals: DMatrix<f64>,
    pub dof: usize,
}

pub fn fit_transformed(e_hat: &DMatrix<f64>, u_hat: &[DMatrix<f64>], dof: i64) -> Result<OlsFit> {
    if dof <= 0 {
        return Err(Error::InsufficientDof(dof));
    }
    let (n, t) = e_hat.shape();
    let u = stack_columns(u_hat);
    let e = stack_vector(e_hat);
    let beta = pooled_ols(&u, &e)?;
    let resid = &e - &u * &beta;
    let factor = ((n * t) as f64 / dof as f64).sqrt();
    let se = clustered_se(&u, &resid, &unit_of_rows(n, t), factor)?;
    Ok(OlsFit {
        beta: beta.iter().copied().collect(),
        se,
        residuals: DMatrix::from_fn(n, t, |i, s| resid[i * t + s]),
        dof: dof as usize,
    })
}

fn result_from(method: Method, fit: OlsFit, g: Option<ClusterCount>, c: Option<ClusterCount>) -> EstimateResult {
    let n_obs = fit.residuals.len();
    EstimateResult {
        method,
        beta: fit.beta,
        se: fit.se,
        dof: fit.dof,
        unit_clusters: g,
        time_clusters: c,
        residuals: fit.residuals,
        n_obs,
    }
}

/// Grouped fixed-effects estimate for given unit and time partitions.
pub fn estimate_grouped(
    panel: &PanelData,
    units: &Partition,
    times: &Partition,
    effects: GroupedEffects,
) -> Result<EstimateResult> {
    let tp = transform(panel, units, times, effects);
    let fit = fit_transformed(&tp.e_hat, &tp.u_hat, tp.dof)?;
    let method = match effects {
        GroupedEffects::Additive => Method::Baseline,
        GroupedEffects::UnitClusterByPeriod => Method::Blm1,
        GroupedEffects::Interacted => Method::Blm2,
    };
    Ok(result_from(
        method,
        fit,
        Some(ClusterCount::Single(units.n_clusters())),
        Some(ClusterCount::Single(times.n_clusters())),
    ))
}

pub fn estimate_with_partitions(panel: &PanelData, units: &Partition, times: &Partition) -> Result<EstimateResult> {
    estimate_grouped(panel, units, times, GroupedEffects::Additive)
}

fn estimate_clustered(
    panel: &PanelData,
    g: NumClusters,
    c: NumClusters,
    opts: &ClusteringOptions,
    effects: GroupedEffects,
) -> Result<(EstimateResult, TwoWayClusters)> {
    let clusters = clustering::two_way_cluster(panel, g, c, opts)?;
    let est = estimate_grouped(panel, clusters.unit_partition(), clusters.time_partition(), effects)?;
    Ok((est, clusters))
}

/// Two-way clustering followed by the two-way grouped fixed-effects OLS.
pub fn estimate_baseline(panel: &PanelData, g: NumClusters, c: NumClusters, opts: &ClusteringOptions) -> Result<EstimateResult> {
    estimate_clustered(panel, g, c, opts, GroupedEffects::Additive).map(|r| r.0)
}

/// Unit-cluster-by-period effects only.
pub fn estimate_blm1(panel: &PanelData, g: NumClusters, c: NumClusters, opts: &ClusteringOptions) -> Result<EstimateResult> {
    estimate_clustered(panel, g, c, opts, GroupedEffects::UnitClusterByPeriod).map(|r| r.0)
}

/// Interacted unit-cluster-by-time-cluster effects only.
pub fn estimate_blm2(panel: &PanelData, g: NumClusters, c: NumClusters, opts: &ClusteringOptions) -> Result<EstimateResult> {
    estimate_clustered(panel, g, c, opts, GroupedEffects::Interacted).map(|r| r.0)
}

/// Cluster counts for the cross-fitted estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossFitCounts {
    #[default]
    Auto,
    /// `(G_d, C_d)` for each fold.
    Fixed([(usize, usize); 4]),
}

/// Fold-local partitions: `units` covers the fold's units, `times` its periods.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPartitions {
    pub units: Partition,
    pub times: Partition,
}

/// Clusters each fold's units on time averages taken over the other half of
/// the periods, and its periods on cross-section averages over the other
/// half of the units.
pub fn crossfit_partitions(
    panel: &PanelData,
    layout: &FoldLayout,
    counts: CrossFitCounts,
    opts: &ClusteringOptions,
) -> Result<[FoldPartitions; 4]> {
    let z = panel.z_components();
    let mut out = Vec::with_capacity(4);
    for d in 0..4 {
        let fold = layout.fold(d);
        let unit_src = layout.fold(FoldLayout::unit_source(d));
        let time_src = layout.fold(FoldLayout::time_source(d));
        let (a, v_g) = clustering::unit_averages(&z, fold.units.clone(), unit_src.times.clone());
        let (b, v_c) = clustering::time_averages(&z, time_src.units.clone(), fold.times.clone());
        let (g_req, c_req) = match counts {
            CrossFitCounts::Auto => (NumClusters::Auto, NumClusters::Auto),
            CrossFitCounts::Fixed(gc) => (NumClusters::Fixed(gc[d].0), NumClusters::Fixed(gc[d].1)),
        };
        let unit_opts = ClusteringOptions { seed: seeding::derive_seed(opts.seed, &[10 + d as u64, 0]), ..*opts };
        let time_opts = ClusteringOptions { seed: seeding::derive_seed(opts.seed, &[10 + d as u64, 1]), ..*opts };
        let units = clustering::cluster_points(&a, g_req, v_g, clustering::selection_cap(fold.n_units()), &unit_opts)?;
        let times = clustering::cluster_points(&b, c_req, v_c, clustering::selection_cap(fold.n_periods()), &time_opts)?;
        out.push(FoldPartitions { units: units.kmeans.partition, times: times.kmeans.partition });
    }
    Ok(out.try_into().expect("four folds"))
}

/// Fold-wise two-way grouped transform, assembled back onto the full grid.
/// `dof` is the sum over folds of `N_d T_d - N_d C_d - T_d G_d`.
pub fn crossfit_transform(panel: &PanelData, layout: &FoldLayout, parts: &[FoldPartitions; 4]) -> Result<TransformedPanel> {
    let (n, t) = (panel.n_units(), panel.n_periods());
    let mut e_hat = DMatrix::zeros(n, t);
    let mut u_hat = vec![DMatrix::zeros(n, t); panel.n_regressors()];
    let mut dof = 0;
    for (d, part) in parts.iter().enumerate() {
        let fold = layout.fold(d);
        let sub = panel.slice(fold.units.clone(), fold.times.clone())?;
        let tp = within_transform(&sub, &part.units, &part.times);
        e_hat
            .view_mut((fold.units.start, fold.times.start), (fold.n_units(), fold.n_periods()))
            .copy_from(&tp.e_hat);
        for (dst, src) in u_hat.iter_mut().zip(&tp.u_hat) {
            dst.view_mut((fold.units.start, fold.times.start), (fold.n_units(), fold.n_periods()))
                .copy_from(src);
        }
        dof += tp.dof;
    }
    Ok(TransformedPanel { e_hat, u_hat, dof })
}

pub fn estimate_crossfit_with(panel: &PanelData, layout: &FoldLayout, parts: &[FoldPartitions; 4]) -> Result<EstimateResult> {
    let tp = crossfit_transform(panel, layout, parts)?;
    let fit = fit_transformed(&tp.e_hat, &tp.u_hat, tp.dof)?;
    Ok(result_from(
        Method::Crossfit,
        fit,
        Some(ClusterCount::PerFold(std::array::from_fn(|d| parts[d].units.n_clusters()))),
        Some(ClusterCount::PerFold(std::array::from_fn(|d| parts[d].times.n_clusters()))),
    ))
}

/// Four-fold cross-fitted estimator.
pub fn estimate_crossfit(panel: &PanelData, counts: CrossFitCounts, opts: &ClusteringOptions) -> Result<EstimateResult> {
    let layout = FoldLayout::new(panel.n_units(), panel.n_periods())?;
    let parts = crossfit_partitions(panel, &layout, counts, opts)?;
    estimate_crossfit_with(panel, &layout, &parts)
}
