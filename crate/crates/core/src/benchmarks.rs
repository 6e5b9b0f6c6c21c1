//! Comparison estimators: two-way fixed effects, interactive fixed effects,
//! pooled common correlated effects and factor-augmented regression.
//!
//! All of them end with pooled OLS on transformed data and the same
//! unit-clustered standard errors as the grouped estimators.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::estimators::{fit_transformed, pooled_ols, stack_columns, stack_vector, OlsFit};
use crate::panel::PanelData;
use crate::result::{EstimateResult, Method};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_MAX_FACTORS: usize = 8;

fn result_from(method: Method, fit: OlsFit) -> EstimateResult {
    let n_obs = fit.residuals.len();
    EstimateResult {
        method,
        beta: fit.beta,
        se: fit.se,
        dof: fit.dof,
        unit_clusters: None,
        time_clusters: None,
        residuals: fit.residuals,
        n_obs,
    }
}

/// `w_it - w_i. - w_.t + w_..`
pub fn two_way_demean(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t) = w.shape();
    let row_means: Vec<f64> = (0..n).map(|i| w.row(i).mean()).collect();
    let col_means: Vec<f64> = (0..t).map(|s| w.column(s).mean()).collect();
    let grand = w.mean();
    DMatrix::from_fn(n, t, |i, s| w[(i, s)] - row_means[i] - col_means[s] + grand)
}

/// Classical two-way fixed effects, `dof = NT - N - T + 1`.
pub fn estimate_twfe(panel: &PanelData) -> Result<EstimateResult> {
    let (n, t) = (panel.n_units() as i64, panel.n_periods() as i64);
    let e = two_way_demean(panel.y());
    let u: Vec<_> = panel.x().iter().map(two_way_demean).collect();
    let fit = fit_transformed(&e, &u, n * t - n - t + 1)?;
    Ok(result_from(Method::Twfe, fit))
}

/// Leading principal components of an N x T matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelFit {
    /// T x R, normalized so that `F'F / T = I`.
    pub factors: DMatrix<f64>,
    /// N x R, `W F / T`; `Λ'Λ` is diagonal.
    pub loadings: DMatrix<f64>,
    pub n_factors: usize,
    pub converged: bool,
    pub n_iterations: usize,
}

/// Eigenvalues of `W'W` in descending order with matching unit eigenvectors.
fn sorted_eigen(gram: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let t = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vectors = DMatrix::from_fn(t, t, |s, j| eig.eigenvectors[(s, order[j])]);
    (values, vectors)
}

/// Factors and loadings from the top `r` eigenvectors of `W'W`.
pub fn principal_components(w: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let t = w.ncols();
    let (values, vectors) = sorted_eigen(w.transpose() * w);
    let factors = vectors.columns(0, r).into_owned() * (t as f64).sqrt();
    let loadings = w * &factors / t as f64;
    (factors, loadings, values)
}

/// `W (I - F F' / T)`: removes the span of the factors from every row.
pub fn defactor(w: &DMatrix<f64>, factors: &DMatrix<f64>) -> DMatrix<f64> {
    if factors.ncols() == 0 {
        return w.clone();
    }
    let t = w.ncols() as f64;
    w - (w * factors) * factors.transpose() / t
}

fn outcome_residual(panel: &PanelData, beta: &[f64]) -> DMatrix<f64> {
    let mut w = panel.y().clone();
    for (xk, b) in panel.x().iter().zip(beta) {
        w -= xk * *b;
    }
    w
}

/// Interactive fixed effects estimate with its factor structure.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractiveFit {
    pub estimate: EstimateResult,
    pub factor_model: FactorModelFit,
    /// Least-squares objective after each factor step and each slope step.
    pub trace: Vec<f64>,
}

/// Alternates principal components of `y - x'β` with the slope update
/// `β = (Σ X_i' M_F X_i)^{-1} Σ X_i' M_F y_i`, starting from TWFE. Stops when
/// `‖Δβ‖ ≤ tol` or after `max_iter` rounds; in the latter case the last
/// iterate is returned with `converged = false`. Standard errors come from
/// the defactored data with `dof = NT - R(N + T - R)`.
pub fn estimate_interactive_fe(panel: &PanelData, r: usize, tol: f64, max_iter: usize) -> Result<InteractiveFit> {
    let (n, t) = (panel.n_units(), panel.n_periods());
    if r >= n.min(t) {
        return Err(Error::InvalidInput(format!("{r} factors need R < min(N, T) = {}", n.min(t))));
    }
    let mut beta = estimate_twfe(panel)?.beta;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut n_iterations = 0;
    let mut factors;
    loop {
        n_iterations += 1;
        let w = outcome_residual(panel, &beta);
        let (f, lambda, _) = principal_components(&w, r);
        trace.push((&w - &lambda * f.transpose()).norm_squared());
        let e = defactor(panel.y(), &f);
        let u: Vec<_> = panel.x().iter().map(|xk| defactor(xk, &f)).collect();
        let next = pooled_ols(&stack_columns(&u), &stack_vector(&e))?;
        factors = f;
        let step = next.iter().zip(&beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        beta = next.iter().copied().collect();
        trace.push(defactor(&outcome_residual(panel, &beta), &factors).norm_squared());
        if step <= tol {
            converged = true;
            break;
        }
        if n_iterations >= max_iter {
            break;
        }
    }
    let e = defactor(panel.y(), &factors);
    let u: Vec<_> = panel.x().iter().map(|xk| defactor(xk, &factors)).collect();
    let dof = (n * t) as i64 - (r * (n + t - r)) as i64;
    let fit = fit_transformed(&e, &u, dof)?;
    let loadings = defactor_loadings(panel, &fit.beta, &factors);
    Ok(InteractiveFit {
        estimate: result_from(Method::Interactive, fit),
        factor_model: FactorModelFit { factors, loadings, n_factors: r, converged, n_iterations },
        trace,
    })
}

fn defactor_loadings(panel: &PanelData, beta: &[f64], factors: &DMatrix<f64>) -> DMatrix<f64> {
    outcome_residual(panel, beta) * factors / panel.n_periods() as f64
}

/// Default number of interactive factors, `floor(sqrt(T))`.
pub fn default_interactive_factors(t: usize) -> usize {
    (t as f64).sqrt().floor() as usize
}

/// Pooled CCE: every unit's series is projected off `[1, ȳ_t, x̄_t]`, then
/// pooled OLS with `dof = NT - N(K + 2)`.
pub fn estimate_cce(panel: &PanelData) -> Result<EstimateResult> {
    let (n, t, k) = (panel.n_units(), panel.n_periods(), panel.n_regressors());
    if n < k + 2 {
        return Err(Error::InvalidInput(format!("CCE needs N >= K + 2, got N={n}, K={k}")));
    }
    let dof = (n * t) as i64 - (n * (k + 2)) as i64;
    if dof <= 0 {
        return Err(Error::InsufficientDof(dof));
    }
    let mut h = DMatrix::from_element(t, k + 2, 1.0);
    for s in 0..t {
        h[(s, 1)] = panel.y().column(s).mean();
        for (j, xk) in panel.x().iter().enumerate() {
            h[(s, j + 2)] = xk.column(s).mean();
        }
    }
    let annihilator = cce_annihilator(&h)?;
    let e = panel.y() * &annihilator;
    let u: Vec<_> = panel.x().iter().map(|xk| xk * &annihilator).collect();
    let fit = fit_transformed(&e, &u, dof)?;
    Ok(result_from(Method::Cce, fit))
}

/// `I - H (H'H)^{-1} H'`, a symmetric T x T matrix.
pub fn cce_annihilator(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = h.nrows();
    let inv = crate::estimators::checked_inverse(&(h.transpose() * h))?;
    Ok(DMatrix::identity(t, t) - h * inv * h.transpose())
}

/// Number of factors maximizing `eig_r / eig_{r+1}` over `r = 1..=r_max`.
/// Ties go to the smallest `r`; a zero next eigenvalue counts as an infinite
/// ratio and a zero pair is skipped. Never returns less than 1.
pub fn eigenvalue_ratio_factors(eigenvalues: &[f64], r_max: usize) -> usize {
    let r_max = r_max.min(eigenvalues.len().saturating_sub(1));
    let mut best = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for r in 1..=r_max {
        let (num, den) = (eigenvalues[r - 1], eigenvalues[r]);
        let ratio = if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        if ratio > best_ratio {
            best_ratio = ratio;
            best = r;
        }
    }
    best
}

/// Factor-augmented estimate together with the extracted factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorAugmentedFit {
    pub estimate: EstimateResult,
    /// T x R, `F'F / T = I`.
    pub factors: DMatrix<f64>,
    /// Eigenvalues of the T x T second-moment matrix, descending.
    pub eigenvalues: Vec<f64>,
}

/// Factor-augmented regression. Factors are the principal components of the
/// T x T covariance of every unit's outcome and regressor series, each
/// centered at its own time mean; their number is chosen by the eigenvalue
/// ratio with at most `r_max` factors. The factors are projected out of every
/// unit's raw series before pooled OLS, with `dof = NT - N R`.
pub fn estimate_factor_augmented(panel: &PanelData, r_max: usize) -> Result<FactorAugmentedFit> {
    let (n, t) = (panel.n_units(), panel.n_periods());
    let z = panel.z_components();
    let mut gram = DMatrix::zeros(t, t);
    for w in &z {
        let centered = DMatrix::from_fn(n, t, |i, s| w[(i, s)] - w.row(i).mean());
        gram += centered.transpose() * &centered;
    }
    gram /= (n * t * z.len()) as f64;
    let (eigenvalues, vectors) = sorted_eigen(gram);
    let r_cap = r_max.max(1).min(t - 1);
    let r = eigenvalue_ratio_factors(&eigenvalues, r_cap);
    let factors = vectors.columns(0, r).into_owned() * (t as f64).sqrt();
    let e = defactor(panel.y(), &factors);
    let u: Vec<_> = panel.x().iter().map(|xk| defactor(xk, &factors)).collect();
    let dof = (n * t) as i64 - (n * r) as i64;
    let fit = fit_transformed(&e, &u, dof)?;
    Ok(FactorAugmentedFit { estimate: result_from(Method::Fa, fit), factors, eigenvalues })
}
