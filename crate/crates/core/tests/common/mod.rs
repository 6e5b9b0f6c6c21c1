//! Independent oracles and generators shared by the integration tests.

#![allow(dead_code)]

pub mod properties;

use nalgebra::{DMatrix, DVector};
use pcluster::{FoldLayout, PanelData, Partition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(n: usize, t: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(rng))
}

/// Panel with K regressors, additive and interactive heterogeneity and noise.
pub fn random_panel(n: usize, t: usize, k: usize, rng: &mut impl Rng) -> PanelData {
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let g: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..2.0)).collect();
    let het = DMatrix::from_fn(n, t, |i, s| a[i] + g[s] + a[i] * g[s]);
    let x: Vec<DMatrix<f64>> = (0..k).map(|_| normal_matrix(n, t, rng) + &het).collect();
    let mut y = normal_matrix(n, t, rng) + het.map(|v| v.sqrt());
    for xk in &x {
        y += xk * rng.random_range(-1.0..1.0);
    }
    PanelData::from_matrices(y, x).expect("valid random panel")
}

/// Uniformly shuffled labels with every one of the `g` clusters non-empty.
pub fn random_partition(n: usize, g: usize, rng: &mut impl Rng) -> Partition {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < g { i } else { rng.random_range(0..g) }).collect();
    labels.shuffle(rng);
    Partition::new(labels, g).expect("all clusters used")
}

/// Slopes from the dense regression of y on x and every `δ_{i,c_t}` and
/// `ν_{g_i,t}` dummy, solved as a minimum-norm least-squares problem.
pub fn dummy_regression_beta(panel: &PanelData, units: &Partition, times: &Partition) -> Vec<f64> {
    let (n, t, k) = (panel.n_units(), panel.n_periods(), panel.n_regressors());
    let (g, c) = (units.n_clusters(), times.n_clusters());
    let cols = k + n * c + g * t;
    let mut design = DMatrix::zeros(n * t, cols);
    let mut rhs = DVector::zeros(n * t);
    for i in 0..n {
        for s in 0..t {
            let r = i * t + s;
            for j in 0..k {
                design[(r, j)] = panel.x()[j][(i, s)];
            }
            design[(r, k + i * c + times.label(s))] = 1.0;
            design[(r, k + n * c + units.label(i) * t + s)] = 1.0;
            rhs[r] = panel.y()[(i, s)];
        }
    }
    min_norm_solution(design, rhs).iter().take(k).copied().collect()
}

/// Cross-fitted counterpart: fold-specific dummies, common slopes.
pub fn crossfit_dummy_beta(panel: &PanelData, layout: &FoldLayout, units: &[Partition; 4], times: &[Partition; 4]) -> Vec<f64> {
    let (n, t, k) = (panel.n_units(), panel.n_periods(), panel.n_regressors());
    let mut offsets = Vec::new();
    let mut cols = k;
    for d in 0..4 {
        let f = layout.fold(d);
        offsets.push(cols);
        cols += f.n_units() * times[d].n_clusters() + units[d].n_clusters() * f.n_periods();
    }
    let mut design = DMatrix::zeros(n * t, cols);
    let mut rhs = DVector::zeros(n * t);
    for i in 0..n {
        for s in 0..t {
            let r = i * t + s;
            let d = (0..4).find(|&d| layout.fold(d).contains(i, s)).expect("folds cover the grid");
            let f = layout.fold(d);
            let (li, ls) = (i - f.units.start, s - f.times.start);
            let c_d = times[d].n_clusters();
            for j in 0..k {
                design[(r, j)] = panel.x()[j][(i, s)];
            }
            design[(r, offsets[d] + li * c_d + times[d].label(ls))] = 1.0;
            design[(r, offsets[d] + f.n_units() * c_d + units[d].label(li) * f.n_periods() + ls)] = 1.0;
            rhs[r] = panel.y()[(i, s)];
        }
    }
    min_norm_solution(design, rhs).iter().take(k).copied().collect()
}

fn min_norm_solution(design: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    let svd = design.svd(true, true);
    let eps = svd.singular_values.max() * 1e-10;
    svd.solve(&rhs, eps).expect("SVD solve")
}

/// Best k-means objective over every assignment of the points to exactly
/// `g` non-empty clusters.
pub fn exhaustive_kmeans(points: &DMatrix<f64>, g: usize) -> f64 {
    let n = points.nrows();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    // Restricted growth strings enumerate each set partition once.
    fn recurse(i: usize, used: usize, g: usize, labels: &mut Vec<usize>, points: &DMatrix<f64>, best: &mut f64) {
        let n = labels.len();
        if i == n {
            if used == g {
                *best = best.min(objective(points, labels, g));
            }
            return;
        }
        if g - used > n - i {
            return;
        }
        for l in 0..=used.min(g - 1) {
            labels[i] = l;
            recurse(i + 1, used.max(l + 1), g, labels, points, best);
        }
    }
    recurse(0, 0, g, &mut labels, points, &mut best);
    best
}

pub fn objective(points: &DMatrix<f64>, labels: &[usize], g: usize) -> f64 {
    let dim = points.ncols();
    let mut total = 0.0;
    for c in 0..g {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        for j in 0..dim {
            let m = members.iter().map(|&i| points[(i, j)]).sum::<f64>() / members.len() as f64;
            total += members.iter().map(|&i| (points[(i, j)] - m).powi(2)).sum::<f64>();
        }
    }
    total
}

/// Direct evaluation of the pseudo-distance, its dispersion `σ̌` and the
/// merge threshold for the rows of `series` (outcome first).
pub fn brute_pseudo_distance(series: &[Vec<Vec<f64>>], n_units: usize, n_periods: usize) -> (Vec<Vec<f64>>, f64, f64) {
    let n = series[0].len();
    let len = series[0][0].len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for l in 0..n {
                if l == i || l == j {
                    continue;
                }
                let mut v = 0.0;
                for var in series {
                    let mut s = 0.0;
                    for t in 0..len {
                        s += (var[i][t] - var[j][t]) * var[l][t];
                    }
                    v += f64::abs(s);
                }
                if v > best {
                    best = v;
                }
            }
            d[i][j] = best / len as f64;
        }
    }
    let mut sigma = 0.0;
    for var in series {
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut nearest = f64::INFINITY;
            for j in 0..n {
                if j != i {
                    let ss: f64 = (0..len).map(|t| (var[i][t] - var[j][t]).powi(2)).sum();
                    nearest = nearest.min(ss / (2.0 * len as f64));
                }
            }
            worst = worst.max(nearest);
        }
        sigma += worst;
    }
    let k = (series.len() - 1) as f64;
    let threshold = 1.35 * (len as f64).ln() / (k * (n_units.min(n_periods) as f64).sqrt()) * sigma;
    (d, sigma, threshold)
}

/// Rows of each variable as nested vectors, outcome first; `transpose`
/// turns periods into the items.
pub fn series_of(panel: &PanelData, transpose: bool) -> Vec<Vec<Vec<f64>>> {
    let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        let m = if transpose { m.transpose() } else { m.clone() };
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    };
    std::iter::once(to_rows(panel.y())).chain(panel.x().iter().map(to_rows)).collect()
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
