//! Multi-start k-means.
//!
//! Each start seeds centers with k-means++ and then runs Lloyd alternation
//! until no label changes, followed by Hartigan single-point transfer sweeps
//! (re-entering Lloyd after any transfer), for at most 300 passes in total.
//! The result is both a Lloyd fixed point and transfer-stable. Nearest-center
//! ties go to the lowest cluster index. A cluster emptied during an iteration
//! is refilled with the point farthest from its own center, taken from a
//! cluster that keeps at least one member.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::Partition;
use crate::seeding;

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_STARTS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Final labels, with the cluster means attached as centers.
    pub partition: Partition,
    /// Sum of squared distances to the assigned centers.
    pub objective: f64,
    pub n_iterations: usize,
    pub start_index: usize,
    /// Objective after seeding and after every pass that moved a label.
    pub trace: Vec<f64>,
}

/// Row-major copy of the points, for tight inner loops.
struct Points {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    fn new(m: &DMatrix<f64>) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self { data, n, dim }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster means, flattened row-major (`g * dim + j`). Empty clusters get
/// NaN centers.
fn means(points: &Points, labels: &[usize], g: usize) -> Vec<f64> {
    let mut sums = vec![0.0; g * points.dim];
    let mut counts = vec![0usize; g];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l * points.dim..(l + 1) * points.dim].iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for (l, &c) in counts.iter().enumerate() {
        for s in &mut sums[l * points.dim..(l + 1) * points.dim] {
            *s = if c > 0 { *s / c as f64 } else { f64::NAN };
        }
    }
    sums
}

fn objective(points: &Points, labels: &[usize], centers: &[f64]) -> f64 {
    let dim = points.dim;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), &centers[l * dim..(l + 1) * dim]))
        .sum()
}

fn nearest(point: &[f64], centers: &[f64], g: usize, dim: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..g {
        let d = sq_dist(point, &centers[c * dim..(c + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Moves far-out points into empty clusters until none is empty.
fn repair_empty(points: &Points, labels: &mut [usize], g: usize) {
    loop {
        let mut counts = vec![0usize; g];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let centers = means(points, labels, g);
        let dim = points.dim;
        let mut pick = None;
        let mut pick_d = f64::NEG_INFINITY;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist(points.row(i), &centers[l * dim..(l + 1) * dim]);
            if d > pick_d {
                pick_d = d;
                pick = Some(i);
            }
        }
        // n >= g guarantees some cluster has a spare member.
        let i = pick.expect("a cluster with two or more members exists when one is empty");
        labels[i] = empty;
    }
}

fn check_input(points: &DMatrix<f64>, n_clusters: usize) -> Result<()> {
    let n = points.nrows();
    if n_clusters == 0 || n < n_clusters {
        return Err(Error::DegenerateInput { points: n, clusters: n_clusters });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means points".into()));
    }
    Ok(())
}

/// Lloyd alternation from the given initial labels.
pub fn kmeans_single(points: &DMatrix<f64>, n_clusters: usize, seed_labels: &[usize]) -> Result<KMeansResult> {
    check_input(points, n_clusters)?;
    if seed_labels.len() != points.nrows() {
        return Err(Error::InvalidInput(format!(
            "{} initial labels for {} points",
            seed_labels.len(),
            points.nrows()
        )));
    }
    if let Some(&bad) = seed_labels.iter().find(|&&l| l >= n_clusters) {
        return Err(Error::InvalidInput(format!("initial label {bad} out of range")));
    }
    let pts = Points::new(points);
    Ok(lloyd(&pts, n_clusters, seed_labels.to_vec(), 0))
}

fn lloyd(pts: &Points, g: usize, mut labels: Vec<usize>, start_index: usize) -> KMeansResult {
    let dim = pts.dim;
    repair_empty(pts, &mut labels, g);
    let mut centers = means(pts, &labels, g);
    let mut obj = objective(pts, &labels, &centers);
    let mut trace = vec![obj];
    let mut n_iterations = 0;
    let mut next = vec![0usize; pts.n];
    'outer: while n_iterations < MAX_ITERATIONS {
        // Lloyd passes until the labels settle.
        while n_iterations < MAX_ITERATIONS {
            n_iterations += 1;
            for (i, slot) in next.iter_mut().enumerate() {
                *slot = nearest(pts.row(i), &centers, g, dim);
            }
            if next == labels {
                break;
            }
            labels.copy_from_slice(&next);
            repair_empty(pts, &mut labels, g);
            centers = means(pts, &labels, g);
            obj = objective(pts, &labels, &centers);
            trace.push(obj);
        }
        if n_iterations >= MAX_ITERATIONS {
            break;
        }
        // One sweep of single-point transfers; stop once none helps.
        n_iterations += 1;
        if !transfer_sweep(pts, g, &mut labels, &mut centers) {
            break 'outer;
        }
        centers = means(pts, &labels, g);
        obj = objective(pts, &labels, &centers);
        trace.push(obj);
    }
    let partition = Partition::new(labels, g)
        .expect("repaired labels cover every cluster")
        .with_centers(DMatrix::from_row_slice(g, dim, &centers));
    KMeansResult { partition, objective: obj, n_iterations, start_index, trace }
}

/// Hartigan-style sweep: moves a point from cluster `a` to `b` whenever
/// `n_b/(n_b+1) d_b < n_a/(n_a-1) d_a`, the exact change in the objective.
/// Centers are updated incrementally; returns whether any point moved.
fn transfer_sweep(pts: &Points, g: usize, labels: &mut [usize], centers: &mut [f64]) -> bool {
    let dim = pts.dim;
    let mut counts = vec![0usize; g];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut moved = false;
    for i in 0..pts.n {
        let a = labels[i];
        if counts[a] < 2 {
            continue;
        }
        let p = pts.row(i);
        let na = counts[a] as f64;
        let removal = na / (na - 1.0) * sq_dist(p, &centers[a * dim..(a + 1) * dim]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..g).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let addition = nb / (nb + 1.0) * sq_dist(p, &centers[b * dim..(b + 1) * dim]);
            let gain = removal - addition;
            if gain > 1e-9 * removal && best.is_none_or(|(_, g0)| gain > g0) {
                best = Some((b, gain));
            }
        }
        if let Some((b, _)) = best {
            let nb = counts[b] as f64;
            for j in 0..dim {
                centers[a * dim + j] = (na * centers[a * dim + j] - p[j]) / (na - 1.0);
                centers[b * dim + j] = (nb * centers[b * dim + j] + p[j]) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
    }
    moved
}

/// k-means++ seeding, returned as the nearest-seed labelling of the points.
pub fn kmeanspp_labels<R: Rng + ?Sized>(points: &DMatrix<f64>, n_clusters: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_input(points, n_clusters)?;
    let pts = Points::new(points);
    Ok(kmeanspp(&pts, n_clusters, rng))
}

fn kmeanspp<R: Rng + ?Sized>(pts: &Points, g: usize, rng: &mut R) -> Vec<usize> {
    let n = pts.n;
    let dim = pts.dim;
    let mut chosen = Vec::with_capacity(g);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(pts.row(i), pts.row(chosen[0]))).collect();
    while chosen.len() < g {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // Rounding can leave `pick` on a zero-weight point; walk back to a positive one.
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // Fewer distinct points than clusters: any unused index will do.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), pts.row(next)));
        }
    }
    let mut centers = Vec::with_capacity(g * dim);
    for &c in &chosen {
        centers.extend_from_slice(pts.row(c));
    }
    (0..n).map(|i| nearest(pts.row(i), &centers, g, dim)).collect()
}

/// Random stream for start `start_index` under `seed`.
pub fn start_rng(seed: u64, start_index: usize) -> rand_chacha::ChaCha8Rng {
    seeding::stream(seed, &[start_index as u64])
}

/// Best of `n_starts` k-means++ / Lloyd runs. Ties in the objective keep
/// the earliest start.
pub fn kmeans_multistart(points: &DMatrix<f64>, n_clusters: usize, n_starts: usize, seed: u64) -> Result<KMeansResult> {
    check_input(points, n_clusters)?;
    if n_starts == 0 {
        return Err(Error::InvalidInput("n_starts must be at least 1".into()));
    }
    let pts = Points::new(points);
    let run = |s: usize| {
        let mut rng = start_rng(seed, s);
        let labels = kmeanspp(&pts, n_clusters, &mut rng);
        lloyd(&pts, n_clusters, labels, s)
    };
    let runs: Vec<KMeansResult> = if n_starts >= 64 {
        (0..n_starts).into_par_iter().map(run).collect()
    } else {
        (0..n_starts).map(run).collect()
    };
    let best = runs
        .into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .expect("at least one start");
    Ok(best)
}

/// Sum of squared distances from each point to the mean of its cluster.
pub fn partition_objective(points: &DMatrix<f64>, partition: &Partition) -> f64 {
    let pts = Points::new(points);
    let centers = means(&pts, partition.labels(), partition.n_clusters());
    objective(&pts, partition.labels(), &centers)
}
