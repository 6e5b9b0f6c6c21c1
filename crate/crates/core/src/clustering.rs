//! First step: two-way clustering of units and periods.
//!
//! Units are clustered on their time-series averages `a_i` of
//! `z_it = (x_it, y_it)` and periods on their cross-section averages `b_t`.
//! Both outcome and regressors always enter `z`. When the number of clusters
//! is chosen from the data, it is the smallest `G` whose per-item k-means
//! error `Q(G)` does not exceed the estimated noise `V` of the averages,
//! capped at `floor(4n/5)`.
//!
//! The module also provides the averaging-free alternative: average-linkage
//! hierarchical clustering on a max-over-third-parties pseudo-distance.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kmeans::{self, KMeansResult};
use crate::panel::{PanelData, Partition};
use crate::seeding;

/// Requested number of clusters along one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumClusters {
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for NumClusters {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(NumClusters::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(NumClusters::Fixed(n)),
            _ => Err(format!("expected 'auto' or a positive integer, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusteringOptions {
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        Self { n_starts: kmeans::DEFAULT_STARTS, seed: 0 }
    }
}

/// Averages fed to the two k-means problems, with their noise estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInputs {
    /// N x (K+1) unit averages, outcome in the last column.
    pub a: DMatrix<f64>,
    /// T x (K+1) period averages.
    pub b: DMatrix<f64>,
    pub v_g: f64,
    pub v_c: f64,
}

/// Time-series averages over `times` of units in `units`, plus
/// `V = 1/(n_u n_t^2) sum ||z_it - a_i||^2`.
pub fn unit_averages(z: &[&DMatrix<f64>], units: Range<usize>, times: Range<usize>) -> (DMatrix<f64>, f64) {
    let (nu, nt) = (units.len(), times.len());
    let mut a = DMatrix::zeros(nu, z.len());
    let mut ss = 0.0;
    for (k, zk) in z.iter().enumerate() {
        for (r, i) in units.clone().enumerate() {
            let mean = times.clone().map(|t| zk[(i, t)]).sum::<f64>() / nt as f64;
            a[(r, k)] = mean;
            ss += times.clone().map(|t| (zk[(i, t)] - mean).powi(2)).sum::<f64>();
        }
    }
    (a, ss / (nu as f64 * (nt * nt) as f64))
}

/// Cross-section averages over `units` for periods in `times`, plus
/// `V = 1/(n_u^2 n_t) sum ||z_it - b_t||^2`.
pub fn time_averages(z: &[&DMatrix<f64>], units: Range<usize>, times: Range<usize>) -> (DMatrix<f64>, f64) {
    let (nu, nt) = (units.len(), times.len());
    let mut b = DMatrix::zeros(nt, z.len());
    let mut ss = 0.0;
    for (k, zk) in z.iter().enumerate() {
        for (r, t) in times.clone().enumerate() {
            let mean = units.clone().map(|i| zk[(i, t)]).sum::<f64>() / nu as f64;
            b[(r, k)] = mean;
            ss += units.clone().map(|i| (zk[(i, t)] - mean).powi(2)).sum::<f64>();
        }
    }
    (b, ss / ((nu * nu) as f64 * nt as f64))
}

/// Cluster inputs from arbitrary N x T components (no regressor needed).
pub fn cluster_inputs_from_components(z: &[&DMatrix<f64>]) -> ClusterInputs {
    let (n, t) = z[0].shape();
    let (a, v_g) = unit_averages(z, 0..n, 0..t);
    let (b, v_c) = time_averages(z, 0..n, 0..t);
    ClusterInputs { a, b, v_g, v_c }
}

pub fn compute_cluster_inputs(panel: &PanelData) -> ClusterInputs {
    cluster_inputs_from_components(&panel.z_components())
}

/// `Q(G)`: the best multistart k-means objective divided by the number of points.
pub fn kmeans_objective_at(points: &DMatrix<f64>, n_clusters: usize, n_starts: usize, seed: u64) -> Result<f64> {
    Ok(kmeans::kmeans_multistart(points, n_clusters, n_starts, seed)?.objective / points.nrows() as f64)
}

/// Outcome of the data-driven choice of the number of clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub n_clusters: usize,
    /// `Q(1), Q(2), ..` up to the selected count.
    pub q_values: Vec<f64>,
    pub v_hat: f64,
    pub cap: usize,
    pub kmeans: KMeansResult,
}

/// Smallest `G >= 1` with `Q(G) <= v_hat`, stopping at `cap`. Each `G` gets
/// its own multistart stream derived from `seed`.
pub fn select_num_clusters(points: &DMatrix<f64>, v_hat: f64, cap: usize, n_starts: usize, seed: u64) -> Result<Selection> {
    let cap = cap.clamp(1, points.nrows().max(1));
    let n = points.nrows() as f64;
    let mut q_values = Vec::new();
    let mut g = 1;
    loop {
        let run = kmeans::kmeans_multistart(points, g, n_starts, seeding::derive_seed(seed, &[g as u64]))?;
        let q = run.objective / n;
        q_values.push(q);
        if q <= v_hat || g >= cap {
            return Ok(Selection { n_clusters: g, q_values, v_hat, cap, kmeans: run });
        }
        g += 1;
    }
}

/// `floor(4n/5)`, at least 1.
pub fn selection_cap(n: usize) -> usize {
    (4 * n / 5).max(1)
}

/// Clusters `points` into a fixed or data-driven number of groups.
pub fn cluster_points(
    points: &DMatrix<f64>,
    request: NumClusters,
    v_hat: f64,
    cap: usize,
    opts: &ClusteringOptions,
) -> Result<Selection> {
    match request {
        NumClusters::Auto => select_num_clusters(points, v_hat, cap, opts.n_starts, opts.seed),
        NumClusters::Fixed(g) => {
            let run = kmeans::kmeans_multistart(points, g, opts.n_starts, seeding::derive_seed(opts.seed, &[g as u64]))?;
            let q = run.objective / points.nrows() as f64;
            Ok(Selection { n_clusters: g, q_values: vec![q], v_hat, cap: g, kmeans: run })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayClusters {
    pub units: Selection,
    pub times: Selection,
}

impl TwoWayClusters {
    pub fn unit_partition(&self) -> &Partition {
        &self.units.kmeans.partition
    }

    pub fn time_partition(&self) -> &Partition {
        &self.times.kmeans.partition
    }
}

/// Runs k-means on unit averages and on period averages.
pub fn two_way_cluster(
    panel: &PanelData,
    units: NumClusters,
    times: NumClusters,
    opts: &ClusteringOptions,
) -> Result<TwoWayClusters> {
    let inputs = compute_cluster_inputs(panel);
    let unit_opts = ClusteringOptions { seed: seeding::derive_seed(opts.seed, &[0]), ..*opts };
    let time_opts = ClusteringOptions { seed: seeding::derive_seed(opts.seed, &[1]), ..*opts };
    let units = cluster_points(&inputs.a, units, inputs.v_g, selection_cap(panel.n_units()), &unit_opts)?;
    let times = cluster_points(&inputs.b, times, inputs.v_c, selection_cap(panel.n_periods()), &time_opts)?;
    Ok(TwoWayClusters { units, times })
}

/// Pseudo-distance matrix between units (or periods) with the merge threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDistance {
    pub matrix: DMatrix<f64>,
    pub sigma_check: f64,
    pub threshold: f64,
}

/// Pseudo-distance between the rows of the given item x length series, one
/// matrix per variable with the outcome first.
fn pseudo_distance(series: &[DMatrix<f64>], n_units: usize, n_periods: usize) -> Result<PseudoDistance> {
    let n = series[0].nrows();
    let len = series[0].ncols() as f64;
    if n < 3 {
        return Err(Error::TooFewUnits(n));
    }
    let m = series[0].ncols();
    let mut matrix = DMatrix::zeros(n, n);
    let mut diff = vec![0.0; m];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut best = f64::NEG_INFINITY;
            for l in (0..n).filter(|&l| l != i && l != j) {
                let mut v = 0.0;
                for s in series {
                    for (t, d) in diff.iter_mut().enumerate() {
                        *d = s[(i, t)] - s[(j, t)];
                    }
                    let inner: f64 = diff.iter().enumerate().map(|(t, d)| d * s[(l, t)]).sum();
                    v += inner.abs();
                }
                best = best.max(v);
            }
            matrix[(i, j)] = best / len;
            matrix[(j, i)] = best / len;
        }
    }

    // sigma_check sums, over variables, the largest nearest-neighbour half mean square gap.
    let mut sigma_check = 0.0;
    for s in series {
        let mut worst = 0.0f64;
        for i in 0..n {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .map(|j| (0..m).map(|t| (s[(i, t)] - s[(j, t)]).powi(2)).sum::<f64>() / (2.0 * len))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
        sigma_check += worst;
    }
    let k = (series.len() - 1) as f64;
    let threshold = 1.35 * len.ln() / (k * (n_units.min(n_periods) as f64).sqrt()) * sigma_check;
    Ok(PseudoDistance { matrix, sigma_check, threshold })
}

pub fn pseudo_distance_units(panel: &PanelData) -> Result<PseudoDistance> {
    let series: Vec<DMatrix<f64>> = std::iter::once(panel.y().clone()).chain(panel.x().iter().cloned()).collect();
    pseudo_distance(&series, panel.n_units(), panel.n_periods())
}

pub fn pseudo_distance_times(panel: &PanelData) -> Result<PseudoDistance> {
    let series: Vec<DMatrix<f64>> = std::iter::once(panel.y().transpose())
        .chain(panel.x().iter().map(|x| x.transpose()))
        .collect();
    pseudo_distance(&series, panel.n_units(), panel.n_periods())
}

/// One agglomeration step: clusters `left` and `right` (ids as in scipy:
/// `0..n` are items, `n + s` is the cluster formed at step `s`).
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Full average-linkage dendrogram of a dissimilarity matrix. Ties in the
/// minimum linkage go to the lowest pair of active slots.
pub fn average_linkage(d: &DMatrix<f64>) -> Vec<Merge> {
    let n = d.nrows();
    let mut dist = d.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<usize> = vec![1; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                if dist[(i, j)] < best.2 {
                    best = (i, j, dist[(i, j)]);
                }
            }
        }
        let (i, j, h) = best;
        let (ni, nj) = (sizes[i] as f64, sizes[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let v = (ni * dist[(i, k)] + nj * dist[(j, k)]) / (ni + nj);
            dist[(i, k)] = v;
            dist[(k, i)] = v;
        }
        active[j] = false;
        sizes[i] += sizes[j];
        merges.push(Merge { left: ids[i].min(ids[j]), right: ids[i].max(ids[j]), height: h, size: sizes[i] });
        ids[i] = n + step;
    }
    merges
}

/// Cuts the average-linkage dendrogram of `pd` at its threshold: merging
/// stops before the first merge whose height exceeds the threshold. If that
/// leaves more than `cap` clusters, the cut is moved to exactly `cap`.
pub fn hierarchical_cluster(pd: &PseudoDistance, cap: usize) -> Partition {
    let n = pd.matrix.nrows();
    let merges = average_linkage(&pd.matrix);
    let mut applied = merges.iter().take_while(|m| m.height <= pd.threshold).count();
    let cap = cap.clamp(1, n);
    if n - applied > cap {
        applied = n - cap;
    }
    cut_dendrogram(n, &merges[..applied])
}

fn cut_dendrogram(n: usize, merges: &[Merge]) -> Partition {
    // Union-find over items and merge ids.
    let mut parent: Vec<usize> = (0..n + merges.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, m) in merges.iter().enumerate() {
        let node = n + s;
        let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
        parent[l] = node;
        parent[r] = node;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut map = std::collections::HashMap::new();
    let labels: Vec<usize> = roots
        .iter()
        .map(|r| {
            let next = map.len();
            *map.entry(*r).or_insert(next)
        })
        .collect();
    let g = map.len();
    Partition::new(labels, g).expect("every root labels at least one item")
}

/// Hierarchical alternative to [`two_way_cluster`], with caps
/// `floor(2N/5)` and `floor(2T/5)`.
pub fn hierarchical_two_way_cluster(panel: &PanelData) -> Result<(Partition, Partition)> {
    let units = hierarchical_cluster(&pseudo_distance_units(panel)?, 2 * panel.n_units() / 5);
    let times = hierarchical_cluster(&pseudo_distance_times(panel)?, 2 * panel.n_periods() / 5);
    Ok((units, times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn constant_data_has_no_dispersion() {
        let y = DMatrix::from_element(4, 5, 2.5);
        let x = DMatrix::from_element(4, 5, -1.0);
        let inp = cluster_inputs_from_components(&[&x, &y]);
        assert!(inp.a.row_iter().all(|r| r[0] == -1.0 && r[1] == 2.5));
        assert!(inp.b.row_iter().all(|r| r[0] == -1.0 && r[1] == 2.5));
        assert_eq!((inp.v_g, inp.v_c), (0.0, 0.0));
    }

    #[test]
    fn outcome_only_hand_means() {
        let y = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 4.0, 6.0]);
        let inp = cluster_inputs_from_components(&[&y]);
        assert_eq!(inp.a.as_slice(), &[1.0, 5.0]);
        assert_eq!(inp.b.as_slice(), &[2.0, 4.0]);
        // Each unit deviates by 1 in both periods: 4 / (2 * 4).
        assert_eq!(inp.v_g, 0.5);
        // Each period deviates by 2 for both units: 16 / (4 * 2).
        assert_eq!(inp.v_c, 2.0);
    }

    #[test]
    fn unit_dispersion_of_white_noise_is_about_one_over_t() {
        let (n, t) = (400, 40);
        let y = normal_matrix(n, t, 17);
        let inp = cluster_inputs_from_components(&[&y]);
        // E[V_g] = (T-1)/T^2; sd of the estimate is ~ sqrt(2/(N T)) / T.
        let expected = (t - 1) as f64 / (t * t) as f64;
        let sd = (2.0 / (n * t) as f64).sqrt() / t as f64;
        assert!((inp.v_g - expected).abs() < 4.0 * sd, "{} vs {}", inp.v_g, expected);
        assert!((inp.v_g - 1.0 / t as f64).abs() < 0.1 / t as f64);
    }

    #[test]
    fn objective_at_extremes() {
        let pts = normal_matrix(12, 2, 3);
        assert_eq!(kmeans_objective_at(&pts, 12, 5, 0).unwrap(), 0.0);
        let mean = pts.row_mean();
        let tss: f64 = (0..12).map(|i| (pts.row(i) - &mean).norm_squared()).sum::<f64>() / 12.0;
        assert!((kmeans_objective_at(&pts, 1, 5, 0).unwrap() - tss).abs() < 1e-12);
    }

    #[test]
    fn objective_decreases_in_g_on_random_data() {
        let pts = normal_matrix(40, 2, 21);
        let q: Vec<f64> = (1..=8).map(|g| kmeans_objective_at(&pts, g, 30, g as u64).unwrap()).collect();
        for w in q.windows(2) {
            assert!(w[1] <= w[0], "{q:?}");
        }
    }

    #[test]
    fn selection_edge_cases() {
        let pts = normal_matrix(10, 2, 5);
        let q1 = kmeans_objective_at(&pts, 1, 5, 0).unwrap();
        assert_eq!(select_num_clusters(&pts, q1 + 1.0, 10, 5, 0).unwrap().n_clusters, 1);
        assert_eq!(select_num_clusters(&pts, 0.0, 10, 5, 0).unwrap().n_clusters, 10);
        let capped = select_num_clusters(&pts, 0.0, 4, 5, 0).unwrap();
        assert_eq!(capped.n_clusters, 4);
        assert_eq!(capped.q_values.len(), 4);
    }

    #[test]
    fn selection_respects_cap_and_threshold() {
        for seed in 0..20 {
            let pts = normal_matrix(25, 2, 1000 + seed);
            let v = 0.05 * (seed as f64 + 1.0);
            let cap = 3 + (seed as usize % 10);
            let s = select_num_clusters(&pts, v, cap, 10, seed).unwrap();
            assert!(s.n_clusters <= cap);
            if s.n_clusters < cap {
                assert!(*s.q_values.last().unwrap() <= v);
            }
            assert!(s.q_values[..s.n_clusters - 1].iter().all(|&q| q > v));
        }
    }

    fn grouped_panel() -> PanelData {
        // Units 0,2,4 share one profile and 1,3,5 another; periods alternate.
        let (n, t) = (6, 8);
        let y = DMatrix::from_fn(n, t, |i, s| if i % 2 == 0 { 1.0 } else { 5.0 } + if s % 2 == 0 { 0.0 } else { 10.0 });
        let x = DMatrix::from_fn(n, t, |i, s| if i % 2 == 0 { -2.0 } else { 3.0 } * if s % 2 == 0 { 1.0 } else { 2.0 });
        PanelData::from_matrices(y, vec![x]).unwrap()
    }

    #[test]
    fn noiseless_groups_are_recovered() {
        let p = grouped_panel();
        let tw = two_way_cluster(&p, NumClusters::Auto, NumClusters::Auto, &ClusteringOptions::default()).unwrap();
        assert_eq!(tw.unit_partition().canonical().labels(), &[0, 1, 0, 1, 0, 1]);
        assert_eq!(tw.time_partition().canonical().labels(), &[0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn saturated_counts_give_singletons() {
        let p = grouped_panel();
        let tw = two_way_cluster(&p, NumClusters::Fixed(6), NumClusters::Fixed(8), &ClusteringOptions::default()).unwrap();
        assert!(tw.unit_partition().sizes().iter().all(|&s| s == 1));
        assert!(tw.time_partition().sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn num_clusters_parses() {
        assert_eq!("auto".parse::<NumClusters>().unwrap(), NumClusters::Auto);
        assert_eq!("4".parse::<NumClusters>().unwrap(), NumClusters::Fixed(4));
        assert!("0".parse::<NumClusters>().is_err());
    }

    fn brute_pseudo_distance(y: &DMatrix<f64>, x: &[DMatrix<f64>], i: usize, j: usize) -> f64 {
        let (n, t) = y.shape();
        let mut best = f64::NEG_INFINITY;
        for l in 0..n {
            if l == i || l == j {
                continue;
            }
            let mut v = (0..t).map(|s| (y[(i, s)] - y[(j, s)]) * y[(l, s)]).sum::<f64>().abs();
            for xk in x {
                v += (0..t).map(|s| (xk[(i, s)] - xk[(j, s)]) * xk[(l, s)]).sum::<f64>().abs();
            }
            best = best.max(v);
        }
        best / t as f64
    }

    #[test]
    fn pseudo_distance_hand_instance() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 3.0, -1.0]);
        let x = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 1.0, 1.0, -1.0, 2.0]);
        let p = PanelData::from_matrices(y.clone(), vec![x.clone()]).unwrap();
        let pd = pseudo_distance_units(&p).unwrap();
        // Units 0,1 against unit 2: |(1)(3) + (1)(-1)| + |(-0.5)(-1) + (-1)(2)| = 2 + 1.5.
        assert!((pd.matrix[(0, 1)] - 3.5 / 2.0).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((pd.matrix[(i, j)] - brute_pseudo_distance(&y, std::slice::from_ref(&x), i, j)).abs() < 1e-14);
                }
            }
        }
        // sigma_check: y gaps (0,1)=2,(0,2)=13,(1,2)=13 -> nearest /4: 0.5,0.5,3.25 -> 3.25;
        // x gaps (0,1)=1.25,(0,2)=6.25,(1,2)=5 -> 0.3125,0.3125,1.25 -> 1.25.
        assert!((pd.sigma_check - 4.5).abs() < 1e-14);
        let c = 1.35 * 2f64.ln() / 2f64.sqrt() * 4.5;
        assert!((pd.threshold - c).abs() < 1e-14);
    }

    #[test]
    fn identical_units_are_at_distance_zero() {
        let mut y = normal_matrix(5, 6, 8);
        let mut x = normal_matrix(5, 6, 9);
        let (ry, rx) = (y.row(1).into_owned(), x.row(1).into_owned());
        y.set_row(3, &ry);
        x.set_row(3, &rx);
        let pd = pseudo_distance_units(&PanelData::from_matrices(y, vec![x]).unwrap()).unwrap();
        assert_eq!(pd.matrix[(1, 3)], 0.0);
        assert_eq!(pd.matrix, pd.matrix.transpose());
        assert!((0..5).all(|i| pd.matrix[(i, i)] == 0.0));
    }

    #[test]
    fn pseudo_distance_ignores_period_order() {
        let y = normal_matrix(6, 7, 10);
        let x = normal_matrix(6, 7, 11);
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let permute = |m: &DMatrix<f64>| DMatrix::from_fn(6, 7, |i, s| m[(i, perm[s])]);
        let a = pseudo_distance_units(&PanelData::from_matrices(y.clone(), vec![x.clone()]).unwrap()).unwrap();
        let b = pseudo_distance_units(&PanelData::from_matrices(permute(&y), vec![permute(&x)]).unwrap()).unwrap();
        assert!((a.matrix - b.matrix).abs().max() < 1e-12);
    }

    #[test]
    fn too_few_units() {
        let p = PanelData::from_matrices(normal_matrix(2, 4, 1), vec![normal_matrix(2, 4, 2)]).unwrap();
        assert_eq!(pseudo_distance_units(&p).unwrap_err(), Error::TooFewUnits(2));
    }

    fn block_distance(blocks: &[usize], within: f64, between: f64) -> DMatrix<f64> {
        let n = blocks.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if blocks[i] == blocks[j] {
                within * (1.0 + 0.01 * ((i + j) % 3) as f64)
            } else {
                between * (1.0 + 0.01 * ((i * j) % 5) as f64)
            }
        })
    }

    #[test]
    fn threshold_above_everything_gives_one_cluster() {
        let m = block_distance(&[0, 0, 1, 1, 1], 1.0, 5.0);
        let p = hierarchical_cluster(&PseudoDistance { matrix: m, sigma_check: 0.0, threshold: 100.0 }, 2);
        assert_eq!(p.n_clusters(), 1);
    }

    #[test]
    fn zero_threshold_hits_the_cap() {
        let m = block_distance(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9], 1.0, 2.0);
        let p = hierarchical_cluster(&PseudoDistance { matrix: m, sigma_check: 0.0, threshold: 0.0 }, 2 * 10 / 5);
        assert_eq!(p.n_clusters(), 4);
    }

    #[test]
    fn separated_blocks_are_found() {
        let blocks = [0, 1, 0, 1, 1, 0, 0, 1, 1, 0];
        let m = block_distance(&blocks, 1.0, 10.0);
        let p = hierarchical_cluster(&PseudoDistance { matrix: m, sigma_check: 0.0, threshold: 3.0 }, 4);
        assert_eq!(p.n_clusters(), 2);
        assert_eq!(p.canonical().labels(), &blocks);
    }

    #[test]
    fn merge_heights_never_decrease() {
        let y = normal_matrix(15, 12, 30);
        let x = normal_matrix(15, 12, 31);
        let pd = pseudo_distance_units(&PanelData::from_matrices(y, vec![x]).unwrap()).unwrap();
        let merges = average_linkage(&pd.matrix);
        assert_eq!(merges.len(), 14);
        assert_eq!(merges.last().unwrap().size, 15);
        for w in merges.windows(2) {
            assert!(w[1].height >= w[0].height - 1e-12);
        }
    }
}
