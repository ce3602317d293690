//! K-Means++ seeding and Lloyd iterations with cold or warm initialization.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent K-Means++ restarts for a cold start; the lowest objective
    /// wins.
    pub n_init: usize,
    /// Candidates drawn per seeding step, keeping the one that lowers the
    /// potential most. `None` uses `2 + floor(ln k)`; `Some(1)` is plain
    /// K-Means++.
    pub local_trials: Option<usize>,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
            local_trials: None,
        }
    }
}

impl KMeansConfig {
    pub fn trials_for(&self, k: usize) -> usize {
        self.local_trials
            .unwrap_or_else(|| 2 + (k.max(1) as f64).ln().floor() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    KMeansPlusPlus,
    Warm(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// `K x D`.
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub objective: f64,
    /// Number of assignment steps performed.
    pub iterations: usize,
    /// Objective after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl ClusterState {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

#[inline]
pub fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lowest index on ties, and its squared
/// distance.
pub fn nearest(point: ArrayView1<f64>, centroids: ArrayView2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

pub fn assign(points: ArrayView2<f64>, centroids: ArrayView2<f64>) -> Vec<usize> {
    points.rows().into_iter().map(|p| nearest(p, centroids).0).collect()
}

/// `sum_i |x_i - c_{y_i}|^2`.
pub fn mse_objective(points: ArrayView2<f64>, centroids: ArrayView2<f64>, assignment: &[usize]) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(assignment)
        .map(|(p, &k)| squared_distance(p, centroids.row(k)))
        .sum()
}

fn check_points(points: ArrayView2<f64>, k: usize) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::arg("no points to cluster"));
    }
    if k == 0 {
        return Err(Error::arg("cluster count must be positive"));
    }
    if k > points.nrows() {
        return Err(Error::arg(format!(
            "cannot seed {k} clusters from {} points",
            points.nrows()
        )));
    }
    Ok(())
}

/// K-Means++ seeding: the first centroid is uniform over the points, each
/// following one is drawn with probability proportional to the squared
/// distance to the nearest centroid chosen so far.
pub fn kmeanspp_seed<R: Rng + ?Sized>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Result<Array2<f64>> {
    kmeanspp_seed_greedy(points, k, 1, rng)
}

/// Greedy K-Means++: each step draws `trials` candidates by squared
/// distance and keeps the one giving the smallest total squared distance
/// to the chosen set. One trial is plain K-Means++.
pub fn kmeanspp_seed_greedy<R: Rng + ?Sized>(points: ArrayView2<f64>, k: usize, trials: usize, rng: &mut R) -> Result<Array2<f64>> {
    check_points(points, k)?;
    let n = points.nrows();
    let dist_to = |c: usize| -> Vec<f64> {
        points
            .rows()
            .into_iter()
            .map(|p| squared_distance(p, points.row(c)))
            .collect()
    };
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2 = dist_to(chosen[0]);
    while chosen.len() < k {
        let dist = match WeightedIndex::new(&d2) {
            Ok(dist) => dist,
            // Every remaining point coincides with a centroid; fall back to
            // the first unchosen index.
            Err(_) => {
                let next = (0..n).find(|i| !chosen.contains(i)).expect("k <= n");
                chosen.push(next);
                continue;
            }
        };
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials.max(1) {
            let c = dist.sample(rng);
            let updated: Vec<f64> = d2.iter().zip(dist_to(c)).map(|(&a, b)| a.min(b)).collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, c, updated));
            }
        }
        let (_, next, updated) = best.expect("at least one trial");
        chosen.push(next);
        d2 = updated;
    }
    Ok(points.select(ndarray::Axis(0), &chosen))
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: ArrayView2<f64>, centroids: &mut Array2<f64>, assignment: &mut [usize]) {
    let k = centroids.nrows();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = points
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| sizes[assignment[*i]] > 1)
            .map(|(i, p)| (i, squared_distance(p, centroids.row(assignment[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else { return };
        centroids.row_mut(empty).assign(&points.row(i));
        assignment[i] = empty;
    }
}

fn update_centroids(points: ArrayView2<f64>, assignment: &[usize], k: usize, previous: &Array2<f64>) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &a) in points.rows().into_iter().zip(assignment) {
        let mut row = sums.row_mut(a);
        row += &p;
        counts[a] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            sums.row_mut(c).assign(&previous.row(c));
        } else {
            let mut row = sums.row_mut(c);
            row /= n as f64;
        }
    }
    sums
}

fn lloyd(points: ArrayView2<f64>, mut centroids: Array2<f64>, config: &KMeansConfig) -> ClusterState {
    let k = centroids.nrows();
    let mut trace = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations = 0;
    for _ in 0..config.max_iter.max(1) {
        iterations += 1;
        let mut assignment = assign(points, centroids.view());
        repair_empty(points, &mut centroids, &mut assignment);
        trace.push(mse_objective(points, centroids.view(), &assignment));
        let next = update_centroids(points, &assignment, k, &centroids);
        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let fixpoint = previous.as_ref() == Some(&assignment);
        previous = Some(assignment);
        if fixpoint || shift < config.tol {
            break;
        }
    }
    let assignment = assign(points, centroids.view());
    let objective = mse_objective(points, centroids.view(), &assignment);
    ClusterState {
        centroids,
        assignment,
        objective,
        iterations,
        objective_trace: trace,
    }
}

/// Runs K-Means from greedy K-Means++ seeds (best of `n_init` restarts) or from
/// warm centroids (a single run, no re-seeding).
pub fn kmeans_run<R: Rng + ?Sized>(
    points: ArrayView2<f64>,
    k: usize,
    init: Init,
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<ClusterState> {
    match init {
        Init::Warm(centroids) => {
            if centroids.nrows() != k || centroids.ncols() != points.ncols() {
                return Err(Error::arg(format!(
                    "warm centroids are {}x{}, expected {k}x{}",
                    centroids.nrows(),
                    centroids.ncols(),
                    points.ncols()
                )));
            }
            if points.nrows() == 0 {
                return Err(Error::arg("no points to cluster"));
            }
            Ok(lloyd(points, centroids, config))
        }
        Init::KMeansPlusPlus => {
            let mut best: Option<ClusterState> = None;
            for _ in 0..config.n_init.max(1) {
                let seeds = kmeanspp_seed_greedy(points, k, config.trials_for(k), rng)?;
                let state = lloyd(points, seeds, config);
                if best.as_ref().is_none_or(|b| state.objective < b.objective) {
                    best = Some(state);
                }
            }
            Ok(best.expect("at least one restart"))
        }
    }
}

/// Mean of the rows of `points`.
pub fn mean_row(points: ArrayView2<f64>) -> Array1<f64> {
    points.mean_axis(ndarray::Axis(0)).expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> KMeansConfig {
        KMeansConfig {
            n_init: 1,
            ..Default::default()
        }
    }

    #[test]
    fn seeding_exhausts_points() {
        let pts = array![[0.0], [1.0], [5.0], [9.0]];
        let seeds = kmeanspp_seed(pts.view(), 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut got: Vec<f64> = seeds.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![0.0, 1.0, 5.0, 9.0]);
        assert!(kmeanspp_seed(pts.view(), 5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn coincident_point_is_never_second_seed() {
        // Two copies of the origin and one far point: once the origin is
        // chosen, its twin has zero mass.
        let pts = array![[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = kmeanspp_seed(pts.view(), 2, &mut rng).unwrap();
            assert_ne!(s.row(0), s.row(1));
        }
    }

    #[test]
    fn single_cluster_mean() {
        let pts = array![[0.0], [2.0]];
        let s = kmeans_run(pts.view(), 1, Init::KMeansPlusPlus, &cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.centroids, array![[1.0]]);
        assert_eq!(s.objective, 2.0);
    }

    #[test]
    fn two_clusters_on_line() {
        let pts = array![[0.0], [1.0], [10.0], [11.0]];
        let s = kmeans_run(pts.view(), 2, Init::KMeansPlusPlus, &KMeansConfig::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut c: Vec<f64> = s.centroids.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(s.objective, 1.0);
    }

    #[test]
    fn warm_start_at_fixpoint_takes_one_step() {
        let pts = array![[0.0, 0.0], [5.0, 5.0], [-3.0, 1.0]];
        let s = kmeans_run(pts.view(), 3, Init::Warm(pts.clone()), &cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn warm_shape_is_checked() {
        let pts = array![[0.0, 0.0], [5.0, 5.0]];
        let bad = array![[0.0], [1.0]];
        assert!(kmeans_run(pts.view(), 2, Init::Warm(bad), &cfg(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // The third centroid is far from everything and starts empty.
        let pts = array![[0.0], [0.1], [5.0], [5.2], [9.0]];
        let warm = array![[0.0], [5.0], [100.0]];
        let s = kmeans_run(pts.view(), 3, Init::Warm(warm), &cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(s.sizes().iter().all(|&n| n > 0));
        for w in s.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn objective_cases() {
        let pts = array![[3.0, 0.0]];
        let c = array![[0.0, 0.0]];
        assert_eq!(mse_objective(pts.view(), c.view(), &[0]), 9.0);
        assert_eq!(mse_objective(c.view(), c.view(), &[0]), 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = array![[-1.0], [1.0]];
        assert_eq!(nearest(array![0.0].view(), c.view()).0, 0);
    }
}
