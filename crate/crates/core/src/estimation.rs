//! Cluster-number estimation by over-clustering and discarding clusters
//! smaller than the mean cluster size, with known-cluster induction from
//! labeled class centroids in the semi-supervised case.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::alignment::hungarian_solve;
use crate::clustering::{kmeans_run, squared_distance, ClusterState, Init, KMeansConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEstimate {
    pub sizes: Vec<usize>,
    /// Mean cluster size `sum(sizes) / K'`.
    pub threshold: f64,
    pub known_set: BTreeSet<usize>,
    pub k_known: usize,
    pub k_new: usize,
    pub k_total: usize,
}

impl ClusterEstimate {
    /// Counts clusters with `size >= t` that are not in `known_set`, then
    /// adds `k_known`.
    pub fn from_sizes(sizes: Vec<usize>, known_set: BTreeSet<usize>, k_known: usize) -> Self {
        let k_prime = sizes.len().max(1);
        let threshold = sizes.iter().sum::<usize>() as f64 / k_prime as f64;
        let k_new = sizes
            .iter()
            .enumerate()
            .filter(|&(k, &s)| s as f64 >= threshold && !known_set.contains(&k))
            .count();
        Self {
            sizes,
            threshold,
            known_set,
            k_known,
            k_new,
            k_total: k_known + k_new,
        }
    }
}

/// Unsupervised estimate from one over-clustering into `k_prime` clusters.
pub fn estimate_k_unsup<R: Rng + ?Sized>(
    points: ArrayView2<f64>,
    k_prime: usize,
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<(ClusterEstimate, ClusterState)> {
    if k_prime > points.nrows() {
        return Err(Error::arg(format!(
            "K' = {k_prime} exceeds the number of points {}",
            points.nrows()
        )));
    }
    let state = kmeans_run(points, k_prime, Init::KMeansPlusPlus, config, rng)?;
    Ok((ClusterEstimate::from_sizes(state.sizes(), BTreeSet::new(), 0), state))
}

/// Per-class mean representations. `labeled` pairs a row of `points` with
/// its known class in `[0, k_known)`.
pub fn labeled_centroids(points: ArrayView2<f64>, labeled: &[(usize, usize)], k_known: usize) -> Result<Array2<f64>> {
    let mut sums = Array2::<f64>::zeros((k_known, points.ncols()));
    let mut counts = vec![0usize; k_known];
    for &(row, class) in labeled {
        if class >= k_known {
            return Err(Error::Index {
                what: "known classes",
                index: class,
                len: k_known,
            });
        }
        if row >= points.nrows() {
            return Err(Error::Index {
                what: "points",
                index: row,
                len: points.nrows(),
            });
        }
        let mut s = sums.row_mut(class);
        s += &points.row(row);
        counts[class] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::arg(format!("known class {missing} has no labeled samples")));
    }
    for (mut row, &c) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        row /= c as f64;
    }
    Ok(sums)
}

/// Matches labeled class centroids to cluster centroids one-to-one by
/// minimum summed Euclidean distance and returns the matched cluster ids.
///
/// The `K_known x K'` problem is padded to `K' x K'` with dummy rows whose
/// cost exceeds every real cost.
pub fn induce_known_clusters(class_centroids: ArrayView2<f64>, centroids: ArrayView2<f64>) -> Result<BTreeSet<usize>> {
    let k_known = class_centroids.nrows();
    let k_prime = centroids.nrows();
    if k_known > k_prime {
        return Err(Error::arg(format!(
            "{k_known} known classes cannot be matched into {k_prime} clusters"
        )));
    }
    if class_centroids.ncols() != centroids.ncols() {
        return Err(Error::arg("centroid dimensions differ"));
    }
    let real = Array2::from_shape_fn((k_known, k_prime), |(i, j)| {
        squared_distance(class_centroids.row(i), centroids.row(j)).sqrt()
    });
    let pad = real.iter().fold(0.0f64, |a, &b| a.max(b)) + 1.0;
    let mut cost = Array2::from_elem((k_prime, k_prime), pad);
    cost.slice_mut(ndarray::s![..k_known, ..]).assign(&real);
    let map = hungarian_solve(cost.view())?;
    Ok(map.forward[..k_known].iter().copied().collect())
}

/// Semi-supervised estimate. Without labeled samples this reduces to
/// [`estimate_k_unsup`].
pub fn estimate_k_semi<R: Rng + ?Sized>(
    points: ArrayView2<f64>,
    labeled: &[(usize, usize)],
    k_known: usize,
    k_prime: usize,
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<(ClusterEstimate, ClusterState)> {
    if labeled.is_empty() || k_known == 0 {
        return estimate_k_unsup(points, k_prime, config, rng);
    }
    if k_known > k_prime {
        return Err(Error::arg(format!("K_known = {k_known} exceeds K' = {k_prime}")));
    }
    let class_centroids = labeled_centroids(points, labeled, k_known)?;
    let (unsup, state) = estimate_k_unsup(points, k_prime, config, rng)?;
    let known = induce_known_clusters(class_centroids.view(), state.centroids.view())?;
    Ok((ClusterEstimate::from_sizes(unsup.sizes, known, k_known), state))
}
