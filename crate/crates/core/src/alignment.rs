//! Assignment problems: the Hungarian solver, centroid alignment between
//! successive clusterings, label remapping and the assignment-change rate.

use ndarray::{Array2, ArrayView2};

use crate::clustering::squared_distance;
use crate::error::{Error, Result};

/// A one-to-one mapping `forward[i] = j` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    pub forward: Vec<usize>,
    pub inverse: Vec<usize>,
    pub total_cost: f64,
}

impl AlignmentMap {
    pub fn identity(k: usize) -> Self {
        Self {
            forward: (0..k).collect(),
            inverse: (0..k).collect(),
            total_cost: 0.0,
        }
    }

    pub fn from_forward(forward: Vec<usize>, total_cost: f64) -> Result<Self> {
        let mut inverse = vec![usize::MAX; forward.len()];
        for (i, &j) in forward.iter().enumerate() {
            if j >= forward.len() || inverse[j] != usize::MAX {
                return Err(Error::arg("mapping is not a permutation"));
            }
            inverse[j] = i;
        }
        Ok(Self {
            forward,
            inverse,
            total_cost,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn inverted(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
            total_cost: self.total_cost,
        }
    }
}

/// Minimum-cost perfect matching on a square cost matrix in `O(K^3)`.
///
/// Shortest augmenting paths with row/column potentials; rows are added one
/// at a time and each addition runs a Dijkstra-like scan over the columns.
pub fn hungarian_solve(cost: ArrayView2<f64>) -> Result<AlignmentMap> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::arg(format!(
            "cost matrix must be square, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::arg("cost matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok(AlignmentMap::identity(0));
    }

    // 1-based arrays; column 0 is a virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[[r - 1, col - 1]] - u[r] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if row_of[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of[col0] = row_of[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut forward = vec![0usize; n];
    for col in 1..=n {
        forward[row_of[col] - 1] = col - 1;
    }
    let total_cost = forward.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
    AlignmentMap::from_forward(forward, total_cost)
}

/// Matches each current centroid `i` to a previous centroid `forward[i]`,
/// minimizing the summed Euclidean (unsquared) distances.
pub fn align_centroids(current: ArrayView2<f64>, previous: ArrayView2<f64>) -> Result<AlignmentMap> {
    if current.dim() != previous.dim() {
        return Err(Error::arg(format!(
            "centroid sets differ in shape: {:?} vs {:?}",
            current.dim(),
            previous.dim()
        )));
    }
    let k = current.nrows();
    let cost = Array2::from_shape_fn((k, k), |(i, j)| {
        squared_distance(current.row(i), previous.row(j)).sqrt()
    });
    hungarian_solve(cost.view())
}

/// Applies the inverse mapping to every label.
pub fn remap_labels(labels: &[usize], map: &AlignmentMap) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&l| {
            map.inverse.get(l).copied().ok_or(Error::Index {
                what: "alignment map",
                index: l,
                len: map.len(),
            })
        })
        .collect()
}

/// Fraction of positions where the two assignments differ.
pub fn delta_diff(current: &[usize], previous: &[usize]) -> Result<f64> {
    if current.len() != previous.len() {
        return Err(Error::arg(format!(
            "assignments differ in length: {} vs {}",
            current.len(),
            previous.len()
        )));
    }
    if current.is_empty() {
        return Ok(0.0);
    }
    let changed = current.iter().zip(previous).filter(|(a, b)| a != b).count();
    Ok(changed as f64 / current.len() as f64)
}
