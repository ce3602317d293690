//! Clustering metrics: NMI (arithmetic-mean normalization, natural log),
//! ARI and Hungarian-matched accuracy.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::alignment::hungarian_solve;
use crate::error::{Error, Result};

/// Co-occurrence counts of predicted clusters (rows) and ground-truth classes
/// (columns). Labels are compacted to dense indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Array2<usize>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0usize);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl ContingencyTable {
    pub fn new(y_gt: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_gt.len() != y_pred.len() {
            return Err(Error::arg(format!(
                "label vectors differ in length: {} vs {}",
                y_gt.len(),
                y_pred.len()
            )));
        }
        let (gt, k_gt) = compact(y_gt);
        let (pred, k_pred) = compact(y_pred);
        let mut counts = Array2::zeros((k_pred, k_gt));
        for (&p, &g) in pred.iter().zip(&gt) {
            counts[[p, g]] += 1;
        }
        let row_sums = counts.rows().into_iter().map(|r| r.sum()).collect();
        let col_sums = counts.columns().into_iter().map(|c| c.sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: y_gt.len(),
        })
    }
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(y_gt: &[usize], y_pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(y_gt, y_pred)?;
    if t.total == 0 {
        return Err(Error::arg("empty labelings"));
    }
    let n = t.total as f64;
    let h_gt = entropy(&t.col_sums, n);
    let h_pred = entropy(&t.row_sums, n);
    let denom = 0.5 * (h_gt + h_pred);
    if denom == 0.0 {
        // Both partitions are a single block, hence identical.
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for ((i, j), &c) in t.counts.indexed_iter() {
        if c > 0 {
            let c = c as f64;
            mi += c / n * (n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

pub fn ari(y_gt: &[usize], y_pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(y_gt, y_pred)?;
    if t.total < 2 {
        return Err(Error::arg("ARI needs at least two samples"));
    }
    let index: f64 = t.counts.iter().map(|&c| choose2(c)).sum();
    let rows: f64 = t.row_sums.iter().map(|&c| choose2(c)).sum();
    let cols: f64 = t.col_sums.iter().map(|&c| choose2(c)).sum();
    let expected = rows * cols / choose2(t.total);
    let max = 0.5 * (rows + cols);
    let denom = max - expected;
    if denom == 0.0 {
        // Degenerate pairings (e.g. both all-singletons or both one block):
        // the partitions agree on every pair.
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Best accuracy over one-to-one mappings from predicted clusters to classes.
/// The contingency table is padded with zero-count rows or columns when the
/// alphabets differ in size.
pub fn acc(y_gt: &[usize], y_pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(y_gt, y_pred)?;
    if t.total == 0 {
        return Err(Error::arg("empty labelings"));
    }
    let (rows, cols) = t.counts.dim();
    let k = rows.max(cols);
    let mut cost = Array2::<f64>::zeros((k, k));
    for ((i, j), &c) in t.counts.indexed_iter() {
        cost[[i, j]] = -(c as f64);
    }
    let map = hungarian_solve(cost.view())?;
    let matched: usize = map
        .forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows && j < cols)
        .map(|(i, &j)| t.counts[[i, j]])
        .sum();
    Ok(matched as f64 / t.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
}

pub fn score_all(y_gt: &[usize], y_pred: &[usize]) -> Result<Scores> {
    Ok(Scores {
        nmi: nmi(y_gt, y_pred)?,
        ari: ari(y_gt, y_pred)?,
        acc: acc(y_gt, y_pred)?,
    })
}
