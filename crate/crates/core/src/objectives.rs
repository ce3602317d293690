//! Training objectives.
//!
//! Contrastive losses operate on a `2n x d` matrix whose rows `2i` and
//! `2i + 1` are the two views of sample `i`. Similarities are dot products of
//! L2-normalized rows divided by the temperature, and every anchor's
//! denominator runs over all other rows.
//!
//! Each loss has a value function written directly from its formula and a
//! `*_grad` companion returning the value together with the gradient with
//! respect to its inputs. The two routes are computed independently.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub z: Array2<f64>,
    /// Per-row class ids (pseudo or known). Rows of unlabeled pairs are
    /// ignored by [`semi_scl_loss`].
    pub labels: Option<Vec<usize>>,
    pub tau: f64,
}

impl ContrastiveBatch {
    pub fn new(z: Array2<f64>, labels: Option<Vec<usize>>, tau: f64) -> Result<Self> {
        if z.nrows() == 0 || !z.nrows().is_multiple_of(2) {
            return Err(Error::arg(format!(
                "contrastive batch needs an even, nonzero row count, got {}",
                z.nrows()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::arg(format!("temperature must be positive, got {tau}")));
        }
        if let Some(l) = &labels {
            if l.len() != z.nrows() {
                return Err(Error::arg("labels must cover every row"));
            }
        }
        Ok(Self { z, labels, tau })
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::arg("supervised contrastive loss needs labels"))
    }
}

/// Pair partner of row `i`.
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

fn normalize_rows(z: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(row) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::ZeroNorm { row });
    }
    let u = z / &norms.view().insert_axis(Axis(1));
    Ok((u, norms))
}

/// `log sum_{j != i} exp(row_j)` for a row of scaled similarities.
fn log_denominator(row: ArrayView1<f64>, i: usize) -> f64 {
    let max = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &x)| (x - max).exp())
        .sum();
    max + sum.ln()
}

fn scaled_similarity(z: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    let (u, _) = normalize_rows(z)?;
    Ok(u.dot(&u.t()) / tau)
}

/// Unsupervised contrastive loss: every anchor's only positive is its
/// augmented partner.
pub fn ucl_loss(batch: &ContrastiveBatch) -> Result<f64> {
    let logits = scaled_similarity(&batch.z, batch.tau)?;
    let rows = batch.rows();
    let total: f64 = (0..rows)
        .map(|i| log_denominator(logits.row(i), i) - logits[[i, partner(i)]])
        .sum();
    Ok(total / rows as f64)
}

/// Supervised contrastive loss. Positives of anchor `i` are all other rows
/// sharing its label. Anchors without positives are skipped and excluded
/// from the normalizer.
pub fn scl_loss(batch: &ContrastiveBatch) -> Result<f64> {
    let labels = batch.labels()?;
    let logits = scaled_similarity(&batch.z, batch.tau)?;
    let rows = batch.rows();
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..rows {
        let pos: Vec<usize> = (0..rows).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if pos.is_empty() {
            continue;
        }
        let lse = log_denominator(logits.row(i), i);
        let mean_pos = pos.iter().map(|&p| logits[[i, p]]).sum::<f64>() / pos.len() as f64;
        total += lse - mean_pos;
        anchors += 1;
    }
    Ok(if anchors == 0 { 0.0 } else { total / anchors as f64 })
}

/// Semi-supervised contrastive loss. Labeled anchors take same-label labeled
/// rows as positives; unlabeled anchors take their partner. The bracketed
/// sum is divided by `2n`.
pub fn semi_scl_loss(batch: &ContrastiveBatch, labeled_pairs: &[bool]) -> Result<f64> {
    let rows = batch.rows();
    if labeled_pairs.len() * 2 != rows {
        return Err(Error::arg("labeled mask must have one flag per pair"));
    }
    let logits = scaled_similarity(&batch.z, batch.tau)?;
    let is_labeled = |r: usize| labeled_pairs[r / 2];
    let mut total = 0.0;
    for i in 0..rows {
        let lse = log_denominator(logits.row(i), i);
        if is_labeled(i) {
            let labels = batch.labels()?;
            let pos: Vec<usize> = (0..rows)
                .filter(|&p| p != i && is_labeled(p) && labels[p] == labels[i])
                .collect();
            if pos.is_empty() {
                continue;
            }
            let mean_pos = pos.iter().map(|&p| logits[[i, p]]).sum::<f64>() / pos.len() as f64;
            total += lse - mean_pos;
        } else {
            total += lse - logits[[i, partner(i)]];
        }
    }
    Ok(total / rows as f64)
}

fn check_targets(logits: &Array2<f64>, targets: &[usize]) -> Result<()> {
    if logits.nrows() != targets.len() {
        return Err(Error::arg(format!(
            "{} logit rows but {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= logits.ncols()) {
        return Err(Error::Index {
            what: "class logits",
            index: t,
            len: logits.ncols(),
        });
    }
    Ok(())
}

fn log_softmax_row(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    row.mapv(|x| x - lse)
}

/// Mean negative log-likelihood of `targets` under `softmax(logits)`. An
/// empty batch contributes zero.
pub fn ce_loss(logits: &Array2<f64>, targets: &[usize]) -> Result<f64> {
    check_targets(logits, targets)?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(targets)
        .map(|(row, &t)| -log_softmax_row(row)[t])
        .sum();
    Ok(total / targets.len() as f64)
}

/// Cross-entropy averaged over the two views.
pub fn cls_loss(z: &Array2<f64>, z_alt: &Array2<f64>, targets: &[usize]) -> Result<f64> {
    if z.dim() != z_alt.dim() {
        return Err(Error::arg("view logits differ in shape"));
    }
    Ok((ce_loss(z, targets)? + ce_loss(z_alt, targets)?) / 2.0)
}

/// Cluster-level classification plus instance-level supervised contrast.
pub fn self_sup_loss(
    z_cls: &Array2<f64>,
    z_cls_alt: &Array2<f64>,
    instance: &ContrastiveBatch,
    targets: &[usize],
) -> Result<f64> {
    Ok(cls_loss(z_cls, z_cls_alt, targets)? + scl_loss(instance)?)
}

pub fn semi_pre_loss(semi_scl: f64, logits_labeled: &Array2<f64>, known: &[usize]) -> Result<f64> {
    Ok(semi_scl + ce_loss(logits_labeled, known)?)
}

/// Positive sets for the anchored contrastive kernel. `None` skips the
/// anchor.
pub(crate) type Positives = Vec<Option<Vec<usize>>>;

fn ucl_positives(rows: usize) -> Positives {
    (0..rows).map(|i| Some(vec![partner(i)])).collect()
}

fn scl_positives(labels: &[usize]) -> Positives {
    let rows = labels.len();
    (0..rows)
        .map(|i| {
            let pos: Vec<usize> = (0..rows).filter(|&p| p != i && labels[p] == labels[i]).collect();
            (!pos.is_empty()).then_some(pos)
        })
        .collect()
}

fn semi_positives(labels: Option<&[usize]>, labeled_pairs: &[bool]) -> Result<Positives> {
    let rows = labeled_pairs.len() * 2;
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        if labeled_pairs[i / 2] {
            let labels = labels.ok_or_else(|| Error::arg("labeled pairs need labels"))?;
            let pos: Vec<usize> = (0..rows)
                .filter(|&p| p != i && labeled_pairs[p / 2] && labels[p] == labels[i])
                .collect();
            out.push((!pos.is_empty()).then_some(pos));
        } else {
            out.push(Some(vec![partner(i)]));
        }
    }
    Ok(out)
}

/// Shared kernel: `sum_i (lse_i - mean_{p in P(i)} s_ip) / normalizer` and its
/// gradient with respect to the unnormalized rows.
fn anchored_grad(z: &Array2<f64>, tau: f64, positives: &Positives, normalizer: f64) -> Result<(f64, Array2<f64>)> {
    let (u, norms) = normalize_rows(z)?;
    let rows = z.nrows();
    let logits = u.dot(&u.t()) / tau;
    // Gradient of the loss with respect to the scaled similarity matrix.
    let mut d_logits = Array2::<f64>::zeros((rows, rows));
    let mut total = 0.0;
    for (i, pos) in positives.iter().enumerate() {
        let Some(pos) = pos else { continue };
        let row = logits.row(i);
        let lse = log_denominator(row, i);
        let w = 1.0 / pos.len() as f64;
        total += lse - pos.iter().map(|&p| row[p]).sum::<f64>() * w;
        for j in 0..rows {
            if j != i {
                d_logits[[i, j]] += (row[j] - lse).exp();
            }
        }
        for &p in pos {
            d_logits[[i, p]] -= w;
        }
    }
    if normalizer == 0.0 {
        return Ok((0.0, Array2::zeros(z.raw_dim())));
    }
    d_logits /= normalizer;
    // s_ij = u_i . u_j / tau, so dL/du = (G + G^T) u / tau.
    let sym = &d_logits + &d_logits.t();
    let d_u = sym.dot(&u) / tau;
    // Back through u = z / |z|: dz = (du - u (u . du)) / |z|.
    let radial = (&d_u * &u).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_z = (&d_u - &u * &radial) / norms.view().insert_axis(Axis(1));
    Ok((total / normalizer, d_z))
}

pub fn ucl_loss_grad(batch: &ContrastiveBatch) -> Result<(f64, Array2<f64>)> {
    let rows = batch.rows();
    anchored_grad(&batch.z, batch.tau, &ucl_positives(rows), rows as f64)
}

pub fn scl_loss_grad(batch: &ContrastiveBatch) -> Result<(f64, Array2<f64>)> {
    let positives = scl_positives(batch.labels()?);
    let anchors = positives.iter().filter(|p| p.is_some()).count();
    anchored_grad(&batch.z, batch.tau, &positives, anchors as f64)
}

pub fn semi_scl_loss_grad(batch: &ContrastiveBatch, labeled_pairs: &[bool]) -> Result<(f64, Array2<f64>)> {
    if labeled_pairs.len() * 2 != batch.rows() {
        return Err(Error::arg("labeled mask must have one flag per pair"));
    }
    let positives = semi_positives(batch.labels.as_deref(), labeled_pairs)?;
    anchored_grad(&batch.z, batch.tau, &positives, batch.rows() as f64)
}

pub fn ce_loss_grad(logits: &Array2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_targets(logits, targets)?;
    let n = targets.len();
    let mut grad = Array2::zeros(logits.raw_dim());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let logp = log_softmax_row(logits.row(i));
        total -= logp[t];
        let mut g = grad.row_mut(i);
        g.assign(&logp.mapv(f64::exp));
        g[t] -= 1.0;
    }
    grad /= n as f64;
    Ok((total / n as f64, grad))
}
