//! Encoder plus named projection heads, and reverse-mode gradients of every
//! training objective through them.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, Axis};

use crate::data::View;
use crate::encoder::{EncodedBatch, EncoderParams, ProjectionHead, Tensors};
use crate::error::{Error, Result};
use crate::objectives::{self, ContrastiveBatch};

/// Role of a projection head.
///
/// Pre-training uses `Contrastive` (and `Classifier` in the semi-supervised
/// variant); the clustering loop uses `Cluster` and `Instance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeadRole {
    Contrastive,
    Classifier,
    Cluster,
    Instance,
}

impl fmt::Display for HeadRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadRole::Contrastive => "contrastive",
            HeadRole::Classifier => "classifier",
            HeadRole::Cluster => "cluster",
            HeadRole::Instance => "instance",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub heads: BTreeMap<HeadRole, ProjectionHead>,
}

/// A batch of `n` augmented pairs: `views[2i]` and `views[2i + 1]` come from
/// the same source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub views: Vec<View>,
    /// One optional class id per pair (pseudo-label or known label).
    pub pair_labels: Vec<Option<usize>>,
}

impl TrainBatch {
    pub fn new(views: Vec<View>, pair_labels: Vec<Option<usize>>) -> Result<Self> {
        if views.is_empty() || views.len() != 2 * pair_labels.len() {
            return Err(Error::arg(format!(
                "batch needs two views per pair: {} views, {} pairs",
                views.len(),
                pair_labels.len()
            )));
        }
        Ok(Self { views, pair_labels })
    }

    pub fn pairs(&self) -> usize {
        self.pair_labels.len()
    }

    fn row_labels(&self) -> Result<Vec<usize>> {
        self.pair_labels
            .iter()
            .flat_map(|&l| [l, l])
            .map(|l| l.ok_or_else(|| Error::arg("objective needs a label for every pair")))
            .collect()
    }

    fn labeled_mask(&self) -> Vec<bool> {
        self.pair_labels.iter().map(Option::is_some).collect()
    }

    /// Row labels with unlabeled rows filled by a placeholder, which the
    /// semi-supervised loss ignores.
    fn partial_row_labels(&self) -> Vec<usize> {
        self.pair_labels
            .iter()
            .flat_map(|&l| [l.unwrap_or(usize::MAX); 2])
            .collect()
    }
}

/// Which objective to evaluate on a [`TrainBatch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Unsupervised contrastive loss through the contrastive head.
    Ucl { tau: f64 },
    /// Cross-entropy on every view through the classifier head.
    Ce,
    /// Two-view classification through the cluster head.
    Cls,
    /// Supervised contrastive loss through the instance head.
    Scl { tau: f64 },
    /// `Cls + Scl`.
    SelfSup { tau: f64 },
    /// Semi-supervised contrastive loss through the contrastive head.
    SemiScl { tau: f64 },
    /// `SemiScl` plus cross-entropy on labeled views through the classifier
    /// head.
    SemiPre { tau: f64 },
}

impl LossKind {
    pub fn heads(&self) -> &'static [HeadRole] {
        match self {
            LossKind::Ucl { .. } | LossKind::SemiScl { .. } => &[HeadRole::Contrastive],
            LossKind::Ce => &[HeadRole::Classifier],
            LossKind::Cls => &[HeadRole::Cluster],
            LossKind::Scl { .. } => &[HeadRole::Instance],
            LossKind::SelfSup { .. } => &[HeadRole::Cluster, HeadRole::Instance],
            LossKind::SemiPre { .. } => &[HeadRole::Contrastive, HeadRole::Classifier],
        }
    }
}

fn split_views(z: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let even = z.select(Axis(0), &(0..z.nrows()).step_by(2).collect::<Vec<_>>());
    let odd = z.select(Axis(0), &(1..z.nrows()).step_by(2).collect::<Vec<_>>());
    (even, odd)
}

fn interleave(even: &Array2<f64>, odd: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((even.nrows() * 2, even.ncols()));
    for i in 0..even.nrows() {
        out.row_mut(2 * i).assign(&even.row(i));
        out.row_mut(2 * i + 1).assign(&odd.row(i));
    }
    out
}

/// Rows of labeled pairs and their labels, for the classifier term.
fn labeled_rows(batch: &TrainBatch) -> (Vec<usize>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (p, l) in batch.pair_labels.iter().enumerate() {
        if let Some(l) = *l {
            rows.extend([2 * p, 2 * p + 1]);
            labels.extend([l, l]);
        }
    }
    (rows, labels)
}

impl Model {
    pub fn new(encoder: EncoderParams) -> Self {
        Self {
            encoder,
            heads: BTreeMap::new(),
        }
    }

    pub fn with_head(mut self, role: HeadRole, head: ProjectionHead) -> Self {
        self.heads.insert(role, head);
        self
    }

    pub fn head(&self, role: HeadRole) -> Result<&ProjectionHead> {
        self.heads
            .get(&role)
            .ok_or_else(|| Error::config(format!("model has no {role} head")))
    }

    /// Drops the heads and returns the encoder.
    pub fn into_encoder(self) -> EncoderParams {
        self.encoder
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            heads: self.heads.iter().map(|(&r, h)| (r, h.zeros_like())).collect(),
        }
    }

    fn head_outputs(&self, role: HeadRole, encoded: &EncodedBatch) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok(self.head(role)?.forward(&encoded.reps))
    }

    /// Loss value, computed with the value-only objective functions.
    pub fn loss(&self, batch: &TrainBatch, kind: LossKind) -> Result<f64> {
        let encoded = self.encoder.forward(&batch.views)?;
        let out = |role| self.head_outputs(role, &encoded).map(|(_, z)| z);
        match kind {
            LossKind::Ucl { tau } => objectives::ucl_loss(&ContrastiveBatch::new(out(HeadRole::Contrastive)?, None, tau)?),
            LossKind::Ce => objectives::ce_loss(&out(HeadRole::Classifier)?, &batch.row_labels()?),
            LossKind::Cls => {
                let (z, z_alt) = split_views(&out(HeadRole::Cluster)?);
                let y: Vec<usize> = batch.row_labels()?.into_iter().step_by(2).collect();
                objectives::cls_loss(&z, &z_alt, &y)
            }
            LossKind::Scl { tau } => objectives::scl_loss(&ContrastiveBatch::new(
                out(HeadRole::Instance)?,
                Some(batch.row_labels()?),
                tau,
            )?),
            LossKind::SelfSup { tau } => {
                let (z, z_alt) = split_views(&out(HeadRole::Cluster)?);
                let rows = batch.row_labels()?;
                let y: Vec<usize> = rows.iter().copied().step_by(2).collect();
                let inst = ContrastiveBatch::new(out(HeadRole::Instance)?, Some(rows), tau)?;
                objectives::self_sup_loss(&z, &z_alt, &inst, &y)
            }
            LossKind::SemiScl { tau } => {
                let cb = ContrastiveBatch::new(out(HeadRole::Contrastive)?, Some(batch.partial_row_labels()), tau)?;
                objectives::semi_scl_loss(&cb, &batch.labeled_mask())
            }
            LossKind::SemiPre { tau } => {
                let cb = ContrastiveBatch::new(out(HeadRole::Contrastive)?, Some(batch.partial_row_labels()), tau)?;
                let semi = objectives::semi_scl_loss(&cb, &batch.labeled_mask())?;
                let (rows, labels) = labeled_rows(batch);
                let logits = out(HeadRole::Classifier)?.select(Axis(0), &rows);
                objectives::semi_pre_loss(semi, &logits, &labels)
            }
        }
    }

    /// Loss value and exact gradients with respect to every parameter of the
    /// encoder and of the heads the objective touches. Untouched heads get
    /// zero gradients.
    pub fn loss_and_grad(&self, batch: &TrainBatch, kind: LossKind) -> Result<(f64, Model)> {
        let encoded = self.encoder.forward(&batch.views)?;
        let mut grads = self.zeros_like();
        let mut d_reps = Array2::<f64>::zeros(encoded.reps.raw_dim());
        let mut total = 0.0;

        // Back-propagates `d_z` through head `role` into `grads` and `d_reps`.
        let mut through_head = |role: HeadRole, act: &Array2<f64>, d_z: &Array2<f64>, grads: &mut Model| -> Result<()> {
            let head = self.head(role)?;
            let g = grads.heads.get_mut(&role).expect("grads mirror heads");
            d_reps += &head.backward(act, d_z, g);
            Ok(())
        };

        match kind {
            LossKind::Ucl { tau } => {
                let (act, z) = self.head_outputs(HeadRole::Contrastive, &encoded)?;
                let (v, d_z) = objectives::ucl_loss_grad(&ContrastiveBatch::new(z, None, tau)?)?;
                total += v;
                through_head(HeadRole::Contrastive, &act, &d_z, &mut grads)?;
            }
            LossKind::Ce => {
                let (act, z) = self.head_outputs(HeadRole::Classifier, &encoded)?;
                let (v, d_z) = objectives::ce_loss_grad(&z, &batch.row_labels()?)?;
                total += v;
                through_head(HeadRole::Classifier, &act, &d_z, &mut grads)?;
            }
            LossKind::Cls | LossKind::SelfSup { .. } => {
                let rows = batch.row_labels()?;
                let y: Vec<usize> = rows.iter().copied().step_by(2).collect();
                let (act, z) = self.head_outputs(HeadRole::Cluster, &encoded)?;
                let (z_a, z_b) = split_views(&z);
                let (va, da) = objectives::ce_loss_grad(&z_a, &y)?;
                let (vb, db) = objectives::ce_loss_grad(&z_b, &y)?;
                total += (va + vb) / 2.0;
                let d_z = interleave(&da, &db) / 2.0;
                through_head(HeadRole::Cluster, &act, &d_z, &mut grads)?;
                if let LossKind::SelfSup { tau } = kind {
                    let (act, z) = self.head_outputs(HeadRole::Instance, &encoded)?;
                    let (v, d_z) = objectives::scl_loss_grad(&ContrastiveBatch::new(z, Some(rows), tau)?)?;
                    total += v;
                    through_head(HeadRole::Instance, &act, &d_z, &mut grads)?;
                }
            }
            LossKind::Scl { tau } => {
                let (act, z) = self.head_outputs(HeadRole::Instance, &encoded)?;
                let cb = ContrastiveBatch::new(z, Some(batch.row_labels()?), tau)?;
                let (v, d_z) = objectives::scl_loss_grad(&cb)?;
                total += v;
                through_head(HeadRole::Instance, &act, &d_z, &mut grads)?;
            }
            LossKind::SemiScl { tau } | LossKind::SemiPre { tau } => {
                let (act, z) = self.head_outputs(HeadRole::Contrastive, &encoded)?;
                let cb = ContrastiveBatch::new(z, Some(batch.partial_row_labels()), tau)?;
                let (v, d_z) = objectives::semi_scl_loss_grad(&cb, &batch.labeled_mask())?;
                total += v;
                through_head(HeadRole::Contrastive, &act, &d_z, &mut grads)?;
                if let LossKind::SemiPre { .. } = kind {
                    let (rows, labels) = labeled_rows(batch);
                    let (act, z) = self.head_outputs(HeadRole::Classifier, &encoded)?;
                    let (v, d_sel) = objectives::ce_loss_grad(&z.select(Axis(0), &rows), &labels)?;
                    total += v;
                    let mut d_z = Array2::zeros(z.raw_dim());
                    for (k, &r) in rows.iter().enumerate() {
                        d_z.row_mut(r).assign(&d_sel.row(k));
                    }
                    through_head(HeadRole::Classifier, &act, &d_z, &mut grads)?;
                }
            }
        }

        if !total.is_finite() {
            return Err(Error::NonFinite(format!("{kind:?} loss")));
        }
        self.encoder
            .backward(&batch.views, &encoded, d_reps.view(), &mut grads.encoder);
        Ok((total, grads))
    }
}

impl Tensors for Model {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.encoder.tensors();
        for (role, h) in &self.heads {
            out.push((format!("head.{role}.w"), h.w.as_slice().expect("contiguous")));
            out.push((format!("head.{role}.b"), h.b.as_slice().expect("contiguous")));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.encoder.tensors_mut();
        for (role, h) in self.heads.iter_mut() {
            out.push((format!("head.{role}.w"), h.w.as_slice_mut().expect("contiguous")));
            out.push((format!("head.{role}.b"), h.b.as_slice_mut().expect("contiguous")));
        }
        out
    }
}
