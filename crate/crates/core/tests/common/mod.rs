//! Independent oracles and random instance builders shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use usnid::data::{Content, View};
use usnid::encoder::{EncoderParams, ProjectionHead, Tensors};
use usnid::model::{HeadRole, LossKind, Model, TrainBatch};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Minimum total cost over all perfect matchings, by enumeration.
pub fn brute_force_assignment(cost: &Array2<f64>) -> f64 {
    let n = cost.nrows();
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn distinct(labels: &[usize]) -> Vec<usize> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// NMI from joint and marginal frequencies, summed label by label.
pub fn oracle_nmi(gt: &[usize], pred: &[usize]) -> f64 {
    let n = gt.len() as f64;
    let (gs, ps) = (distinct(gt), distinct(pred));
    let freq = |f: &dyn Fn(usize) -> bool| (0..gt.len()).filter(|&i| f(i)).count() as f64 / n;
    let h = |labels: &[usize], alphabet: &[usize]| -> f64 {
        alphabet
            .iter()
            .map(|&a| {
                let p = labels.iter().filter(|&&x| x == a).count() as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let (hg, hp) = (h(gt, &gs), h(pred, &ps));
    if hg + hp == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for &g in &gs {
        for &p in &ps {
            let pj = freq(&|i| gt[i] == g && pred[i] == p);
            if pj > 0.0 {
                let pg = freq(&|i| gt[i] == g);
                let pp = freq(&|i| pred[i] == p);
                mi += pj * (pj / (pg * pp)).ln();
            }
        }
    }
    mi / ((hg + hp) / 2.0)
}

/// ARI by explicit enumeration of all sample pairs.
pub fn oracle_ari(gt: &[usize], pred: &[usize]) -> f64 {
    let n = gt.len();
    let (mut both, mut same_gt, mut same_pred) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let g = gt[i] == gt[j];
            let p = pred[i] == pred[j];
            both += (g && p) as u8 as f64;
            same_gt += g as u8 as f64;
            same_pred += p as u8 as f64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = same_gt * same_pred / pairs;
    let max = (same_gt + same_pred) / 2.0;
    if max == expected {
        return if both == max { 1.0 } else { 0.0 };
    }
    (both - expected) / (max - expected)
}

/// ACC by trying every injective relabeling of the predicted alphabet.
pub fn oracle_acc(gt: &[usize], pred: &[usize]) -> f64 {
    let (gs, ps) = (distinct(gt), distinct(pred));
    let k = gs.len().max(ps.len());
    let mut best = 0usize;
    for perm in permutations(k) {
        // Predicted label ps[a] maps to gt slot perm[a]; slots beyond the gt
        // alphabet match nothing.
        let map: BTreeMap<usize, Option<usize>> = ps
            .iter()
            .enumerate()
            .map(|(a, &p)| (p, gs.get(perm[a]).copied()))
            .collect();
        let hits = gt
            .iter()
            .zip(pred)
            .filter(|(g, p)| map[p] == Some(**g))
            .count();
        best = best.max(hits);
    }
    best as f64 / gt.len() as f64
}

pub const HEAD_ROLES: [HeadRole; 4] = [HeadRole::Contrastive, HeadRole::Classifier, HeadRole::Cluster, HeadRole::Instance];

/// A small model with every head, `V <= 20`, `H, D <= 8`.
pub fn random_model<R: Rng>(rng: &mut R, vocab: usize, hidden: usize, dim: usize, classes: usize) -> Model {
    // Widen the default init so the contrastive similarities are not all
    // near zero.
    let mut enc = EncoderParams::init(vocab, hidden, dim, rng);
    enc.embed.mapv_inplace(|x| 4.0 * x);
    enc.dense_w.mapv_inplace(|x| 4.0 * x);
    let mut model = Model::new(enc);
    for role in HEAD_ROLES {
        let mut h = ProjectionHead::init(dim, classes, rng);
        h.w.mapv_inplace(|x| 4.0 * x);
        model = model.with_head(role, h);
    }
    model
}

/// `pairs` augmented token pairs with frozen dropout masks.
pub fn random_token_batch<R: Rng>(rng: &mut R, vocab: usize, hidden: usize, pairs: usize, labels: Vec<Option<usize>>) -> TrainBatch {
    let mut views = Vec::new();
    for _ in 0..pairs {
        let len = rng.random_range(1..=5);
        let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
        let content = Content::Tokens(tokens);
        views.push(View::dropout(&content, 0.2, hidden, rng));
        views.push(View::erased(&content, 0.3, rng));
    }
    TrainBatch::new(views, labels).expect("valid batch")
}

pub fn random_feature_batch<R: Rng>(rng: &mut R, dim_in: usize, pairs: usize, labels: Vec<Option<usize>>) -> TrainBatch {
    let mut views = Vec::new();
    for _ in 0..pairs {
        let f: Vec<f64> = (0..dim_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let content = Content::Features(f);
        views.push(View::dropout(&content, 0.2, dim_in, rng));
        views.push(View::dropout(&content, 0.2, dim_in, rng));
    }
    TrainBatch::new(views, labels).expect("valid batch")
}

/// Labels for `pairs` pairs from `classes` classes, each class used at least
/// twice when possible so supervised anchors have positives beyond their
/// partner.
pub fn random_labels<R: Rng>(rng: &mut R, pairs: usize, classes: usize) -> Vec<usize> {
    let mut l: Vec<usize> = (0..pairs).map(|i| i % classes.min(pairs.div_ceil(2)).max(1)).collect();
    l.shuffle(rng);
    l
}

/// Largest entrywise relative error between analytic and central-difference
/// gradients over every parameter. Entries are compared as
/// `|a - n| / max(|a|, |n|, floor)`, so gradients below `floor` are held to
/// an absolute tolerance.
pub fn gradient_check(model: &Model, batch: &TrainBatch, kind: LossKind, step: f64, floor: f64) -> (f64, String) {
    let (_, grads) = model.loss_and_grad(batch, kind).expect("gradient");
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut worst = (0.0, String::new());
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.tensors_mut()[ti].1[k] += delta;
                m.loss(batch, kind).expect("loss")
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if err > worst.0 {
                worst = (err, format!("{name}[{k}]: analytic {a:e}, numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Every objective with a batch it accepts.
pub fn loss_kinds(tau: f64) -> Vec<(&'static str, LossKind)> {
    vec![
        ("ucl", LossKind::Ucl { tau }),
        ("ce", LossKind::Ce),
        ("cls", LossKind::Cls),
        ("scl", LossKind::Scl { tau }),
        ("self_sup", LossKind::SelfSup { tau }),
        ("semi_scl", LossKind::SemiScl { tau }),
        ("semi_pre", LossKind::SemiPre { tau }),
    ]
}

/// One random gradient-check instance for `kind`: token or feature input,
/// `n <= 4` pairs, labels as the objective requires. Returns the worst
/// relative error.
pub fn random_gradient_instance<R: Rng>(rng: &mut R, kind: LossKind) -> (f64, String) {
    let classes = rng.random_range(2..=4);
    let hidden = rng.random_range(2..=8);
    let dim = rng.random_range(2..=8);
    let pairs = rng.random_range(2..=4);
    let labels = random_labels(rng, pairs, classes);
    let pair_labels: Vec<Option<usize>> = match kind {
        LossKind::Ucl { .. } => vec![None; pairs],
        LossKind::SemiScl { .. } | LossKind::SemiPre { .. } => {
            // Mixed: at least one labeled and, when possible, one unlabeled.
            let mut l: Vec<Option<usize>> = labels.iter().map(|&l| Some(l)).collect();
            let unlabeled = rng.random_range(0..pairs);
            l[unlabeled] = None;
            l
        }
        _ => labels.iter().map(|&l| Some(l)).collect(),
    };
    if rng.random_bool(0.5) {
        let vocab = rng.random_range(3..=20);
        let model = random_model(rng, vocab, hidden, dim, classes);
        let batch = random_token_batch(rng, vocab, hidden, pairs, pair_labels);
        gradient_check(&model, &batch, kind, 1e-5, 1e-6)
    } else {
        let model = random_model(rng, 0, hidden, dim, classes);
        let batch = random_feature_batch(rng, hidden, pairs, pair_labels);
        gradient_check(&model, &batch, kind, 1e-5, 1e-6)
    }
}
