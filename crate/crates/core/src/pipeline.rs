//! End-to-end procedures.
//!
//! Unsupervised: contrastive pre-training on random-erase pairs, then
//! alternate clustering (K-Means++ once, warm-started K-Means afterwards)
//! with representation learning on the resulting pseudo-labels until the
//! assignment-change rate drops below `delta_th`.
//!
//! Semi-supervised: pre-training mixes labeled and unlabeled dropout pairs
//! under the semi-supervised contrastive loss plus cross-entropy on the
//! labeled views; each training iteration starts with a supervised
//! contrastive pass over the labeled samples.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::{align_centroids, delta_diff};
use crate::clustering::{kmeans_run, ClusterState, Init, KMeansConfig};
use crate::data::{make_semi_split, Content, Corpus, TrainingView, View};
use crate::encoder::{EncoderParams, ProjectionHead};
use crate::error::{Error, Result};
use crate::estimation::{estimate_k_semi, estimate_k_unsup, ClusterEstimate};
use crate::metrics::{score_all, Scores};
use crate::model::{HeadRole, LossKind, Model, TrainBatch};
use crate::optim::{AdamW, AdamWConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Unsup,
    Semi,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Unsup => "unsup",
            Mode::Semi => "semi",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsup" => Ok(Mode::Unsup),
            "semi" => Ok(Mode::Semi),
            other => Err(Error::arg(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub tau: f64,
    /// Random-erase fraction.
    pub erase: f64,
    pub dropout: f64,
    pub delta_th: f64,
    /// Pairs per mini-batch.
    pub batch_pairs: usize,
    pub pretrain_epochs: usize,
    pub max_train_iterations: usize,
    /// Known cluster count. Exactly one of `k` and `k_prime` must be set.
    pub k: Option<usize>,
    /// Over-clustering count for estimating `K`.
    pub k_prime: Option<usize>,
    pub kcr: f64,
    pub labeled_ratio: f64,
    /// Token embedding width (ignored for embedding-matrix input).
    pub hidden: usize,
    /// Intent representation width.
    pub dim: usize,
    pub optimizer: AdamWConfig,
    pub kmeans: KMeansConfig,
    /// Restarts for the one-off over-clustering that estimates `K`.
    pub estimate_n_init: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for `mode`: temperature 0.07 and erase 0.5 unsupervised,
    /// 0.05 and 0.4 semi-supervised.
    pub fn new(mode: Mode) -> Self {
        let (tau, erase, kcr) = match mode {
            Mode::Unsup => (0.07, 0.5, 0.0),
            Mode::Semi => (0.05, 0.4, 0.25),
        };
        Self {
            mode,
            tau,
            erase,
            dropout: 0.1,
            delta_th: 0.0005,
            batch_pairs: 64,
            pretrain_epochs: 10,
            max_train_iterations: 100,
            k: None,
            k_prime: None,
            kcr,
            labeled_ratio: 0.1,
            hidden: 64,
            dim: 64,
            optimizer: AdamWConfig::default(),
            kmeans: KMeansConfig::default(),
            estimate_n_init: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.erase) {
            return Err(Error::config(format!("erase fraction {} outside [0, 1)", self.erase)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.delta_th > 0.0) {
            return Err(Error::config(format!("delta threshold must be positive, got {}", self.delta_th)));
        }
        if self.batch_pairs == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        match (self.k, self.k_prime) {
            (Some(_), Some(_)) => return Err(Error::config("set either a known K or K' for estimation, not both")),
            (None, None) => return Err(Error::config("K is unknown and estimation is disabled; set K or K'")),
            (Some(0), _) | (_, Some(0)) => return Err(Error::config("cluster counts must be positive")),
            _ => {}
        }
        if self.kmeans.n_init == 0 || self.kmeans.max_iter == 0 || self.estimate_n_init == 0 {
            return Err(Error::config("K-Means needs at least one restart and one iteration"));
        }
        if self.hidden == 0 || self.dim == 0 {
            return Err(Error::config("encoder widths must be positive"));
        }
        if self.mode == Mode::Semi && !(self.labeled_ratio > 0.0 && self.labeled_ratio <= 1.0) {
            return Err(Error::config("labeled ratio must be in (0, 1]"));
        }
        Ok(())
    }

    /// Cluster count used by pre-training heads: `K` when known, else `K'`.
    fn head_clusters(&self) -> usize {
        self.k.or(self.k_prime).unwrap_or(1)
    }

    /// Every effective parameter as `key=value` lines, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
        vec![
            ("mode".into(), self.mode.to_string()),
            ("tau".into(), format!("{}", self.tau)),
            ("erase".into(), format!("{}", self.erase)),
            ("dropout".into(), format!("{}", self.dropout)),
            ("delta_th".into(), format!("{}", self.delta_th)),
            ("batch".into(), self.batch_pairs.to_string()),
            ("pretrain_epochs".into(), self.pretrain_epochs.to_string()),
            ("max_train_iterations".into(), self.max_train_iterations.to_string()),
            ("k".into(), opt(self.k)),
            ("k_prime".into(), opt(self.k_prime)),
            ("kcr".into(), format!("{}", self.kcr)),
            ("labeled_ratio".into(), format!("{}", self.labeled_ratio)),
            ("hidden".into(), self.hidden.to_string()),
            ("dim".into(), self.dim.to_string()),
            ("lr".into(), format!("{}", self.optimizer.lr)),
            ("beta1".into(), format!("{}", self.optimizer.beta1)),
            ("beta2".into(), format!("{}", self.optimizer.beta2)),
            ("eps".into(), format!("{}", self.optimizer.eps)),
            ("weight_decay".into(), format!("{}", self.optimizer.weight_decay)),
            ("kmeans_max_iter".into(), self.kmeans.max_iter.to_string()),
            ("kmeans_tol".into(), format!("{}", self.kmeans.tol)),
            ("kmeans_n_init".into(), self.kmeans.n_init.to_string()),
            ("kmeans_local_trials".into(), opt(self.kmeans.local_trials)),
            ("estimate_n_init".into(), self.estimate_n_init.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Split = 1,
    Init,
    Pretrain,
    Estimate,
    Heads,
    Cluster,
    Learn,
    Infer,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Width of the pooled vector the encoder consumes.
fn input_width(view: &TrainingView<'_>, config: &RunConfig) -> usize {
    view.feature_dim().unwrap_or(config.hidden)
}

/// Fresh encoder parameters for a corpus, deterministic in `config.seed`.
pub fn init_encoder(view: &TrainingView<'_>, config: &RunConfig) -> EncoderParams {
    let mut rng = stream(config.seed, Stream::Init);
    let vocab = if view.feature_dim().is_some() { 0 } else { view.vocab_len() };
    EncoderParams::init(vocab, input_width(view, config), config.dim, &mut rng)
}

/// Shuffled mini-batches of `min(batch, n)` indices; the ragged tail is
/// dropped.
fn epoch_batches<R: Rng + ?Sized>(indices: &[usize], batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let size = batch.min(order.len());
    if size < 1 {
        return Vec::new();
    }
    order.chunks_exact(size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Augment {
    Erase(f64),
    Dropout(f64),
}

/// Random erase for token inputs; feature inputs have no words to erase
/// and fall back to dropout.
fn erase_or_dropout(config: &RunConfig) -> Augment {
    Augment::Erase(config.erase)
}

fn make_view<R: Rng + ?Sized>(content: &Content, aug: Augment, config: &RunConfig, width: usize, rng: &mut R) -> View {
    match (aug, content) {
        (Augment::Erase(_), Content::Features(_)) => View::dropout(content, config.dropout, width, rng),
        (Augment::Erase(a), _) => View::erased(content, a, rng),
        (Augment::Dropout(p), _) => View::dropout(content, p, width, rng),
    }
}

fn pair_batch<R: Rng + ?Sized>(
    view: &TrainingView<'_>,
    indices: &[usize],
    labels: &[Option<usize>],
    aug: Augment,
    config: &RunConfig,
    rng: &mut R,
) -> Result<TrainBatch> {
    let width = input_width(view, config);
    let mut views = Vec::with_capacity(indices.len() * 2);
    for &i in indices {
        let c = view.content(i);
        views.push(make_view(c, aug, config, width, rng));
        views.push(make_view(c, aug, config, width, rng));
    }
    TrainBatch::new(views, labels.to_vec())
}

fn step(model: &mut Model, opt: &mut AdamW, batch: &TrainBatch, kind: LossKind) -> Result<f64> {
    let (loss, grads) = model.loss_and_grad(batch, kind)?;
    opt.step(model, &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub encoder: EncoderParams,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Unsupervised contrastive pre-training on random-erase pairs. The
/// contrastive head is dropped on return.
pub fn pretrain_unsup(view: &TrainingView<'_>, config: &RunConfig) -> Result<Pretrained> {
    config.validate()?;
    let mut rng = stream(config.seed, Stream::Pretrain);
    let encoder = init_encoder(view, config);
    let head = ProjectionHead::init(config.dim, config.head_clusters(), &mut rng);
    let mut model = Model::new(encoder).with_head(HeadRole::Contrastive, head);
    let mut opt = AdamW::new(config.optimizer);
    let all: Vec<usize> = (0..view.len()).collect();
    let kind = LossKind::Ucl { tau: config.tau };
    let mut epoch_losses = Vec::with_capacity(config.pretrain_epochs);
    for _ in 0..config.pretrain_epochs {
        let batches = epoch_batches(&all, config.batch_pairs, &mut rng);
        let mut total = 0.0;
        for idx in &batches {
            let batch = pair_batch(view, idx, &vec![None; idx.len()], erase_or_dropout(config), config, &mut rng)?;
            total += step(&mut model, &mut opt, &batch, kind)?;
        }
        epoch_losses.push(total / batches.len().max(1) as f64);
    }
    Ok(Pretrained {
        encoder: model.into_encoder(),
        epoch_losses,
    })
}

/// Draws from a pool either cycling through reshuffled passes or uniformly
/// with replacement.
struct PoolSampler {
    pool: Vec<usize>,
    cursor: usize,
    replace: bool,
}

impl PoolSampler {
    fn new(pool: Vec<usize>, replace: bool) -> Self {
        let cursor = pool.len();
        Self { pool, cursor, replace }
    }

    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        if self.replace {
            return self.pool[rng.random_range(0..self.pool.len())];
        }
        if self.cursor == self.pool.len() {
            self.pool.shuffle(rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.pool[self.cursor - 1]
    }
}

/// Semi-supervised pre-training. Each batch holds `ceil(n/2)` labeled and
/// `floor(n/2)` unlabeled dropout pairs. The larger pool is walked in
/// reshuffled passes, the smaller one is sampled with replacement.
/// Both pre-training heads are dropped on return.
pub fn pretrain_semi(view: &TrainingView<'_>, config: &RunConfig) -> Result<Pretrained> {
    config.validate()?;
    let mut rng = stream(config.seed, Stream::Pretrain);
    let encoder = init_encoder(view, config);
    let k_known = view.k_known();
    let labeled: Vec<usize> = view.labeled_indices().to_vec();
    let unlabeled: Vec<usize> = (0..view.len()).filter(|i| view.known_label(*i).is_none()).collect();

    let contrastive_out = if k_known >= 2 { k_known } else { config.head_clusters() };
    let mut model = Model::new(encoder).with_head(
        HeadRole::Contrastive,
        ProjectionHead::init(config.dim, contrastive_out, &mut rng),
    );
    let with_labels = !labeled.is_empty() && k_known > 0;
    if with_labels {
        model = model.with_head(HeadRole::Classifier, ProjectionHead::init(config.dim, k_known, &mut rng));
    }
    let kind = if with_labels {
        LossKind::SemiPre { tau: config.tau }
    } else {
        LossKind::SemiScl { tau: config.tau }
    };

    let n = config.batch_pairs.min(view.len());
    let (n_lab, n_unlab) = match (labeled.is_empty(), unlabeled.is_empty()) {
        (true, _) => (0, n),
        (_, true) => (n, 0),
        _ => (n.div_ceil(2), n / 2),
    };
    let batches_per_epoch = view.len().checked_div(n).unwrap_or(0);
    let labeled_smaller = labeled.len() < unlabeled.len();
    let mut lab_pool = PoolSampler::new(labeled, labeled_smaller);
    let mut unlab_pool = PoolSampler::new(unlabeled, !labeled_smaller);
    let mut opt = AdamW::new(config.optimizer);
    let mut epoch_losses = Vec::with_capacity(config.pretrain_epochs);
    for _ in 0..config.pretrain_epochs {
        let mut total = 0.0;
        for _ in 0..batches_per_epoch {
            let mut idx = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n_lab {
                let i = lab_pool.draw(&mut rng);
                idx.push(i);
                labels.push(view.known_label(i));
            }
            for _ in 0..n_unlab {
                idx.push(unlab_pool.draw(&mut rng));
                labels.push(None);
            }
            let batch = pair_batch(view, &idx, &labels, Augment::Dropout(config.dropout), config, &mut rng)?;
            total += step(&mut model, &mut opt, &batch, kind)?;
        }
        epoch_losses.push(total / batches_per_epoch.max(1) as f64);
    }
    Ok(Pretrained {
        encoder: model.into_encoder(),
        epoch_losses,
    })
}

/// Pre-training for the configured mode.
pub fn pretrain(view: &TrainingView<'_>, config: &RunConfig) -> Result<Pretrained> {
    match config.mode {
        Mode::Unsup => pretrain_unsup(view, config),
        Mode::Semi => pretrain_semi(view, config),
    }
}

/// Estimates `K` from pre-trained representations of `view`.
pub fn estimate_clusters(encoder: &EncoderParams, view: &TrainingView<'_>, k_prime: usize, config: &RunConfig) -> Result<(ClusterEstimate, ClusterState)> {
    let mut rng = stream(config.seed, Stream::Estimate);
    let kmeans = KMeansConfig {
        n_init: config.estimate_n_init,
        ..config.kmeans
    };
    let reps = encoder.encode_all(view.contents())?;
    let labeled: Vec<(usize, usize)> = view
        .labeled_indices()
        .iter()
        .filter_map(|&i| view.known_label(i).map(|l| (i, l)))
        .collect();
    match config.mode {
        Mode::Semi if !labeled.is_empty() => {
            estimate_k_semi(reps.view(), &labeled, view.k_known(), k_prime, &kmeans, &mut rng)
        }
        _ => estimate_k_unsup(reps.view(), k_prime, &kmeans, &mut rng),
    }
}

/// One clustering of the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Assignment-change rate against the previous clustering (absent for
    /// the first).
    pub delta: Option<f64>,
    pub objective: f64,
    pub kmeans_iterations: usize,
    /// Whether optimal alignment of these centroids to the previous ones is
    /// the identity.
    pub identity_alignment: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Encoder plus the cluster-level and instance-level heads.
    pub model: Model,
    pub state: ClusterState,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

/// Supervised contrastive pass over the labeled samples through the
/// instance head.
fn labeled_guard_epoch<R: Rng + ?Sized>(model: &mut Model, opt: &mut AdamW, view: &TrainingView<'_>, config: &RunConfig, rng: &mut R) -> Result<()> {
    let labeled = view.labeled_indices();
    if labeled.len() < 2 {
        return Ok(());
    }
    for idx in epoch_batches(labeled, config.batch_pairs, rng) {
        let labels: Vec<Option<usize>> = idx.iter().map(|&i| view.known_label(i)).collect();
        let batch = pair_batch(view, &idx, &labels, Augment::Dropout(config.dropout), config, rng)?;
        step(model, opt, &batch, LossKind::Scl { tau: config.tau })?;
    }
    Ok(())
}

/// Alternates clustering and self-supervised representation learning.
///
/// Iteration 0 clusters with K-Means++; later iterations warm-start from the
/// previous centroids, so pseudo-labels keep their indices without
/// alignment. Stops once the assignment-change rate falls below
/// `delta_th`, or after `max_train_iterations` clusterings.
pub fn train_loop(encoder: EncoderParams, view: &TrainingView<'_>, k: usize, config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if k == 0 || k > view.len() {
        return Err(Error::config(format!("cannot form {k} clusters from {} samples", view.len())));
    }
    let mut head_rng = stream(config.seed, Stream::Heads);
    let mut cluster_rng = stream(config.seed, Stream::Cluster);
    let mut rng = stream(config.seed, Stream::Learn);
    let mut model = Model::new(encoder)
        .with_head(HeadRole::Cluster, ProjectionHead::init(config.dim, k, &mut head_rng))
        .with_head(HeadRole::Instance, ProjectionHead::init(config.dim, k, &mut head_rng));
    let mut opt = AdamW::new(config.optimizer);
    let all: Vec<usize> = (0..view.len()).collect();
    let kind = LossKind::SelfSup { tau: config.tau };

    let mut trace = Vec::new();
    let mut previous: Option<ClusterState> = None;
    let mut converged = false;
    for iteration in 0..config.max_train_iterations.max(1) {
        if config.mode == Mode::Semi {
            labeled_guard_epoch(&mut model, &mut opt, view, config, &mut rng)?;
        }
        let reps = model.encoder.encode_all(view.contents())?;
        let init = match &previous {
            None => Init::KMeansPlusPlus,
            Some(p) => Init::Warm(p.centroids.clone()),
        };
        let state = kmeans_run(reps.view(), k, init, &config.kmeans, &mut cluster_rng)?;
        let (delta, identity) = match &previous {
            None => (None, None),
            Some(p) => (
                Some(delta_diff(&state.assignment, &p.assignment)?),
                Some(align_centroids(state.centroids.view(), p.centroids.view())?.is_identity()),
            ),
        };
        trace.push(IterationRecord {
            iteration,
            delta,
            objective: state.objective,
            kmeans_iterations: state.iterations,
            identity_alignment: identity,
        });
        let pseudo = state.assignment.clone();
        previous = Some(state);
        if delta.is_some_and(|d| d < config.delta_th) {
            converged = true;
            break;
        }
        if iteration + 1 == config.max_train_iterations {
            break;
        }
        for idx in epoch_batches(&all, config.batch_pairs, &mut rng) {
            let labels: Vec<Option<usize>> = idx.iter().map(|&i| Some(pseudo[i])).collect();
            let batch = pair_batch(view, &idx, &labels, erase_or_dropout(config), config, &mut rng)?;
            step(&mut model, &mut opt, &batch, kind)?;
        }
    }
    Ok(TrainOutcome {
        model,
        state: previous.expect("at least one clustering"),
        trace,
        converged,
    })
}

/// Clusters new samples with a warm-started K-Means from trained centroids.
pub fn infer<'a, I>(encoder: &EncoderParams, centroids: &Array2<f64>, contents: I, kmeans: &KMeansConfig, seed: u64) -> Result<Vec<usize>>
where
    I: IntoIterator<Item = &'a Content>,
{
    let reps = encoder.encode_all(contents)?;
    if reps.ncols() != centroids.ncols() {
        return Err(Error::arg(format!(
            "representation width {} does not match centroid width {}",
            reps.ncols(),
            centroids.ncols()
        )));
    }
    let mut rng = stream(seed, Stream::Infer);
    let state = kmeans_run(reps.view(), centroids.nrows(), Init::Warm(centroids.clone()), kmeans, &mut rng)?;
    Ok(state.assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: RunConfig,
    /// Cluster count used by the training loop.
    pub k: usize,
    pub estimate: Option<ClusterEstimate>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    /// Final cluster of each test sample.
    pub assignment: Vec<usize>,
    /// Present when every test sample has a ground-truth label.
    pub scores: Option<Scores>,
    pub pretrain_losses: Vec<f64>,
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn deltas(&self) -> Vec<f64> {
        self.trace.iter().filter_map(|r| r.delta).collect()
    }

    /// Share of warm-started iterations whose optimal centroid alignment is
    /// the identity.
    pub fn identity_rate(&self) -> Option<f64> {
        let flags: Vec<bool> = self.trace.iter().filter_map(|r| r.identity_alignment).collect();
        (!flags.is_empty()).then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
    }
}

/// Applies the semi-supervised split for semi mode; unsupervised runs see
/// the corpus with no known labels.
pub fn prepare_train(train: &Corpus, config: &RunConfig) -> Result<Corpus> {
    match config.mode {
        Mode::Semi => make_semi_split(train, config.kcr, config.labeled_ratio, &mut stream(config.seed, Stream::Split)),
        Mode::Unsup => {
            let mut c = train.clone();
            for u in &mut c.utterances {
                u.known_label = None;
            }
            c.k_known = 0;
            c.known_classes.clear();
            c.labeled_indices.clear();
            Ok(c)
        }
    }
}

/// Estimation (when `K` is unknown), the training loop and inference on
/// `test`, starting from a pre-trained encoder. `train` must already carry
/// its split (see [`prepare_train`]).
pub fn train_and_evaluate(train: &Corpus, test: &Corpus, pretrained: Pretrained, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let view = train.training_view();
    let (k, estimate) = match (config.k, config.k_prime) {
        (Some(k), _) => (k, None),
        (None, Some(k_prime)) => {
            let (est, _) = estimate_clusters(&pretrained.encoder, &view, k_prime, config)?;
            (est.k_total.clamp(1, view.len()), Some(est))
        }
        (None, None) => unreachable!("validated"),
    };

    let outcome = train_loop(pretrained.encoder, &view, k, config)?;
    let assignment = infer(
        &outcome.model.encoder,
        &outcome.state.centroids,
        test.utterances.iter().map(|u| &u.content),
        &config.kmeans,
        config.seed,
    )?;
    let gt: Option<Vec<usize>> = test.eval_labels().into_iter().collect();
    let scores = match gt {
        Some(gt) if gt.len() >= 2 => Some(score_all(&gt, &assignment)?),
        _ => None,
    };
    Ok(RunReport {
        config: config.clone(),
        k,
        estimate,
        trace: outcome.trace,
        converged: outcome.converged,
        assignment,
        scores,
        pretrain_losses: pretrained.epoch_losses,
        wall_clock: started.elapsed(),
    })
}

/// Pre-training, optional `K` estimation, the training loop and inference
/// on `test`.
pub fn run(train: &Corpus, test: &Corpus, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let train = prepare_train(train, config)?;
    let pretrained = pretrain(&train.training_view(), config)?;
    let mut report = train_and_evaluate(&train, test, pretrained, config)?;
    report.wall_clock = started.elapsed();
    Ok(report)
}
