//! Corpus ingestion, labeled/unlabeled splitting and view augmentation.
//!
//! Two on-disk formats are supported:
//!
//! * TSV text: one sample per line, `text<TAB>label`. Text is tokenized on
//!   whitespace.
//! * Embedding matrix: a `dim=<d>` header followed by rows
//!   `id<TAB>label<TAB>f1<TAB>...<TAB>fd`.
//!
//! An empty label field marks a sample without ground truth.
//!
//! Ground-truth labels are stored privately on each [`Utterance`] and are
//! only reachable through [`Utterance::eval_label`] and
//! [`Corpus::eval_labels`]. Training code operates on a [`TrainingView`],
//! which has no path to them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Token reserved for words not present in the vocabulary.
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    TsvText,
    EmbeddingMatrix,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" | "tsv-text" | "text" => Ok(CorpusFormat::TsvText),
            "emb" | "embedding" | "embedding-matrix" => Ok(CorpusFormat::EmbeddingMatrix),
            other => Err(Error::arg(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// The encoder input of a sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Content {
    Tokens(Vec<usize>),
    Features(Vec<f64>),
}

impl Content {
    pub fn len(&self) -> usize {
        match self {
            Content::Tokens(t) => t.len(),
            Content::Features(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub content: Content,
    pub raw_text: String,
    /// Supervision visible to training, present only on the labeled subset.
    pub known_label: Option<usize>,
    gt_label: Option<usize>,
}

impl Utterance {
    pub fn new(content: Content, raw_text: impl Into<String>, gt_label: Option<usize>) -> Self {
        Self {
            content,
            raw_text: raw_text.into(),
            known_label: None,
            gt_label,
        }
    }

    /// Ground-truth class. Evaluation only.
    pub fn eval_label(&self) -> Option<usize> {
        self.gt_label
    }
}

/// Whitespace-token vocabulary. Index 0 is always [`UNK_TOKEN`].
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Builds a vocabulary from tokens in order, prepending [`UNK_TOKEN`].
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        vocab.intern(UNK_TOKEN);
        for t in tokens {
            vocab.intern(&t.into());
        }
        vocab
    }

    fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub vocab: Vocab,
    /// Label names in interning order; index = class id.
    pub label_names: Vec<String>,
    pub format: CorpusFormat,
    /// Feature dimension for embedding corpora.
    pub feature_dim: Option<usize>,
    pub k_total: usize,
    pub k_known: usize,
    /// Ground-truth class behind each known-label index.
    pub known_classes: Vec<usize>,
    pub labeled_indices: Vec<usize>,
}

impl Corpus {
    /// Loads a corpus, building a fresh vocabulary and label map.
    pub fn load(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Loader::new(format, Vocab::default(), Vec::new(), true).parse(path, &text)
    }

    /// Loads a second corpus (e.g. a test split) sharing `reference`'s
    /// vocabulary and label ids. Unknown words map to [`UNK_TOKEN`]; unseen
    /// labels are appended after the reference labels.
    pub fn load_aligned(path: impl AsRef<Path>, reference: &Corpus) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut corpus = Loader::new(
            reference.format,
            reference.vocab.clone(),
            reference.label_names.clone(),
            false,
        )
        .parse(path, &text)?;
        if let (Some(a), Some(b)) = (reference.feature_dim, corpus.feature_dim) {
            if a != b {
                return Err(Error::arg(format!(
                    "feature dimension {b} in {} differs from reference dimension {a}",
                    path.display()
                )));
            }
        }
        corpus.k_total = corpus.k_total.max(reference.k_total);
        Ok(corpus)
    }

    /// Builds an in-memory embedding corpus.
    pub fn from_features(rows: Vec<Vec<f64>>, labels: Vec<Option<usize>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::arg("no feature rows"));
        }
        if rows.len() != labels.len() {
            return Err(Error::arg("rows and labels differ in length"));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("feature rows must share a nonzero dimension"));
        }
        let k_total = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
        let utterances = rows
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (r, l))| Utterance::new(Content::Features(r), i.to_string(), l))
            .collect();
        Ok(Corpus {
            utterances,
            vocab: Vocab::default(),
            label_names: (0..k_total).map(|k| k.to_string()).collect(),
            format: CorpusFormat::EmbeddingMatrix,
            feature_dim: Some(dim),
            k_total,
            k_known: 0,
            known_classes: Vec::new(),
            labeled_indices: Vec::new(),
        })
    }

    /// Builds an in-memory text corpus, tokenizing on whitespace.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], labels: Vec<Option<usize>>) -> Result<Self> {
        if texts.len() != labels.len() {
            return Err(Error::arg("texts and labels differ in length"));
        }
        let mut vocab = Vocab::default();
        let mut utterances = Vec::with_capacity(texts.len());
        for (text, label) in texts.iter().zip(labels) {
            let text = text.as_ref();
            let tokens: Vec<usize> = text.split_whitespace().map(|w| vocab.intern(w)).collect();
            if tokens.is_empty() {
                return Err(Error::arg("empty utterance"));
            }
            utterances.push(Utterance::new(Content::Tokens(tokens), text, label));
        }
        if utterances.is_empty() {
            return Err(Error::arg("no utterances"));
        }
        let k_total = utterances
            .iter()
            .filter_map(|u| u.gt_label)
            .map(|l| l + 1)
            .max()
            .unwrap_or(0);
        Ok(Corpus {
            utterances,
            vocab,
            label_names: (0..k_total).map(|k| k.to_string()).collect(),
            format: CorpusFormat::TsvText,
            feature_dim: None,
            k_total,
            k_known: 0,
            known_classes: Vec::new(),
            labeled_indices: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Width of the pooled input vector: the feature dimension, or `None`
    /// for token corpora (where the encoder's hidden size applies).
    pub fn input_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    /// Ground-truth labels for evaluation. Samples without a label map to
    /// `None`.
    pub fn eval_labels(&self) -> Vec<Option<usize>> {
        self.utterances.iter().map(Utterance::eval_label).collect()
    }

    /// Read-only view without ground truth, for training code paths.
    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView { corpus: self }
    }

    /// Serializes in the corpus's own on-disk format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let label = |u: &Utterance| {
            u.gt_label
                .map(|l| self.label_names[l].clone())
                .unwrap_or_default()
        };
        match self.format {
            CorpusFormat::TsvText => {
                for u in &self.utterances {
                    let _ = writeln!(out, "{}\t{}", u.raw_text, label(u));
                }
            }
            CorpusFormat::EmbeddingMatrix => {
                let _ = writeln!(out, "dim={}", self.feature_dim.unwrap_or(0));
                for u in &self.utterances {
                    let _ = write!(out, "{}\t{}", u.raw_text, label(u));
                    if let Content::Features(f) = &u.content {
                        for x in f {
                            let _ = write!(out, "\t{x}");
                        }
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

/// Training-side access to a corpus: contents and known labels only.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    corpus: &'a Corpus,
}

impl<'a> TrainingView<'a> {
    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn content(&self, i: usize) -> &'a Content {
        &self.corpus.utterances[i].content
    }

    pub fn contents(&self) -> impl Iterator<Item = &'a Content> + 'a {
        self.corpus.utterances.iter().map(|u| &u.content)
    }

    pub fn known_label(&self, i: usize) -> Option<usize> {
        self.corpus.utterances[i].known_label
    }

    pub fn labeled_indices(&self) -> &'a [usize] {
        &self.corpus.labeled_indices
    }

    pub fn k_known(&self) -> usize {
        self.corpus.k_known
    }

    pub fn vocab_len(&self) -> usize {
        self.corpus.vocab.len()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.corpus.feature_dim
    }
}

struct Loader {
    format: CorpusFormat,
    vocab: Vocab,
    labels: Vec<String>,
    grow_vocab: bool,
}

impl Loader {
    fn new(format: CorpusFormat, vocab: Vocab, labels: Vec<String>, grow_vocab: bool) -> Self {
        Self {
            format,
            vocab,
            labels,
            grow_vocab,
        }
    }

    fn label(&mut self, name: &str) -> Option<usize> {
        if name.is_empty() {
            return None;
        }
        Some(match self.labels.iter().position(|l| l == name) {
            Some(i) => i,
            None => {
                self.labels.push(name.to_string());
                self.labels.len() - 1
            }
        })
    }

    fn parse(mut self, path: &Path, text: &str) -> Result<Corpus> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.trim().is_empty());

        let mut feature_dim = None;
        if self.format == CorpusFormat::EmbeddingMatrix {
            let Some((no, header)) = lines.next() else {
                return Err(Error::EmptyCorpus(path.to_path_buf()));
            };
            let dim = header
                .strip_prefix("dim=")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| err(no, format!("expected header \"dim=<d>\", got {header:?}")))?;
            feature_dim = Some(dim);
        }

        let mut utterances = Vec::new();
        for (no, line) in lines {
            let utterance = match self.format {
                CorpusFormat::TsvText => {
                    let (text, label) = line
                        .split_once('\t')
                        .ok_or_else(|| err(no, "expected \"text<TAB>label\"".into()))?;
                    if label.contains('\t') {
                        return Err(err(no, "too many fields".into()));
                    }
                    let mut tokens = Vec::new();
                    for w in text.split_whitespace() {
                        let id = if self.grow_vocab {
                            self.vocab.intern(w)
                        } else {
                            self.vocab.get(w).unwrap_or(0)
                        };
                        tokens.push(id);
                    }
                    if tokens.is_empty() {
                        return Err(err(no, "empty utterance".into()));
                    }
                    let gt = self.label(label.trim());
                    Utterance::new(Content::Tokens(tokens), text, gt)
                }
                CorpusFormat::EmbeddingMatrix => {
                    let dim = feature_dim.unwrap_or_default();
                    let fields: Vec<&str> = line.split('\t').collect();
                    if fields.len() != dim + 2 {
                        return Err(err(
                            no,
                            format!(
                                "expected id, label and {dim} features, found {} feature fields",
                                fields.len().saturating_sub(2)
                            ),
                        ));
                    }
                    let features = fields[2..]
                        .iter()
                        .map(|f| {
                            f.trim()
                                .parse::<f64>()
                                .ok()
                                .filter(|x| x.is_finite())
                                .ok_or_else(|| err(no, format!("invalid feature value {f:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let gt = self.label(fields[1].trim());
                    Utterance::new(Content::Features(features), fields[0], gt)
                }
            };
            utterances.push(utterance);
        }
        if utterances.is_empty() {
            return Err(Error::EmptyCorpus(path.to_path_buf()));
        }
        Ok(Corpus {
            utterances,
            vocab: self.vocab,
            k_total: self.labels.len(),
            label_names: self.labels,
            format: self.format,
            feature_dim,
            k_known: 0,
            known_classes: Vec::new(),
            labeled_indices: Vec::new(),
        })
    }
}

/// Marks a random subset of classes as known and reveals `labeled_ratio` of
/// their samples as training supervision.
///
/// `round(kcr * K)` classes are drawn uniformly; each selected class gets
/// `max(1, round(labeled_ratio * n_class))` labeled samples. Known-label ids
/// follow ascending ground-truth class order.
pub fn make_semi_split<R: Rng + ?Sized>(
    corpus: &Corpus,
    kcr: f64,
    labeled_ratio: f64,
    rng: &mut R,
) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&kcr) {
        return Err(Error::arg(format!("known class ratio {kcr} outside [0, 1]")));
    }
    if !(labeled_ratio > 0.0 && labeled_ratio <= 1.0) {
        return Err(Error::arg(format!(
            "labeled ratio {labeled_ratio} outside (0, 1]"
        )));
    }
    let k = corpus.k_total;
    let k_known = (kcr * k as f64).round() as usize;
    if kcr > 0.0 && k_known == 0 {
        return Err(Error::config(format!(
            "known class ratio {kcr} selects no class out of {k}"
        )));
    }

    let mut classes: Vec<usize> = (0..k).collect();
    classes.shuffle(rng);
    let mut known: Vec<usize> = classes[..k_known].to_vec();
    known.sort_unstable();

    let mut out = corpus.clone();
    for u in &mut out.utterances {
        u.known_label = None;
    }
    let mut labeled = Vec::new();
    for (known_id, &class) in known.iter().enumerate() {
        let mut members: Vec<usize> = corpus
            .utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.gt_label == Some(class))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let take = ((labeled_ratio * members.len() as f64).round() as usize).clamp(1, members.len());
        for &i in &members[..take] {
            out.utterances[i].known_label = Some(known_id);
            labeled.push(i);
        }
    }
    labeled.sort_unstable();
    out.k_known = k_known;
    out.known_classes = known;
    out.labeled_indices = labeled;
    Ok(out)
}

/// Number of positions removed by [`random_erase`] from a length-`len`
/// sequence.
pub fn erase_count(len: usize, a: f64) -> usize {
    // The epsilon absorbs products like 0.57 * 100 = 56.999...
    ((len as f64) * a + 1e-9).floor() as usize
}

/// Removes `floor(L * a)` distinct positions chosen uniformly, keeping the
/// survivors in order.
pub fn random_erase<R: Rng + ?Sized>(tokens: &[usize], a: f64, rng: &mut R) -> Vec<usize> {
    debug_assert!((0.0..1.0).contains(&a));
    let m = erase_count(tokens.len(), a).min(tokens.len().saturating_sub(1));
    if m == 0 {
        return tokens.to_vec();
    }
    let mut drop = vec![false; tokens.len()];
    for i in rand::seq::index::sample(rng, tokens.len(), m) {
        drop[i] = true;
    }
    tokens
        .iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(&t, _)| t)
        .collect()
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&p));
    if p == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

pub fn feature_dropout<R: Rng + ?Sized>(v: &[f64], p: f64, rng: &mut R) -> Vec<f64> {
    let mask = dropout_mask(v.len(), p, rng);
    v.iter().zip(mask).map(|(x, m)| x * m).collect()
}

/// One augmented encoder input with its dropout masks frozen, so the
/// forward pass is a pure function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub input: Content,
    /// `L x H` inverted-dropout mask applied to token embeddings.
    pub token_mask: Option<Array2<f64>>,
    /// Inverted-dropout mask applied to the pooled vector.
    pub pooled_mask: Option<Array1<f64>>,
}

impl View {
    pub fn plain(content: &Content) -> Self {
        Self {
            input: content.clone(),
            token_mask: None,
            pooled_mask: None,
        }
    }

    pub fn erased<R: Rng + ?Sized>(content: &Content, a: f64, rng: &mut R) -> Self {
        match content {
            Content::Tokens(t) => Self {
                input: Content::Tokens(random_erase(t, a, rng)),
                token_mask: None,
                pooled_mask: None,
            },
            Content::Features(_) => Self::plain(content),
        }
    }

    /// Dropout view. `hidden` is the pooled width (the token embedding size
    /// for token inputs, the feature dimension otherwise).
    pub fn dropout<R: Rng + ?Sized>(content: &Content, p: f64, hidden: usize, rng: &mut R) -> Self {
        if p == 0.0 {
            return Self::plain(content);
        }
        let token_mask = match content {
            Content::Tokens(t) => Some(
                Array2::from_shape_vec((t.len(), hidden), dropout_mask(t.len() * hidden, p, rng))
                    .expect("mask shape"),
            ),
            Content::Features(_) => None,
        };
        let pooled_mask = Some(Array1::from(dropout_mask(hidden, p, rng)));
        Self {
            input: content.clone(),
            token_mask,
            pooled_mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    pub view_a: View,
    pub view_b: View,
    pub source_index: usize,
}
