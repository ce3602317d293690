//! Synthetic corpora with known structure: Gaussian blobs in embedding form
//! and short texts drawn from class-specific word pools.

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    /// Minimum distance between blob centers, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            train_per_class: 100,
            test_per_class: 25,
            dim: 16,
            separation: 8.0,
            sigma: 1.0,
        }
    }
}

/// Blob centers at pairwise distance exactly `separation * sigma` when
/// `classes <= dim` (scaled basis vectors), otherwise random centers with
/// rejection until every pair is at least that far apart.
pub fn blob_centers<R: Rng + ?Sized>(spec: &BlobSpec, rng: &mut R) -> Array2<f64> {
    let gap = spec.separation * spec.sigma;
    if spec.classes <= spec.dim {
        return Array2::from_shape_fn((spec.classes, spec.dim), |(k, d)| {
            if k == d {
                gap / std::f64::consts::SQRT_2
            } else {
                0.0
            }
        });
    }
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let spread = gap * (spec.classes as f64).sqrt();
    while centers.len() < spec.classes {
        let c: Vec<f64> = (0..spec.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                spread * z
            })
            .collect();
        let ok = centers.iter().all(|o| {
            o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= gap
        });
        if ok {
            centers.push(c);
        }
    }
    Array2::from_shape_fn((spec.classes, spec.dim), |(k, d)| centers[k][d])
}

fn sample_blobs<R: Rng + ?Sized>(centers: &Array2<f64>, per_class: usize, sigma: f64, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Option<usize>>) {
    let mut rows = Vec::with_capacity(centers.nrows() * per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (k, c) in centers.rows().into_iter().enumerate() {
        for _ in 0..per_class {
            let row = c
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + sigma * z
                })
                .collect();
            rows.push(row);
            labels.push(Some(k));
        }
    }
    (rows, labels)
}

/// Train and test embedding corpora drawn from the same blobs.
pub fn blob_corpora<R: Rng + ?Sized>(spec: &BlobSpec, rng: &mut R) -> Result<(Corpus, Corpus)> {
    if spec.classes == 0 || spec.dim == 0 || spec.train_per_class == 0 {
        return Err(Error::arg("blob spec needs classes, dimensions and samples"));
    }
    let centers = blob_centers(spec, rng);
    let (rows, labels) = sample_blobs(&centers, spec.train_per_class, spec.sigma, rng);
    let train = Corpus::from_features(rows, labels)?;
    let (rows, labels) = sample_blobs(&centers, spec.test_per_class.max(1), spec.sigma, rng);
    let test = Corpus::from_features(rows, labels)?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Words owned by each class.
    pub pool_size: usize,
    /// Words shared by every class.
    pub shared_size: usize,
    /// Probability that a position draws from the class pool.
    pub class_word_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for TextSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            train_per_class: 45,
            test_per_class: 15,
            pool_size: 8,
            shared_size: 40,
            class_word_prob: 0.5,
            min_len: 6,
            max_len: 12,
        }
    }
}

fn sample_texts<R: Rng + ?Sized>(spec: &TextSpec, per_class: usize, rng: &mut R) -> (Vec<String>, Vec<Option<usize>>) {
    let shared: Vec<String> = (0..spec.shared_size).map(|w| format!("w{w}")).collect();
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for c in 0..spec.classes {
        let pool: Vec<String> = (0..spec.pool_size).map(|w| format!("c{c}t{w}")).collect();
        for _ in 0..per_class {
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    let from_class = shared.is_empty() || rng.random::<f64>() < spec.class_word_prob;
                    if from_class {
                        pool.choose(rng).expect("non-empty pool").as_str()
                    } else {
                        shared.choose(rng).expect("non-empty shared pool").as_str()
                    }
                })
                .collect();
            texts.push(words.join(" "));
            labels.push(Some(c));
        }
    }
    (texts, labels)
}

/// Train and test text corpora; the test corpus shares the training
/// vocabulary.
pub fn text_corpora<R: Rng + ?Sized>(spec: &TextSpec, rng: &mut R) -> Result<(Corpus, Corpus)> {
    if spec.classes == 0 || spec.pool_size == 0 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::arg("invalid text spec"));
    }
    let (texts, labels) = sample_texts(spec, spec.train_per_class, rng);
    let train = Corpus::from_texts(&texts, labels)?;
    let (texts, labels) = sample_texts(spec, spec.test_per_class.max(1), rng);
    let mut test = Corpus::from_texts(&texts, labels)?;
    // Re-index the test tokens against the training vocabulary.
    for u in &mut test.utterances {
        let tokens = u
            .raw_text
            .split_whitespace()
            .map(|w| train.vocab.get(w).unwrap_or(0))
            .collect();
        u.content = crate::data::Content::Tokens(tokens);
    }
    test.vocab = train.vocab.clone();
    Ok((train, test))
}
