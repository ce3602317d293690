//! Miniature intent encoder: token embedding table, mean pooling and a dense
//! layer producing the intent representation, plus `W tanh(.) + b`
//! projection heads.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::data::{Content, View, Vocab};
use crate::error::{Error, Result};

/// Anything exposing named, contiguous parameter tensors. Gradient containers
/// use the same type as the parameters they differentiate.
pub trait Tensors {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = 0.5 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `V x H` token vectors. Empty (zero rows) for embedding-matrix input.
    pub embed: Array2<f64>,
    /// `H x D`.
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

/// Cached forward activations for a batch of views.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    /// `B x H` pooled vectors after dropout.
    pub pooled: Array2<f64>,
    /// `B x D` intent representations.
    pub reps: Array2<f64>,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(vocab: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            embed: uniform(vocab, hidden, hidden, rng),
            dense_w: uniform(hidden, dim, hidden, rng),
            dense_b: Array1::from_iter((0..dim).map(|_| {
                let bound = 0.5 / (hidden.max(1) as f64).sqrt();
                rng.random_range(-bound..=bound)
            })),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embed: Array2::zeros(self.embed.raw_dim()),
            dense_w: Array2::zeros(self.dense_w.raw_dim()),
            dense_b: Array1::zeros(self.dense_b.raw_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.dense_w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dense_w.ncols()
    }

    pub fn vocab_len(&self) -> usize {
        self.embed.nrows()
    }

    fn pool(&self, view: &View) -> Result<Array1<f64>> {
        let h = self.hidden();
        let mut s = match &view.input {
            Content::Tokens(tokens) => {
                if tokens.is_empty() {
                    return Err(Error::arg("empty token sequence"));
                }
                let mut acc = Array1::<f64>::zeros(h);
                for (pos, &t) in tokens.iter().enumerate() {
                    if t >= self.vocab_len() {
                        return Err(Error::Index {
                            what: "embedding table",
                            index: t,
                            len: self.vocab_len(),
                        });
                    }
                    match &view.token_mask {
                        Some(m) => acc += &(&self.embed.row(t) * &m.row(pos)),
                        None => acc += &self.embed.row(t),
                    }
                }
                acc / tokens.len() as f64
            }
            Content::Features(f) => {
                if f.len() != h {
                    return Err(Error::arg(format!(
                        "feature dimension {} does not match encoder input width {h}",
                        f.len()
                    )));
                }
                Array1::from(f.clone())
            }
        };
        if let Some(m) = &view.pooled_mask {
            s *= m;
        }
        Ok(s)
    }

    /// Intent representation of a single input without augmentation.
    pub fn encode(&self, content: &Content) -> Result<Array1<f64>> {
        let s = self.pool(&View::plain(content))?;
        Ok(s.dot(&self.dense_w) + &self.dense_b)
    }

    /// Representations for every input, one row each.
    pub fn encode_all<'a, I>(&self, contents: I) -> Result<Array2<f64>>
    where
        I: IntoIterator<Item = &'a Content>,
    {
        let views: Vec<View> = contents.into_iter().map(View::plain).collect();
        Ok(self.forward(&views)?.reps)
    }

    pub fn forward(&self, views: &[View]) -> Result<EncodedBatch> {
        let mut pooled = Array2::zeros((views.len(), self.hidden()));
        for (i, v) in views.iter().enumerate() {
            pooled.row_mut(i).assign(&self.pool(v)?);
        }
        let reps = pooled.dot(&self.dense_w) + &self.dense_b;
        Ok(EncodedBatch { pooled, reps })
    }

    /// Accumulates parameter gradients into `grads` given `d_reps`, the loss
    /// gradient with respect to `batch.reps`.
    pub fn backward(
        &self,
        views: &[View],
        batch: &EncodedBatch,
        d_reps: ArrayView2<f64>,
        grads: &mut EncoderParams,
    ) {
        grads.dense_w += &batch.pooled.t().dot(&d_reps);
        grads.dense_b += &d_reps.sum_axis(Axis(0));
        if self.vocab_len() == 0 {
            return;
        }
        let d_pooled = d_reps.dot(&self.dense_w.t());
        for (i, view) in views.iter().enumerate() {
            let Content::Tokens(tokens) = &view.input else {
                continue;
            };
            let mut ds = d_pooled.row(i).to_owned();
            if let Some(m) = &view.pooled_mask {
                ds *= m;
            }
            ds /= tokens.len() as f64;
            for (pos, &t) in tokens.iter().enumerate() {
                let mut row = grads.embed.row_mut(t);
                match &view.token_mask {
                    Some(m) => row += &(&ds * &m.row(pos)),
                    None => row += &ds,
                }
            }
        }
    }
}

impl Tensors for EncoderParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("encoder.embed".into(), self.embed.as_slice().expect("contiguous")),
            ("encoder.dense_w".into(), self.dense_w.as_slice().expect("contiguous")),
            ("encoder.dense_b".into(), self.dense_b.as_slice().expect("contiguous")),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("encoder.embed".into(), self.embed.as_slice_mut().expect("contiguous")),
            ("encoder.dense_w".into(), self.dense_w.as_slice_mut().expect("contiguous")),
            ("encoder.dense_b".into(), self.dense_b.as_slice_mut().expect("contiguous")),
        ]
    }
}

/// `z = w^T tanh(i) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// `D x out_dim`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl ProjectionHead {
    pub fn init<R: Rng + ?Sized>(dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 0.5 / (dim.max(1) as f64).sqrt();
        Self {
            w: uniform(dim, out_dim, dim, rng),
            b: Array1::from_iter((0..out_dim).map(|_| rng.random_range(-bound..=bound))),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn project(&self, rep: &Array1<f64>) -> Array1<f64> {
        rep.mapv(f64::tanh).dot(&self.w) + &self.b
    }

    /// Returns `(tanh(reps), z)` for a batch of representations.
    pub fn forward(&self, reps: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let act = reps.mapv(f64::tanh);
        let z = act.dot(&self.w) + &self.b;
        (act, z)
    }

    /// Accumulates head gradients and returns the gradient with respect to
    /// the input representations.
    pub fn backward(&self, act: &Array2<f64>, d_z: &Array2<f64>, grads: &mut ProjectionHead) -> Array2<f64> {
        grads.w += &act.t().dot(d_z);
        grads.b += &d_z.sum_axis(Axis(0));
        let mut d_in = d_z.dot(&self.w.t());
        d_in.zip_mut_with(act, |d, &a| *d *= 1.0 - a * a);
        d_in
    }
}

/// Writes encoder parameters (and the vocabulary they index) as a
/// line-oriented text checkpoint:
///
/// ```text
/// usnid-checkpoint 1
/// vocab <n>
/// <token>            (n lines)
/// tensor <name> <rows> <cols>
/// <cols floats>      (rows lines, tab separated)
/// ```
///
/// Floats use Rust's shortest round-trip formatting, so a save/load cycle is
/// bit-exact. Vectors are stored as a single row.
pub fn save_checkpoint(path: impl AsRef<Path>, params: &EncoderParams, vocab: &Vocab) -> Result<()> {
    let mut out = String::from("usnid-checkpoint 1\n");
    let _ = writeln!(out, "vocab {}", vocab.len());
    for t in vocab.tokens() {
        let _ = writeln!(out, "{t}");
    }
    let mut write_matrix = |name: &str, m: ArrayView2<f64>| {
        let _ = writeln!(out, "tensor {name} {} {}", m.nrows(), m.ncols());
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "{}", line.join("\t"));
        }
    };
    write_matrix("embed", params.embed.view());
    write_matrix("dense_w", params.dense_w.view());
    let b = params.dense_b.view().insert_axis(Axis(0));
    write_matrix("dense_b", b);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EncoderParams, Vocab)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, message: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("truncated checkpoint: missing {what}")));

    let (no, header) = next("header")?;
    if header.trim() != "usnid-checkpoint 1" {
        return Err(err(no, "not a checkpoint file"));
    }
    let (no, vocab_line) = next("vocab header")?;
    let n: usize = vocab_line
        .strip_prefix("vocab ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| err(no, "expected \"vocab <n>\""))?;
    let mut tokens = Vec::with_capacity(n);
    for _ in 0..n {
        tokens.push(next("vocab entry")?.1.to_string());
    }
    let vocab = Vocab::from_tokens(tokens.into_iter().skip(1));

    let mut read_matrix = |expect: &str| -> Result<Array2<f64>> {
        let (no, head) = next("tensor header")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" || parts[1] != expect {
            return Err(err(no, &format!("expected tensor {expect}")));
        }
        let rows: usize = parts[2].parse().map_err(|_| err(no, "bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| err(no, "bad column count"))?;
        let mut m = Array2::zeros((rows, cols));
        for r in 0..rows {
            let (no, line) = next("tensor row")?;
            let vals: Vec<f64> = line
                .split('\t')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(no, "bad float"))?;
            if vals.len() != cols {
                return Err(err(no, "wrong number of columns"));
            }
            m.row_mut(r).assign(&Array1::from(vals));
        }
        Ok(m)
    };
    let embed = read_matrix("embed")?;
    let dense_w = read_matrix("dense_w")?;
    let dense_b = read_matrix("dense_b")?.slice(s![0, ..]).to_owned();
    if embed.nrows() > 0 && embed.ncols() != dense_w.nrows() {
        return Err(err(0, "embedding width does not match dense layer"));
    }
    if dense_b.len() != dense_w.ncols() {
        return Err(err(0, "bias length does not match dense layer"));
    }
    Ok((
        EncoderParams {
            embed,
            dense_w,
            dense_b,
        },
        vocab,
    ))
}
