//! Command-line front end.
//!
//! Exit status: 0 on success, 2 for usage or configuration errors detected
//! before any work starts, 1 for failures while running.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::clustering::KMeansConfig;
use crate::data::{Corpus, CorpusFormat};
use crate::encoder::{load_checkpoint, save_checkpoint};
use crate::error::Error;
use crate::metrics::score_all;
use crate::optim::AdamWConfig;
use crate::pipeline::{self, Mode, Pretrained, RunConfig};
use crate::report;

pub const CHECKPOINT_FILE: &str = "encoder.ckpt";

#[derive(Debug, Parser)]
#[command(name = "usnid", version, about = "Unsupervised and semi-supervised new intent discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-train the encoder and save a checkpoint.
    Pretrain(Common),
    /// Run the clustering/representation-learning loop from a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `pretrain`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Estimate the number of clusters by over-clustering.
    EstimateK {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to encode with; pre-trains from scratch when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a predicted assignment file against a reference one.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Pre-training, training and evaluation in one go.
    Run(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Unsup,
    Semi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Tsv,
    Embedding,
}

#[derive(Debug, Args)]
struct Common {
    /// Training corpus.
    #[arg(long)]
    train: PathBuf,
    /// Test corpus; defaults to the training corpus.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    format: FormatArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Unsup)]
    mode: ModeArg,
    /// Known class ratio (semi mode).
    #[arg(long)]
    kcr: Option<f64>,
    /// Fraction of each known class that is labeled (semi mode).
    #[arg(long)]
    labeled_ratio: Option<f64>,
    /// Contrastive temperature [default: 0.07 unsup, 0.05 semi].
    #[arg(long)]
    tau: Option<f64>,
    /// Random-erase fraction [default: 0.5 unsup, 0.4 semi].
    #[arg(long)]
    erase: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Stop once the assignment-change rate falls below this.
    #[arg(long)]
    delta_th: Option<f64>,
    /// Pairs per mini-batch.
    #[arg(long)]
    batch: Option<usize>,
    /// Known number of clusters [default: number of training labels].
    #[arg(long, conflicts_with = "k_prime")]
    k: Option<usize>,
    /// Over-clustering count; enables estimation of K.
    #[arg(long)]
    k_prime: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// K-Means++ restarts.
    #[arg(long)]
    n_init: Option<usize>,
    /// K-Means++ restarts for estimating K.
    #[arg(long)]
    estimate_n_init: Option<usize>,
    /// A seed, an inclusive range `a..b`, or a comma-separated list.
    #[arg(long, default_value = "0", value_parser = parse_seeds)]
    seed: Seeds,
    /// Output directory.
    #[arg(long, default_value = "usnid-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

/// Parses `7`, `0..9` (inclusive) or `1,4,5`.
pub fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let s = s.trim();
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        if a > b {
            return Err(format!("empty seed range {a}..{b}"));
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|e| format!("bad seed {x:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    Ok(Seeds(seeds))
}

impl Common {
    fn corpus_format(&self) -> CorpusFormat {
        match self.format {
            FormatArg::Tsv => CorpusFormat::TsvText,
            FormatArg::Embedding => CorpusFormat::EmbeddingMatrix,
        }
    }

    /// The effective configuration for `seed`. `labels` is the number of
    /// ground-truth classes in the training corpus, used as `K` when neither
    /// `--k` nor `--k-prime` is given.
    fn run_config(&self, seed: u64, labels: usize) -> RunConfig {
        let mode = match self.mode {
            ModeArg::Unsup => Mode::Unsup,
            ModeArg::Semi => Mode::Semi,
        };
        let mut c = RunConfig::new(mode);
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.tau, self.tau);
        set(&mut c.erase, self.erase);
        set(&mut c.dropout, self.dropout);
        set(&mut c.delta_th, self.delta_th);
        set(&mut c.kcr, self.kcr);
        set(&mut c.labeled_ratio, self.labeled_ratio);
        let mut optimizer = AdamWConfig::default();
        set(&mut optimizer.lr, self.lr);
        c.optimizer = optimizer;
        let mut kmeans = KMeansConfig::default();
        if let Some(n) = self.n_init {
            kmeans.n_init = n;
        }
        c.kmeans = kmeans;
        c.estimate_n_init = self.estimate_n_init.unwrap_or(c.estimate_n_init);
        c.batch_pairs = self.batch.unwrap_or(c.batch_pairs);
        c.pretrain_epochs = self.pretrain_epochs.unwrap_or(c.pretrain_epochs);
        c.max_train_iterations = self.max_iter.unwrap_or(c.max_train_iterations);
        c.hidden = self.hidden.unwrap_or(c.hidden);
        c.dim = self.dim.unwrap_or(c.dim);
        c.k_prime = self.k_prime;
        c.k = match (self.k, self.k_prime) {
            (Some(k), _) => Some(k),
            (None, None) if labels > 0 => Some(labels),
            _ => None,
        };
        c.seed = seed;
        c
    }
}

/// Failures tagged with the exit status they map to.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn validated(config: RunConfig) -> CliResult<RunConfig> {
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

struct Inputs {
    train: Corpus,
    test: Corpus,
}

fn load_inputs(common: &Common) -> CliResult<Inputs> {
    let train = Corpus::load(&common.train, common.corpus_format())?;
    let test = match &common.test {
        Some(p) => Corpus::load_aligned(p, &train)?,
        None => train.clone(),
    };
    Ok(Inputs { train, test })
}

/// Directory for `seed`: `out` itself for a single seed, `out/seed-N`
/// otherwise.
fn seed_dir(out: &Path, seed: u64, multi: bool) -> PathBuf {
    if multi {
        out.join(format!("seed-{seed}"))
    } else {
        out.to_path_buf()
    }
}

fn first_seed(common: &Common) -> CliResult<u64> {
    match common.seed.0.as_slice() {
        [s] => Ok(*s),
        _ => Err(Failure::Usage("this subcommand takes a single --seed".into())),
    }
}

fn cmd_pretrain(common: &Common) -> CliResult<()> {
    let seed = first_seed(common)?;
    let inputs = load_inputs(common)?;
    let config = validated(common.run_config(seed, inputs.train.k_total))?;
    let train = pipeline::prepare_train(&inputs.train, &config)?;
    let pre = pipeline::pretrain(&train.training_view(), &config)?;
    fs::create_dir_all(&common.out).map_err(Error::from)?;
    save_checkpoint(common.out.join(CHECKPOINT_FILE), &pre.encoder, &train.vocab)?;
    let mut text = String::new();
    for (k, v) in config.echo() {
        text.push_str(&format!("{k}={v}\n"));
    }
    for (i, l) in pre.epoch_losses.iter().enumerate() {
        text.push_str(&format!("epoch_{i}_loss={l:.8}\n"));
    }
    fs::write(common.out.join("pretrain.txt"), text).map_err(Error::from)?;
    println!(
        "pretrained {} epochs; checkpoint {}",
        pre.epoch_losses.len(),
        common.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn load_pretrained(path: &Path, corpus: &Corpus) -> CliResult<Pretrained> {
    let (encoder, vocab) = load_checkpoint(path)?;
    if vocab != corpus.vocab {
        return Err(Failure::Runtime(Error::arg(format!(
            "checkpoint {} was trained on a different vocabulary",
            path.display()
        ))));
    }
    Ok(Pretrained {
        encoder,
        epoch_losses: Vec::new(),
    })
}

fn cmd_train(common: &Common, checkpoint: &Path) -> CliResult<()> {
    let seed = first_seed(common)?;
    let inputs = load_inputs(common)?;
    let config = validated(common.run_config(seed, inputs.train.k_total))?;
    let pre = load_pretrained(checkpoint, &inputs.train)?;
    let train = pipeline::prepare_train(&inputs.train, &config)?;
    let rep = pipeline::train_and_evaluate(&train, &inputs.test, pre, &config)?;
    report::emit_report(&rep, &common.out)?;
    print_run(seed, &rep);
    Ok(())
}

fn cmd_estimate(common: &Common, checkpoint: Option<&Path>) -> CliResult<()> {
    let seed = first_seed(common)?;
    let k_prime = common
        .k_prime
        .ok_or_else(|| Failure::Usage("estimate-k needs --k-prime".into()))?;
    let inputs = load_inputs(common)?;
    let config = validated(common.run_config(seed, inputs.train.k_total))?;
    let train = pipeline::prepare_train(&inputs.train, &config)?;
    let view = train.training_view();
    let encoder = match checkpoint {
        Some(p) => load_pretrained(p, &inputs.train)?.encoder,
        None => pipeline::pretrain(&view, &config)?.encoder,
    };
    let (est, _) = pipeline::estimate_clusters(&encoder, &view, k_prime, &config)?;
    println!("estimated K = {} (known {}, new {})", est.k_total, est.k_known, est.k_new);
    println!("threshold = {:.2}", est.threshold);
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &est.sizes {
        *histogram.entry(s).or_default() += 1;
    }
    println!("cluster size histogram (size: clusters):");
    for (size, count) in histogram.iter().rev() {
        let mark = if *size as f64 >= est.threshold { "*" } else { " " };
        println!("{mark}{size:>6}: {}", "#".repeat(*count));
    }
    Ok(())
}

fn cmd_evaluate(gt: &Path, pred: &Path) -> CliResult<()> {
    let gt = report::read_assignment(gt)?;
    let pred = report::read_assignment(pred)?;
    let scores = score_all(&gt, &pred)?;
    println!("{}", report::format_scores(&scores));
    Ok(())
}

fn print_run(seed: u64, rep: &pipeline::RunReport) {
    let metrics = rep
        .scores
        .map(|s| report::format_scores(&s))
        .unwrap_or_else(|| "no ground truth".into());
    println!(
        "seed={seed} K={} iterations={} converged={} {metrics}",
        rep.k,
        rep.trace.len(),
        rep.converged
    );
}

fn cmd_run(common: &Common) -> CliResult<()> {
    let inputs = load_inputs(common)?;
    let configs = common
        .seed
        .0
        .iter()
        .map(|&s| validated(common.run_config(s, inputs.train.k_total)))
        .collect::<CliResult<Vec<_>>>()?;
    let multi = configs.len() > 1;
    let mut scores = Vec::new();
    for config in &configs {
        let rep = pipeline::run(&inputs.train, &inputs.test, config)?;
        report::emit_report(&rep, seed_dir(&common.out, config.seed, multi))?;
        print_run(config.seed, &rep);
        scores.extend(rep.scores);
    }
    if multi {
        if let Some(agg) = report::aggregate(&scores) {
            fs::create_dir_all(&common.out).map_err(Error::from)?;
            fs::write(common.out.join("aggregate.txt"), report::aggregate_text(&agg)).map_err(Error::from)?;
            println!("{}", report::format_aggregate(&agg));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    // Range checks on flags happen before any corpus is touched.
    let common = match &cli.command {
        Command::Pretrain(c) | Command::Run(c) => Some(c),
        Command::Train { common, .. } | Command::EstimateK { common, .. } => Some(common),
        Command::Evaluate { .. } => None,
    };
    if let Some(c) = common {
        for &seed in &c.seed.0 {
            if let Err(e) = c.run_config(seed, 1).validate() {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    let result = match &cli.command {
        Command::Pretrain(c) => cmd_pretrain(c),
        Command::Train { common, checkpoint } => cmd_train(common, checkpoint),
        Command::EstimateK { common, checkpoint } => cmd_estimate(common, checkpoint.as_deref()),
        Command::Evaluate { gt, pred } => cmd_evaluate(gt, pred),
        Command::Run(c) => cmd_run(c),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
