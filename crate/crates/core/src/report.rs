//! Report files: a `key=value` summary, a per-iteration CSV trace and the
//! test assignment as `index<TAB>cluster` lines.
//!
//! Everything written here is a pure function of the run configuration and
//! seed. Wall-clock time goes to a separate `timing.txt` so that repeated
//! runs produce byte-identical summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::Scores;
use crate::pipeline::{IterationRecord, RunReport};

pub const SUMMARY_FILE: &str = "summary.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const ASSIGNMENT_FILE: &str = "assignments.tsv";
pub const TIMING_FILE: &str = "timing.txt";

pub const TRACE_HEADER: &str = "iteration,delta,objective,kmeans_iterations,identity_alignment";

fn opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let delta = r.delta.map(|d| format!("{d:.8}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.8},{},{}",
            r.iteration,
            delta,
            r.objective,
            r.kmeans_iterations,
            opt_bool(r.identity_alignment)
        );
    }
    out
}

pub fn assignment_tsv(assignment: &[usize]) -> String {
    let mut out = String::with_capacity(assignment.len() * 8);
    for (i, c) in assignment.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{c}");
    }
    out
}

pub fn summary_text(report: &RunReport) -> String {
    let mut out = String::new();
    for (k, v) in report.config.echo() {
        let _ = writeln!(out, "{k}={v}");
    }
    let _ = writeln!(out, "k_used={}", report.k);
    if let Some(e) = &report.estimate {
        let _ = writeln!(out, "k_estimated={}", e.k_total);
        let _ = writeln!(out, "k_estimate_known={}", e.k_known);
        let _ = writeln!(out, "k_estimate_new={}", e.k_new);
        let _ = writeln!(out, "k_estimate_threshold={:.6}", e.threshold);
    }
    let _ = writeln!(out, "iterations={}", report.trace.len());
    let _ = writeln!(out, "converged={}", report.converged);
    if let Some(d) = report.deltas().last() {
        let _ = writeln!(out, "final_delta={d:.8}");
    }
    if let Some(r) = report.identity_rate() {
        let _ = writeln!(out, "identity_alignment_rate={r:.6}");
    }
    if let Some(l) = report.pretrain_losses.last() {
        let _ = writeln!(out, "pretrain_final_loss={l:.8}");
    }
    let _ = writeln!(out, "test_samples={}", report.assignment.len());
    if let Some(s) = report.scores {
        let _ = writeln!(out, "nmi={:.6}", s.nmi);
        let _ = writeln!(out, "ari={:.6}", s.ari);
        let _ = writeln!(out, "acc={:.6}", s.acc);
    }
    out
}

/// Writes the report files into `dir`, creating it if needed.
pub fn emit_report(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = [
        (SUMMARY_FILE, summary_text(report)),
        (TRACE_FILE, trace_csv(&report.trace)),
        (ASSIGNMENT_FILE, assignment_tsv(&report.assignment)),
        (TIMING_FILE, format!("wall_clock_seconds={:.3}\n", report.wall_clock.as_secs_f64())),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads an assignment file. Line `i` must carry index `i`.
pub fn read_assignment(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, cluster) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(n + 1, "expected index<TAB>cluster".into()))?;
        let idx: usize = idx.trim().parse().map_err(|e| parse_err(n + 1, format!("bad index: {e}")))?;
        let cluster: usize = cluster
            .trim()
            .parse()
            .map_err(|e| parse_err(n + 1, format!("bad cluster: {e}")))?;
        if idx != out.len() {
            return Err(parse_err(n + 1, format!("expected index {}, found {idx}", out.len())));
        }
        out.push(cluster);
    }
    Ok(out)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub nmi: (f64, f64),
    pub ari: (f64, f64),
    pub acc: (f64, f64),
}

/// Mean ± std of each metric over seeds.
pub fn aggregate(scores: &[Scores]) -> Option<Aggregate> {
    let col = |f: fn(&Scores) -> f64| mean_std(&scores.iter().map(f).collect::<Vec<_>>());
    Some(Aggregate {
        runs: scores.len(),
        nmi: col(|s| s.nmi)?,
        ari: col(|s| s.ari)?,
        acc: col(|s| s.acc)?,
    })
}

/// The human-readable metric line, two decimals.
pub fn format_scores(s: &Scores) -> String {
    format!("NMI={:.2} ARI={:.2} ACC={:.2}", s.nmi, s.ari, s.acc)
}

pub fn format_aggregate(a: &Aggregate) -> String {
    format!(
        "runs={} NMI={:.2}±{:.2} ARI={:.2}±{:.2} ACC={:.2}±{:.2}",
        a.runs, a.nmi.0, a.nmi.1, a.ari.0, a.ari.1, a.acc.0, a.acc.1
    )
}

pub fn aggregate_text(a: &Aggregate) -> String {
    format!(
        "runs={}\nnmi_mean={:.6}\nnmi_std={:.6}\nari_mean={:.6}\nari_std={:.6}\nacc_mean={:.6}\nacc_std={:.6}\n",
        a.runs, a.nmi.0, a.nmi.1, a.ari.0, a.ari.1, a.acc.0, a.acc.1
    )
}
