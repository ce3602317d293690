//! The `usnid` binary driven as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use usnid::synthetic::{text_corpora, TextSpec};

fn usnid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_usnid")).args(args).output().expect("spawn usnid")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_corpora(dir: &Path) -> (String, String) {
    let spec = TextSpec { classes: 4, train_per_class: 20, test_per_class: 8, ..Default::default() };
    let (train, test) = text_corpora(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let (a, b) = (dir.join("train.tsv"), dir.join("test.tsv"));
    train.save(&a).unwrap();
    test.save(&b).unwrap();
    (a.display().to_string(), b.display().to_string())
}

const FAST: [&str; 10] = ["--hidden", "8", "--dim", "8", "--pretrain-epochs", "2", "--max-iter", "4", "--n-init", "2"];

#[test]
fn evaluate_identical_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.tsv");
    fs::write(&p, "0\t1\n1\t1\n2\t0\n3\t2\n").unwrap();
    let p = p.display().to_string();
    let o = usnid(&["evaluate", "--gt", &p, "--pred", &p]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "NMI=1.00 ARI=1.00 ACC=1.00");
}

#[test]
fn run_over_seeds_writes_reports_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_corpora(dir.path());
    let before = fs::read(&train).unwrap();
    let out = dir.path().join("out").display().to_string();
    let mut args = vec!["run", "--train", &train, "--test", &test, "--seed", "0..1", "--out", &out];
    args.extend(FAST);
    let o = usnid(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in ["seed-0", "seed-1"] {
        for f in ["summary.txt", "trace.csv", "assignments.tsv", "timing.txt"] {
            assert!(dir.path().join("out").join(seed).join(f).is_file(), "{seed}/{f}");
        }
    }
    let agg = fs::read_to_string(dir.path().join("out/aggregate.txt")).unwrap();
    assert!(agg.starts_with("runs=2\n"));
    assert!(stdout(&o).contains("runs=2 NMI="));
    assert_eq!(fs::read(&train).unwrap(), before, "input corpus was modified");
}

#[test]
fn pretrain_then_train_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_corpora(dir.path());
    let out = dir.path().join("out").display().to_string();
    let mut args = vec!["pretrain", "--train", &train, "--out", &out];
    args.extend(FAST);
    assert!(usnid(&args).status.success());
    let ckpt = dir.path().join("out/encoder.ckpt").display().to_string();

    let mut args = vec!["train", "--train", &train, "--test", &test, "--checkpoint", &ckpt, "--out", &out, "--k", "4"];
    args.extend(FAST);
    let o = usnid(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("K=4"));

    let mut args = vec!["estimate-k", "--train", &train, "--checkpoint", &ckpt, "--k-prime", "8", "--out", &out];
    args.extend(FAST);
    let o = usnid(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("estimated K = "), "{text}");
    assert!(text.contains("cluster size histogram"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpora(dir.path());
    // Usage errors.
    assert_eq!(usnid(&["run"]).status.code(), Some(2));
    assert_eq!(usnid(&["run", "--train", &train, "--tau", "0"]).status.code(), Some(2));
    assert_eq!(usnid(&["run", "--train", &train, "--k", "3", "--k-prime", "6"]).status.code(), Some(2));
    assert_eq!(usnid(&["estimate-k", "--train", &train]).status.code(), Some(2));
    // Runtime errors.
    let missing = dir.path().join("missing.tsv").display().to_string();
    assert_eq!(usnid(&["run", "--train", &missing]).status.code(), Some(1));
    assert_eq!(usnid(&["--help"]).status.code(), Some(0));
}
