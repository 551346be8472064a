use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pulsekin");

const SMALL: &str = "[train]\nmax_epochs = 3\n[model]\nfc_dims = [32, 16, 8]\n";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` except the manifest, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let config = root.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let synth = root.join("synth");
    ok(&[
        "--seed", "5", "--out", s(&synth), "synth", "--families", "4", "--relations", "F-S,M-D", "--rois", "6",
        "--phase-locked",
    ]);
    ok(&["--out", s(&root.join("rppg")), "extract", "--in", s(&synth.join("traces")), "--method", "pos"]);
    ok(&["--out", s(&root.join("single")), "extract", "--in", s(&synth.join("traces")), "--single-channel"]);
    Fixture { _tmp: tmp, root, config }
}

#[test]
fn pipeline_and_rerun_determinism() {
    let f = fixture();
    let r = &f.root;
    let registry = r.join("synth/registry.json");
    let train = r.join("train");
    let out = ok(&[
        "--seed", "3", "--jobs", "2", "--config", s(&f.config), "--out", s(&train), "train", "--registry",
        s(&registry), "--rppg", s(&r.join("rppg")), "--all",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean AUC"));
    for file in ["results.csv", "roc.svg", "manifest.json", "F-S/fold_000.pkin", "F-S/folds.json", "M-D/scores.csv"] {
        assert!(train.join(file).exists(), "{file}");
    }
    let results = std::fs::read_to_string(train.join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines[0], "relation,auc_percent,n_pos,n_neg,n_folds");
    assert_eq!(lines.len(), 1 + 7 + 2);
    assert!(lines.iter().any(|l| l.starts_with("F-D,NA")));

    // Rerun into a fresh directory, and with a different thread count.
    let again = r.join("again");
    ok(&["rerun", s(&train.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(snapshot(&train), snapshot(&again));

    let eval = r.join("eval");
    ok(&[
        "--out", s(&eval), "evaluate", "--train-dir", s(&train), "--registry", s(&registry), "--rppg",
        s(&r.join("rppg")), "--all",
    ]);
    assert_eq!(std::fs::read(eval.join("results.csv")).unwrap(), results.as_bytes());
    let eval2 = r.join("eval2");
    ok(&["rerun", s(&eval.join("manifest.json")), "--out", s(&eval2)]);
    assert_eq!(snapshot(&eval), snapshot(&eval2));

    let plot = r.join("plot");
    ok(&[
        "--out", s(&plot), "plot", "--scores", s(&train.join("F-S/scores.csv")), "--label", "F-S", "--scores",
        s(&train.join("M-D/scores.csv")), "--label", "M-D",
    ]);
    let svg = std::fs::read_to_string(plot.join("roc.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.contains("<svg") && svg.contains("F-S (AUC") && svg.contains("M-D (AUC"));
}

#[test]
fn ablation_writes_deltas_and_shared_test_pairs() {
    let f = fixture();
    let r = &f.root;
    let out = r.join("ablate");
    ok(&[
        "--seed", "2", "--config", s(&f.config), "--out", s(&out), "ablate", "--registry",
        s(&r.join("synth/registry.json")), "--rppg", s(&r.join("rppg")), "--rppg-single", s(&r.join("single")),
        "--relation", "F-S",
    ]);
    let table = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = table.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        ["variant", "full", "no-attention", "single-channel", "multi-over-single", "attention-over-none"]
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let hashes = manifest["extra"]["test_pair_hash"].as_object().unwrap();
    assert_eq!(hashes.len(), 3);
    let first = &hashes["full"];
    assert!(hashes.values().all(|h| h == first));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--families", "4"]).status.code(), Some(2), "missing --out");
    assert_eq!(run(&["--out", s(tmp.path()), "train", "--registry", "x"]).status.code(), Some(2));
    let missing = run(&[
        "--out", s(tmp.path()), "train", "--registry", s(&tmp.path().join("none.json")), "--rppg", s(tmp.path()),
        "--all",
    ]);
    assert_eq!(missing.status.code(), Some(1));

    let traces = tmp.path().join("traces");
    std::fs::create_dir_all(&traces).unwrap();
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/traces");
    std::fs::copy(corpus.join("valid_01_basic.csv"), traces.join("a.csv")).unwrap();
    std::fs::copy(corpus.join("invalid_10_nan_cell.csv"), traces.join("b.csv")).unwrap();
    let out = tmp.path().join("out");
    let bad = run(&["--out", s(&out), "extract", "--in", s(&traces)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("b.csv"));
    assert!(!out.join("a.csv").exists(), "partial output left behind");
}

#[test]
fn config_file_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nlearning_rate = 1\n").unwrap();
    let out = run(&["--config", s(&cfg), "--out", s(tmp.path()), "synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}
