use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crlprune::checkpoint::load_network;
use crlprune::pruner::{filter_norms, mask_from_sparsity, NormKind};
use crlprune_cli::output::read_json;
use crlprune_cli::{BaselineSummary, ExperimentConfig, PruneSummary};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crlprune"))
}

/// Small enough to pretrain and prune in a few seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let text = r#"{
  "format_version": 1,
  "seed": 4,
  "dataset": {"kind": "synthetic", "train_samples": 120, "test_samples": 60},
  "pretrain": {"steps": 60, "batch_size": 30, "lr": 0.003},
  "env": {"budget": 40.0, "batch_size": 20, "finetune_schedule": [0, 0, 2]},
  "ppo": {"iterations": 3, "episodes_per_iteration": 2, "value_steps": 2},
  "final_finetune_steps": 4
}"#;
    let path = dir.join("tiny.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("-q")
        .args(extra)
        .output()
        .unwrap()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pretrain_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&run("pretrain", &cfg, &a, &[]));
    assert_ok(&run("pretrain", &cfg, &b, &[]));
    let read = |d: &Path| std::fs::read(d.join("checkpoint.json")).unwrap();
    assert_eq!(read(&a), read(&b));

    let c = dir.path().join("c");
    assert_ok(&run("pretrain", &cfg, &c, &["--seed", "5"]));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn prune_exit_code_reflects_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    assert_ok(&run("pretrain", &cfg, &out, &[]));

    let loose = run("prune", &cfg, &out, &["--alpha", "100"]);
    assert_eq!(loose.status.code(), Some(0));
    let s: PruneSummary = read_json(&out.join("summary.json")).unwrap();
    assert!(s.budget_met);
    assert!((s.sparsity - (100.0 - s.remaining_param_fraction)).abs() < 1e-12);
    assert!((s.delta_accuracy - 100.0 * (s.accuracy - s.unpruned_accuracy)).abs() < 1e-9);
    for f in ["iterations.csv", "episodes.csv", "timing.csv", "agent.json", "masks.json", "pruned.json", "config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let rows = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);

    // no structure keeps under 0.5% of the parameters
    let tight = run("prune", &cfg, &out, &["--alpha", "0.5"]);
    assert_eq!(tight.status.code(), Some(2));
    let s: PruneSummary = read_json(&out.join("summary.json")).unwrap();
    assert!(!s.budget_met && s.cost > 0.5);
}

#[test]
fn external_cost_command_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    assert_ok(&run("pretrain", &cfg, &out, &[]));
    assert_ok(&run("prune", &cfg, &out, &["--cost", "external:cat > /dev/null; echo 12.5", "--alpha", "20"]));
    let s: PruneSummary = read_json(&out.join("summary.json")).unwrap();
    assert_eq!(s.cost, 12.5);

    let failing = run("prune", &cfg, &out, &["--cost", "external:exit 3"]);
    assert_eq!(failing.status.code(), Some(1));
}

#[test]
fn baseline_matches_layerwise_magnitude_pruning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    assert_ok(&run("pretrain", &cfg, &out, &[]));
    let net = load_network(&out.join("checkpoint.json")).unwrap();

    assert_ok(&run("baseline", &cfg, &out, &["--ratio", "0"]));
    let b: BaselineSummary = read_json(&out.join("baseline.json")).unwrap();
    assert_eq!(b.accuracy, b.unpruned_accuracy);
    assert_eq!(b.delta_accuracy, 0.0);
    assert_eq!(b.remaining_param_fraction, 100.0);

    assert_ok(&run("baseline", &cfg, &out, &["--ratio", "0.6"]));
    let b: BaselineSummary = read_json(&out.join("baseline.json")).unwrap();
    let expected: Vec<usize> = net
        .conv_layers()
        .iter()
        .map(|l| mask_from_sparsity(&filter_norms(&l.weight, NormKind::L1), 0.6).unwrap().kept())
        .collect();
    assert_eq!(b.filters_kept, expected);
    assert!((b.sparsity - (100.0 - b.remaining_param_fraction)).abs() < 1e-12);

    let bad = run("baseline", &cfg, &out, &["--ratio", "1.5"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn matched_baseline_follows_prune_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let missing = run("baseline", &cfg, &out, &[]);
    assert_eq!(missing.status.code(), Some(1));

    assert_ok(&run("pretrain", &cfg, &out, &[]));
    assert_ok(&run("prune", &cfg, &out, &["--alpha", "100"]));
    assert_ok(&run("baseline", &cfg, &out, &[]));
    let s: PruneSummary = read_json(&out.join("summary.json")).unwrap();
    let b: BaselineSummary = read_json(&out.join("baseline.json")).unwrap();
    assert_eq!(b.matched_to, Some(s.remaining_param_fraction));

    let report = bin().args(["report", "--out"]).arg(&out).output().unwrap();
    assert_ok(&report);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("crl") && text.contains("magnitude"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    let corrupt = dir.path().join("corrupt.json");
    std::fs::write(&corrupt, "{ \"seed\": ").unwrap();
    let o = run("pretrain", &corrupt, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let binary = dir.path().join("binary.json");
    std::fs::write(
        &binary,
        r#"{"dataset": {"kind": "binary", "train": "/nonexistent/train.bin", "test": "/nonexistent/test.bin",
            "format": {"channels": 3, "height": 8, "width": 8, "classes": 2}}}"#,
    )
    .unwrap();
    assert_eq!(run("pretrain", &binary, &out, &[]).status.code(), Some(1));

    let version = dir.path().join("version.json");
    std::fs::write(&version, r#"{"format_version": 9}"#).unwrap();
    assert_eq!(run("pretrain", &version, &out, &[]).status.code(), Some(1));

    // prune without a checkpoint
    let cfg = tiny_config(dir.path());
    assert_eq!(run("prune", &cfg, &dir.path().join("empty"), &[]).status.code(), Some(1));

    // truncated checkpoint
    assert_ok(&run("pretrain", &cfg, &out, &[]));
    let ckpt = out.join("checkpoint.json");
    let text = std::fs::read_to_string(&ckpt).unwrap();
    std::fs::write(&ckpt, &text[..text.len() / 2]).unwrap();
    assert_eq!(run("prune", &cfg, &out, &[]).status.code(), Some(1));
}

#[test]
fn config_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&tiny_config(dir.path())).unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.alpha(), 40.0);
    assert_eq!(cfg.ppo.iterations, 3);
    cfg.apply(&crlprune_cli::Overrides {
        seed: Some(9),
        alpha: Some(25.0),
        cost: None,
        workers: Some(2),
        out: Some(dir.path().join("x")),
    });
    assert_eq!((cfg.seed, cfg.alpha(), cfg.ppo.workers), (9, 25.0, 2));
    cfg.validate().unwrap();

    let toy = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.json")).unwrap();
    toy.validate().unwrap();
    assert_eq!(toy.alpha(), 30.0);
}
