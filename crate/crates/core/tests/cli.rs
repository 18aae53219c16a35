use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn fixture(name: &str) -> String {
    root()
        .join("crates/core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

/// Runs the binary from the workspace root with the desk preset.
fn pairsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairsim"))
        .current_dir(root())
        .env_remove("PAIRSIM_CONFIG")
        .args(["--config", "presets/desk.cfg"])
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// An STS checkpoint trained to convergence on the toy set, shared by tests.
fn overfit_sts() -> &'static Path {
    static CKPT: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = CKPT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sts.ckpt");
        let p = path.display().to_string();
        let train = fixture("sts_toy.tsv");
        let o = pairsim(&["train", "--train", &train, "--valid", &train, "--out", &p]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (dir, path)
    });
    path
}

#[test]
fn train_two_epochs_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let o = pairsim(&[
        "--epochs",
        "2",
        "train",
        "--train",
        &fixture("sts_toy.tsv"),
        "--out",
        &ckpt.display().to_string(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(ckpt.is_file());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "epoch\tloss\tmetric");
    assert_eq!(lines.len(), 3);
    assert!(stderr(&o).contains("# epochs = 2"));
}

#[test]
fn missing_embeddings_is_exit_1_naming_key() {
    let o = pairsim(&[
        "--embeddings",
        "/nonexistent/emb.txt",
        "train",
        "--train",
        &fixture("sts_toy.tsv"),
        "--out",
        "/tmp/unused.ckpt",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`embeddings`"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "filterz = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pairsim"))
        .args(["--config", &cfg.display().to_string(), "gradcheck"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("filterz"));
}

#[test]
fn absurd_oov_scale_is_exit_3_with_batch() {
    // Word averages pass the raw vectors straight to the cosines.
    let o = pairsim(&[
        "--encoder",
        "word_avg",
        "--oov-scale",
        "1e300",
        "--epochs",
        "1",
        "train",
        "--train",
        &fixture("sts_toy.tsv"),
        "--out",
        "/tmp/unused.ckpt",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("batch 0"));
}

#[test]
fn overfit_model_evaluates_and_scores() {
    let ckpt = overfit_sts().display().to_string();
    let o = pairsim(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &fixture("sts_toy.tsv"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let r: f64 = out
        .lines()
        .nth(1)
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(r >= 99.0, "{out}");

    let score = |a: &str, b: &str| pairsim(&["score", "--checkpoint", &ckpt, a, b]);
    let first = score("Bob likes Mary.", "Bob likes Mary.");
    let again = score("Bob likes Mary.", "Bob likes Mary.");
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, again.stdout);
    let s: f64 = stdout(&first).trim().parse().unwrap();
    assert!(s > 4.5, "{s}");

    assert_eq!(code(&score("bob likes mary", "")), 2);
}

#[test]
fn wrong_task_checkpoint_is_exit_1() {
    let ckpt = overfit_sts().display().to_string();
    let o = pairsim(&[
        "--task",
        "entailment",
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &fixture("cls_toy.tsv"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`task`"), "{}", stderr(&o));
}

#[test]
fn wrong_filters_is_exit_1() {
    let ckpt = overfit_sts().display().to_string();
    let o = pairsim(&[
        "--filters",
        "12",
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &fixture("sts_toy.tsv"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("checkpoint has 16, config has 12"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn entailment_accuracy_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("e.ckpt").display().to_string();
    let data = fixture("cls_toy.tsv");
    let t = pairsim(&[
        "--task",
        "entailment",
        "--epochs",
        "3",
        "train",
        "--train",
        &data,
        "--out",
        &ckpt,
    ]);
    assert_eq!(code(&t), 0, "{}", stderr(&t));
    let o = pairsim(&[
        "--task",
        "entailment",
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &data,
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let acc: f64 = out
        .lines()
        .nth(1)
        .unwrap()
        .strip_prefix("accuracy\t")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=100.0).contains(&acc));
    let label = pairsim(&[
        "--task",
        "entailment",
        "score",
        "--checkpoint",
        &ckpt,
        "a dog runs",
        "a dog runs",
    ]);
    let label = stdout(&label);
    assert!(
        ["entailment", "contradiction", "neutral"].contains(&label.trim()),
        "{label}"
    );
}

#[test]
fn coverage_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    std::fs::write(&a, "alpha 1\nbeta 2\n").unwrap();
    std::fs::write(&b, "gamma 1\ndelta 2\n").unwrap();
    let emb = format!("{},{}", a.display(), b.display());
    let o = pairsim(&[
        "--embeddings",
        &emb,
        "coverage",
        &fixture("coverage_pairs.tsv"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "embedding\tavailable_pct\na\t50.00\nb\t50.00\nunion\t100.00\n"
    );

    let o = pairsim(&["coverage", &fixture("sts_toy.tsv")]);
    assert_eq!(stdout(&o).lines().count(), 1 + 2 + 1);
}

#[test]
fn config_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_pairsim"))
        .current_dir(root())
        .env("PAIRSIM_CONFIG", "presets/desk.cfg")
        .args(["coverage", &fixture("sts_toy.tsv")])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("# filters = 16"));
}

#[test]
fn bench_table_shape() {
    let o = pairsim(&[
        "--bench-epochs",
        "2",
        "--bench-models",
        "S-word_avg,M-maxlstm",
        "bench",
        "--train",
        &fixture("sts_toy.tsv"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "model\ttrain_loss\tpearson_x100");
    assert!(rows[1].starts_with("S-Word Average\t"));
    assert!(rows[2].starts_with("M-MaxLSTM-CNN\t"));
}
