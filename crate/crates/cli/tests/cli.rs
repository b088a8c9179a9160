use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privdistill::data::read_dataset;
use privdistill::harness::{parse_results, RESULTS_HEADER};
use privdistill::nn::read_checkpoint;

const SPEC: &str = r#"
strategies = ["seq-aggregator", "no-distill"]
alphas = [0.0, 0.5]
seeds = [1, 2]

[dataset]
num_classes = 3
samples_per_class = 12
primary_dim = 4
privileged_dim = 5
segments = 2
frames_per_segment = 2

[teacher]
hidden_dims = [6]
embedding_dim = 4

[student]
hidden_dims = [6]
embedding_dim = 4

[train]
epochs = 2
batch_size = 8
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_privdistill"));
    cmd.env_remove("PRIVDISTILL_WORKERS");
    cmd
}

fn spec_file(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_matrix_to_stdout_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), SPEC);
    let out = bin().args(["run-matrix", "--spec"]).arg(&spec).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some(RESULTS_HEADER));
    assert_eq!(parse_results(&text).unwrap().len(), 8);

    let path = dir.path().join("r.jsonl");
    let hist = dir.path().join("hist");
    let out = bin()
        .args(["run-matrix", "--format", "json-lines", "--workers", "2", "--seed", "9", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&path)
        .arg("--history-dir")
        .arg(&hist)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records = parse_results(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.seed == 9));
    let history = std::fs::read_to_string(hist.join("seq-aggregator-a0.5000-s9.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,mean_loss_y,mean_loss_pi,train_acc,val_acc"));
    assert_eq!(history.lines().count(), 3);

    let out = bin().arg("summarize").arg(&path).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert_eq!(summary.lines().filter(|l| l.ends_with(",true")).count(), 2);
}

#[test]
fn generate_data_and_train_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), SPEC);
    let data = dir.path().join("d.pdst");
    let out = bin().args(["generate-data", "--seed", "5", "--spec"]).arg(&spec).arg("--out").arg(&data).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ds = read_dataset(&data).unwrap();
    assert_eq!(ds.spec.seed, 5);
    assert_eq!(ds.samples.len(), 36);

    let ckpt = dir.path().join("t.ckpt");
    let out = bin()
        .args(["train-teacher", "--mode", "non-sequential", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let model = read_checkpoint(&ckpt).unwrap();
    assert!(model.config.aggregator.is_none());
    assert_eq!(model.config.encoder.input_dim, 5);
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = spec_file(dir.path(), "alphas = [0.5]\n[train]\nepochs = 1\nwarmup = 3\n");
    let out = bin().args(["run-matrix", "--spec"]).arg(&bad_key).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("train"), "{}", stderr(&out));

    let bad_alpha = spec_file(dir.path(), "alphas = [1.5]\n");
    let out = bin().args(["run-matrix", "--spec"]).arg(&bad_alpha).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));

    for args in [
        vec!["run-matrix", "--format", "xml"],
        vec!["run-matrix", "--workers", "0"],
        vec!["no-such-command"],
        vec!["generate-data"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn runtime_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("summarize").arg(dir.path().join("missing.csv")).output().unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let garbage = dir.path().join("garbage.csv");
    std::fs::write(&garbage, "not,a,results,file\n").unwrap();
    let out = bin().arg("summarize").arg(&garbage).output().unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let spec = spec_file(dir.path(), SPEC);
    let out = bin()
        .args(["generate-data", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("no/such/dir/d.pdst"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn worker_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), SPEC);
    let out = bin().env("PRIVDISTILL_WORKERS", "0").args(["run-matrix", "--spec"]).arg(&spec).output().unwrap();
    assert_eq!(code(&out), 1, "environment value is read: {}", stderr(&out));
    let out = bin()
        .env("PRIVDISTILL_WORKERS", "0")
        .args(["run-matrix", "--workers", "1", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "flag wins: {}", stderr(&out));
}

#[test]
fn help_exits_with_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("run-matrix"));
}
