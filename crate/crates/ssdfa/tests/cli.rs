use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssdfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssdfa")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ssdfa(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn cost_prints_csv_with_expected_columns() {
    let out = ok(&["cost", "--shape", "mnist_fc"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("algorithm,layer,reads,writes,macs,movement_words,movement_mb"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 3);
    assert!(rows.iter().any(|r| r.starts_with("bp,total,")));
    assert!(rows.iter().any(|r| r.starts_with("ssdfa,total,")));
}

#[test]
fn cost_all_shapes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("costs.csv");
    ok(&["cost", "--shape", "all", "--algo", "bp,sdfa", "--sparsity", "0.5", "--out", path.to_str().unwrap()]);
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().any(|l| l.starts_with("sdfa,vgg16_fc:total,")), "{text}");
}

#[test]
fn cost_rejects_unknown_shape() {
    let out = ssdfa(&["cost", "--shape", "resnet"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("all checks passed"), "{text}");
}

fn train_args(dir: &Path) -> Vec<String> {
    [
        "train",
        "--dataset",
        "synthetic",
        "--algo",
        "ssdfa",
        "--epochs",
        "3",
        "--lr",
        "0.1",
        "--batch",
        "16",
        "--seed",
        "5",
        "--count-costs",
        "--out",
        dir.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn train_writes_artifacts_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let args = train_args(d);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }
    for name in ["metrics.csv", "checkpoint.txt", "feedback_l0.txt", "costs.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let metrics = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 1 + 3);
    assert!(metrics.starts_with("epoch,lr,train_loss,train_accuracy,test_accuracy,angle_l0"));
    let (net, meta) = ssdfa::formats::load_checkpoint(&a.path().join("checkpoint.txt")).unwrap();
    assert_eq!(net.dims(), vec![20, 64, 4]);
    assert_eq!(meta.seed, 5);
}

#[test]
fn train_reads_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "dataset = synthetic\nepochs = 9\nlimit = 64\ntest_limit = 32\n").unwrap();
    let out = dir.path().join("out");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "2", "--out", out.to_str().unwrap()]);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 1 + 2);
}

#[test]
fn sweep_is_deterministic_and_skips_invalid_cells() {
    let run = |d: &Path, jobs: &str| {
        ok(&[
            "sweep",
            "--dataset",
            "synthetic",
            "--arch",
            "20,32,10",
            "--ranks",
            "1,10",
            "--sparsities",
            "0,0.9",
            "--repetitions",
            "2",
            "--epochs",
            "2",
            "--limit",
            "200",
            "--test-limit",
            "100",
            "--jobs",
            jobs,
            "--out",
            d.to_str().unwrap(),
        ]);
        fs::read_to_string(d.join("sweep.csv")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let x = run(a.path(), "1");
    let y = run(b.path(), "2");
    assert_eq!(x, y);
    let skipped: Vec<&str> = x.lines().filter(|l| l.starts_with("skipped,")).collect();
    assert_eq!(skipped, vec!["skipped,1,0.9,,,skipped,rank_connectivity,0,,,,,"]);
    assert_eq!(x.lines().filter(|l| l.starts_with("run,")).count(), 3 * 2);
    assert_eq!(x.lines().filter(|l| l.starts_with("mean,")).count(), 3);
    assert!(a.path().join("sweep.log").exists());
}
