use std::path::Path;
use std::process::Command as Process;

use depthvox::cli::{parse_args, run, Command, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use depthvox::dataset::SampleStore;

fn exe(args: &[&str]) -> (i32, String, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_depthvox"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn run_ok(args: &[&str]) -> String {
    let (code, out, err) = exe(args);
    assert_eq!(code, EXIT_OK, "{args:?}: {err}");
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn parses_gen_data() {
    let cmd = parse_args([
        "depthvox", "gen-data", "--classes", "box,icosphere", "--views", "8", "--res", "30",
        "--seed", "7", "--out", "d.voxc",
    ])
    .unwrap();
    let Command::GenData(a) = cmd else {
        panic!("wrong command")
    };
    assert_eq!(a.views, 8);
    assert_eq!(a.res, 30);
    assert_eq!(a.seed, 7);
    assert_eq!(a.classes.len(), 2);
}

#[test]
fn parses_train() {
    let cmd = parse_args([
        "depthvox", "train", "--data", "d.voxc", "--ae", "ae.voxw", "--freeze-epochs", "300",
        "--out", "m.voxw",
    ])
    .unwrap();
    let Command::Train(a) = cmd else {
        panic!("wrong command")
    };
    assert_eq!(a.freeze_epochs, 300);
    assert_eq!(a.optim.momentum, 0.9);
}

#[test]
fn usage_errors() {
    assert!(parse_args(["depthvox", "trian"]).is_err());
    assert!(parse_args(["depthvox", "eval", "--model", "m.voxw"]).is_err());
    assert!(parse_args(["depthvox", "gen-data", "--classes", "teapot", "--out", "x"]).is_err());
    assert!(parse_args(["depthvox", "bench", "--model", "m", "--repetitions", "ten"]).is_err());
    assert!(parse_args(["depthvox", "summary", "--bogus"]).is_err());
    assert_eq!(exe(&["trian"]).0, EXIT_USAGE);
    assert_eq!(exe(&["eval"]).0, EXIT_USAGE);
    assert_eq!(exe(&["--help"]).0, EXIT_OK);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.voxc");
    let (code, _, err) = exe(&["eval", "--model", p(&missing), "--data", p(&missing)]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.starts_with("error:"));
    let junk = dir.path().join("junk.voxc");
    std::fs::write(&junk, b"nope").unwrap();
    let (code, _, err) = exe(&["export", "--data", p(&junk), "--index", "0", "--out", "x.obj"]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("byte 0"), "{err}");
}

#[test]
fn summary_reports_budget() {
    let out = run_ok(&["summary"]);
    assert!(out.contains("param_count 4097354\n"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("layer ")).count(), 12);
    let low = run_ok(&["summary", "--variant", "low_res_direct"]);
    assert!(low.contains("variant low_res_direct"));
}

#[test]
fn pipeline_at_low_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.voxc");
    let data2 = dir.path().join("d2.voxc");
    let model = dir.path().join("m.voxw");
    let tuned = dir.path().join("t.voxw");
    let probs = dir.path().join("p.txt");
    let obj = dir.path().join("p.obj");
    let gt = dir.path().join("gt.obj");

    let gen = ["gen-data", "--classes", "box,cylinder", "--per-class", "2", "--views", "2", "--res", "10", "--seed", "3", "--out", p(&data)];
    let out = run_ok(&gen);
    assert!(out.contains("records 8"), "{out}");
    let first = std::fs::read(&data).unwrap();
    run_ok(&gen);
    assert_eq!(std::fs::read(&data).unwrap(), first);
    assert_eq!(SampleStore::load(&data).unwrap().resolution, 10);

    let train = ["train-lowres", "--data", p(&data), "--out", p(&model), "--epochs", "4", "--lr", "0.1", "--log-every", "2"];
    let out = run_ok(&train);
    assert_eq!(out.lines().count(), 2, "{out}");
    let first = std::fs::read(&model).unwrap();
    run_ok(&train);
    assert_eq!(std::fs::read(&model).unwrap(), first);

    run_ok(&["gen-data", "--classes", "table", "--per-class", "2", "--views", "1", "--res", "10", "--seed", "4", "--out", p(&data2)]);
    run_ok(&["finetune", "--model", p(&model), "--data", p(&data2), "--out", p(&tuned), "--epochs", "2", "--freeze-epochs", "0"]);

    let report = run_ok(&["eval", "--model", p(&tuned), "--data", p(&data)]);
    for key in ["overall_accuracy ", "overall_iou ", "sample_count 8", "per_angle.0 ", "per_angle.1 ", "per_class.0 ", "per_class.2 "] {
        assert!(report.contains(key), "{key} missing from {report}");
    }

    let out = run_ok(&["predict", "--model", p(&model), "--data", p(&data), "--index", "1", "--out", p(&probs)]);
    assert!(out.starts_with("accuracy "));
    assert_eq!(std::fs::read_to_string(&probs).unwrap().lines().count(), 1000);
    run_ok(&["export", "--probs", p(&probs), "--threshold", "0.0", "--out", p(&obj)]);
    let text = std::fs::read_to_string(&obj).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12_000);

    let out = run_ok(&["export", "--data", p(&data), "--index", "0", "--out", p(&gt)]);
    let voxels: usize = out.lines().next().unwrap()[7..].parse().unwrap();
    let text = std::fs::read_to_string(&gt).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8 * voxels);
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12 * voxels);

    let (code, _, _) = exe(&["predict", "--model", p(&model), "--data", p(&data), "--index", "99", "--out", p(&probs)]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn bench_reports_median_and_p95() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.voxc");
    let model = dir.path().join("m.voxw");
    run_ok(&["gen-data", "--classes", "box", "--per-class", "1", "--views", "1", "--res", "10", "--out", p(&data)]);
    run_ok(&["train-lowres", "--data", p(&data), "--out", p(&model), "--epochs", "1"]);
    let out = run_ok(&["bench", "--model", p(&model), "--repetitions", "10"]);
    let keys: Vec<&str> = out.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(keys.iter().filter(|k| **k == "median_ms").count(), 1);
    assert_eq!(keys.iter().filter(|k| **k == "p95_ms").count(), 1);
    assert!(keys.iter().all(|k| *k == "median_ms" || *k == "p95_ms" || k.starts_with("stage.")));
    let (code, _, _) = exe(&["bench", "--model", p(&model), "--repetitions", "5"]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn run_writes_to_the_given_sink() {
    let cmd = parse_args(["depthvox", "summary", "--variant", "autoencoder"]).unwrap();
    let mut buf = Vec::new();
    run(&cmd, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().contains("param_count 301150"));
}
