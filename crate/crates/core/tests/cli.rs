use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vtapred::config::Config;
use vtapred::dataset::load_dataset;
use vtapred::features::{extract, fmt_sig6};
use vtapred::model::{initial_params, Model};
use vtapred::synthetic::{tachogram_dataset, write_dataset, TachogramSpec};

const BIN: &str = env!("CARGO_BIN_EXE_vtapred");

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    rr: PathBuf,
    meta: PathBuf,
}

fn fixture(vta: usize, control: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let rr = root.join("rr");
    let meta = root.join("metadata.csv");
    let spec = TachogramSpec {
        vta,
        control,
        ..Default::default()
    };
    write_dataset(&tachogram_dataset(&spec, 11), &rr, &meta).unwrap();
    Fixture {
        _dir: dir,
        root,
        rr,
        meta,
    }
}

fn run(fx: &Fixture, args: &[&str]) -> Output {
    let sub = args[0];
    let mut cmd = Command::new(BIN);
    cmd.arg(sub);
    if sub != "report" {
        cmd.arg("--data-dir").arg(&fx.rr).arg("--metadata").arg(&fx.meta);
    }
    cmd.args(&args[1..]).env("SOURCE_DATE_EPOCH", "1700000000").env("RUST_LOG", "warn");
    cmd.output().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 4] = ["--set", "hidden=8,6,4", "--set", "folds=4"];

#[test]
fn features_csv_has_nine_columns() {
    let fx = fixture(4, 4);
    let out = fx.root.join("f.csv");
    ok(run(&fx, &["features", "--out", path_str(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "record_id,label,mean_rr,lf_power,hf_power,min_rr,max_rr,delta_mean_rr,delta_ectopic_count"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.split(',').count() == 9));
}

#[test]
fn zero_horizon_uses_full_sequences() {
    let fx = fixture(2, 2);
    let out = fx.root.join("f.csv");
    ok(run(&fx, &["features", "--out", path_str(&out), "--horizon-ms", "0"]));
    let text = fs::read_to_string(&out).unwrap();
    let ds = load_dataset(&fx.rr, &fx.meta).unwrap();
    let config = Config::default();
    for (line, record) in text.lines().skip(1).zip(&ds.records) {
        let fv = extract(record, &config.features).unwrap();
        let expected: Vec<String> = fv.values.iter().map(|v| fmt_sig6(*v)).collect();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], record.record_id);
        assert_eq!(fields[2..], expected.iter().map(String::as_str).collect::<Vec<_>>()[..]);
    }
}

#[test]
fn missing_metadata_fails_with_message() {
    let fx = fixture(1, 1);
    let out = Command::new(BIN)
        .args(["features", "--data-dir"])
        .arg(&fx.rr)
        .arg("--metadata")
        .arg(fx.root.join("absent.csv"))
        .arg("--out")
        .arg(fx.root.join("f.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn config_errors_exit_one() {
    let fx = fixture(1, 1);
    let out = run(&fx, &["ingest", "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = run(&fx, &["ingest", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_reports_counts() {
    let fx = fixture(3, 2);
    let out = ok(run(&fx, &["ingest"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("records: 5 (VTA 3, Control 2)"), "{text}");
}

#[test]
fn train_is_byte_identical_across_runs() {
    let fx = fixture(6, 6);
    let a = fx.root.join("a.bin");
    let b = fx.root.join("b.bin");
    for out in [&a, &b] {
        ok(run(&fx, &["train", "--out", path_str(out), "--epochs", "15", SMALL[0], SMALL[1]]));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let loss_a = fs::read_to_string(fx.root.join("a.bin.loss.csv")).unwrap();
    assert_eq!(loss_a, fs::read_to_string(fx.root.join("b.bin.loss.csv")).unwrap());
    assert_eq!(loss_a.lines().count(), 16);
    assert_eq!(
        fs::read(fx.root.join("a.bin.manifest.json")).unwrap(),
        fs::read(fx.root.join("b.bin.manifest.json")).unwrap()
    );
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let fx = fixture(4, 4);
    let path = fx.root.join("m.bin");
    ok(run(&fx, &["train", "--out", path_str(&path), "--epochs", "0", "--seed", "9", SMALL[0], SMALL[1]]));
    let model = Model::load(&path).unwrap();
    assert_eq!(model.config.train.seed, 9);
    assert_eq!(model.params, initial_params(&model.config, 7));
}

#[test]
fn single_task_zeroes_auxiliary_weights() {
    let fx = fixture(4, 4);
    let path = fx.root.join("m.bin");
    ok(run(&fx, &["train", "--out", path_str(&path), "--epochs", "5", "--single-task", SMALL[0], SMALL[1]]));
    let model = Model::load(&path).unwrap();
    assert_eq!(model.config.train.weights.nyhac, 0.0);
    assert_eq!(model.config.train.weights.bmi, 0.0);
    let loss = fs::read_to_string(fx.root.join("m.bin.loss.csv")).unwrap();
    for line in loss.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], f[2], "total loss should equal the VTA loss");
    }
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let fx = fixture(4, 4);
    let cfg = fx.root.join("run.conf");
    fs::write(&cfg, "# test\nepochs = 3\nlambda_bmi = 0.5\nhidden = 8,6,4\n").unwrap();
    let path = fx.root.join("m.bin");
    ok(run(
        &fx,
        &["train", "--config", path_str(&cfg), "--out", path_str(&path), "--epochs", "2", "--set", "lambda_nyhac=0.25"],
    ));
    let c = Model::load(&path).unwrap().config;
    assert_eq!(c.train.epochs, 2);
    assert_eq!(c.train.weights.bmi, 0.5);
    assert_eq!(c.train.weights.nyhac, 0.25);
    assert_eq!(c.train.clip, 0.1);
}

#[test]
fn divergence_exits_two() {
    let fx = fixture(4, 4);
    let path = fx.root.join("m.bin");
    let out = run(
        &fx,
        &["train", "--out", path_str(&path), "--epochs", "50", "--set", "lr=1e300", "--set", "clip=1e300", SMALL[0], SMALL[1]],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ablate_writes_every_artifact() {
    let fx = fixture(8, 8);
    let out = fx.root.join("ab");
    let mut args = vec!["ablate", "--out", path_str(&out), "--seeds", "2", "--epochs", "10"];
    args.extend(SMALL);
    ok(run(&fx, &args));

    let table = fs::read_to_string(out.join("report.txt")).unwrap();
    for label in ["Baseline", "+ windowed features", "+ age embedding", "+ multi-task optimization"] {
        assert!(table.contains(label), "{table}");
    }
    let per_seed = fs::read_to_string(out.join("per_seed.csv")).unwrap();
    assert_eq!(per_seed.lines().count(), 1 + 8);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 5);
    assert_eq!(fs::read_dir(out.join("predictions")).unwrap().count(), 8);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));
    assert_eq!(manifest["config"]["epochs"], "10");
    assert_eq!(manifest["timestamp"], "2023-11-14T22:13:20Z");
    assert_eq!(manifest["dataset_checksum"].as_str().unwrap().len(), 64);

    let rerendered = fx.root.join("rr_out");
    ok(run(&fx, &["report", "--per-seed", path_str(&out.join("per_seed.csv")), "--out", path_str(&rerendered)]));
    assert_eq!(fs::read_to_string(rerendered.join("report.txt")).unwrap(), table);
}

#[test]
fn ablate_patient_grouped_runs() {
    let fx = fixture(8, 8);
    let out = fx.root.join("ab");
    let mut args = vec!["ablate", "--out", path_str(&out), "--seeds", "1", "--epochs", "5", "--patient-grouped"];
    args.extend(SMALL);
    ok(run(&fx, &args));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"patient_grouped\": \"true\""));
}
