use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swis"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .env("SWIS_DETERMINISTIC", "1")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(swis(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(swis(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(swis(dir.path(), &["evaluate", "--manifest", "m.csv", "--out", "o"]).status.code(), Some(2));
    assert_eq!(
        swis(dir.path(), &["ingest", "--root", ".", "--dataset", "mnist", "--out", "m.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(swis(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = swis(dir.path(), &["ingest", "--root", "missing", "--dataset", "bhsig260_bengali", "--out", "m.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset not found"));
    assert!(!dir.path().join("m.csv").exists());
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "model.depth = 3\n").unwrap();
    let o = swis(dir.path(), &["pretrain", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.depth"));
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = swis(dir.path(), &["selfcheck"]);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 8);
    assert!(!text.contains("FAIL"));
}

#[test]
fn full_pipeline_on_a_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&swis(d, &["synth", "--out", "data", "--writers", "4", "--genuine", "6", "--forged", "3", "--test-writers", "2"]));
    ok(&swis(d, &["ingest", "--root", "data", "--dataset", "custom", "--n-ref", "3", "--out", "manifest.csv"]));
    let manifest = fs::read_to_string(d.join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("image_path,writer_id,label,split,role\n"));
    assert_eq!(manifest.matches(",test,reference").count(), 2 * 3);

    ok(&swis(d, &["preprocess", "--manifest", "manifest.csv", "--out", "crops", "--pairs", "1"]));
    assert_eq!(fs::read_dir(d.join("crops")).unwrap().count(), 4 * 9 * 3);

    fs::write(
        d.join("run.cfg"),
        "run.name = t\nrun.checkpoint_every = 1\ndataset.manifest = manifest.csv\n\
         model.backbone = tiny_cnn\nschedule.batch_size = 6\nschedule.train_epochs = 2\n",
    )
    .unwrap();
    ok(&swis(d, &["pretrain", "--config", "run.cfg"]));
    let run = d.join("runs/t");
    for f in ["config.resolved", "run_info.json", "train_log.csv", "ckpt_1", "ckpt_2"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("step,on_diag,off_diag,total,mean_abs_offdiag,mean_diag"));
    // 18 pretraining images in batches of 6, two epochs
    assert_eq!(log.lines().count(), 1 + 6);

    let first = fs::read(run.join("ckpt_2")).unwrap();
    ok(&swis(d, &["pretrain", "--config", "run.cfg"]));
    assert_eq!(first, fs::read(run.join("ckpt_2")).unwrap(), "pretraining is not reproducible");

    ok(&swis(d, &["evaluate", "--checkpoint", "runs/t/ckpt_2", "--manifest", "manifest.csv", "--out", "eval", "--config", "run.cfg"]));
    for f in ["metrics.json", "records.csv", "features.csv", "tsne.png"] {
        assert!(d.join("eval").join(f).is_file(), "{f}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(d.join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["n_genuine"], 2 * 3);
    assert_eq!(metrics["n_forged"], 2 * 3);
    let records = fs::read_to_string(d.join("eval/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 12);

    // the feature file feeds evaluate and tsne directly
    ok(&swis(d, &["evaluate", "--features", "eval/features.csv", "--manifest", "manifest.csv", "--out", "eval2"]));
    assert_eq!(
        fs::read_to_string(d.join("eval/records.csv")).unwrap(),
        fs::read_to_string(d.join("eval2/records.csv")).unwrap()
    );
    ok(&swis(d, &["tsne", "--features", "eval/features.csv", "--out", "t.png", "--iterations", "200"]));
    assert!(d.join("t.png").is_file());
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&swis(d, &["synth", "--out", "data", "--writers", "3", "--genuine", "4", "--forged", "2", "--test-writers", "2"]));
    fs::write(
        d.join("run.cfg"),
        "run.name = t\ndataset.manifest = data/manifest.csv\nmodel.backbone = tiny_cnn\n\
         schedule.batch_size = 4\nschedule.train_epochs = 1\n",
    )
    .unwrap();
    ok(&swis(d, &["pretrain", "--config", "run.cfg"]));
    let o = swis(d, &["evaluate", "--checkpoint", "runs/t/ckpt_1", "--manifest", "data/manifest.csv", "--out", "e"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible checkpoint"));
}
