use std::path::Path;
use std::process::{Command, Output};

fn sgda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgda"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn simulate_augment_train_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&sgda(&["simulate", "--out", "healthy", "--count", "3"], d));
    ok(&sgda(&["simulate", "--out", "its", "--fault", "inter_turn_short", "--db", "-20", "--count", "2", "--seed-base", "50"], d));
    assert!(d.join("healthy/manifest.txt").exists());

    let s = ok(&sgda(
        &["augment", "--manifest", "healthy/manifest.txt", "--out", "train.csv", "--generator", "gaussian", "--faults", "inter_turn_short", "--per-class", "12", "--seed", "4"],
        d,
    ));
    assert!(s.contains("24 windows (12 injected)"), "{s}");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("train.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["generator"], "gaussian");
    assert_eq!(meta["seed"], 4);

    let s = ok(&sgda(&["augment", "--manifest", "its/manifest.txt", "--out", "test.csv", "--passthrough"], d));
    assert!(s.contains("wrote 6 windows"), "{s}");

    ok(&sgda(&["train", "--data", "train.csv", "--model", "svm", "--out", "svm.ckpt"], d));
    let s = ok(&sgda(&["eval", "--model", "svm.ckpt", "--data", "train.csv"], d));
    assert!(s.starts_with("accuracy"), "{s}");
    let s = ok(&sgda(&["eval", "--model", "svm.ckpt", "--data", "test.csv", "--json"], d));
    let report: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(report["n_test"], 6);
}

#[test]
fn experiment_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("e3.toml"),
        "experiment = \"E3\"\nseeds = [1]\ntrain_per_class = 12\ntest_per_class = 4\noutput_dir = \"out\"\n\n[vae]\nepochs = 2\n\n[classifier.resnet]\nepochs = 1\n",
    )
    .unwrap();
    let s = ok(&sgda(&["experiment", "E3", "--config", "e3.toml"], d));
    assert!(s.contains("sgda-resnet"), "{s}");
    let run = std::fs::read_dir(d.join("out")).unwrap().next().unwrap().unwrap().path();
    for f in ["config.toml", "report.csv", "per_seed.csv", "report.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let table = ok(&sgda(&["report", run.join("report.csv").to_str().unwrap()], d));
    assert_eq!(table, std::fs::read_to_string(run.join("report.txt")).unwrap());

    let wrong = sgda(&["experiment", "E1", "--config", "e3.toml"], d);
    assert!(!wrong.status.success());
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = sgda(&["report", "missing.csv"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    ok(&sgda(&["simulate", "--out", "h", "--count", "1"], d));
    let out = sgda(&["augment", "--manifest", "h/manifest.txt", "--out", "x.csv", "--generator", "nope"], d);
    assert!(!out.status.success());
    let out = sgda(&["simulate", "--out", "bad", "--fault", "rotor_bar", "--db", "3"], d);
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = sgda_core::experiments::ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4], "{}", path.display());
        assert!(cfg.output_dir.ends_with("runs"));
        n += 1;
    }
    assert_eq!(n, 5);
}
