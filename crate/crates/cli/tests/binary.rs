use std::path::Path;
use std::process::Command;

use resctl_core::ExperimentConfig;

fn resctl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_resctl")).args(args).output().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::mackey_glass_uss();
    cfg.burn_in = 10.0;
    cfg.esn.n = 8;
    cfg.regularization = None;
    cfg.timescales.t_init = 5.0;
    cfg.timescales.t_train = 60.0;
    cfg.timescales.t_test = 20.0;
    cfg.timescales.t_control = 5.0;
    cfg.timescales.t_eval = 10.0;
    cfg.runs = 2;
    let p = dir.join("tiny.toml");
    std::fs::write(&p, cfg.to_toml().unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn presets_are_listed_and_printable() {
    let out = resctl(&["presets"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    assert_eq!(names.lines().collect::<Vec<_>>(), ExperimentConfig::preset_names());
    let out = resctl(&["presets", "lorenz-deep"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), ExperimentConfig::lorenz_deep());
    assert!(!resctl(&["presets", "nope"]).status.success());
}

#[test]
fn train_then_control_with_the_saved_controller() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let train_dir = dir.path().join("train");
    let out = resctl(&["train", "--config", &cfg, "--seed", "3", "--out", train_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "controller.json", "summary.json", "trajectory.csv"] {
        assert!(train_dir.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(train_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "completed");
    assert_eq!(summary["layers"].as_array().unwrap().len(), 1);

    let ctl_dir = dir.path().join("control");
    let ctrl = train_dir.join("controller.json");
    let out = resctl(&[
        "control",
        "--config",
        &cfg,
        "--controller",
        ctrl.to_str().unwrap(),
        "--out",
        ctl_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ctl_dir.join("control.json")).unwrap()).unwrap();
    assert!(report["control_error"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let csv = dir.path().join("s.csv");
    let out =
        resctl(&["sweep", "--config", &cfg, "--axis", "esn.n=5,8", "--runs", "2", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 4);
    assert!(dir.path().join("s.config.json").exists());
}

#[test]
fn fpga_emulate_dumps_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let lut = dir.path().join("tanh.hex");
    let fpga = dir.path().join("fpga");
    let out = resctl(&[
        "fpga-emulate",
        "--config",
        &cfg,
        "--dump-lut",
        lut.to_str().unwrap(),
        "--out",
        fpga.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&lut).unwrap().lines().count(), 1024);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fpga.join("fpga.json")).unwrap()).unwrap();
    assert!(report["summary"]["layers"][0]["emulated_error"].as_f64().is_some());
}

#[test]
fn unreadable_config_is_an_error() {
    let out = resctl(&["train", "--config", "/nonexistent/x.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("reading"));
}
