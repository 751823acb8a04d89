use resctl_cli::sweep::{sweep, write_rows, Axis};
use resctl_cli::{load_config, resolve_config};
use resctl_core::ExperimentConfig;

/// A Mackey-Glass run that takes a few milliseconds.
fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::mackey_glass_uss();
    cfg.name = "tiny".into();
    cfg.burn_in = 10.0;
    cfg.esn.n = 8;
    cfg.regularization = None;
    cfg.timescales.t_init = 5.0;
    cfg.timescales.t_train = 60.0;
    cfg.timescales.t_test = 20.0;
    cfg.timescales.t_control = 5.0;
    cfg.timescales.t_eval = 10.0;
    cfg.runs = 5;
    cfg.seed = 11;
    cfg
}

fn axes(specs: &[&str]) -> Vec<Axis> {
    specs.iter().map(|s| s.parse().unwrap()).collect()
}

fn csv_of(cfg: &ExperimentConfig, a: &[Axis]) -> String {
    let rows = sweep(cfg, a).unwrap();
    let mut buf = Vec::new();
    write_rows(&mut buf, a, &rows).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn config_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let toml_path = dir.path().join("c.toml");
    let json_path = dir.path().join("c.json");
    std::fs::write(&toml_path, cfg.to_toml().unwrap()).unwrap();
    std::fs::write(&json_path, cfg.to_json().unwrap()).unwrap();
    assert_eq!(load_config(&toml_path).unwrap(), cfg);
    assert_eq!(load_config(&json_path).unwrap(), cfg);

    let other = dir.path().join("c.yaml");
    std::fs::write(&other, "").unwrap();
    assert!(load_config(&other).is_err());

    let seeded = resolve_config(Some(&toml_path), "ignored", Some(99)).unwrap();
    assert_eq!(seeded.seed, 99);
    assert!(resolve_config(None, "no-such-preset", None).is_err());
}

#[test]
fn sweep_covers_grid_times_runs() {
    let a = axes(&["esn.n=5,8,10", "signal.lambda=0.2,0.6,1.0"]);
    let rows = sweep(&tiny(), &a).unwrap();
    assert_eq!(rows.len(), 3 * 3 * 5);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.run, i % 5);
        assert_eq!(r.point.len(), 2);
        assert!(["completed", "diverged", "failed"].contains(&r.status.as_str()));
    }
    assert!(rows.iter().any(|r| r.status == "completed" && r.control_error.is_some()));
    let text = csv_of(&tiny(), &a);
    assert_eq!(text.lines().count(), 1 + 45);
    assert!(text.starts_with("esn.n,signal.lambda,run,"));
}

#[test]
fn sweep_is_deterministic() {
    let a = axes(&["esn.n=5,8"]);
    assert_eq!(csv_of(&tiny(), &a), csv_of(&tiny(), &a));
}

#[test]
fn runs_share_seeds_across_points() {
    let rows = sweep(&tiny(), &axes(&["signal.lambda=0.2,1.0"])).unwrap();
    let (lo, hi) = rows.split_at(5);
    for (x, y) in lo.iter().zip(hi) {
        assert_eq!((x.esn_seed, x.signal_seed), (y.esn_seed, y.signal_seed));
    }
    assert_ne!(lo[0].esn_seed, lo[1].esn_seed);
}

#[test]
fn no_axes_is_a_single_point() {
    let rows = sweep(&tiny(), &[]).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.point.is_empty()));
}

#[test]
fn bad_values_become_failed_rows_and_bad_paths_errors() {
    let rows = sweep(&tiny(), &axes(&["esn.n=0,8"])).unwrap();
    assert!(rows[..5].iter().all(|r| r.status == "failed" && !r.message.is_empty()));
    assert!(rows[5..].iter().any(|r| r.status == "completed"));
    assert!(sweep(&tiny(), &axes(&["esn.width=1"])).is_err());
}
