use resctl_cli::artifacts::{write_json, DatTable};
use resctl_cli::reproduce::batch;
use resctl_core::ExperimentConfig;

#[test]
fn dat_file_embeds_config_and_parses_as_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::lorenz_uss();
    let mut t = DatTable::new(&["x", "y"]);
    t.comment_block(&cfg.to_toml().unwrap());
    t.push(vec![1.0, 2.5]);
    let p = dir.path().join("nested/t.dat");
    t.write(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 1);
    let nums: Vec<f64> = body[0].split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(nums, vec![1.0, 2.5]);
    let cfg_text: String =
        text.lines().filter_map(|l| l.strip_prefix("# ")).take_while(|l| *l != "x y").collect::<Vec<_>>().join("\n");
    assert_eq!(ExperimentConfig::from_toml(&cfg_text).unwrap(), cfg);
}

#[test]
fn batch_summary_round_trips_as_json() {
    let mut cfg = ExperimentConfig::mackey_glass_uss();
    cfg.burn_in = 10.0;
    cfg.esn.n = 6;
    cfg.regularization = None;
    cfg.timescales.t_init = 5.0;
    cfg.timescales.t_train = 40.0;
    cfg.timescales.t_test = 10.0;
    cfg.timescales.t_control = 5.0;
    cfg.timescales.t_eval = 5.0;
    cfg.runs = 3;
    let b = batch(&cfg);
    assert_eq!(b.summary.runs.len(), 3);
    assert_eq!(b.summary.runs.iter().map(|r| r.run).collect::<Vec<_>>(), vec![0, 1, 2]);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    write_json(&p, &b.summary).unwrap();
    let back: resctl_core::ExperimentSummary = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.runs.len(), 3);
}
