//! Named experiment batches that write plot-ready tables and summaries.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use rayon::prelude::*;
use resctl_core::experiment::{attractor_scale, run_experiment, run_seeds, RunOutput};
use resctl_core::plants::simulate_free;
use resctl_core::{ControlRunResult, ExperimentConfig, ExperimentSummary, RunStatus, RunSummary};

use crate::artifacts::{write_json, write_trajectory, DatTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Mackey-Glass errors over (lambda, delta) and (lambda, c) grids.
    Fig2,
    /// Mackey-Glass errors against reservoir size.
    Fig3,
    /// Single-layer Lorenz steady-state control, per run.
    LorenzUss,
    /// Per-layer errors of the four-layer Lorenz controller.
    LorenzDeep,
    /// Deep Lorenz controller tracking an ellipse.
    LorenzEllipse,
    /// Simulated circuit under square-wave control, float and fixed point.
    CircuitSim,
}

/// Overrides applied to every preset of a reproduction.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
}

impl Options {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        cfg
    }
}

/// Runs of one config plus the closed-loop record of the first run that
/// completed every layer.
pub struct Batch {
    pub summary: ExperimentSummary,
    pub example: Option<ControlRunResult>,
}

/// All runs of `cfg`, in parallel, reported in run order.
pub fn batch(cfg: &ExperimentConfig) -> Batch {
    let outputs: Vec<Result<RunOutput, String>> =
        (0..cfg.runs).into_par_iter().map(|i| run_experiment(cfg, i).map_err(|e| e.to_string())).collect();
    let mut example = None;
    let mut runs = Vec::with_capacity(outputs.len());
    for (i, out) in outputs.into_iter().enumerate() {
        match out {
            Ok(o) => {
                if example.is_none() && o.summary.status == RunStatus::Completed {
                    example = o.last_run;
                }
                runs.push(o.summary);
            }
            Err(message) => runs.push(RunSummary {
                run: i,
                seeds: run_seeds(cfg.seed, i, cfg.layers),
                status: RunStatus::Failed { message },
                baseline_error: None,
                layers: Vec::new(),
            }),
        }
    }
    Batch { summary: ExperimentSummary { config: cfg.clone(), runs }, example }
}

fn or_inf(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

fn inversion_error(r: &RunSummary) -> f64 {
    or_inf(r.layers.first().and_then(|l| l.test_error))
}

fn diverged(s: &ExperimentSummary) -> f64 {
    s.runs.iter().filter(|r| r.status != RunStatus::Completed).count() as f64
}

fn header(t: &mut DatTable, cfg: &ExperimentConfig) -> Result<()> {
    t.comment(format!("{} runs per point, master seed {}", cfg.runs, cfg.seed));
    t.comment("base config:");
    t.comment_block(&cfg.to_toml()?);
    Ok(())
}

/// Sum of per-observable standard deviations of the free plant.
pub fn free_attractor_scale(cfg: &ExperimentConfig, duration: f64) -> Result<f64> {
    let mut plant = cfg.plant.build()?;
    simulate_free(&mut plant, cfg.burn_in, cfg.h)?;
    let traj = simulate_free(&mut plant, duration, cfg.h)?;
    Ok(attractor_scale(&traj.y))
}

/// Runs `figure` and writes its artifacts into `out`; returns the files
/// written.
pub fn reproduce(figure: Figure, opts: &Options, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let emit_dat = |name: &str, t: &DatTable, files: &mut Vec<PathBuf>| -> Result<()> {
        let p = out.join(name);
        t.write(&p)?;
        files.push(p);
        Ok(())
    };
    match figure {
        Figure::Fig3 => {
            let base = opts.apply(ExperimentConfig::mackey_glass_uss());
            let mut t = DatTable::new(&["n", "inversion_error", "control_error", "baseline_error", "diverged"]);
            header(&mut t, &base)?;
            let mut summaries = Vec::new();
            for n in [5, 10, 20, 30, 50, 100, 200, 300] {
                let mut cfg = base.clone();
                cfg.esn.n = n;
                let s = batch(&cfg).summary;
                t.push(vec![
                    n as f64,
                    s.median_by(inversion_error),
                    s.median_by(|r| r.control_error(0)),
                    s.median_by(|r| or_inf(r.baseline_error)),
                    diverged(&s),
                ]);
                summaries.push(s);
            }
            emit_dat("fig3.dat", &t, &mut files)?;
            let p = out.join("fig3_summary.json");
            write_json(&p, &summaries)?;
            files.push(p);
        }
        Figure::Fig2 => {
            let base = opts.apply(ExperimentConfig::mackey_glass_uss());
            let values = [0.2, 0.6, 1.0, 2.0];
            let mut summaries = Vec::new();
            for (second, file) in [("delta", "fig2_lambda_delta.dat"), ("c", "fig2_lambda_c.dat")] {
                let mut t = DatTable::new(&["lambda", second, "inversion_error", "control_error", "diverged"]);
                header(&mut t, &base)?;
                for &lambda in &values {
                    for &v in &values {
                        let mut cfg = base.clone();
                        cfg.signal.lambda = lambda;
                        match second {
                            "delta" => cfg.timescales.delta = v,
                            _ => cfg.esn.c = v,
                        }
                        let s = batch(&cfg).summary;
                        t.push(vec![
                            lambda,
                            v,
                            s.median_by(inversion_error),
                            s.median_by(|r| r.control_error(0)),
                            diverged(&s),
                        ]);
                        summaries.push(s);
                    }
                }
                emit_dat(file, &t, &mut files)?;
            }
            let p = out.join("fig2_summary.json");
            write_json(&p, &summaries)?;
            files.push(p);
        }
        Figure::LorenzUss => {
            let cfg = opts.apply(ExperimentConfig::lorenz_uss());
            let s = batch(&cfg).summary;
            let mut t = DatTable::new(&["run", "training_error", "test_error", "control_error"]);
            header(&mut t, &cfg)?;
            t.comment(format!(
                "median training error {:.4}, median test error {:.4}",
                s.median_by(|r| or_inf(r.layers.first().and_then(|l| l.training_error))),
                s.median_by(inversion_error)
            ));
            for r in &s.runs {
                let first = r.layers.first();
                t.push(vec![
                    r.run as f64,
                    or_inf(first.and_then(|l| l.training_error)),
                    or_inf(first.and_then(|l| l.test_error)),
                    r.control_error(0),
                ]);
            }
            emit_dat("lorenz_uss.dat", &t, &mut files)?;
            let p = out.join("lorenz_uss_summary.json");
            write_json(&p, &s)?;
            files.push(p);
        }
        Figure::LorenzDeep | Figure::LorenzEllipse => {
            let (cfg, stem) = match figure {
                Figure::LorenzDeep => (opts.apply(ExperimentConfig::lorenz_deep()), "lorenz_deep"),
                _ => (opts.apply(ExperimentConfig::lorenz_ellipse()), "lorenz_ellipse"),
            };
            let b = batch(&cfg);
            let s = &b.summary;
            let mut t = DatTable::new(&["layer", "control_error", "control_rmse", "runs_reaching_layer"]);
            header(&mut t, &cfg)?;
            if figure == Figure::LorenzEllipse {
                t.comment(format!("free attractor scale {:.4}", free_attractor_scale(&cfg, 500.0)?));
            } else {
                let mut single = cfg.clone();
                single.esn.n = 200;
                single.layers = 1;
                let single = batch(&single).summary;
                t.comment(format!(
                    "single 200-node layer: median control error {:.4e}",
                    single.median_by(|r| r.control_error(0))
                ));
                let p = out.join("lorenz_deep_single_summary.json");
                write_json(&p, &single)?;
                files.push(p);
            }
            for k in 0..cfg.layers {
                let reached = s.runs.iter().filter(|r| r.layers.len() > k).count();
                t.push(vec![
                    (k + 1) as f64,
                    s.median_by(|r| r.control_error(k)),
                    s.median_by(|r| r.control_rmse(k)),
                    reached as f64,
                ]);
            }
            emit_dat(&format!("{stem}.dat"), &t, &mut files)?;
            if let Some(run) = &b.example {
                let p = out.join(format!("{stem}_trajectory.csv"));
                write_trajectory(&p, run, 10)?;
                files.push(p);
            }
            let p = out.join(format!("{stem}_summary.json"));
            write_json(&p, s)?;
            files.push(p);
        }
        Figure::CircuitSim => {
            let cfg = opts.apply(ExperimentConfig::circuit_square_wave());
            let b = batch(&cfg);
            let s = &b.summary;
            let mut t = DatTable::new(&["layer", "control_rmse", "emulated_rmse", "runs_reaching_layer"]);
            header(&mut t, &cfg)?;
            for k in 0..cfg.layers {
                let reached = s.runs.iter().filter(|r| r.layers.len() > k).count();
                t.push(vec![
                    (k + 1) as f64,
                    s.median_by(|r| r.control_rmse(k)),
                    s.median_by(|r| r.emulated_rmse(k)),
                    reached as f64,
                ]);
            }
            emit_dat("circuit_sim.dat", &t, &mut files)?;
            if let Some(run) = &b.example {
                let p = out.join("circuit_sim_trajectory.csv");
                write_trajectory(&p, run, 1)?;
                files.push(p);
            }
            let p = out.join("circuit_sim_summary.json");
            write_json(&p, s)?;
            files.push(p);
        }
    }
    Ok(files)
}
