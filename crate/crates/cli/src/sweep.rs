//! Cartesian sweeps over config fields, run in parallel, one row per
//! (point, run).

use std::io::Write;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use resctl_core::experiment::{run_experiment, run_seeds, RunStatus};
use resctl_core::ExperimentConfig;
use serde::Serialize;
use serde_json::Value;

/// A dotted config path and the values it takes, e.g. `esn.n=10,30,100`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (path, list) = s.split_once('=').ok_or_else(|| anyhow!("axis {s:?} is not of the form path=v1,v2,..."))?;
        let path = path.trim();
        if path.is_empty() {
            bail!("axis {s:?} has an empty path");
        }
        let values = list
            .split(',')
            .map(|v| {
                let v = v.trim();
                // numbers and booleans parse as JSON, anything else is a string
                serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
            })
            .collect::<Vec<_>>();
        if values.is_empty() || list.trim().is_empty() {
            bail!("axis {path} has no values");
        }
        Ok(Axis { path: path.to_string(), values })
    }
}

/// Returns `cfg` with the field at `path` replaced by `value`.
pub fn apply(cfg: &ExperimentConfig, path: &str, value: &Value) -> Result<ExperimentConfig> {
    let mut doc = serde_json::to_value(cfg)?;
    let mut node = &mut doc;
    for key in path.split('.') {
        node =
            node.as_object_mut().and_then(|o| o.get_mut(key)).ok_or_else(|| anyhow!("config has no field {path:?}"))?;
    }
    *node = value.clone();
    let out: ExperimentConfig = serde_json::from_value(doc).with_context(|| format!("setting {path} = {value}"))?;
    out.validate().with_context(|| format!("setting {path} = {value}"))?;
    Ok(out)
}

/// Every combination of axis values, first axis slowest.
pub fn grid(axes: &[Axis]) -> Vec<Vec<Value>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

/// One observation of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: Vec<Value>,
    pub run: usize,
    pub esn_seed: u64,
    pub signal_seed: u64,
    pub status: String,
    pub message: String,
    pub layers_completed: usize,
    pub baseline_error: Option<f64>,
    pub training_error: Option<f64>,
    pub test_error: Option<f64>,
    pub control_error: Option<f64>,
    pub control_rmse: Option<f64>,
    pub emulated_rmse: Option<f64>,
}

fn row_for(cfg: &Result<ExperimentConfig>, point: &[Value], run: usize, master: u64, layers: usize) -> SweepRow {
    let seeds = run_seeds(master, run, layers.max(1));
    let mut row = SweepRow {
        point: point.to_vec(),
        run,
        esn_seed: seeds[0].esn,
        signal_seed: seeds[0].signal,
        status: "failed".into(),
        message: String::new(),
        layers_completed: 0,
        baseline_error: None,
        training_error: None,
        test_error: None,
        control_error: None,
        control_rmse: None,
        emulated_rmse: None,
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            row.message = format!("{e:#}");
            return row;
        }
    };
    match run_experiment(cfg, run) {
        Ok(out) => {
            let s = out.summary;
            (row.status, row.message) = match &s.status {
                RunStatus::Completed => ("completed".into(), String::new()),
                RunStatus::Diverged { message, .. } => ("diverged".into(), message.clone()),
                RunStatus::Failed { message } => ("failed".into(), message.clone()),
            };
            row.baseline_error = s.baseline_error;
            row.layers_completed = s.layers.iter().filter(|l| l.control_error.is_some()).count();
            if let Some(first) = s.layers.first() {
                row.training_error = first.training_error;
                row.test_error = first.test_error;
            }
            if let Some(last) = s.layers.last() {
                row.control_error = last.control_error;
                row.control_rmse = last.control_rmse;
                row.emulated_rmse = last.emulated_rmse;
            }
        }
        Err(e) => row.message = e.to_string(),
    }
    row
}

/// Runs `cfg.runs` seeds at every grid point. Failures become rows with a
/// status; the sweep itself only fails on a malformed axis.
pub fn sweep(cfg: &ExperimentConfig, axes: &[Axis]) -> Result<Vec<SweepRow>> {
    // a path that does not exist is a usage error, not an observation
    let doc = serde_json::to_value(cfg)?;
    for axis in axes {
        axis.path
            .split('.')
            .try_fold(&doc, |node, key| node.get(key))
            .ok_or_else(|| anyhow!("config has no field {:?}", axis.path))?;
    }
    let points = grid(axes);
    let configs: Vec<Result<ExperimentConfig>> = points
        .iter()
        .map(|point| axes.iter().zip(point).try_fold(cfg.clone(), |c, (axis, v)| apply(&c, &axis.path, v)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cfg.runs).map(move |r| (p, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(p, r)| {
            let layers = configs[p].as_ref().map_or(cfg.layers, |c| c.layers);
            row_for(&configs[p], &points[p], r, cfg.seed, layers)
        })
        .collect();
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn value_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes the sweep table with a header row.
pub fn write_rows<W: Write>(w: W, axes: &[Axis], rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = axes.iter().map(|a| a.path.clone()).collect();
    header.extend(
        [
            "run",
            "esn_seed",
            "signal_seed",
            "status",
            "layers_completed",
            "baseline_error",
            "training_error",
            "test_error",
            "control_error",
            "control_rmse",
            "emulated_rmse",
            "message",
        ]
        .map(String::from),
    );
    out.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.point.iter().map(value_cell).collect();
        rec.extend([
            r.run.to_string(),
            r.esn_seed.to_string(),
            r.signal_seed.to_string(),
            r.status.clone(),
            r.layers_completed.to_string(),
            cell(r.baseline_error),
            cell(r.training_error),
            cell(r.test_error),
            cell(r.control_error),
            cell(r.control_rmse),
            cell(r.emulated_rmse),
            r.message.clone(),
        ]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a: Axis = "esn.n=10, 30,100".parse().unwrap();
        assert_eq!(a.path, "esn.n");
        assert_eq!(a.values, vec![Value::from(10), Value::from(30), Value::from(100)]);
        let b: Axis = "name=a,b".parse().unwrap();
        assert_eq!(b.values[1], Value::String("b".into()));
        assert!("esn.n".parse::<Axis>().is_err());
        assert!("=1,2".parse::<Axis>().is_err());
    }

    #[test]
    fn grid_counts_and_order() {
        let axes: Vec<Axis> = ["a=1,2,3", "b=4,5"].iter().map(|s| s.parse().unwrap()).collect();
        let g = grid(&axes);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![Value::from(1), Value::from(4)]);
        assert_eq!(g[1], vec![Value::from(1), Value::from(5)]);
        assert_eq!(grid(&[]), vec![Vec::<Value>::new()]);
    }

    #[test]
    fn apply_sets_nested_fields() {
        let cfg = ExperimentConfig::mackey_glass_uss();
        let c = apply(&cfg, "esn.n", &Value::from(42)).unwrap();
        assert_eq!(c.esn.n, 42);
        let c = apply(&cfg, "signal.lambda", &Value::from(1.5)).unwrap();
        assert_eq!(c.signal.lambda, 1.5);
        assert!(apply(&cfg, "esn.nope", &Value::from(1)).is_err());
        assert!(apply(&cfg, "esn.n", &Value::from("many")).is_err());
    }
}
