//! Named experiment pipelines: burn-in, layer-by-layer training, closed-loop
//! evaluation and per-run summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    add_layer, closed_loop_run, fit_ellipse, square_wave_reference, ControlRunResult, DeepController, LayerTraining,
    Reference,
};
use crate::error::{Error, Result};
use crate::fpga_emu::{emulate_control_run, quantize, Converter, EmulationConfig, FixedConfig};
use crate::plants::{
    find_steady_states, simulate_free, CircuitDrive, CircuitParams, CircuitPlant, LorenzParams, LorenzPlant,
    MackeyGlassParams, MackeyGlassPlant, Plant,
};
use crate::reservoir::EsnHyperparams;
use crate::training::{ControlTimescales, Regularization, TrainSignalParams};

/// Which plant to simulate and where it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantSpec {
    MackeyGlass { params: MackeyGlassParams, initial: f64 },
    Lorenz { params: LorenzParams, initial: [f64; 3] },
    Circuit { params: CircuitParams, drive: CircuitDrive, initial: [f64; 3] },
}

impl PlantSpec {
    pub fn build(&self) -> Result<AnyPlant> {
        Ok(match self {
            PlantSpec::MackeyGlass { params, initial } => {
                AnyPlant::MackeyGlass(MackeyGlassPlant::with_constant_history(params.clone(), *initial)?)
            }
            PlantSpec::Lorenz { params, initial } => AnyPlant::Lorenz(LorenzPlant::new(params.clone(), *initial)),
            PlantSpec::Circuit { params, drive, initial } => {
                AnyPlant::Circuit(CircuitPlant::new(params.clone(), *drive, *initial))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlantSpec::MackeyGlass { .. } => "mackey-glass",
            PlantSpec::Lorenz { .. } => "lorenz",
            PlantSpec::Circuit { .. } => "circuit",
        }
    }
}

/// One of the built-in plants behind a single concrete type.
#[derive(Debug, Clone)]
pub enum AnyPlant {
    MackeyGlass(MackeyGlassPlant),
    Lorenz(LorenzPlant),
    Circuit(CircuitPlant),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $e:expr) => {
        match $self {
            AnyPlant::MackeyGlass($p) => $e,
            AnyPlant::Lorenz($p) => $e,
            AnyPlant::Circuit($p) => $e,
        }
    };
}

impl Plant for AnyPlant {
    fn state_dim(&self) -> usize {
        dispatch!(self, p => p.state_dim())
    }
    fn obs_dim(&self) -> usize {
        dispatch!(self, p => p.obs_dim())
    }
    fn input_dim(&self) -> usize {
        dispatch!(self, p => p.input_dim())
    }
    fn time(&self) -> f64 {
        dispatch!(self, p => p.time())
    }
    fn state(&self) -> &[f64] {
        dispatch!(self, p => p.state())
    }
    fn observe_into(&self, x: &[f64], y: &mut [f64]) {
        dispatch!(self, p => p.observe_into(x, y))
    }
    fn vector_field(&self, t: f64, x: &[f64], v: &[f64], dx: &mut [f64]) {
        dispatch!(self, p => p.vector_field(t, x, v, dx))
    }
    fn commit(&mut self, x: &[f64], h: f64) -> Result<()> {
        dispatch!(self, p => p.commit(x, h))
    }
    fn attractor_bound(&self) -> f64 {
        dispatch!(self, p => p.attractor_bound())
    }
    fn steady_state_residual(&self, x: &[f64], out: &mut [f64]) {
        dispatch!(self, p => p.steady_state_residual(x, out))
    }
}

impl AnyPlant {
    /// Nonzero steady states in observable coordinates, the positive one
    /// first. Mackey-Glass has a single one.
    pub fn nonzero_steady_states(&self) -> Vec<Vec<f64>> {
        let guesses: Vec<Vec<f64>> = match self {
            AnyPlant::MackeyGlass(_) => vec![vec![1.0]],
            AnyPlant::Lorenz(p) => vec![p.leaf_steady_state(1.0).to_vec(), p.leaf_steady_state(-1.0).to_vec()],
            AnyPlant::Circuit(p) => p.default_guesses()[1..].to_vec(),
        };
        let mut pts: Vec<Vec<f64>> = find_steady_states(self, &guesses)
            .points
            .into_iter()
            .filter(|x| x.iter().any(|v| v.abs() > 1e-6))
            .map(|x| {
                let mut y = vec![0.0; self.obs_dim()];
                self.observe_into(&x, &mut y);
                y
            })
            .collect();
        pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
        pts
    }
}

/// What the controlled plant is asked to follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    /// The nonzero steady state whose first observable has this sign.
    SteadyState {
        sign: f64,
    },
    /// Alternation between the negative and positive steady states.
    SquareWave {
        period: f64,
        smoothing: f64,
    },
    /// Ellipse fitted to the longest stretch of a free run that stays on
    /// the positive side, starting from the configured initial state.
    Ellipse {
        search: f64,
        min_revolutions: f64,
    },
    Explicit {
        reference: Reference,
    },
}

/// Hardware-path settings used to re-run each evaluation in fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationSpec {
    pub fixed: FixedConfig,
    pub clock: f64,
    pub adc: Option<Converter>,
    pub dac: Option<Converter>,
}

impl EmulationSpec {
    pub fn circuit() -> Self {
        EmulationSpec {
            fixed: FixedConfig::circuit(),
            clock: 1.0,
            adc: Some(Converter::new(12, 1.0)),
            dac: Some(Converter::new(16, 1.0)),
        }
    }
}

/// Perturbation signal settings; the duration follows from the timescales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub lambda: f64,
    pub p: f64,
}

/// Everything needed to reproduce a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub plant: PlantSpec,
    /// Integration step of plant and reservoirs.
    pub h: f64,
    /// Free-running time discarded before the first training phase.
    pub burn_in: f64,
    pub esn: EsnHyperparams,
    pub timescales: ControlTimescales,
    pub signal: SignalSpec,
    pub layers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<Regularization>,
    pub target: TargetSpec,
    /// Master seed; every run derives its own stream from it.
    pub seed: u64,
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulation: Option<EmulationSpec>,
}

impl ExperimentConfig {
    /// Single layer stabilising `x = 1` of Mackey-Glass.
    pub fn mackey_glass_uss() -> Self {
        ExperimentConfig {
            name: "mackey-glass-uss".into(),
            plant: PlantSpec::MackeyGlass { params: MackeyGlassParams::default(), initial: 0.5 },
            h: 0.1,
            burn_in: 100.0,
            esn: EsnHyperparams::mackey_glass(),
            timescales: ControlTimescales::mackey_glass(),
            signal: SignalSpec { lambda: 0.6, p: 0.1 },
            layers: 1,
            regularization: Some(Regularization::cross_validated(1e-8)),
            target: TargetSpec::SteadyState { sign: 1.0 },
            seed: 0,
            runs: 10,
            emulation: None,
        }
    }

    /// Single layer driving Lorenz to the positive leaf centre.
    pub fn lorenz_uss() -> Self {
        ExperimentConfig {
            name: "lorenz-uss".into(),
            plant: PlantSpec::Lorenz { params: LorenzParams::default(), initial: [1.0, 1.0, 20.0] },
            h: 1e-3,
            burn_in: 25.0,
            esn: EsnHyperparams::lorenz(),
            timescales: ControlTimescales::lorenz(),
            signal: SignalSpec { lambda: 0.05, p: 10.0 },
            layers: 1,
            regularization: None,
            target: TargetSpec::SteadyState { sign: 1.0 },
            seed: 0,
            runs: 10,
            emulation: None,
        }
    }

    /// Four 50-node layers, each trained for 25 time units and then run in
    /// closed loop before the next one is added.
    pub fn lorenz_deep() -> Self {
        ExperimentConfig {
            name: "lorenz-deep".into(),
            esn: EsnHyperparams::lorenz().with_n(50),
            timescales: ControlTimescales { t_init: 2.5, t_train: 25.0, t_test: 0.0, ..ControlTimescales::lorenz() },
            layers: 4,
            ..ExperimentConfig::lorenz_uss()
        }
    }

    /// The deep controller asked to hold an ellipse around the positive leaf.
    pub fn lorenz_ellipse() -> Self {
        ExperimentConfig {
            name: "lorenz-ellipse".into(),
            target: TargetSpec::Ellipse { search: 300.0, min_revolutions: 3.0 },
            ..ExperimentConfig::lorenz_deep()
        }
    }

    /// Two layers moving the simulated circuit between its outer steady
    /// states, re-run through the fixed-point emulator.
    pub fn circuit_square_wave() -> Self {
        ExperimentConfig {
            name: "circuit-square-wave".into(),
            plant: PlantSpec::Circuit {
                params: CircuitParams::default(),
                drive: CircuitDrive::V1Node,
                initial: [0.1, 0.0, 0.0],
            },
            h: 0.1,
            burn_in: 2000.0,
            esn: EsnHyperparams::circuit(),
            timescales: ControlTimescales::circuit(),
            signal: SignalSpec { lambda: 24.0, p: 0.0225 },
            layers: 2,
            regularization: None,
            target: TargetSpec::SquareWave { period: 1000.0, smoothing: 100.0 },
            seed: 0,
            runs: 10,
            emulation: Some(EmulationSpec::circuit()),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "mackey-glass-uss" => Self::mackey_glass_uss(),
            "lorenz-uss" => Self::lorenz_uss(),
            "lorenz-deep" => Self::lorenz_deep(),
            "lorenz-ellipse" => Self::lorenz_ellipse(),
            "circuit-square-wave" => Self::circuit_square_wave(),
            _ => return None,
        })
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["mackey-glass-uss", "lorenz-uss", "lorenz-deep", "lorenz-ellipse", "circuit-square-wave"]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.burn_in >= 0.0) {
            return Err(Error::Config("step must be positive and burn-in non-negative".into()));
        }
        if self.layers == 0 || self.runs == 0 {
            return Err(Error::Config("need at least one layer and one run".into()));
        }
        self.timescales.validate()?;
        self.esn_for_size().validate()
    }

    /// Hyperparameters with the in-degree capped at the reservoir size.
    pub fn esn_for_size(&self) -> EsnHyperparams {
        EsnHyperparams { k: self.esn.k.min(self.esn.n as f64), ..self.esn.clone() }
    }

    /// `[start, end)` offsets, relative to switching the controller on, of
    /// the window over which control errors are measured.
    pub fn error_window(&self) -> (f64, f64) {
        let ts = &self.timescales;
        let start = ts.t_control + 5.0 * self.esn.c;
        (start, start + ts.t_eval)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seeds drawn for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSeeds {
    pub esn: u64,
    pub signal: u64,
}

/// Per-run seeds: stream `run` of a ChaCha generator keyed by the master.
pub fn run_seeds(master: u64, run: usize, layers: usize) -> Vec<LayerSeeds> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run as u64);
    (0..layers).map(|_| LayerSeeds { esn: rng.random(), signal: rng.random() }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// The closed loop left the divergence bound; layers after `layer`
    /// were not trained.
    Diverged {
        layer: usize,
        message: String,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub beta: f64,
    pub training_error: Option<f64>,
    pub test_error: Option<f64>,
    pub control_error: Option<f64>,
    pub control_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulated_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulated_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seeds: Vec<LayerSeeds>,
    #[serde(flatten)]
    pub status: RunStatus,
    /// Error of the uncontrolled plant over the same window.
    pub baseline_error: Option<f64>,
    pub layers: Vec<LayerSummary>,
}

impl RunSummary {
    /// Control error after `k + 1` layers; infinite when that stage
    /// diverged or was never reached.
    pub fn control_error(&self, k: usize) -> f64 {
        self.layers.get(k).and_then(|l| l.control_error).unwrap_or(f64::INFINITY)
    }

    pub fn control_rmse(&self, k: usize) -> f64 {
        self.layers.get(k).and_then(|l| l.control_rmse).unwrap_or(f64::INFINITY)
    }

    pub fn emulated_rmse(&self, k: usize) -> f64 {
        self.layers.get(k).and_then(|l| l.emulated_rmse).unwrap_or(f64::INFINITY)
    }
}

/// Result of a single run: the trained layers and the last closed-loop
/// evaluation alongside the summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub controller: DeepController,
    pub target: Reference,
    pub last_run: Option<ControlRunResult>,
}

/// Self-describing record of a batch: the resolved config and every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    /// Median over runs of `f`, counting diverged runs as infinite.
    pub fn median_by(&self, f: impl Fn(&RunSummary) -> f64) -> f64 {
        median(self.runs.iter().map(f).collect())
    }
}

/// Median of `values`; NaN for an empty slice.
pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Sum over observables of their standard deviation along a trajectory.
pub fn attractor_scale(y: &[Vec<f64>]) -> f64 {
    let n = y.len() as f64;
    let m = y.first().map_or(0, |r| r.len());
    (0..m)
        .map(|j| {
            let mean = y.iter().map(|r| r[j]).sum::<f64>() / n;
            (y.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum()
}

/// Longest stretch of `y` whose first component keeps the sign of `sign`.
pub fn longest_one_sided(y: &[Vec<f64>], sign: f64) -> std::ops::Range<usize> {
    let mut best = 0..0;
    let mut start = 0;
    for (i, row) in y.iter().enumerate() {
        if row[0] * sign <= 0.0 {
            start = i + 1;
        } else if i + 1 - start > best.len() {
            best = start..i + 1;
        }
    }
    best
}

/// Resolves the target of `cfg` into a reference for `plant`.
pub fn resolve_target(cfg: &ExperimentConfig, plant: &AnyPlant) -> Result<Reference> {
    let uss = plant.nonzero_steady_states();
    let pick = |sign: f64| -> Result<Vec<f64>> {
        uss.iter()
            .find(|y| y[0] * sign > 0.0)
            .or_else(|| uss.first())
            .cloned()
            .ok_or_else(|| Error::Config(format!("{} has no nonzero steady state", cfg.plant.name())))
    };
    match &cfg.target {
        TargetSpec::SteadyState { sign } => Ok(Reference::constant(&pick(*sign)?)),
        TargetSpec::SquareWave { period, smoothing } => {
            Ok(square_wave_reference(&pick(-1.0)?, &pick(1.0)?, *period, *smoothing))
        }
        TargetSpec::Ellipse { search, min_revolutions } => {
            let mut free = cfg.plant.build()?;
            let traj = simulate_free(&mut free, *search, cfg.h)?;
            let seg = longest_one_sided(&traj.y, 1.0);
            let fit = fit_ellipse(&traj.y[seg.clone()], cfg.h, traj.t[seg.start])?;
            let revolutions = (seg.len() - 1) as f64 * cfg.h / fit.period();
            if revolutions < *min_revolutions {
                return Err(Error::Fit(format!(
                    "longest one-sided stretch covers {revolutions:.1} revolutions, need {min_revolutions}"
                )));
            }
            Ok(Reference::Ellipse(fit))
        }
        TargetSpec::Explicit { reference } => Ok(reference.clone()),
    }
}

/// Uncontrolled error over the evaluation window, starting from `plant`.
fn baseline_error(cfg: &ExperimentConfig, plant: &AnyPlant, target: &Reference) -> Result<f64> {
    let (a, b) = cfg.error_window();
    let mut free = plant.clone();
    let t_on = free.time();
    let mut empty = DeepController::new(cfg.timescales.delta);
    let run = closed_loop_run(&mut free, &mut empty, target, b, cfg.h)?;
    run.control_error(t_on + a, b - a)
}

/// Executes run `run` of `cfg`: burn-in, then for every layer a training
/// phase on the partially controlled plant followed by a closed-loop
/// evaluation that the next phase continues from.
pub fn run_experiment(cfg: &ExperimentConfig, run: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let seeds = run_seeds(cfg.seed, run, cfg.layers);
    let mut plant = cfg.plant.build()?;
    let target = resolve_target(cfg, &plant)?;
    simulate_free(&mut plant, cfg.burn_in, cfg.h)?;
    let baseline = baseline_error(cfg, &plant, &target).ok();

    let ts = &cfg.timescales;
    let (a, b) = cfg.error_window();
    let mut controller = DeepController::new(ts.delta);
    let mut layers = Vec::with_capacity(cfg.layers);
    let mut last_run = None;
    let mut status = RunStatus::Completed;
    for (k, s) in seeds.iter().enumerate() {
        let training = LayerTraining {
            esn: cfg.esn_for_size().with_seed(s.esn),
            signal: TrainSignalParams {
                lambda: cfg.signal.lambda,
                p: cfg.signal.p,
                duration: ts.signal_duration(),
                h: cfg.h,
                seed: s.signal,
            },
            timescales: ts.clone(),
            regularization: cfg.regularization.clone(),
        };
        let report = match add_layer(&mut plant, &mut controller, &target, &training) {
            Ok(r) => r,
            Err(e) => {
                status = if matches!(&e, Error::Layer { source, .. } if matches!(**source, Error::ControlDiverged { .. } | Error::Diverged { .. }))
                {
                    RunStatus::Diverged { layer: k + 1, message: e.to_string() }
                } else {
                    RunStatus::Failed { message: e.to_string() }
                };
                break;
            }
        };
        let mut summary = LayerSummary {
            beta: report.beta,
            training_error: report.training_error,
            test_error: report.test_error,
            ..LayerSummary::default()
        };
        let t_on = plant.time();
        if let Some(em) = &cfg.emulation {
            let mut fixed = Vec::with_capacity(controller.len());
            for layer in &controller.layers {
                fixed.push(quantize(layer, &em.fixed)?.0);
            }
            let emu_cfg = EmulationConfig { clock: em.clock, h: cfg.h, delta: ts.delta, adc: em.adc, dac: em.dac };
            let mut p = plant.clone();
            if let Ok(r) = emulate_control_run(&mut p, &mut fixed, &target, b, &emu_cfg) {
                summary.emulated_error = r.control_error(t_on + a, b - a).ok();
                summary.emulated_rmse = r.control_rmse(t_on + a, b - a).ok();
            }
            summary.saturations = Some(fixed.iter().map(|f| f.saturations()).sum());
        }
        match closed_loop_run(&mut plant, &mut controller, &target, b, cfg.h) {
            Ok(r) => {
                summary.control_error = r.control_error(t_on + a, b - a).ok();
                summary.control_rmse = r.control_rmse(t_on + a, b - a).ok();
                layers.push(summary);
                last_run = Some(r);
            }
            Err(e) => {
                layers.push(summary);
                status = RunStatus::Diverged { layer: k + 1, message: e.to_string() };
                break;
            }
        }
    }
    Ok(RunOutput {
        summary: RunSummary { run, seeds, status, baseline_error: baseline, layers },
        controller,
        target,
        last_run,
    })
}

/// Runs every seed of `cfg` in order. Errors of individual runs are kept
/// as failed rows.
pub fn run_all(cfg: &ExperimentConfig) -> ExperimentSummary {
    let runs = (0..cfg.runs)
        .map(|i| match run_experiment(cfg, i) {
            Ok(out) => out.summary,
            Err(e) => RunSummary {
                run: i,
                seeds: run_seeds(cfg.seed, i, cfg.layers),
                status: RunStatus::Failed { message: e.to_string() },
                baseline_error: None,
                layers: Vec::new(),
            },
        })
        .collect();
    ExperimentSummary { config: cfg.clone(), runs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml_and_json() {
        for name in ExperimentConfig::preset_names() {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = run_seeds(7, 3, 4);
        assert_eq!(a, run_seeds(7, 3, 4));
        assert_ne!(a, run_seeds(7, 4, 4));
        assert_ne!(a, run_seeds(8, 3, 4));
        // the first layers do not depend on how many follow
        assert_eq!(&run_seeds(7, 3, 6)[..4], &a[..]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![1.0, f64::INFINITY, 2.0]), 2.0);
        assert!(median(vec![]).is_nan());
    }

    #[test]
    fn scale_of_a_sampled_sine() {
        // std of sin over whole periods is 1/sqrt(2), of a constant 0
        let y: Vec<Vec<f64>> =
            (0..10_000).map(|i| vec![(i as f64 * std::f64::consts::TAU / 1000.0).sin(), 3.0]).collect();
        assert!((attractor_scale(&y) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn one_sided_stretch() {
        let y: Vec<Vec<f64>> = [1.0, -1.0, 2.0, 3.0, 4.0, -1.0, 5.0].iter().map(|&v| vec![v]).collect();
        assert_eq!(longest_one_sided(&y, 1.0), 2..5);
        assert_eq!(longest_one_sided(&y, -1.0), 1..2);
    }

    #[test]
    fn targets_resolve_to_the_expected_points() {
        let cfg = ExperimentConfig::mackey_glass_uss();
        let plant = cfg.plant.build().unwrap();
        let r = resolve_target(&cfg, &plant).unwrap();
        assert!((r.eval(0.0)[0] - 1.0).abs() < 1e-9);

        let cfg = ExperimentConfig::lorenz_uss();
        let plant = cfg.plant.build().unwrap();
        let r = resolve_target(&cfg, &plant).unwrap();
        let c = (8.0f64 / 3.0 * 27.0).sqrt();
        assert!((r.eval(0.0)[0] - c).abs() < 1e-9 && (r.eval(0.0)[2] - 27.0).abs() < 1e-9);

        let cfg = ExperimentConfig::circuit_square_wave();
        let plant = cfg.plant.build().unwrap();
        let r = resolve_target(&cfg, &plant).unwrap();
        let (lo, hi) = (r.eval(10.0), r.eval(600.0));
        assert!(lo[0] < -0.5 && hi[0] > 0.5 && (lo[0] + hi[0]).abs() < 1e-9);
    }

    #[test]
    fn diverging_layer_is_reported_not_raised() {
        // a huge perturbation throws Lorenz out of its bound during training
        let cfg = ExperimentConfig {
            signal: SignalSpec { lambda: 0.05, p: 1e6 },
            timescales: ControlTimescales { t_init: 0.5, t_train: 2.0, t_test: 0.0, ..ControlTimescales::lorenz() },
            esn: EsnHyperparams::lorenz().with_n(10),
            runs: 1,
            ..ExperimentConfig::lorenz_deep()
        };
        let out = run_experiment(&cfg, 0).unwrap();
        assert!(
            matches!(out.summary.status, RunStatus::Diverged { layer: 1, .. } | RunStatus::Failed { .. }),
            "{:?}",
            out.summary.status
        );
        assert!(out.summary.control_error(0).is_infinite());
    }
}
