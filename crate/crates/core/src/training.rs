//! Open-loop training: band-limited perturbation signals, harvesting of
//! `(y(t), y(t+δ), v_train(t))` triplets, readout fitting and the plant
//! inversion error.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ridge_path, trapezoid_weight, DenseMatrix, RidgeAccumulator, Rk4};
use crate::plants::{step_interpolated, Plant};
use crate::reservoir::Esn;

/// Shape of the random perturbation applied during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSignalParams {
    /// Cutoff period: frequencies above `1/lambda` are removed.
    pub lambda: f64,
    /// The signal spans exactly `[-p, p]`.
    pub p: f64,
    pub duration: f64,
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Uniformly sampled multichannel signal, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub h: f64,
    pub channels: Vec<Vec<f64>>,
}

impl Signal {
    pub fn zeros(channels: usize, len: usize, h: f64) -> Self {
        Signal { h, channels: vec![vec![0.0; len]; channels] }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_into(&self, i: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c[i];
        }
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[i]).collect()
    }
}

/// Band-limited uniform noise, one independent channel per plant input.
///
/// Each channel is white uniform noise with every Fourier bin above
/// `1/lambda` zeroed, then affinely mapped onto `[-p, p]`.
pub fn gen_train_signal(params: &TrainSignalParams, dims: usize) -> Result<Signal> {
    if !(params.lambda > 0.0) || !(params.p >= 0.0) || !(params.h > 0.0) {
        return Err(Error::Config("training signal needs lambda > 0, p >= 0, h > 0".into()));
    }
    let n = (params.duration / params.h).round() as usize;
    if n < 2 {
        return Err(Error::Config("training signal needs at least two samples".into()));
    }
    let span = n as f64 * params.h;
    if params.lambda >= span {
        return Err(Error::Config(format!("cutoff period {} leaves no frequency above DC over {span}", params.lambda)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let cutoff = 1.0 / params.lambda;

    let mut channels = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        if params.p == 0.0 {
            channels.push(vec![0.0; n]);
            continue;
        }
        fwd.process(&mut buf);
        for (k, z) in buf.iter_mut().enumerate() {
            let bin = k.min(n - k) as f64;
            if bin / span > cutoff {
                *z = Complex::new(0.0, 0.0);
            }
        }
        inv.process(&mut buf);
        let raw: Vec<f64> = buf.iter().map(|z| z.re).collect();
        let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let ch = if hi > lo {
            let scale = 2.0 * params.p / (hi - lo);
            raw.iter()
                .map(|&v| {
                    if v == hi {
                        params.p
                    } else if v == lo {
                        -params.p
                    } else {
                        -params.p + (v - lo) * scale
                    }
                })
                .collect()
        } else {
            vec![0.0; n]
        };
        channels.push(ch);
    }
    Ok(Signal { h: params.h, channels })
}

/// Timescales and regularisation of one control experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTimescales {
    /// Look-ahead between the two reservoir inputs.
    pub delta: f64,
    /// Initial reservoir transient excluded from the fit.
    pub t_init: f64,
    /// End of the fitted window.
    pub t_train: f64,
    /// Length of the held-out window following `t_train`.
    pub t_test: f64,
    /// Time after switching control on before the error is averaged.
    pub t_control: f64,
    /// Averaging window for the control error.
    pub t_eval: f64,
    pub beta: f64,
}

impl ControlTimescales {
    pub fn mackey_glass() -> Self {
        ControlTimescales {
            delta: 0.6,
            t_init: 100.0,
            t_train: 1500.0,
            t_test: 500.0,
            t_control: 100.0,
            t_eval: 200.0,
            beta: 1e-8,
        }
    }

    pub fn lorenz() -> Self {
        ControlTimescales {
            delta: 0.05,
            t_init: 25.0,
            t_train: 250.0,
            t_test: 250.0 / 3.0,
            t_control: 5.0,
            t_eval: 5.0,
            beta: 1e-8,
        }
    }

    /// Microseconds.
    pub fn circuit() -> Self {
        ControlTimescales {
            delta: 8.0,
            t_init: 512.0,
            t_train: 8192.0,
            t_test: 8192.0 / 3.0,
            t_control: 1000.0,
            t_eval: 1000.0,
            beta: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Config("look-ahead delta must be positive".into()));
        }
        if !(self.t_init >= 0.0 && self.t_init < self.t_train) {
            return Err(Error::Config("need 0 <= t_init < t_train".into()));
        }
        if !(self.t_test >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config("t_test and beta must be non-negative".into()));
        }
        Ok(())
    }

    /// Length of the perturbation needed to cover training and test windows.
    pub fn signal_duration(&self) -> f64 {
        self.t_train + self.t_test + self.delta
    }
}

fn steps_of(span: f64, h: f64, what: &str) -> Result<usize> {
    let r = span / h;
    let k = r.round();
    if (r - k).abs() > 1e-6 {
        return Err(Error::Config(format!("{what} = {span} is not a multiple of h = {h}")));
    }
    Ok(k as usize)
}

/// Sampled open-loop response of a perturbed plant.
///
/// Sample `i` is taken at `t = i h` (relative to the start of the record).
/// The training triplet at `i` is `(y[i], y[i + delta_steps], v[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub h: f64,
    pub delta_steps: usize,
    pub t_init: f64,
    pub t_train: f64,
    /// Plant time of the first sample.
    pub t_start: f64,
    pub y: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl TrainingRecord {
    /// Number of recorded samples.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta_steps as f64 * self.h
    }

    /// Number of complete `(y, y_shifted, v)` triplets.
    pub fn triplets(&self) -> usize {
        self.len().saturating_sub(self.delta_steps)
    }

    pub fn y_shifted(&self, i: usize) -> Option<&[f64]> {
        self.y.get(i + self.delta_steps).map(|v| v.as_slice())
    }

    pub fn obs_dim(&self) -> usize {
        self.y.first().map_or(0, |v| v.len())
    }

    pub fn input_dim(&self) -> usize {
        self.v.first().map_or(0, |v| v.len())
    }

    fn init_index(&self) -> usize {
        (self.t_init / self.h - 1e-9).ceil() as usize
    }

    fn train_index(&self) -> usize {
        ((self.t_train / self.h).round() as usize).min(self.triplets())
    }

    /// Writes `t,y1..,y_shifted1..,v_train1..`; the last `delta_steps` rows
    /// have empty `y_shifted` cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (m, l) = (self.obs_dim(), self.input_dim());
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("y{i}")));
        header.extend((1..=m).map(|i| format!("y_shifted{i}")));
        header.extend((1..=l).map(|i| format!("v_train{i}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![(i as f64 * self.h).to_string()];
            row.extend(self.y[i].iter().map(|v| v.to_string()));
            match self.y_shifted(i) {
                Some(ys) => row.extend(ys.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.extend(self.v[i].iter().map(|v| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a record written by [`TrainingRecord::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, t_init: f64, t_train: f64) -> Result<TrainingRecord> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty record".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let m = cols.iter().filter(|c| c.starts_with('y') && !c.starts_with("y_")).count();
        let l = cols.iter().filter(|c| c.starts_with("v_train")).count();
        if cols.len() != 1 + 2 * m + l || m == 0 || l == 0 {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut v = Vec::new();
        let mut missing_shift = 0;
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(Error::Parse(format!("row {} has {} cells", ln + 2, cells.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", ln + 2)))
            };
            t.push(num(cells[0])?);
            y.push(cells[1..=m].iter().map(|c| num(c)).collect::<Result<Vec<_>>>()?);
            if cells[1 + m].trim().is_empty() {
                missing_shift += 1;
            } else if missing_shift > 0 {
                return Err(Error::Parse("y_shifted gap before end of record".into()));
            }
            v.push(cells[1 + 2 * m..].iter().map(|c| num(c)).collect::<Result<Vec<_>>>()?);
        }
        if t.len() < 2 {
            return Err(Error::Parse("record needs at least two rows".into()));
        }
        Ok(TrainingRecord { h: t[1] - t[0], delta_steps: missing_shift, t_init, t_train, t_start: 0.0, y, v })
    }
}

/// Drives `plant` with `signal` and records `(y, v)` at every step.
///
/// The input is interpolated linearly between samples inside each RK4 step.
pub fn harvest<P: Plant + ?Sized>(
    plant: &mut P,
    signal: &Signal,
    delta: f64,
    h: f64,
    t_init: f64,
    t_train: f64,
) -> Result<TrainingRecord> {
    if signal.dim() != plant.input_dim() {
        return Err(Error::Shape(format!(
            "signal has {} channels, plant takes {} inputs",
            signal.dim(),
            plant.input_dim()
        )));
    }
    if (signal.h - h).abs() > 1e-12 * h {
        return Err(Error::Config("signal is not sampled at the integration step".into()));
    }
    let delta_steps = steps_of(delta, h, "delta")?;
    if delta_steps == 0 {
        return Err(Error::Config("delta must be at least one step".into()));
    }
    let n = signal.len();
    if n <= delta_steps {
        return Err(Error::Config("signal shorter than the look-ahead".into()));
    }
    let l = signal.dim();
    let mut rk = Rk4::new(plant.state_dim());
    let mut v0 = vec![0.0; l];
    let mut v1 = vec![0.0; l];
    let t_start = plant.time();
    let mut y = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        signal.sample_into(i, &mut v0);
        signal.sample_into((i + 1).min(n - 1), &mut v1);
        y.push(plant.observe());
        v.push(v0.clone());
        step_interpolated(plant, &mut rk, &v0, &v1, h)?;
    }
    Ok(TrainingRecord { h, delta_steps, t_init, t_train, t_start, y, v })
}

/// Which variance normalises the inversion error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Variance of the applied training signal.
    Target,
    /// Variance of the readout output.
    Output,
}

/// Trapezoidal mean and `∫(x - mean)^2` over a channel.
fn centred_energy(x: &[f64], dt: f64) -> (f64, f64) {
    let n = x.len();
    let span = (n - 1) as f64 * dt;
    let mean = x.iter().enumerate().map(|(i, v)| trapezoid_weight(i, n, dt) * v).sum::<f64>() / span;
    let energy = x.iter().enumerate().map(|(i, v)| trapezoid_weight(i, n, dt) * (v - mean).powi(2)).sum::<f64>();
    (mean, energy)
}

/// Normalised RMS difference between the readout and the training input,
/// `sqrt(∫|v - v_train|^2 dt / (T var))`, by trapezoidal quadrature.
///
/// Signals are channel-major and already cut to the evaluation window; for
/// several channels squared errors and variances are pooled.
pub fn inversion_error(v: &[Vec<f64>], v_train: &[Vec<f64>], dt: f64) -> Result<f64> {
    inversion_error_normalized(v, v_train, dt, Normalization::Target)
}

pub fn inversion_error_normalized(v: &[Vec<f64>], v_train: &[Vec<f64>], dt: f64, norm: Normalization) -> Result<f64> {
    if v.len() != v_train.len() || v.iter().zip(v_train).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Shape("signals are not time-aligned".into()));
    }
    let n = v.first().map_or(0, |c| c.len());
    if n < 2 {
        return Err(Error::UndefinedMetric("window holds fewer than two samples".into()));
    }
    let mut err = 0.0;
    let mut var = 0.0;
    let mut scale = 0.0;
    for (a, b) in v.iter().zip(v_train) {
        let r = match norm {
            Normalization::Target => b,
            Normalization::Output => a,
        };
        scale += r.iter().map(|x| x * x).sum::<f64>() * dt;
        err += a.iter().zip(b).enumerate().map(|(i, (x, y))| trapezoid_weight(i, n, dt) * (x - y).powi(2)).sum::<f64>();
        var += match norm {
            Normalization::Target => centred_energy(b, dt).1,
            Normalization::Output => centred_energy(a, dt).1,
        };
    }
    if !(var > 1e-14 * scale) {
        return Err(Error::UndefinedMetric("reference signal has zero variance".into()));
    }
    Ok((err / var).sqrt())
}

/// Relative size below which a quadratic-form error is lost to rounding.
const CANCELLATION: f64 = 1e-12;

/// Sufficient statistics of a window for evaluating `W u` against `v`
/// without storing reservoir states: unweighted Gram and cross moments,
/// split into contiguous folds, plus the endpoint samples needed for the
/// trapezoid correction.
#[derive(Debug, Clone)]
struct WindowStats {
    folds: Vec<RidgeAccumulator>,
    fold_v2: Vec<Vec<f64>>,
    fold_len: usize,
    first: Option<(Vec<f64>, Vec<f64>)>,
    last: Option<(Vec<f64>, Vec<f64>)>,
    sum_u: Vec<f64>,
    sum_v: Vec<f64>,
    sum_v2: Vec<f64>,
    count: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `w G w^T`, `w c^T` for one readout row.
fn quad_terms(w: &[f64], g: &DenseMatrix, c: &[f64]) -> (f64, f64) {
    let n = w.len();
    let mut wgw = 0.0;
    for j in 0..n {
        let col = g.column(j);
        wgw += w[j] * dot(col.as_slice(), w);
    }
    (wgw, dot(w, c))
}

impl WindowStats {
    fn new(features: usize, outputs: usize, expected: usize, folds: usize) -> Self {
        let folds = folds.max(1);
        WindowStats {
            folds: (0..folds).map(|_| RidgeAccumulator::new(features, outputs)).collect(),
            fold_v2: vec![vec![0.0; outputs]; folds],
            fold_len: expected.div_ceil(folds).max(1),
            first: None,
            last: None,
            sum_u: vec![0.0; features],
            sum_v: vec![0.0; outputs],
            sum_v2: vec![0.0; outputs],
            count: 0,
        }
    }

    fn push(&mut self, u: &[f64], v: &[f64]) {
        let k = (self.count / self.fold_len).min(self.folds.len() - 1);
        self.folds[k].push(u, v);
        for (i, x) in v.iter().enumerate() {
            self.fold_v2[k][i] += x * x;
            self.sum_v[i] += x;
            self.sum_v2[i] += x * x;
        }
        if self.first.is_none() {
            self.first = Some((u.to_vec(), v.to_vec()));
        }
        match &mut self.last {
            Some((lu, lv)) => {
                lu.copy_from_slice(u);
                lv.copy_from_slice(v);
            }
            None => self.last = Some((u.to_vec(), v.to_vec())),
        }
        self.sum_u.iter_mut().zip(u).for_each(|(s, x)| *s += x);
        self.count += 1;
    }

    fn samples(&self) -> usize {
        self.count
    }

    /// Pooled accumulator over all folds except `skip`.
    fn pooled(&mut self, skip: Option<usize>) -> RidgeAccumulator {
        let mut acc = RidgeAccumulator::new(self.sum_u.len(), self.sum_v.len());
        for (k, f) in self.folds.iter_mut().enumerate() {
            if Some(k) != skip {
                acc.absorb(f);
            }
        }
        acc
    }

    /// Held-out squared error of `w` on fold `k`, `None` when it is below
    /// the rounding level of the quadratic form.
    fn fold_error(&mut self, k: usize, w: &DenseMatrix) -> Option<f64> {
        let v2 = self.fold_v2[k].clone();
        let (g, c) = self.folds[k].normal_equations();
        let mut err = 0.0;
        let mut scale = 0.0;
        for ch in 0..w.nrows() {
            let wr: Vec<f64> = w.row(ch).iter().copied().collect();
            let cr: Vec<f64> = c.row(ch).iter().copied().collect();
            let (wgw, wc) = quad_terms(&wr, g, &cr);
            err += wgw - 2.0 * wc + v2[ch];
            scale += wgw.abs() + 2.0 * wc.abs() + v2[ch];
        }
        (err > CANCELLATION * scale).then_some(err)
    }

    /// Trapezoidal inversion error of readout `w` over the whole window,
    /// normalised by the target and by the output variance.
    fn inversion_error(&mut self, w: &DenseMatrix, dt: f64) -> Option<(f64, f64)> {
        let n = self.samples();
        if n < 2 {
            return None;
        }
        let (first_u, first_v) = self.first.clone()?;
        let (last_u, last_v) = self.last.clone()?;
        let mut pooled = self.pooled(None);
        let (g, c) = pooled.normal_equations();
        let span = (n - 1) as f64 * dt;
        let mut err = 0.0;
        let mut scale = 0.0;
        let mut var_target = 0.0;
        let mut var_output = 0.0;
        for ch in 0..w.nrows() {
            let wr: Vec<f64> = w.row(ch).iter().copied().collect();
            let cr: Vec<f64> = c.row(ch).iter().copied().collect();
            let (wgw, wc) = quad_terms(&wr, g, &cr);
            // unweighted sums minus half of each endpoint
            let (pf, pl) = (dot(&wr, &first_u), dot(&wr, &last_u));
            let (vf, vl) = (first_v[ch], last_v[ch]);
            let out_sq = dt * (wgw - 0.5 * (pf * pf + pl * pl));
            let cross = dt * (wc - 0.5 * (pf * vf + pl * vl));
            let tgt_sq = dt * (self.sum_v2[ch] - 0.5 * (vf * vf + vl * vl));
            let out_sum = dt * (dot(&wr, &self.sum_u) - 0.5 * (pf + pl));
            let tgt_sum = dt * (self.sum_v[ch] - 0.5 * (vf + vl));
            err += out_sq - 2.0 * cross + tgt_sq;
            scale += out_sq.abs() + 2.0 * cross.abs() + tgt_sq;
            var_target += tgt_sq - tgt_sum * tgt_sum / span;
            var_output += out_sq - out_sum * out_sum / span;
        }
        if scale > 0.0 && err < CANCELLATION * scale {
            return None;
        }
        let err = err.max(0.0);
        let ratio = |var: f64| (var > 1e-14 * scale && var > 0.0).then(|| (err / var).sqrt());
        Some((ratio(var_target)?, ratio(var_output).unwrap_or(f64::NAN)))
    }
}

/// How the Tikhonov parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    /// Nominal `beta`; used as is unless candidates are given.
    pub beta: f64,
    /// Extra values tried by contiguous k-fold cross-validation over the
    /// training window, together with `beta`.
    #[serde(default)]
    pub candidates: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    5
}

impl Regularization {
    pub fn fixed(beta: f64) -> Self {
        Regularization { beta, candidates: Vec::new(), folds: default_folds() }
    }

    /// `beta` plus the decades `1e-6 ..= 1e-1`.
    pub fn cross_validated(beta: f64) -> Self {
        Regularization {
            beta,
            candidates: (1..=6).map(|k| 10f64.powi(-k)).rev().collect(),
            folds: default_folds(),
        }
    }

    fn is_fixed(&self) -> bool {
        self.candidates.is_empty()
    }

    fn all(&self) -> Vec<f64> {
        let mut b = vec![self.beta];
        b.extend(self.candidates.iter().copied().filter(|&c| c != self.beta));
        b
    }
}

/// Outcome of fitting a readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_samples: usize,
    pub test_samples: usize,
    /// Regularisation actually used.
    pub beta: f64,
    /// Held-out squared error per candidate `beta` when cross-validating.
    #[serde(default)]
    pub cv_scores: Vec<(f64, Option<f64>)>,
    /// Inversion error when replaying the fitted window; `None` when the
    /// applied signal has no variance or the fit is numerically degenerate.
    pub training_error: Option<f64>,
    /// Inversion error over the held-out window after `t_train`.
    pub test_error: Option<f64>,
    /// Same, normalised by the variance of the readout output.
    pub test_error_output_var: Option<f64>,
}

/// Integrates `esn` (from rest) against the record's `(y(t), y(t+δ))`
/// stream, collects states on `[t_init, t_train)` and fits `W_out` there.
/// States after `t_train` are scored as the held-out window. The layer is
/// left in its state at the last triplet.
pub fn train_readout(esn: &mut Esn, record: &TrainingRecord, beta: f64) -> Result<TrainReport> {
    train_readout_with(esn, record, &Regularization::fixed(beta))
}

/// [`train_readout`] with an explicit regularisation policy.
pub fn train_readout_with(esn: &mut Esn, record: &TrainingRecord, reg: &Regularization) -> Result<TrainReport> {
    let (m, l) = (record.obs_dim(), record.input_dim());
    if m != esn.obs_dim() || l != esn.input_dim() {
        return Err(Error::Shape(format!(
            "record is {m}->{l} but reservoir expects {}->{}",
            esn.obs_dim(),
            esn.input_dim()
        )));
    }
    if reg.all().iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::Config("beta must be non-negative".into()));
    }
    let count = record.triplets();
    let i_init = record.init_index();
    let i_train = record.train_index();
    if i_init + 1 >= i_train {
        return Err(Error::Config("training window is empty after the discarded transient".into()));
    }
    let n = esn.size();
    let h = record.h;
    let d = record.delta_steps;
    let last = record.len() - 1;
    let folds = if reg.is_fixed() { 1 } else { reg.folds.max(2) };

    esn.reset();
    let mut u = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let mut train = WindowStats::new(n, l, i_train - i_init, folds);
    let mut test = WindowStats::new(n, l, count.saturating_sub(i_train), 1);
    let (mut y_mid, mut r_mid) = (vec![0.0; m], vec![0.0; m]);

    for i in 0..count {
        if i >= i_init && i < i_train {
            train.push(&u, &record.v[i]);
        } else if i >= i_train {
            test.push(&u, &record.v[i]);
        }
        if i + 1 == count {
            break;
        }
        let (y0, y1) = (&record.y[i], &record.y[i + 1]);
        let (r0, r1) = (&record.y[i + d], &record.y[(i + 1 + d).min(last)]);
        let t0 = i as f64 * h;
        rk.step(
            |t, u, du| {
                let s = (t - t0) / h;
                for j in 0..m {
                    y_mid[j] = y0[j] + s * (y1[j] - y0[j]);
                    r_mid[j] = r0[j] + s * (r1[j] - r0[j]);
                }
                esn.derivative_into(u, &y_mid, &r_mid, du)
            },
            &mut u,
            t0,
            h,
        )?;
    }
    esn.set_state(&u);

    let mut cv_scores = Vec::new();
    let mut beta = reg.beta;
    if !reg.is_fixed() {
        let betas = reg.all();
        let mut totals: Vec<Option<f64>> = vec![Some(0.0); betas.len()];
        for k in 0..folds {
            if train.folds[k].samples() == 0 {
                continue;
            }
            let mut rest = train.pooled(Some(k));
            let (g, c) = rest.normal_equations();
            let path = ridge_path(g, c, &betas);
            for (tot, w) in totals.iter_mut().zip(&path) {
                *tot = match (*tot, train.fold_error(k, w)) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                };
            }
        }
        cv_scores = betas.iter().copied().zip(totals.iter().copied()).collect();
        beta = cv_scores
            .iter()
            .filter_map(|&(b, s)| s.map(|s| (b, s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(b, _)| b)
            .ok_or_else(|| Error::UndefinedMetric("no regularisation candidate gives a usable fit".into()))?;
    }

    let w_out = train.pooled(None).solve(beta)?;
    let training_error = train.inversion_error(&w_out, h).map(|e| e.0);
    let test_errors = test.inversion_error(&w_out, h);
    esn.set_readout(w_out)?;
    Ok(TrainReport {
        train_samples: train.samples(),
        test_samples: test.samples(),
        beta,
        cv_scores,
        training_error,
        test_error: test_errors.map(|e| e.0),
        test_error_output_var: test_errors.map(|e| e.1),
    })
}

/// Replays the record through a trained layer and returns the readout
/// `v(t)` for every triplet (channel-major). Used to score windows
/// explicitly.
pub fn replay(esn: &mut Esn, record: &TrainingRecord) -> Result<Vec<Vec<f64>>> {
    let n = esn.size();
    let (m, l) = (record.obs_dim(), record.input_dim());
    let count = record.triplets();
    let h = record.h;
    let d = record.delta_steps;
    let last = record.len() - 1;
    esn.reset();
    let mut u = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let mut out = vec![Vec::with_capacity(count); l];
    let mut v = vec![0.0; l];
    let (mut y_mid, mut r_mid) = (vec![0.0; m], vec![0.0; m]);
    for i in 0..count {
        esn.readout_into(&u, &mut v)?;
        for (c, x) in out.iter_mut().zip(&v) {
            c.push(*x);
        }
        if i + 1 == count {
            break;
        }
        let (y0, y1) = (&record.y[i], &record.y[i + 1]);
        let (r0, r1) = (&record.y[i + d], &record.y[(i + 1 + d).min(last)]);
        let t0 = i as f64 * h;
        rk.step(
            |t, u, du| {
                let s = (t - t0) / h;
                for j in 0..m {
                    y_mid[j] = y0[j] + s * (y1[j] - y0[j]);
                    r_mid[j] = r0[j] + s * (r1[j] - r0[j]);
                }
                esn.derivative_into(u, &y_mid, &r_mid, du)
            },
            &mut u,
            t0,
            h,
        )?;
    }
    esn.set_state(&u);
    Ok(out)
}
