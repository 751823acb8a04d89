//! Closed-loop control with a stack of reservoir layers whose readouts are
//! summed, sequential layer training, reference trajectories and the
//! asymptotic control error.

use std::cell::RefCell;
use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm2, norm_inf, trapezoid_weight, Rk4};
use crate::plants::{step_interpolated, Plant};
use crate::reservoir::{instantiate, Esn, EsnHyperparams};
use crate::training::{
    gen_train_signal, harvest, train_readout_with, ControlTimescales, Regularization, TrainReport, TrainSignalParams,
};

/// Orbit `center + a cos(θ) axis_a + b sin(θ) axis_b` with
/// `θ = omega (t - t0) + phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseReference {
    pub center: Vec<f64>,
    pub axis_a: Vec<f64>,
    pub axis_b: Vec<f64>,
    pub semi_a: f64,
    pub semi_b: f64,
    pub omega: f64,
    pub phase: f64,
    pub t0: f64,
}

impl EllipseReference {
    pub fn period(&self) -> f64 {
        TAU / self.omega.abs()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = self.omega * (t - self.t0).rem_euclid(self.period()) + self.phase;
        let (s, c) = theta.sin_cos();
        for i in 0..out.len() {
            out[i] = self.center[i] + self.semi_a * c * self.axis_a[i] + self.semi_b * s * self.axis_b[i];
        }
    }
}

/// Desired observable `r(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    Constant {
        value: Vec<f64>,
    },
    /// `a` for the first `duty` fraction of each period, then `b`, with
    /// linear ramps of length `smoothing` starting at each switch.
    SquareWave {
        a: Vec<f64>,
        b: Vec<f64>,
        period: f64,
        duty: f64,
        smoothing: f64,
    },
    Ellipse(EllipseReference),
    /// Linearly interpolated samples starting at `t0`, held at both ends.
    Recorded {
        t0: f64,
        h: f64,
        samples: Vec<Vec<f64>>,
    },
}

impl Reference {
    pub fn constant(value: &[f64]) -> Self {
        Reference::Constant { value: value.to_vec() }
    }

    pub fn dim(&self) -> usize {
        match self {
            Reference::Constant { value } => value.len(),
            Reference::SquareWave { a, .. } => a.len(),
            Reference::Ellipse(e) => e.center.len(),
            Reference::Recorded { samples, .. } => samples.first().map_or(0, |s| s.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Reference::SquareWave { a, b, period, duty, smoothing } => {
                if a.len() != b.len() {
                    return Err(Error::Shape("square-wave levels differ in dimension".into()));
                }
                if !(*period > 0.0) || !(0.0..=1.0).contains(duty) || !(*smoothing >= 0.0) {
                    return Err(Error::Config("square wave needs period > 0, duty in [0, 1], smoothing >= 0".into()));
                }
                let shortest = (duty * period).min((1.0 - duty) * period);
                if *smoothing > shortest {
                    return Err(Error::Config("square-wave ramp longer than a half cycle".into()));
                }
            }
            Reference::Ellipse(e) => {
                if !(e.omega != 0.0 && e.omega.is_finite()) {
                    return Err(Error::Config("ellipse needs a non-zero angular frequency".into()));
                }
                let m = e.center.len();
                if e.axis_a.len() != m || e.axis_b.len() != m {
                    return Err(Error::Shape("ellipse axes differ in dimension".into()));
                }
            }
            Reference::Recorded { h, samples, .. } => {
                if !(*h > 0.0) || samples.is_empty() {
                    return Err(Error::Config("recorded reference needs h > 0 and samples".into()));
                }
            }
            Reference::Constant { .. } => {}
        }
        Ok(())
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Reference::Constant { value } => out.copy_from_slice(value),
            Reference::SquareWave { a, b, period, duty, smoothing } => {
                let tau = t.rem_euclid(*period);
                let switch = duty * period;
                // weight of b; the ramp at the start of a cycle is the b -> a
                // switch, absent in the first cycle
                let w = if tau >= switch {
                    if tau - switch < *smoothing {
                        (tau - switch) / smoothing
                    } else {
                        1.0
                    }
                } else if tau < *smoothing && t >= *period {
                    1.0 - tau / smoothing
                } else {
                    0.0
                };
                for i in 0..out.len() {
                    out[i] = a[i] + w * (b[i] - a[i]);
                }
            }
            Reference::Ellipse(e) => e.eval_into(t, out),
            Reference::Recorded { t0, h, samples } => {
                let s = ((t - t0) / h).max(0.0);
                let i = s.floor() as usize;
                if i + 1 >= samples.len() {
                    out.copy_from_slice(samples.last().unwrap());
                } else {
                    let f = s - i as f64;
                    for k in 0..out.len() {
                        out[k] = samples[i][k] + f * (samples[i + 1][k] - samples[i][k]);
                    }
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Square wave between two steady states with a 50% duty cycle.
pub fn square_wave_reference(uss_a: &[f64], uss_b: &[f64], period: f64, smoothing: f64) -> Reference {
    Reference::SquareWave { a: uss_a.to_vec(), b: uss_b.to_vec(), period, duty: 0.5, smoothing }
}

/// Parallel reservoir layers sharing the `(y, r(t+δ))` input; the plant
/// receives the sum of their readouts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeepController {
    pub layers: Vec<Esn>,
    pub delta: f64,
}

impl DeepController {
    pub fn new(delta: f64) -> Self {
        DeepController { layers: Vec::new(), delta }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Controller truncated to its first `n` layers.
    pub fn truncated(&self, n: usize) -> DeepController {
        DeepController { layers: self.layers[..n.min(self.layers.len())].to_vec(), delta: self.delta }
    }

    fn check<P: Plant + ?Sized>(&self, plant: &P, reference: &Reference) -> Result<()> {
        reference.validate()?;
        if reference.dim() != plant.obs_dim() {
            return Err(Error::Shape(format!(
                "reference is {}-dimensional, observable is {}",
                reference.dim(),
                plant.obs_dim()
            )));
        }
        for esn in &self.layers {
            if !esn.is_trained() {
                return Err(Error::Untrained);
            }
            if esn.obs_dim() != plant.obs_dim() || esn.input_dim() != plant.input_dim() {
                return Err(Error::Shape("layer does not match the plant".into()));
            }
        }
        Ok(())
    }

    /// Per-layer readouts at the given layer states and their sum (`v` and
    /// `per_layer` are overwritten).
    pub fn control_into(&self, states: &[&[f64]], v: &mut [f64], per_layer: &mut [Vec<f64>]) -> Result<()> {
        v.iter_mut().for_each(|x| *x = 0.0);
        for ((esn, u), out) in self.layers.iter().zip(states).zip(per_layer.iter_mut()) {
            esn.readout_into(u, out)?;
            for (a, b) in v.iter_mut().zip(out.iter()) {
                *a += b;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Scratch {
    y: Vec<f64>,
    r: Vec<f64>,
    v: Vec<f64>,
    lv: Vec<f64>,
}

/// The plant in closed loop with a controller, seen as a new plant whose
/// input `v'` is added to the summed control and whose state is the plant
/// state followed by every layer state.
pub struct ControlledPlant<'a, P: Plant + ?Sized> {
    plant: &'a mut P,
    controller: &'a DeepController,
    reference: &'a Reference,
    x: Vec<f64>,
    plant_dim: usize,
    bound: f64,
    scratch: RefCell<Scratch>,
}

impl<'a, P: Plant + ?Sized> ControlledPlant<'a, P> {
    /// Layer states start from each layer's stored state.
    pub fn new(plant: &'a mut P, controller: &'a DeepController, reference: &'a Reference) -> Result<Self> {
        controller.check(plant, reference)?;
        let plant_dim = plant.state_dim();
        let mut x = plant.state().to_vec();
        for esn in &controller.layers {
            x.extend_from_slice(esn.state());
        }
        let (m, l) = (plant.obs_dim(), plant.input_dim());
        let bound = 10.0 * plant.attractor_bound();
        Ok(ControlledPlant {
            plant,
            controller,
            reference,
            x,
            plant_dim,
            bound,
            scratch: RefCell::new(Scratch { y: vec![0.0; m], r: vec![0.0; m], v: vec![0.0; l], lv: vec![0.0; l] }),
        })
    }

    pub fn layer_state(&self, k: usize) -> &[f64] {
        let (a, b) = self.layer_range(k);
        &self.x[a..b]
    }

    fn layer_range(&self, k: usize) -> (usize, usize) {
        let mut a = self.plant_dim;
        for esn in &self.controller.layers[..k] {
            a += esn.size();
        }
        (a, a + self.controller.layers[k].size())
    }

    /// Per-layer readouts and their sum at the current state.
    pub fn control(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let l = self.plant.input_dim();
        let mut v = vec![0.0; l];
        let mut per = vec![vec![0.0; l]; self.controller.len()];
        let states: Vec<&[f64]> = (0..self.controller.len()).map(|k| self.layer_state(k)).collect();
        self.controller.control_into(&states, &mut v, &mut per).expect("layers checked at construction");
        (v, per)
    }

    /// Copies the layer states back into the controller's reservoirs.
    pub fn layer_states(&self) -> Vec<Vec<f64>> {
        (0..self.controller.len()).map(|k| self.layer_state(k).to_vec()).collect()
    }
}

impl<P: Plant + ?Sized> Plant for ControlledPlant<'_, P> {
    fn state_dim(&self) -> usize {
        self.x.len()
    }
    fn obs_dim(&self) -> usize {
        self.plant.obs_dim()
    }
    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }
    fn time(&self) -> f64 {
        self.plant.time()
    }
    fn state(&self) -> &[f64] {
        &self.x
    }
    fn observe_into(&self, x: &[f64], y: &mut [f64]) {
        self.plant.observe_into(&x[..self.plant_dim], y);
    }
    fn vector_field(&self, t: f64, x: &[f64], v_extra: &[f64], dx: &mut [f64]) {
        let mut s = self.scratch.borrow_mut();
        let Scratch { y, r, v, lv } = &mut *s;
        self.plant.observe_into(&x[..self.plant_dim], y);
        self.reference.eval_into(t + self.controller.delta, r);
        v.copy_from_slice(v_extra);
        let mut a = self.plant_dim;
        for esn in &self.controller.layers {
            let b = a + esn.size();
            let u = &x[a..b];
            esn.derivative_into(u, y, r, &mut dx[a..b]);
            esn.readout_into(u, lv).expect("layers checked at construction");
            for (vi, li) in v.iter_mut().zip(lv.iter()) {
                *vi += li;
            }
            a = b;
        }
        self.plant.vector_field(t, &x[..self.plant_dim], v, &mut dx[..self.plant_dim]);
    }
    fn commit(&mut self, x: &[f64], h: f64) -> Result<()> {
        self.plant.commit(&x[..self.plant_dim], h)?;
        self.x.copy_from_slice(x);
        let y = self.plant.observe();
        let norm = norm_inf(&y);
        if !(norm <= self.bound) {
            return Err(Error::ControlDiverged { t: self.plant.time(), norm, bound: self.bound });
        }
        Ok(())
    }
    fn attractor_bound(&self) -> f64 {
        self.plant.attractor_bound()
    }
}

/// Sampled closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRunResult {
    pub h: f64,
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `layer_v[i][k]` is layer `k`'s readout at sample `i`.
    pub layer_v: Vec<Vec<Vec<f64>>>,
}

impl ControlRunResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn window(&self, start: f64, span: f64) -> Result<(usize, usize)> {
        let (first, last) = match (self.t.first(), self.t.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => {
                return Err(Error::Window { start, end: start + span, first: 0.0, last: 0.0 });
            }
        };
        let end = start + span;
        // sample times accumulate rounding, so allow half a step of slack
        if start < first - 0.5 * self.h || end > last + 0.5 * self.h || !(span > 0.0) {
            return Err(Error::Window { start, end, first, last });
        }
        let i0 = self.t.partition_point(|&t| t < start - 1e-6 * self.h);
        let i1 = self.t.partition_point(|&t| t <= end + 1e-6 * self.h);
        if i1 < i0 + 2 {
            return Err(Error::Window { start, end, first, last });
        }
        Ok((i0, i1))
    }

    /// `(1/T) ∫ |y - r| dt` over `[start, start + span]` (trapezoidal).
    pub fn control_error(&self, start: f64, span: f64) -> Result<f64> {
        let (i0, i1) = self.window(start, span)?;
        let n = i1 - i0;
        let mut acc = 0.0;
        let mut d = vec![0.0; self.y[0].len()];
        for (k, i) in (i0..i1).enumerate() {
            for j in 0..d.len() {
                d[j] = self.y[i][j] - self.r[i][j];
            }
            acc += trapezoid_weight(k, n, self.h) * norm2(&d);
        }
        Ok(acc / ((n - 1) as f64 * self.h))
    }

    /// Root-mean-square of `|y - r|` over the same kind of window.
    pub fn control_rmse(&self, start: f64, span: f64) -> Result<f64> {
        let (i0, i1) = self.window(start, span)?;
        let n = i1 - i0;
        let mut acc = 0.0;
        for (k, i) in (i0..i1).enumerate() {
            let e2: f64 = self.y[i].iter().zip(&self.r[i]).map(|(a, b)| (a - b).powi(2)).sum();
            acc += trapezoid_weight(k, n, self.h) * e2;
        }
        Ok((acc / ((n - 1) as f64 * self.h)).sqrt())
    }

    /// Per-channel RMSE of `y - r`.
    pub fn channel_rmse(&self, start: f64, span: f64) -> Result<Vec<f64>> {
        let (i0, i1) = self.window(start, span)?;
        let n = i1 - i0;
        let m = self.y[0].len();
        let mut acc = vec![0.0; m];
        for (k, i) in (i0..i1).enumerate() {
            let w = trapezoid_weight(k, n, self.h);
            for j in 0..m {
                acc[j] += w * (self.y[i][j] - self.r[i][j]).powi(2);
            }
        }
        Ok(acc.into_iter().map(|a| (a / ((n - 1) as f64 * self.h)).sqrt()).collect())
    }

    /// Writes `t,y..,r..,v..,layer1_v..` rows, keeping every `decimation`-th sample.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, decimation: usize) -> Result<()> {
        let m = self.y.first().map_or(0, |v| v.len());
        let l = self.v.first().map_or(0, |v| v.len());
        let layers = self.layer_v.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("y{i}")));
        header.extend((1..=m).map(|i| format!("r{i}")));
        header.extend((1..=l).map(|i| format!("v{i}")));
        for k in 1..=layers {
            header.extend((1..=l).map(|i| format!("layer{k}_v{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for i in (0..self.len()).step_by(decimation.max(1)) {
            let mut row = vec![self.t[i].to_string()];
            row.extend(self.y[i].iter().map(|v| v.to_string()));
            row.extend(self.r[i].iter().map(|v| v.to_string()));
            row.extend(self.v[i].iter().map(|v| v.to_string()));
            for lv in &self.layer_v[i] {
                row.extend(lv.iter().map(|v| v.to_string()));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Co-integrates plant and every layer for `duration` with step `h`,
/// starting from the plant's current time. Layer states are carried over
/// from and written back to the controller.
pub fn closed_loop_run<P: Plant + ?Sized>(
    plant: &mut P,
    controller: &mut DeepController,
    reference: &Reference,
    duration: f64,
    h: f64,
) -> Result<ControlRunResult> {
    if !(h > 0.0) || !(duration >= 0.0) {
        return Err(Error::Config("closed-loop run needs h > 0 and duration >= 0".into()));
    }
    let steps = (duration / h).round() as usize;
    let l = plant.input_dim();
    let zero = vec![0.0; l];
    let layer_states;
    let result = {
        let mut cp = ControlledPlant::new(plant, controller, reference)?;
        let mut rk = Rk4::new(cp.state_dim());
        let mut out = ControlRunResult {
            h,
            t: Vec::with_capacity(steps + 1),
            y: Vec::with_capacity(steps + 1),
            r: Vec::with_capacity(steps + 1),
            v: Vec::with_capacity(steps + 1),
            layer_v: Vec::with_capacity(steps + 1),
        };
        let record = |cp: &ControlledPlant<P>, out: &mut ControlRunResult| {
            let t = cp.time();
            let (v, per) = cp.control();
            out.t.push(t);
            out.y.push(cp.observe());
            out.r.push(reference.eval(t));
            out.v.push(v);
            out.layer_v.push(per);
        };
        record(&cp, &mut out);
        for _ in 0..steps {
            step_interpolated(&mut cp, &mut rk, &zero, &zero, h)?;
            record(&cp, &mut out);
        }
        layer_states = cp.layer_states();
        out
    };
    for (esn, u) in controller.layers.iter_mut().zip(&layer_states) {
        esn.set_state(u);
    }
    Ok(result)
}

/// How a new layer is drawn and trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTraining {
    pub esn: EsnHyperparams,
    pub signal: TrainSignalParams,
    pub timescales: ControlTimescales,
    /// Overrides the fixed `timescales.beta` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<Regularization>,
}

impl LayerTraining {
    pub fn regularization(&self) -> Regularization {
        self.regularization.clone().unwrap_or_else(|| Regularization::fixed(self.timescales.beta))
    }
}

/// Perturbs the plant in closed loop with the existing layers (driven by
/// `target`), harvests the response and appends a freshly trained layer.
pub fn add_layer<P: Plant + ?Sized>(
    plant: &mut P,
    controller: &mut DeepController,
    target: &Reference,
    cfg: &LayerTraining,
) -> Result<TrainReport> {
    let layer = controller.len() + 1;
    let wrap = |e: Error| Error::Layer { layer, source: Box::new(e) };
    cfg.timescales.validate()?;
    let ts = &cfg.timescales;
    let h = cfg.signal.h;
    let signal = gen_train_signal(&cfg.signal, plant.input_dim()).map_err(wrap)?;
    let (record, layer_states) = {
        let mut cp = ControlledPlant::new(plant, controller, target).map_err(wrap)?;
        let rec = harvest(&mut cp, &signal, ts.delta, h, ts.t_init, ts.t_train).map_err(wrap)?;
        (rec, cp.layer_states())
    };
    for (esn, u) in controller.layers.iter_mut().zip(&layer_states) {
        esn.set_state(u);
    }
    let mut esn = instantiate(&cfg.esn, record.obs_dim(), record.input_dim()).map_err(wrap)?;
    let report = train_readout_with(&mut esn, &record, &cfg.regularization()).map_err(wrap)?;
    controller.layers.push(esn);
    Ok(report)
}

fn solve3_null(m: &Matrix3<f64>) -> Vector3<f64> {
    // eigenvector from the largest cross product of two rows of a singular matrix
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let cands = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    cands.into_iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap()
}

/// Least-squares ellipse through a segment of a trajectory sampled every
/// `dt`, starting at time `t0`, as a time-parameterised reference whose
/// period equals the segment's mean orbital period.
///
/// Points are projected onto their principal plane and fitted with the
/// ellipse-constrained direct conic fit.
pub fn fit_ellipse(points: &[Vec<f64>], dt: f64, t0: f64) -> Result<EllipseReference> {
    let n = points.len();
    if n < 6 {
        return Err(Error::Fit("need at least six points".into()));
    }
    let dim = points[0].len();
    if dim != 3 && dim != 2 {
        return Err(Error::Fit(format!("points must be 2- or 3-dimensional, got {dim}")));
    }
    let lift = |p: &Vec<f64>| Vector3::new(p[0], p[1], if dim == 3 { p[2] } else { 0.0 });
    let centroid = points.iter().map(lift).sum::<Vector3<f64>>() / n as f64;
    let cov = points
        .iter()
        .map(|p| {
            let d = lift(p) - centroid;
            d * d.transpose()
        })
        .sum::<Matrix3<f64>>()
        / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l2 > 1e-12 * l1) {
        return Err(Error::Fit("segment is collinear".into()));
    }
    let e1: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let e2: Vector3<f64> = eig.eigenvectors.column(order[1]).into();

    let scale = (l1 + l2).sqrt();
    let uv: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = lift(p) - centroid;
            (d.dot(&e1) / scale, d.dot(&e2) / scale)
        })
        .collect();

    // direct least-squares fit constrained to 4ac - b^2 = 1
    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for &(x, y) in &uv {
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let s3_inv = s3.try_inverse().ok_or_else(|| Error::Fit("degenerate projected segment".into()))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    let mc =
        Matrix3::from_rows(&[(m.row(2) / 2.0).into_owned(), (-m.row(1)).into_owned(), (m.row(0) / 2.0).into_owned()]);
    let mut best: Option<Vector3<f64>> = None;
    for ev in mc.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-9 * ev.re.abs().max(1.0) {
            continue;
        }
        let a1 = solve3_null(&(mc - Matrix3::identity() * ev.re));
        if 4.0 * a1[0] * a1[2] - a1[1] * a1[1] > 0.0 {
            best = Some(a1);
            break;
        }
    }
    let a1 = best.ok_or_else(|| Error::Fit("no elliptic solution".into()))?;
    let a2 = t * a1;
    let (a, b, c, d, e, f) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);

    let q = Matrix2::new(2.0 * a, b, b, 2.0 * c);
    let ctr = q.lu().solve(&nalgebra::Vector2::new(-d, -e)).ok_or_else(|| Error::Fit("conic has no centre".into()))?;
    let (x0, y0) = (ctr[0], ctr[1]);
    let f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f;
    let qf = SymmetricEigen::new(Matrix2::new(a, b / 2.0, b / 2.0, c));
    let ax: Vec<f64> = qf.eigenvalues.iter().map(|&lam| (-f0 / lam).sqrt()).collect();
    if ax.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Fit("conic is not a real ellipse".into()));
    }
    // major axis first
    let (ia, ib) = if ax[0] >= ax[1] { (0, 1) } else { (1, 0) };
    let dir = |i: usize| {
        let v = qf.eigenvectors.column(i);
        e1 * v[0] + e2 * v[1]
    };
    let center3 = centroid + (e1 * x0 + e2 * y0) * scale;
    let axis_a = dir(ia);
    let mut axis_b = dir(ib);
    let (semi_a, semi_b) = (ax[ia] * scale, ax[ib] * scale);

    let angle = |p: &Vec<f64>, axis_b: &Vector3<f64>| {
        let d = lift(p) - center3;
        (d.dot(axis_b) / semi_b).atan2(d.dot(&axis_a) / semi_a)
    };
    let mut total = 0.0;
    let mut prev = angle(&points[0], &axis_b);
    for p in &points[1..] {
        let cur = angle(p, &axis_b);
        let mut step = cur - prev;
        step -= TAU * (step / TAU).round();
        total += step;
        prev = cur;
    }
    if total < 0.0 {
        axis_b = -axis_b;
        total = -total;
    }
    if total < 2.0 * TAU {
        return Err(Error::Fit(format!("segment covers {:.2} revolutions, need at least 2", total / TAU)));
    }
    let omega = total / ((n - 1) as f64 * dt);
    let phase = angle(&points[0], &axis_b);
    let keep = |v: Vector3<f64>| v.iter().take(dim).copied().collect::<Vec<f64>>();
    Ok(EllipseReference {
        center: keep(center3),
        axis_a: keep(axis_a),
        axis_b: keep(axis_b),
        semi_a,
        semi_b,
        omega,
        phase,
        t0,
    })
}
