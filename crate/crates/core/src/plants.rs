//! Simulated plants `dx/dt = f(x, v)`, `y = g(x)`.
//!
//! Each plant exposes its vector field so that controllers can integrate
//! plant and reservoirs as one coupled system; [`Plant::commit`] accepts
//! the state at the end of a step.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm_inf, Rk4};

pub trait Plant: Send {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn time(&self) -> f64;
    fn state(&self) -> &[f64];

    /// `y = g(x)` for an arbitrary state.
    fn observe_into(&self, x: &[f64], y: &mut [f64]);

    /// `f(x, v)` at absolute time `t`, which lies inside the step being taken.
    fn vector_field(&self, t: f64, x: &[f64], v: &[f64], dx: &mut [f64]);

    /// Accepts `x` as the state after a step of length `h`.
    fn commit(&mut self, x: &[f64], h: f64) -> Result<()>;

    /// Scale of the uncontrolled attractor (max-norm), used by divergence guards.
    fn attractor_bound(&self) -> f64;

    /// `f(x, 0)` treating any delayed argument as equal to `x`.
    fn steady_state_residual(&self, x: &[f64], out: &mut [f64]) {
        let v = vec![0.0; self.input_dim()];
        self.vector_field(self.time(), x, &v, out);
    }

    fn observe(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.obs_dim()];
        self.observe_into(self.state(), &mut y);
        y
    }

    /// One RK4 step with the input held at `v`.
    fn step(&mut self, v: &[f64], h: f64) -> Result<()> {
        let mut rk = Rk4::new(self.state_dim());
        step_interpolated(self, &mut rk, v, v, h)
    }
}

/// One RK4 step with the input varying linearly from `v0` to `v1`.
pub fn step_interpolated<P: Plant + ?Sized>(plant: &mut P, rk: &mut Rk4, v0: &[f64], v1: &[f64], h: f64) -> Result<()> {
    let t0 = plant.time();
    let mut x = plant.state().to_vec();
    let mut v = vec![0.0; v0.len()];
    {
        let p: &P = plant;
        rk.step(
            |t, x, dx| {
                let s = (t - t0) / h;
                for i in 0..v.len() {
                    v[i] = v0[i] + s * (v1[i] - v0[i]);
                }
                p.vector_field(t, x, &v, dx)
            },
            &mut x,
            t0,
            h,
        )?;
    }
    plant.commit(&x, h)
}

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { t })
    }
}

/// Mackey-Glass delay equation with additive drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MackeyGlassParams {
    pub gamma: f64,
    pub beta: f64,
    pub q: f64,
    pub tau: f64,
    pub h: f64,
}

impl Default for MackeyGlassParams {
    fn default() -> Self {
        MackeyGlassParams { gamma: 0.1, beta: 0.2, q: 10.0, tau: 17.0, h: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct MackeyGlassPlant {
    params: MackeyGlassParams,
    /// Samples `x(t - tau), ..., x(t)` on the step grid.
    history: VecDeque<f64>,
    x: [f64; 1],
    steps: u64,
    t0: f64,
}

impl MackeyGlassPlant {
    pub fn with_constant_history(params: MackeyGlassParams, x0: f64) -> Result<Self> {
        let len = Self::buffer_len(&params)?;
        Self::with_history(params, vec![x0; len])
    }

    /// `history` holds `tau/h + 1` samples, oldest first.
    pub fn with_history(params: MackeyGlassParams, history: Vec<f64>) -> Result<Self> {
        let len = Self::buffer_len(&params)?;
        if history.len() != len {
            return Err(Error::Shape(format!("history must hold tau/h + 1 = {len} samples, got {}", history.len())));
        }
        let x = [*history.last().unwrap()];
        Ok(MackeyGlassPlant { params, history: history.into(), x, steps: 0, t0: 0.0 })
    }

    fn buffer_len(p: &MackeyGlassParams) -> Result<usize> {
        if !(p.h > 0.0) || !(p.tau > 0.0) {
            return Err(Error::Config("tau and h must be positive".into()));
        }
        let ratio = p.tau / p.h;
        let lag = ratio.round();
        if (ratio - lag).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!("tau/h = {ratio} is not an integer")));
        }
        if lag < 3.0 {
            return Err(Error::Config("delay must span at least three steps".into()));
        }
        Ok(lag as usize + 1)
    }

    pub fn params(&self) -> &MackeyGlassParams {
        &self.params
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    /// `x(t - tau)` for `t` in the current step, by cubic interpolation of
    /// the four oldest buffer samples.
    fn delayed(&self, t: f64) -> f64 {
        let s = (t - self.time()) / self.params.h;
        let hist = &self.history;
        if s.abs() < 1e-9 {
            return hist[0];
        }
        if (s - 1.0).abs() < 1e-9 {
            return hist[1];
        }
        let (a, b, c, d) = (hist[0], hist[1], hist[2], hist[3]);
        let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
        let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
        let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
        let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
        l0 * a + l1 * b + l2 * c + l3 * d
    }

    fn production(&self, delayed: f64) -> f64 {
        let p = &self.params;
        let pow = if p.q.fract() == 0.0 { delayed.powi(p.q as i32) } else { delayed.powf(p.q) };
        p.beta * delayed / (1.0 + pow)
    }
}

impl Plant for MackeyGlassPlant {
    fn state_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.params.h
    }
    fn state(&self) -> &[f64] {
        &self.x
    }
    fn observe_into(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }
    fn vector_field(&self, t: f64, x: &[f64], v: &[f64], dx: &mut [f64]) {
        dx[0] = -self.params.gamma * x[0] + self.production(self.delayed(t)) + v[0];
    }
    fn commit(&mut self, x: &[f64], h: f64) -> Result<()> {
        if (h - self.params.h).abs() > 1e-12 * self.params.h {
            return Err(Error::Config(format!(
                "Mackey-Glass history is sampled at h = {}, cannot step by {h}",
                self.params.h
            )));
        }
        check_finite(x, self.time() + h)?;
        self.history.pop_front();
        self.history.push_back(x[0]);
        self.x[0] = x[0];
        self.steps += 1;
        Ok(())
    }
    fn attractor_bound(&self) -> f64 {
        1.5
    }
    fn steady_state_residual(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.params.gamma * x[0] + self.production(x[0]);
    }
}

/// Lorenz '63 with additive input on every component; `y = x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }
}

#[derive(Debug, Clone)]
pub struct LorenzPlant {
    pub params: LorenzParams,
    x: [f64; 3],
    t: f64,
}

impl LorenzPlant {
    pub fn new(params: LorenzParams, x0: [f64; 3]) -> Self {
        LorenzPlant { params, x: x0, t: 0.0 }
    }

    /// The non-trivial steady state on the positive (`+1`) or negative leaf.
    pub fn leaf_steady_state(&self, sign: f64) -> [f64; 3] {
        let p = &self.params;
        let a = (p.beta * (p.rho - 1.0)).sqrt() * sign.signum();
        [a, a, p.rho - 1.0]
    }

    pub fn default_guesses(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0, 0.0], self.leaf_steady_state(1.0).to_vec(), self.leaf_steady_state(-1.0).to_vec()]
    }
}

impl Plant for LorenzPlant {
    fn state_dim(&self) -> usize {
        3
    }
    fn obs_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        3
    }
    fn time(&self) -> f64 {
        self.t
    }
    fn state(&self) -> &[f64] {
        &self.x
    }
    fn observe_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&x[..3]);
    }
    fn vector_field(&self, _t: f64, x: &[f64], v: &[f64], dx: &mut [f64]) {
        let p = &self.params;
        dx[0] = p.sigma * (x[1] - x[0]) + v[0];
        dx[1] = x[0] * (p.rho - x[2]) - x[1] + v[1];
        dx[2] = x[0] * x[1] - p.beta * x[2] + v[2];
    }
    fn commit(&mut self, x: &[f64], h: f64) -> Result<()> {
        check_finite(x, self.t + h)?;
        self.x.copy_from_slice(x);
        self.t += h;
        Ok(())
    }
    fn attractor_bound(&self) -> f64 {
        50.0
    }
}

/// Component values of the double-scroll circuit in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub c1: f64,
    pub c2: f64,
    pub l: f64,
    pub r_n: f64,
    pub r_m: f64,
    pub r_d: f64,
    pub i_r: f64,
    pub alpha: f64,
    pub v_d: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        CircuitParams {
            c1: 10e-9,
            c2: 10e-9,
            l: 55e-3,
            r_n: 3e3,
            r_m: 455.0,
            r_d: 7.86e3,
            i_r: 5.63e-9,
            alpha: 11.6,
            v_d: 0.58,
        }
    }
}

/// Where the control current enters the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircuitDrive {
    /// Single current injected into the `V1` node.
    V1Node,
    /// Currents into both nodes and a voltage across the inductor.
    Full,
}

/// Double-scroll circuit in scaled units: volts, milliamps, microseconds.
///
/// State is `(V1, V2, I)`, observable `(V1, V2)`. Inputs are in mA for the
/// node currents and volts for the inductor voltage.
#[derive(Debug, Clone)]
pub struct CircuitPlant {
    pub params: CircuitParams,
    pub drive: CircuitDrive,
    // scaled constants
    inv_c1: f64,
    inv_c2: f64,
    inv_l: f64,
    g_n: f64,
    r_m: f64,
    g_d: f64,
    two_ir: f64,
    slope: f64,
    x: [f64; 3],
    t: f64,
}

impl CircuitPlant {
    pub fn new(params: CircuitParams, drive: CircuitDrive, x0: [f64; 3]) -> Self {
        // F -> nF, H -> mH, ohm -> kohm, A -> mA
        CircuitPlant {
            inv_c1: 1.0 / (params.c1 * 1e9),
            inv_c2: 1.0 / (params.c2 * 1e9),
            inv_l: 1.0 / (params.l * 1e3),
            g_n: 1.0 / (params.r_n * 1e-3),
            r_m: params.r_m * 1e-3,
            g_d: 1.0 / (params.r_d * 1e-3),
            two_ir: 2.0 * params.i_r * 1e3,
            slope: params.alpha / params.v_d,
            params,
            drive,
            x: x0,
            t: 0.0,
        }
    }

    /// Diode-pair current in mA for a voltage in V.
    pub fn diode_current(&self, v: f64) -> f64 {
        self.g_d * v + self.two_ir * (self.slope * v).sinh()
    }

    /// `sqrt(L C1)` in microseconds.
    pub fn characteristic_time(&self) -> f64 {
        (self.params.l * self.params.c1).sqrt() * 1e6
    }

    pub fn default_guesses(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0, 0.0], vec![0.59, 0.09, 0.20], vec![-0.59, -0.09, -0.20]]
    }
}

impl Plant for CircuitPlant {
    fn state_dim(&self) -> usize {
        3
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        match self.drive {
            CircuitDrive::V1Node => 1,
            CircuitDrive::Full => 3,
        }
    }
    fn time(&self) -> f64 {
        self.t
    }
    fn state(&self) -> &[f64] {
        &self.x
    }
    fn observe_into(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
        y[1] = x[1];
    }
    fn vector_field(&self, _t: f64, x: &[f64], v: &[f64], dx: &mut [f64]) {
        let (v1, v2, i) = (x[0], x[1], x[2]);
        let (u1, u2, u3) = match self.drive {
            CircuitDrive::V1Node => (v[0], 0.0, 0.0),
            CircuitDrive::Full => (v[0], v[1], v[2]),
        };
        let g = self.diode_current(v1 - v2);
        dx[0] = (self.g_n * v1 - g + u1) * self.inv_c1;
        dx[1] = (g - i + u2) * self.inv_c2;
        dx[2] = (v2 - self.r_m * i + u3) * self.inv_l;
    }
    fn commit(&mut self, x: &[f64], h: f64) -> Result<()> {
        check_finite(x, self.t + h)?;
        self.x.copy_from_slice(x);
        self.t += h;
        Ok(())
    }
    fn attractor_bound(&self) -> f64 {
        1.0
    }
}

/// Steady states found by Newton refinement, plus guesses that failed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedPointSet {
    pub points: Vec<Vec<f64>>,
    pub failures: Vec<(Vec<f64>, String)>,
}

const NEWTON_MAX_ITERS: usize = 100;

/// Newton-refines each guess to a root of `f(., 0)`. Roots within 1e-6 of
/// one already found are merged; a guess that fails is reported, not fatal.
pub fn find_steady_states<P: Plant + ?Sized>(plant: &P, guesses: &[Vec<f64>]) -> FixedPointSet {
    let n = plant.state_dim();
    let mut set = FixedPointSet::default();
    let residual = |x: &[f64]| {
        let mut r = vec![0.0; n];
        plant.steady_state_residual(x, &mut r);
        r
    };
    'guess: for guess in guesses {
        if guess.len() != n {
            set.failures.push((guess.clone(), "wrong dimension".into()));
            continue;
        }
        let mut x = guess.clone();
        let mut r = residual(&x);
        for _ in 0..NEWTON_MAX_ITERS {
            if norm_inf(&r) < 1e-13 {
                break;
            }
            let mut jac = DMatrix::zeros(n, n);
            for j in 0..n {
                let eps = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += eps;
                xm[j] -= eps;
                let (rp, rm) = (residual(&xp), residual(&xm));
                for i in 0..n {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * eps);
                }
            }
            let Some(dx) = jac.lu().solve(&DVector::from_vec(r.clone())) else {
                set.failures.push((guess.clone(), "singular Jacobian".into()));
                continue 'guess;
            };
            for i in 0..n {
                x[i] -= dx[i];
            }
            let next = residual(&x);
            if norm_inf(&next) >= norm_inf(&r) && dx.amax() < 1e-15 {
                r = next;
                break;
            }
            r = next;
        }
        let res = norm_inf(&r);
        if !(res < 1e-9) {
            set.failures.push((guess.clone(), format!("no convergence (residual {res:.3e})")));
            continue;
        }
        let duplicate = set.points.iter().any(|p| p.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-6));
        if !duplicate {
            set.points.push(x);
        }
    }
    set
}

/// Sampled trajectory `(t, x, y, v)` for CSV export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, x: &[f64], y: &[f64], v: &[f64]) {
        self.t.push(t);
        self.x.push(x.to_vec());
        self.y.push(y.to_vec());
        self.v.push(v.to_vec());
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Writes `t,x1,...,y1,...,v1,...`, keeping every `decimation`-th row.
    pub fn write_csv<W: Write>(&self, mut w: W, decimation: usize) -> Result<()> {
        let decimation = decimation.max(1);
        let dims = |rows: &[Vec<f64>]| rows.first().map_or(0, |r| r.len());
        let mut header = vec!["t".to_string()];
        for (prefix, d) in [("x", dims(&self.x)), ("y", dims(&self.y)), ("v", dims(&self.v))] {
            header.extend((1..=d).map(|i| format!("{prefix}{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for i in (0..self.len()).step_by(decimation) {
            let mut row = vec![self.t[i].to_string()];
            for col in [&self.x[i], &self.y[i], &self.v[i]] {
                row.extend(col.iter().map(|v| v.to_string()));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs `plant` with zero input for `duration`, recording every step.
pub fn simulate_free<P: Plant + ?Sized>(plant: &mut P, duration: f64, h: f64) -> Result<Trajectory> {
    let steps = (duration / h).round() as usize;
    let zero = vec![0.0; plant.input_dim()];
    let mut rk = Rk4::new(plant.state_dim());
    let mut traj = Trajectory::default();
    for _ in 0..=steps {
        traj.push(plant.time(), plant.state(), &plant.observe(), &zero);
        if traj.len() > steps {
            break;
        }
        step_interpolated(plant, &mut rk, &zero, &zero, h)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mg(x0: f64) -> MackeyGlassPlant {
        MackeyGlassPlant::with_constant_history(MackeyGlassParams::default(), x0).unwrap()
    }

    #[test]
    fn mackey_glass_buffer_and_fixed_points() {
        let p = mg(1.0);
        assert_eq!(p.history().count(), 171);
        let bad = MackeyGlassParams { h: 0.3, ..Default::default() };
        assert!(MackeyGlassPlant::with_constant_history(bad, 1.0).is_err());

        for x0 in [0.0, 1.0] {
            let mut p = mg(x0);
            for _ in 0..10_000 {
                p.step(&[0.0], 0.1).unwrap();
            }
            assert!((p.state()[0] - x0).abs() < 1e-8, "x0 = {x0}: {}", p.state()[0]);
        }
        assert!(mg(1.0).step(&[0.0], 0.05).is_err());
    }

    /// Full phase-space state used by the two-trajectory Lyapunov oracle.
    trait Phase {
        fn phase(&self) -> Vec<f64>;
        fn set_phase(&mut self, x: &[f64]);
    }
    impl Phase for LorenzPlant {
        fn phase(&self) -> Vec<f64> {
            self.x.to_vec()
        }
        fn set_phase(&mut self, x: &[f64]) {
            self.x.copy_from_slice(x);
        }
    }
    impl Phase for MackeyGlassPlant {
        fn phase(&self) -> Vec<f64> {
            self.history.iter().copied().collect()
        }
        fn set_phase(&mut self, x: &[f64]) {
            self.history = x.iter().copied().collect();
            self.x[0] = *x.last().unwrap();
        }
    }

    /// Largest Lyapunov exponent from two nearby trajectories with periodic
    /// renormalisation of the separation.
    fn lyapunov<P: Plant + Phase + Clone>(base: &P, h: f64, steps: usize) -> f64 {
        let d0 = 1e-8;
        let mut a = base.clone();
        let mut b = base.clone();
        let mut xb = b.phase();
        let k = xb.len() - 1;
        xb[k] += d0;
        b.set_phase(&xb);
        let zero = vec![0.0; a.input_dim()];
        let renorm = 10;
        let mut sum = 0.0;
        let mut n = 0;
        for i in 1..=steps {
            a.step(&zero, h).unwrap();
            b.step(&zero, h).unwrap();
            if i % renorm == 0 {
                let pa = a.phase();
                let pb = b.phase();
                let d = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                sum += (d / d0).ln();
                n += 1;
                let xb: Vec<f64> = pb.iter().zip(&pa).map(|(y, x)| x + (y - x) * d0 / d).collect();
                b.set_phase(&xb);
            }
        }
        sum / (n as f64 * renorm as f64 * h)
    }

    #[test]
    fn mackey_glass_is_chaotic() {
        let mut base = mg(0.5);
        for _ in 0..5_000 {
            base.step(&[0.0], 0.1).unwrap();
        }
        let lle = lyapunov(&base, 0.1, 100_000);
        assert!(lle > 0.0, "Lyapunov exponent {lle}");
    }

    #[test]
    fn mackey_glass_converges_at_fourth_order() {
        let run = |h: f64| {
            let p = MackeyGlassParams { h, ..Default::default() };
            let len = (p.tau / h).round() as usize + 1;
            // smooth non-constant history
            let hist: Vec<f64> = (0..len).map(|i| 0.9 + 0.2 * (0.3 * (i as f64 * h - p.tau)).sin()).collect();
            let mut plant = MackeyGlassPlant::with_history(p, hist).unwrap();
            let steps = (10.0 / h).round() as usize;
            for _ in 0..steps {
                plant.step(&[0.0], h).unwrap();
            }
            plant.state()[0]
        };
        let (a, b, c) = (run(0.2), run(0.1), run(0.05));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 12.0 && ratio < 20.0, "error ratio {ratio}");
    }

    #[test]
    fn lorenz_fixed_points_hold() {
        let p = LorenzPlant::new(LorenzParams::default(), [0.0; 3]);
        for x0 in p.default_guesses() {
            let mut q = LorenzPlant::new(LorenzParams::default(), [x0[0], x0[1], x0[2]]);
            let exact = find_steady_states(&q, std::slice::from_ref(&x0)).points[0].clone();
            q.set_phase(&exact);
            for _ in 0..10_000 {
                q.step(&[0.0; 3], 1e-3).unwrap();
            }
            let drift = q.state().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-8, "drift {drift} from {exact:?}");
        }
        let c = p.leaf_steady_state(1.0);
        assert!((c[0] - 8.485_281).abs() < 1e-6 && (c[2] - 27.0).abs() < 1e-12);
    }

    #[test]
    fn lorenz_is_bounded_and_chaotic() {
        let mut p = LorenzPlant::new(LorenzParams::default(), [1.0, 1.0, 1.0]);
        let traj = simulate_free(&mut p, 50.0, 1e-3).unwrap();
        assert!(traj.x.iter().all(|x| norm_inf(x) < 100.0));
        let lle = lyapunov(&p, 1e-3, 200_000);
        assert!((lle - 0.9).abs() < 0.2, "Lyapunov exponent {lle}");
    }

    #[test]
    fn steady_state_sets() {
        let lorenz = LorenzPlant::new(LorenzParams::default(), [0.0; 3]);
        let set = find_steady_states(&lorenz, &lorenz.default_guesses());
        assert_eq!(set.points.len(), 3);
        for p in &set.points {
            let mut r = [0.0; 3];
            lorenz.steady_state_residual(p, &mut r);
            assert!(norm_inf(&r) < 1e-9);
        }
        assert!((set.points[1][0] - 72f64.sqrt()).abs() < 1e-9);

        let m = mg(0.5);
        let set = find_steady_states(&m, &[vec![0.0], vec![1.05]]);
        assert_eq!(set.points.len(), 2);
        assert!(set.points[0][0].abs() < 1e-12);
        assert!((set.points[1][0] - 1.0).abs() < 1e-10);

        let c = CircuitPlant::new(CircuitParams::default(), CircuitDrive::Full, [0.0; 3]);
        let set = find_steady_states(&c, &c.default_guesses());
        assert_eq!(set.points.len(), 3, "{:?}", set.failures);
        let pos = &set.points[1];
        assert!((pos[0] - 0.59).abs() < 0.03, "{pos:?}");
        assert!((pos[1] - 0.09).abs() < 0.02, "{pos:?}");
        assert!((pos[2] - 0.20).abs() < 0.02, "{pos:?}");
        // symmetric pair
        for (a, b) in set.points[1].iter().zip(&set.points[2]) {
            assert!((a + b).abs() < 1e-9);
        }
        let mut r = [0.0; 3];
        c.steady_state_residual(pos, &mut r);
        assert!(norm_inf(&r) < 1e-9);

        let failed = find_steady_states(&lorenz, &[vec![1.0, 2.0]]);
        assert!(failed.points.is_empty() && failed.failures.len() == 1);
    }

    #[test]
    fn circuit_origin_is_fixed_and_scrolls_are_visited() {
        let mut c = CircuitPlant::new(CircuitParams::default(), CircuitDrive::Full, [0.0; 3]);
        for _ in 0..1000 {
            c.step(&[0.0; 3], 0.05).unwrap();
        }
        assert_eq!(c.state(), &[0.0; 3]);

        let mut c = CircuitPlant::new(CircuitParams::default(), CircuitDrive::V1Node, [0.01, 0.0, 0.0]);
        let traj = simulate_free(&mut c, 20_000.0, 0.05).unwrap();
        assert!(traj.y.iter().any(|y| y[0] > 0.3));
        assert!(traj.y.iter().any(|y| y[0] < -0.3));
        assert!(traj.x.iter().all(|x| norm_inf(x) < 2.0));
    }

    #[test]
    fn circuit_orbit_period_matches_linearisation() {
        let c0 = CircuitPlant::new(CircuitParams::default(), CircuitDrive::V1Node, [0.0; 3]);
        let ss = find_steady_states(&c0, &c0.default_guesses()).points[1].clone();
        assert!((c0.characteristic_time() - 23.45).abs() < 0.1);
        // oracle: imaginary part of the Jacobian spectrum at the scroll centre
        let mut jac = nalgebra::DMatrix::zeros(3, 3);
        let (mut fp, mut fm) = ([0.0; 3], [0.0; 3]);
        for j in 0..3 {
            let (mut xp, mut xm) = (ss.clone(), ss.clone());
            xp[j] += 1e-6;
            xm[j] -= 1e-6;
            c0.vector_field(0.0, &xp, &[0.0], &mut fp);
            c0.vector_field(0.0, &xm, &[0.0], &mut fm);
            for i in 0..3 {
                jac[(i, j)] = (fp[i] - fm[i]) / 2e-6;
            }
        }
        let omega = jac.complex_eigenvalues().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(omega > 0.0);
        let linear_period = 2.0 * std::f64::consts::PI / omega;

        let mut c = CircuitPlant::new(CircuitParams::default(), CircuitDrive::V1Node, [ss[0] + 0.01, ss[1], ss[2]]);
        let h = 0.05;
        let mut crossings = Vec::new();
        let mut prev = c.state()[0] - ss[0];
        while crossings.len() < 3 && c.time() < 5000.0 {
            c.step(&[0.0], h).unwrap();
            let cur = c.state()[0] - ss[0];
            if prev < 0.0 && cur >= 0.0 {
                crossings.push(c.time());
            }
            prev = cur;
        }
        assert_eq!(crossings.len(), 3);
        let period = (crossings[2] - crossings[0]) / 2.0;
        assert!((period - linear_period).abs() < 0.2 * linear_period, "period {period} vs {linear_period}");
    }

    #[test]
    fn observe_does_not_mutate() {
        let p = LorenzPlant::new(LorenzParams::default(), [1.0, 2.0, 3.0]);
        let before: Vec<u64> = p.state().iter().map(|v| v.to_bits()).collect();
        let y = p.observe();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
        let after: Vec<u64> = p.state().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn trajectory_csv_header() {
        let mut t = Trajectory::default();
        for i in 0..5 {
            t.push(i as f64, &[1.0, 2.0, 3.0], &[1.0, 2.0], &[0.5]);
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf, 2).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,x3,y1,y2,v1");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "2,1,2,3,1,2,0.5");
    }
}
