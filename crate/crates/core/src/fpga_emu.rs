//! Bit-accurate model of the hardware controller path: 32-bit saturating
//! fixed point, a nearest-entry tanh table, forward Euler on a fixed clock,
//! and ADC/DAC quantization around the plant.

use serde::{Deserialize, Serialize};

use crate::controller::{ControlRunResult, Reference};
use crate::error::{Error, Result};
use crate::numerics::norm2;
use crate::plants::Plant;
use crate::reservoir::Esn;

/// Signed 32-bit layout with `int_bits` integer and `frac_bits` fractional
/// bits (plus the sign bit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub int_bits: u32,
    pub frac_bits: u32,
}

impl QFormat {
    pub const Q4_27: QFormat = QFormat { int_bits: 4, frac_bits: 27 };

    pub fn new(int_bits: u32) -> Result<Self> {
        if int_bits > 30 {
            return Err(Error::Config(format!("Q{int_bits} leaves no fractional bits")));
        }
        Ok(QFormat { int_bits, frac_bits: 31 - int_bits })
    }

    /// Value of one least significant bit.
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Exclusive magnitude bound `2^I`.
    pub fn limit(&self) -> f64 {
        (self.int_bits as f64).exp2()
    }

    pub fn max_value(&self) -> f64 {
        i32::MAX as f64 * self.resolution()
    }

    pub fn min_value(&self) -> f64 {
        i32::MIN as f64 * self.resolution()
    }

    /// Nearest representable value, saturating at the ends of the range.
    pub fn from_f64(&self, x: f64) -> FixedPoint {
        if x.is_nan() {
            return FixedPoint::ZERO;
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round();
        FixedPoint(scaled.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
    }

    /// Like [`QFormat::from_f64`] but fails instead of saturating.
    pub fn try_from_f64(&self, name: &str, x: f64) -> Result<FixedPoint> {
        if !x.is_finite() || x.abs() >= self.limit() {
            return Err(Error::Format { name: name.to_string(), value: x, limit: self.limit() });
        }
        Ok(self.from_f64(x))
    }

    pub fn to_f64(&self, x: FixedPoint) -> f64 {
        x.0 as f64 * self.resolution()
    }

    pub fn one(&self) -> FixedPoint {
        self.from_f64(1.0)
    }

    /// Rescales a product or accumulator held with `2F` fractional bits,
    /// rounding half up, and saturates to 32 bits.
    pub fn narrow(&self, wide: i128) -> (FixedPoint, bool) {
        let f = self.frac_bits;
        let rounded = if f == 0 { wide } else { (wide + (1i128 << (f - 1))) >> f };
        saturate(rounded)
    }

    /// Saturating product with a single rounding.
    pub fn mul(&self, a: FixedPoint, b: FixedPoint) -> (FixedPoint, bool) {
        self.narrow(a.0 as i128 * b.0 as i128)
    }
}

impl Default for QFormat {
    fn default() -> Self {
        QFormat::Q4_27
    }
}

fn saturate(x: i128) -> (FixedPoint, bool) {
    if x > i32::MAX as i128 {
        (FixedPoint(i32::MAX), true)
    } else if x < i32::MIN as i128 {
        (FixedPoint(i32::MIN), true)
    } else {
        (FixedPoint(x as i32), false)
    }
}

/// Raw two's-complement word; the format lives with whoever owns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct FixedPoint(pub i32);

impl FixedPoint {
    pub const ZERO: FixedPoint = FixedPoint(0);
    pub const MAX: FixedPoint = FixedPoint(i32::MAX);
    pub const MIN: FixedPoint = FixedPoint(i32::MIN);

    pub fn raw(self) -> i32 {
        self.0
    }

    /// Sum and whether it clipped.
    pub fn clipping_add(self, other: FixedPoint) -> (FixedPoint, bool) {
        saturate(self.0 as i128 + other.0 as i128)
    }

    pub fn clipping_sub(self, other: FixedPoint) -> (FixedPoint, bool) {
        saturate(self.0 as i128 - other.0 as i128)
    }

    pub fn saturating_add(self, other: FixedPoint) -> FixedPoint {
        FixedPoint(self.0.saturating_add(other.0))
    }

    pub fn saturating_sub(self, other: FixedPoint) -> FixedPoint {
        FixedPoint(self.0.saturating_sub(other.0))
    }

    pub fn saturating_neg(self) -> FixedPoint {
        FixedPoint(self.0.saturating_neg())
    }
}

/// Nearest-entry tanh table over `[-x_max, x_max]`.
///
/// Entry `i` holds `tanh((i - 2^(bits-1)) * step)`, so the middle entry is
/// exactly zero and `table[mid + k] = -table[mid - k]`. Entry 0 doubles as
/// the clamp value; inputs at or past the ends return `±tanh(x_max)`, which
/// keeps the lookup exactly odd.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhLut {
    q: QFormat,
    x_max: f64,
    x_max_raw: i64,
    bits: u32,
    table: Vec<FixedPoint>,
}

impl TanhLut {
    pub fn new(q: QFormat, bits: u32, x_max: f64) -> Result<Self> {
        if !(1..=20).contains(&bits) {
            return Err(Error::Config(format!("lookup table of {bits} address bits")));
        }
        if !(x_max > 0.0) || x_max >= q.limit() {
            return Err(Error::Config(format!("tanh table range {x_max} outside the fixed-point range")));
        }
        let half = 1usize << (bits - 1);
        let step = x_max / half as f64;
        let pos: Vec<FixedPoint> = (0..=half).map(|k| q.from_f64((k as f64 * step).tanh())).collect();
        // negative side mirrored from the positive one so symmetry is exact
        let mut table: Vec<FixedPoint> = (1..=half).rev().map(|k| pos[k].saturating_neg()).collect();
        table.extend_from_slice(&pos[..half]);
        Ok(TanhLut { q, x_max, x_max_raw: q.from_f64(x_max).0 as i64, bits, table })
    }

    /// The 1024-entry table over `[-4, 4]` in Q4.27.
    pub fn standard() -> Self {
        TanhLut::new(QFormat::Q4_27, 10, 4.0).expect("standard table parameters are valid")
    }

    pub fn entries(&self) -> &[FixedPoint] {
        &self.table
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn format(&self) -> QFormat {
        self.q
    }

    /// Value returned for inputs at or beyond `x_max`.
    pub fn clamp_value(&self) -> FixedPoint {
        self.table[0].saturating_neg()
    }

    pub fn lookup(&self, x: FixedPoint) -> FixedPoint {
        let half = 1i64 << (self.bits - 1);
        let mag = (x.0 as i64).abs();
        // nearest grid index, ties away from zero
        let k = ((mag as i128 * half as i128 * 2 + self.x_max_raw as i128) / (2 * self.x_max_raw as i128)) as i64;
        let v = if k >= half { self.clamp_value() } else { self.table[(half + k) as usize] };
        if x.0 < 0 {
            v.saturating_neg()
        } else {
            v
        }
    }

    /// Worst-case absolute error against tanh: half a cell times the
    /// maximal slope, plus one rounding of the stored value.
    pub fn error_bound(&self) -> f64 {
        self.x_max / self.table.len() as f64 + 0.5 * self.q.resolution()
    }

    /// Largest observed `|lut(x) - tanh(x)|` over `samples` points spread
    /// across `[-span, span]`.
    pub fn measured_error(&self, span: f64, samples: usize) -> f64 {
        (0..samples)
            .map(|i| {
                let x = -span + 2.0 * span * i as f64 / (samples - 1).max(1) as f64;
                let fx = self.q.from_f64(x);
                (self.q.to_f64(self.lookup(fx)) - self.q.to_f64(fx).tanh()).abs()
            })
            .fold(0.0, f64::max)
    }

    /// One hex word per line, as loaded into a block RAM.
    pub fn dump_hex<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for v in &self.table {
            writeln!(w, "{:08x}", v.0 as u32)?;
        }
        Ok(())
    }
}

pub fn lut_tanh(lut: &TanhLut, x: FixedPoint) -> FixedPoint {
    lut.lookup(x)
}

/// Knobs for turning a trained [`Esn`] into a [`FixedEsn`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedConfig {
    pub qformat: QFormat,
    pub lut_bits: u32,
    pub lut_x_max: f64,
    /// Euler step, in the plant's time unit.
    pub dt: f64,
    /// Observables are multiplied by `2^-input_shift` on entry and the
    /// input weights by `2^input_shift`, so large signals fit the format.
    pub input_shift: i32,
    /// Readout weights are stored times `2^-output_shift` and the sum is
    /// shifted back; `None` picks the smallest shift that fits.
    pub output_shift: Option<i32>,
}

impl FixedConfig {
    /// Q4.27, 10-bit table over `[-4, 4]`, 1 µs clock.
    pub fn circuit() -> Self {
        FixedConfig {
            qformat: QFormat::Q4_27,
            lut_bits: 10,
            lut_x_max: 4.0,
            dt: 1.0,
            input_shift: 0,
            output_shift: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_input_shift(mut self, shift: i32) -> Self {
        self.input_shift = shift;
        self
    }
}

impl Default for FixedConfig {
    fn default() -> Self {
        FixedConfig::circuit()
    }
}

/// Largest quantization error per parameter group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub max_error_w: f64,
    pub max_error_w_in: f64,
    pub max_error_b: f64,
    pub max_error_w_out: f64,
    pub max_error_dt_over_c: f64,
    pub output_shift: i32,
}

impl QuantizationReport {
    pub fn max_error(&self) -> f64 {
        [self.max_error_w, self.max_error_w_in, self.max_error_b, self.max_error_w_out, self.max_error_dt_over_c]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Fixed-point reservoir layer stepped with forward Euler.
#[derive(Debug, Clone)]
pub struct FixedEsn {
    q: QFormat,
    lut: TanhLut,
    n: usize,
    m: usize,
    l: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    w: Vec<FixedPoint>,
    w_in_y: Vec<FixedPoint>,
    w_in_r: Vec<FixedPoint>,
    bias: Vec<FixedPoint>,
    w_out: Vec<FixedPoint>,
    dt_over_c: FixedPoint,
    input_shift: i32,
    output_shift: i32,
    u: Vec<FixedPoint>,
    out: Vec<FixedPoint>,
    saturations: u64,
}

fn quantize_all(
    q: QFormat,
    name: &str,
    values: impl Iterator<Item = (String, f64)>,
    scale: f64,
    worst: &mut f64,
) -> Result<Vec<FixedPoint>> {
    let mut out = Vec::new();
    for (idx, v) in values {
        let s = v * scale;
        let fx = q.try_from_f64(&format!("{name}{idx}"), s)?;
        *worst = worst.max((q.to_f64(fx) / scale - v).abs());
        out.push(fx);
    }
    Ok(out)
}

/// Rounds every parameter of a trained layer to the nearest word.
///
/// Fails with a format error naming the first weight that does not fit.
pub fn quantize(esn: &Esn, cfg: &FixedConfig) -> Result<(FixedEsn, QuantizationReport)> {
    let q = cfg.qformat;
    let w_out_f = esn.readout_weights().ok_or(Error::Untrained)?;
    let lut = TanhLut::new(q, cfg.lut_bits, cfg.lut_x_max)?;
    if !(cfg.dt > 0.0) {
        return Err(Error::Config("Euler step must be positive".into()));
    }
    let (n, m, l) = (esn.size(), esn.obs_dim(), esn.input_dim());
    let mut rep = QuantizationReport::default();

    let rec = esn.recurrent();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::with_capacity(rec.nnz());
    let mut w_entries = Vec::with_capacity(rec.nnz());
    for r in 0..n {
        for (c, v) in rec.row(r) {
            col_idx.push(c);
            w_entries.push((format!("[{r},{c}]"), v));
        }
        row_ptr.push(col_idx.len());
    }
    let w = quantize_all(q, "W", w_entries.into_iter(), 1.0, &mut rep.max_error_w)?;

    let in_scale = (cfg.input_shift as f64).exp2();
    let dense = |mat: &nalgebra::DMatrix<f64>| -> Vec<(String, f64)> {
        let mut v = Vec::with_capacity(mat.len());
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                v.push((format!("[{i},{j}]"), mat[(i, j)]));
            }
        }
        v
    };
    let w_in_y =
        quantize_all(q, "W_in_y", dense(&esn.input_weights_y()).into_iter(), in_scale, &mut rep.max_error_w_in)?;
    let w_in_r =
        quantize_all(q, "W_in_r", dense(&esn.input_weights_r()).into_iter(), in_scale, &mut rep.max_error_w_in)?;
    let bias = quantize_all(
        q,
        "b",
        esn.bias().iter().enumerate().map(|(i, &b)| (format!("[{i}]"), b)),
        1.0,
        &mut rep.max_error_b,
    )?;

    let max_out = w_out_f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let output_shift = match cfg.output_shift {
        Some(s) => s,
        None => {
            let mut s = 0;
            // one LSB of head room keeps the rounded value below the limit
            while max_out * (-(s as f64)).exp2() >= q.limit() - q.resolution() {
                s += 1;
            }
            s
        }
    };
    rep.output_shift = output_shift;
    let w_out = quantize_all(
        q,
        "W_out",
        dense(w_out_f).into_iter(),
        (-(output_shift as f64)).exp2(),
        &mut rep.max_error_w_out,
    )?;

    let ratio = cfg.dt / esn.time_constant();
    let dt_over_c = q.try_from_f64("dt/c", ratio)?;
    rep.max_error_dt_over_c = (q.to_f64(dt_over_c) - ratio).abs();

    let u: Vec<FixedPoint> = esn.state().0.iter().map(|&x| q.from_f64(x)).collect();
    Ok((
        FixedEsn {
            q,
            lut,
            n,
            m,
            l,
            row_ptr,
            col_idx,
            w,
            w_in_y,
            w_in_r,
            bias,
            w_out,
            dt_over_c,
            input_shift: cfg.input_shift,
            output_shift,
            u,
            out: vec![FixedPoint::ZERO; l],
            saturations: 0,
        },
        rep,
    ))
}

impl FixedEsn {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn obs_dim(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.l
    }

    pub fn format(&self) -> QFormat {
        self.q
    }

    pub fn lut(&self) -> &TanhLut {
        &self.lut
    }

    pub fn state(&self) -> &[FixedPoint] {
        &self.u
    }

    pub fn state_f64(&self) -> Vec<f64> {
        self.u.iter().map(|&x| self.q.to_f64(x)).collect()
    }

    pub fn set_state_f64(&mut self, u: &[f64]) {
        self.u = u.iter().map(|&x| self.q.from_f64(x)).collect();
    }

    pub fn reset(&mut self) {
        self.u.iter_mut().for_each(|x| *x = FixedPoint::ZERO);
        self.out.iter_mut().for_each(|x| *x = FixedPoint::ZERO);
        self.saturations = 0;
    }

    /// Count of clipped operations since the last reset.
    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    pub fn input_shift(&self) -> i32 {
        self.input_shift
    }

    /// Converts a physical observable to the word fed to the input layer.
    pub fn encode_input(&self, x: f64) -> FixedPoint {
        self.q.from_f64(x * (-(self.input_shift as f64)).exp2())
    }

    /// Last readout, still in fixed point (before the output shift).
    pub fn output(&self) -> &[FixedPoint] {
        &self.out
    }

    /// Last readout in physical units.
    pub fn output_f64(&self) -> Vec<f64> {
        let s = (self.output_shift as f64).exp2();
        self.out.iter().map(|&x| self.q.to_f64(x) * s).collect()
    }

    /// One Euler update of the reservoir driven by already-encoded `y` and
    /// `r_delta`, followed by the readout of the new state.
    pub fn fixed_step(&mut self, y: &[FixedPoint], r_delta: &[FixedPoint]) -> Result<()> {
        if y.len() != self.m || r_delta.len() != self.m {
            return Err(Error::Shape(format!(
                "fixed layer expects {} observables, got {} and {}",
                self.m,
                y.len(),
                r_delta.len()
            )));
        }
        let f = self.q.frac_bits;
        let mut next = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut acc: i128 = (self.bias[i].0 as i128) << f;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.w[k].0 as i128 * self.u[self.col_idx[k]].0 as i128;
            }
            let wy = &self.w_in_y[i * self.m..(i + 1) * self.m];
            let wr = &self.w_in_r[i * self.m..(i + 1) * self.m];
            for j in 0..self.m {
                acc += wy[j].0 as i128 * y[j].0 as i128 + wr[j].0 as i128 * r_delta[j].0 as i128;
            }
            let (pre, s0) = self.q.narrow(acc);
            let a = self.lut.lookup(pre);
            let (diff, s1) = a.clipping_sub(self.u[i]);
            let (inc, s2) = self.q.mul(self.dt_over_c, diff);
            let (u, s3) = self.u[i].clipping_add(inc);
            self.saturations += (s0 as u64) + (s1 as u64) + (s2 as u64) + (s3 as u64);
            next.push(u);
        }
        self.u = next;
        for k in 0..self.l {
            let row = &self.w_out[k * self.n..(k + 1) * self.n];
            let acc: i128 = row.iter().zip(&self.u).map(|(w, u)| w.0 as i128 * u.0 as i128).sum();
            let (v, s) = self.q.narrow(acc);
            self.saturations += s as u64;
            self.out[k] = v;
        }
        Ok(())
    }

    /// Encodes physical `y` and `r_delta`, steps, and returns the readout in
    /// physical units.
    pub fn step_f64(&mut self, y: &[f64], r_delta: &[f64]) -> Result<Vec<f64>> {
        let ye: Vec<FixedPoint> = y.iter().map(|&x| self.encode_input(x)).collect();
        let re: Vec<FixedPoint> = r_delta.iter().map(|&x| self.encode_input(x)).collect();
        self.fixed_step(&ye, &re)?;
        Ok(self.output_f64())
    }
}

/// Float counterpart of [`FixedEsn::fixed_step`] over a recorded input
/// stream: same Euler recurrence, exact tanh, no rounding. Starts from the
/// layer's current state and returns the readout after every step.
pub fn euler_reference(esn: &Esn, dt: f64, y: &[Vec<f64>], r_delta: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if y.len() != r_delta.len() {
        return Err(Error::Shape("input streams differ in length".into()));
    }
    let n = esn.size();
    let ratio = dt / esn.time_constant();
    let mut u = esn.state().0.clone();
    let mut pre = vec![0.0; n];
    let mut out = Vec::with_capacity(y.len());
    let mut v = vec![0.0; esn.input_dim()];
    for (yk, rk) in y.iter().zip(r_delta) {
        esn.preactivation_into(&u, yk, rk, &mut pre);
        for (ui, p) in u.iter_mut().zip(&pre) {
            *ui += ratio * (p.tanh() - *ui);
        }
        esn.readout_into(&u, &mut v)?;
        out.push(v.clone());
    }
    Ok(out)
}

/// Uniform mid-tread converter over `[-full_scale, full_scale]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Converter {
    pub bits: u32,
    pub full_scale: f64,
}

impl Converter {
    pub fn new(bits: u32, full_scale: f64) -> Self {
        Converter { bits, full_scale }
    }

    pub fn lsb(&self) -> f64 {
        2.0 * self.full_scale / (self.bits as f64).exp2()
    }

    /// Rounds to the nearest code and clips to the representable codes.
    pub fn convert(&self, x: f64) -> f64 {
        let lsb = self.lsb();
        let top = (self.bits as f64 - 1.0).exp2();
        let code = (x / lsb).round().clamp(-top, top - 1.0);
        code * lsb
    }
}

/// Timing and converters around the emulated controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationConfig {
    /// Controller clock period; must be an integer multiple of `h`.
    pub clock: f64,
    /// Plant integration step.
    pub h: f64,
    /// Look-ahead used for the reference input.
    pub delta: f64,
    pub adc: Option<Converter>,
    pub dac: Option<Converter>,
}

impl EmulationConfig {
    /// 1 MHz clock, 12-bit ADC and 16-bit DAC over ±1.
    pub fn circuit(delta: f64, h: f64) -> Self {
        EmulationConfig { clock: 1.0, h, delta, adc: Some(Converter::new(12, 1.0)), dac: Some(Converter::new(16, 1.0)) }
    }

    pub fn without_converters(mut self) -> Self {
        self.adc = None;
        self.dac = None;
        self
    }

    fn substeps(&self) -> Result<usize> {
        if !(self.h > 0.0) || !(self.clock > 0.0) {
            return Err(Error::Config("clock and plant step must be positive".into()));
        }
        let k = (self.clock / self.h).round();
        if k < 1.0 || (k * self.h - self.clock).abs() > 1e-9 * self.clock {
            return Err(Error::Config(format!(
                "controller clock {} is not an integer multiple of the plant step {}",
                self.clock, self.h
            )));
        }
        Ok(k as usize)
    }
}

/// Closed loop with fixed-point layers: every clock tick the observables
/// pass through the ADC, each layer takes one Euler step, the summed
/// readout passes through the DAC and is held while the plant advances.
pub fn emulate_control_run<P: Plant + ?Sized>(
    plant: &mut P,
    layers: &mut [FixedEsn],
    reference: &Reference,
    duration: f64,
    cfg: &EmulationConfig,
) -> Result<ControlRunResult> {
    let sub = cfg.substeps()?;
    let ticks = (duration / cfg.clock).round() as usize;
    let (m, l) = (plant.obs_dim(), plant.input_dim());
    for f in layers.iter() {
        if f.obs_dim() != m || f.input_dim() != l {
            return Err(Error::Shape(format!(
                "fixed layer is {}->{} but the plant is {}->{}",
                f.obs_dim(),
                f.input_dim(),
                m,
                l
            )));
        }
    }
    reference.validate()?;
    if reference.dim() != m {
        return Err(Error::Shape(format!("reference has dimension {}, plant observes {m}", reference.dim())));
    }
    let bound = 10.0 * plant.attractor_bound();
    let mut out = ControlRunResult {
        h: cfg.clock,
        t: Vec::with_capacity(ticks + 1),
        y: Vec::with_capacity(ticks + 1),
        r: Vec::with_capacity(ticks + 1),
        v: Vec::with_capacity(ticks + 1),
        layer_v: Vec::with_capacity(ticks + 1),
    };
    let adc = |x: f64| cfg.adc.map_or(x, |c| c.convert(x));
    let dac = |x: f64| cfg.dac.map_or(x, |c| c.convert(x));
    let mut v = vec![0.0; l];
    let mut per: Vec<Vec<f64>> = vec![vec![0.0; l]; layers.len()];
    for tick in 0..=ticks {
        let t = plant.time();
        let y = plant.observe();
        let norm = norm2(&y);
        if !(norm <= bound) {
            return Err(Error::ControlDiverged { t, norm, bound });
        }
        out.t.push(t);
        out.y.push(y.clone());
        out.r.push(reference.eval(t));
        out.v.push(v.clone());
        out.layer_v.push(per.clone());
        if tick == ticks {
            break;
        }
        let y_meas: Vec<f64> = y.iter().map(|&x| adc(x)).collect();
        let r_delta = reference.eval(t + cfg.delta);
        v.iter_mut().for_each(|x| *x = 0.0);
        for (k, layer) in layers.iter_mut().enumerate() {
            per[k] = layer.step_f64(&y_meas, &r_delta)?;
            for (a, b) in v.iter_mut().zip(&per[k]) {
                *a += b;
            }
        }
        v.iter_mut().for_each(|x| *x = dac(*x));
        for _ in 0..sub {
            plant.step(&v, cfg.h)?;
        }
    }
    Ok(out)
}
