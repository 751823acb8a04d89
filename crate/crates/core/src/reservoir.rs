//! Continuous-time echo state network layer.
//!
//! The reservoir obeys `c du/dt = -u + tanh(W u + W_in^y y + W_in^r r + b)`
//! with a linear readout `v = W_out u`. During training `r` is the plant
//! observable `δ` ahead; in control it is the reference `δ` ahead.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{spectral_radius, DenseMatrix, SparseMatrix, StateVector};

/// Hyperparameters from which a reservoir is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnHyperparams {
    /// Node count.
    pub n: usize,
    /// Target spectral radius of `W`.
    pub rho: f64,
    /// Mean in-degree; each entry of `W` is nonzero with probability `k / n`.
    pub k: f64,
    /// Input weights are uniform in `[-sigma, sigma]`.
    pub sigma: f64,
    #[serde(default)]
    pub b_mean: f64,
    pub b_max: f64,
    /// Time constant.
    pub c: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EsnHyperparams {
    /// Reservoir used for the Mackey-Glass study.
    pub fn mackey_glass() -> Self {
        EsnHyperparams { n: 100, rho: 1.15, k: 10.0, sigma: 1.0, b_mean: 0.0, b_max: 1.0, c: 0.6, seed: 0 }
    }

    /// Reservoir used for the Lorenz experiments.
    pub fn lorenz() -> Self {
        EsnHyperparams { n: 200, rho: 0.9, k: 20.0, sigma: 0.05, b_mean: 0.0, b_max: 1.0, c: 0.01, seed: 0 }
    }

    /// Reservoir used for the double-scroll circuit; time in microseconds.
    pub fn circuit() -> Self {
        EsnHyperparams { n: 30, rho: 0.9, k: 3.0, sigma: 0.95, b_mean: 0.0, b_max: 0.5, c: 24.0, seed: 0 }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n < 1 {
            return bad("reservoir needs at least one node");
        }
        if !(self.rho > 0.0) {
            return bad("spectral radius must be positive");
        }
        if !(self.k >= 1.0 && self.k <= self.n as f64) {
            return bad("mean in-degree k must lie in [1, N]");
        }
        if !(self.sigma >= 0.0) || !(self.b_max >= 0.0) || !self.b_mean.is_finite() {
            return bad("sigma and b_max must be non-negative");
        }
        if !(self.c > 0.0) {
            return bad("time constant must be positive");
        }
        Ok(())
    }
}

/// One reservoir layer with its (possibly untrained) readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Esn {
    pub params: EsnHyperparams,
    obs_dim: usize,
    input_dim: usize,
    w: SparseMatrix,
    /// Row-major `n x m`.
    w_in_y: Vec<f64>,
    /// Row-major `n x m`.
    w_in_r: Vec<f64>,
    bias: Vec<f64>,
    state: StateVector,
    w_out: Option<DenseMatrix>,
    /// Seeds of draws rejected because `W` came out with zero spectral radius.
    #[serde(default)]
    pub redraws: Vec<u64>,
}

const MAX_REDRAWS: u64 = 64;

/// Draws a reservoir for an `m`-dimensional observable driving an
/// `l`-dimensional plant input.
pub fn instantiate(params: &EsnHyperparams, m: usize, l: usize) -> Result<Esn> {
    params.validate()?;
    if m < 1 || l < 1 {
        return Err(Error::Config("observable and input dimensions must be >= 1".into()));
    }
    let n = params.n;
    let p = (params.k / n as f64).min(1.0);
    let mut redraws = Vec::new();
    let mut stream = 0u64;
    let (mut rng, mut w, radius) = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(stream);
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if rng.random_bool(p) {
                    entries.push((r, c, rng.random_range(-1.0..=1.0)));
                }
            }
        }
        let w = SparseMatrix::from_sorted_triplets(n, n, &entries);
        let radius = spectral_radius(&w);
        if radius > 0.0 {
            break (rng, w, radius);
        }
        redraws.push(stream);
        stream += 1;
        if stream > MAX_REDRAWS {
            return Err(Error::Config(format!("no reservoir with nonzero spectral radius after {MAX_REDRAWS} draws")));
        }
    };
    w.scale(params.rho / radius);

    let mut uniform = |half: f64, centre: f64, count: usize| -> Vec<f64> {
        if half == 0.0 {
            vec![centre; count]
        } else {
            (0..count).map(|_| centre + rng.random_range(-half..=half)).collect()
        }
    };
    let w_in_y = uniform(params.sigma, 0.0, n * m);
    let w_in_r = uniform(params.sigma, 0.0, n * m);
    let bias = uniform(params.b_max, params.b_mean, n);

    Ok(Esn {
        params: params.clone(),
        obs_dim: m,
        input_dim: l,
        w,
        w_in_y,
        w_in_r,
        bias,
        state: StateVector::zeros(n),
        w_out: None,
        redraws,
    })
}

impl Esn {
    /// Builds a layer from explicit weights. `w_in_y`/`w_in_r` are `n x m`.
    pub fn from_parts(
        params: EsnHyperparams,
        w: SparseMatrix,
        w_in_y: &DenseMatrix,
        w_in_r: &DenseMatrix,
        bias: Vec<f64>,
        input_dim: usize,
    ) -> Result<Esn> {
        let n = w.rows();
        let m = w_in_y.ncols();
        if w.cols() != n || w_in_y.nrows() != n || w_in_r.shape() != (n, m) || bias.len() != n || params.n != n {
            return Err(Error::Shape("inconsistent reservoir weight shapes".into()));
        }
        let row_major = |d: &DenseMatrix| -> Vec<f64> { (0..n).flat_map(|i| (0..m).map(move |j| d[(i, j)])).collect() };
        Ok(Esn {
            params,
            obs_dim: m,
            input_dim,
            w,
            w_in_y: row_major(w_in_y),
            w_in_r: row_major(w_in_r),
            bias,
            state: StateVector::zeros(n),
            w_out: None,
            redraws: Vec::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.params.n
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn time_constant(&self) -> f64 {
        self.params.c
    }

    pub fn recurrent(&self) -> &SparseMatrix {
        &self.w
    }

    /// `W_in^y` as an `n x m` matrix.
    pub fn input_weights_y(&self) -> DenseMatrix {
        DenseMatrix::from_row_slice(self.size(), self.obs_dim, &self.w_in_y)
    }

    /// `W_in^r` as an `n x m` matrix.
    pub fn input_weights_r(&self) -> DenseMatrix {
        DenseMatrix::from_row_slice(self.size(), self.obs_dim, &self.w_in_r)
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn set_state(&mut self, u: &[f64]) {
        self.state.copy_from_slice(u);
    }

    pub fn readout_weights(&self) -> Option<&DenseMatrix> {
        self.w_out.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.w_out.is_some()
    }

    pub fn set_readout(&mut self, w_out: DenseMatrix) -> Result<()> {
        if w_out.shape() != (self.input_dim, self.size()) {
            return Err(Error::Shape(format!(
                "readout must be {}x{}, got {}x{}",
                self.input_dim,
                self.size(),
                w_out.nrows(),
                w_out.ncols()
            )));
        }
        self.w_out = Some(w_out);
        Ok(())
    }

    /// Zeroes the reservoir state; weights are untouched.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Pre-activation `W u + W_in^y y + W_in^r r + b` written into `out`.
    #[inline]
    pub fn preactivation_into(&self, u: &[f64], y: &[f64], r: &[f64], out: &mut [f64]) {
        let m = self.obs_dim;
        self.w.mul_vec_into(u, out);
        for (i, o) in out.iter_mut().enumerate() {
            let wy = &self.w_in_y[i * m..(i + 1) * m];
            let wr = &self.w_in_r[i * m..(i + 1) * m];
            let mut acc = *o + self.bias[i];
            for j in 0..m {
                acc += wy[j] * y[j] + wr[j] * r[j];
            }
            *o = acc;
        }
    }

    /// `du/dt` at reservoir state `u`, written into `du`.
    #[inline]
    pub fn derivative_into(&self, u: &[f64], y: &[f64], r: &[f64], du: &mut [f64]) {
        self.preactivation_into(u, y, r, du);
        let inv_c = 1.0 / self.params.c;
        for (d, &ui) in du.iter_mut().zip(u) {
            *d = (d.tanh() - ui) * inv_c;
        }
    }

    /// `du/dt` at the layer's current state.
    pub fn esn_derivative(&self, y: &[f64], r_delta: &[f64]) -> Result<StateVector> {
        if y.len() != self.obs_dim || r_delta.len() != self.obs_dim {
            return Err(Error::Shape(format!("reservoir expects {}-dimensional inputs", self.obs_dim)));
        }
        let mut du = StateVector::zeros(self.size());
        self.derivative_into(&self.state, y, r_delta, &mut du);
        Ok(du)
    }

    /// `W_out u` for an arbitrary reservoir state; `out` has length `l`.
    #[inline]
    pub fn readout_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let w_out = self.w_out.as_ref().ok_or(Error::Untrained)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = w_out.row(i).iter().zip(u).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    /// `v = W_out u` at the current state.
    pub fn readout(&self) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.input_dim];
        self.readout_into(&self.state, &mut v)?;
        Ok(v)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = EsnFile { format: ESN_FORMAT.to_string(), version: ESN_FORMAT_VERSION, esn: self.clone() };
        std::fs::write(path, serde_json::to_vec_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Esn> {
        let file: EsnFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if file.format != ESN_FORMAT {
            return Err(Error::Parse(format!("not a reservoir file: format {:?}", file.format)));
        }
        if file.version != ESN_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported reservoir file version {}", file.version)));
        }
        Ok(file.esn)
    }
}

const ESN_FORMAT: &str = "resctl-esn";
const ESN_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct EsnFile {
    format: String,
    version: u32,
    esn: Esn,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ridge_solve, Rk4};

    #[test]
    fn mackey_glass_reservoir_hits_target_radius() {
        let esn = instantiate(&EsnHyperparams::mackey_glass(), 2, 1).unwrap();
        assert!((spectral_radius(esn.recurrent()) - 1.15).abs() < 1e-4);
        assert!(esn.state().iter().all(|&v| v == 0.0));
        assert!(esn.w_in_y.iter().chain(&esn.w_in_r).all(|v| v.abs() <= 1.0));
        assert!(esn.bias().iter().all(|v| v.abs() <= 1.0));
        // mean in-degree close to k
        let nnz = esn.recurrent().nnz() as f64;
        assert!((nnz / 100.0 - 10.0).abs() < 2.0, "mean in-degree {}", nnz / 100.0);
    }

    #[test]
    fn scalar_reservoir_rescales_to_rho() {
        let p = EsnHyperparams { n: 1, k: 1.0, rho: 0.5, ..EsnHyperparams::mackey_glass() };
        let esn = instantiate(&p, 1, 1).unwrap();
        let w = esn.recurrent().to_dense();
        assert!((w[(0, 0)].abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_input_scale_gives_zero_input_weights() {
        let p = EsnHyperparams { sigma: 0.0, ..EsnHyperparams::mackey_glass() };
        let esn = instantiate(&p, 3, 1).unwrap();
        assert!(esn.input_weights_y().iter().all(|&v| v == 0.0));
        assert!(esn.input_weights_r().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let base = EsnHyperparams::mackey_glass();
        for bad in [
            EsnHyperparams { n: 0, ..base.clone() },
            EsnHyperparams { rho: 0.0, ..base.clone() },
            EsnHyperparams { k: 200.0, ..base.clone() },
            EsnHyperparams { c: -1.0, ..base.clone() },
            EsnHyperparams { sigma: -0.1, ..base.clone() },
        ] {
            assert!(instantiate(&bad, 1, 1).is_err());
        }
        assert!(instantiate(&base, 0, 1).is_err());
    }

    fn scalar_esn(w: f64, wy: f64, wr: f64, b: f64, c: f64) -> Esn {
        let p = EsnHyperparams { n: 1, k: 1.0, c, ..EsnHyperparams::mackey_glass() };
        Esn::from_parts(
            p,
            SparseMatrix::from_dense(&DenseMatrix::from_element(1, 1, w)),
            &DenseMatrix::from_element(1, 1, wy),
            &DenseMatrix::from_element(1, 1, wr),
            vec![b],
            1,
        )
        .unwrap()
    }

    #[test]
    fn derivative_examples() {
        let esn = instantiate(&EsnHyperparams { b_max: 0.0, ..EsnHyperparams::mackey_glass() }, 1, 1).unwrap();
        let d = esn.esn_derivative(&[0.0], &[0.0]).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        let scalar = scalar_esn(0.0, 1.0, 0.0, 0.0, 1.0);
        let d = scalar.esn_derivative(&[0.5], &[0.0]).unwrap();
        assert!((d[0] - 0.462_117_16).abs() < 1e-8);

        // saturation: |du/dt| -> 1/c
        let sat = scalar_esn(0.0, 1.0, 1.0, 0.0, 0.25);
        let d = sat.esn_derivative(&[1e3], &[1e3]).unwrap();
        assert!((d[0] - 4.0).abs() < 1e-12);
        assert!(sat.esn_derivative(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn readout_examples() {
        let p = EsnHyperparams { k: 2.0, ..EsnHyperparams::mackey_glass().with_n(5) };
        let mut esn = instantiate(&p, 1, 1).unwrap();
        assert!(matches!(esn.readout(), Err(Error::Untrained)));
        esn.set_readout(DenseMatrix::zeros(1, 5)).unwrap();
        esn.set_state(&[0.3, -1.0, 2.0, 0.1, 0.0]);
        assert_eq!(esn.readout().unwrap(), vec![0.0]);

        esn.set_readout(DenseMatrix::from_row_slice(1, 5, &[0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        esn.set_state(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(esn.readout().unwrap(), vec![1.0]);
        assert!(esn.set_readout(DenseMatrix::zeros(2, 5)).is_err());

        // readout fitted to the single sample (u = 1, v = 1) with beta = 1
        let mut s = scalar_esn(0.0, 1.0, 0.0, 0.0, 1.0);
        let one = DenseMatrix::from_element(1, 1, 1.0);
        s.set_readout(ridge_solve(&one, &one, 1.0).unwrap()).unwrap();
        s.set_state(&[0.8]);
        assert!((s.readout().unwrap()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn reset_zeroes_state_only() {
        let mut esn = instantiate(&EsnHyperparams::mackey_glass().with_n(20), 1, 1).unwrap();
        esn.set_state(&[0.5; 20]);
        let before = esn.recurrent().clone();
        esn.reset();
        assert!(esn.state().iter().all(|&v| v == 0.0));
        let once = esn.clone();
        esn.reset();
        assert_eq!(esn, once);
        assert_eq!(esn.recurrent(), &before);
    }

    #[test]
    fn same_seed_same_reservoir() {
        let p = EsnHyperparams::lorenz().with_seed(42);
        assert_eq!(instantiate(&p, 3, 3).unwrap(), instantiate(&p, 3, 3).unwrap());
        assert_ne!(
            instantiate(&p, 3, 3).unwrap().recurrent(),
            instantiate(&p.clone().with_seed(43), 3, 3).unwrap().recurrent()
        );
    }

    fn drive(esn: &Esn, u: &mut [f64], t_end: f64, h: f64) {
        let mut rk = Rk4::new(u.len());
        let mut t = 0.0;
        while t < t_end {
            rk.step(
                |t, u, du| {
                    let y = [0.5 * (0.7 * t).sin()];
                    let r = [0.5 * (0.7 * t + 0.3).sin()];
                    esn.derivative_into(u, &y, &r, du)
                },
                u,
                t,
                h,
            )
            .unwrap();
            t += h;
        }
    }

    #[test]
    fn echo_state_forgets_initial_condition() {
        let p = EsnHyperparams { rho: 0.9, ..EsnHyperparams::mackey_glass() };
        let esn = instantiate(&p, 1, 1).unwrap();
        let mut a = vec![0.0; 100];
        let mut b: Vec<f64> = (0..100).map(|i| ((i * 37 % 17) as f64 / 8.0) - 1.0).collect();
        drive(&esn, &mut a, 50.0 * p.c, 0.05);
        drive(&esn, &mut b, 50.0 * p.c, 0.05);
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "state difference {diff}");
        // states settle inside the tanh ball
        assert!(a.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn derivative_is_deterministic() {
        let esn = instantiate(&EsnHyperparams::mackey_glass().with_seed(9), 1, 1).unwrap();
        let u: Vec<f64> = (0..100).map(|i| (i as f64 * 0.13).sin()).collect();
        let mut d1 = vec![0.0; 100];
        let mut d2 = vec![0.0; 100];
        esn.derivative_into(&u, &[0.3], &[0.9], &mut d1);
        esn.derivative_into(&u, &[0.3], &[0.9], &mut d2);
        assert_eq!(
            d1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            d2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("esn.json");
        let mut esn = instantiate(&EsnHyperparams::circuit().with_seed(3), 2, 1).unwrap();
        esn.set_readout(DenseMatrix::from_fn(1, 30, |_, j| j as f64 * 0.01)).unwrap();
        esn.save_json(&path).unwrap();
        assert_eq!(Esn::load_json(&path).unwrap(), esn);
        std::fs::write(&path, br#"{"format":"other","version":1,"esn":null}"#).unwrap();
        assert!(Esn::load_json(&path).is_err());
    }
}
