//! Numerical kernels shared by the plants, reservoirs and training code:
//! a fixed-step RK4 integrator, a CSR sparse matrix, a spectral-radius
//! estimator and the Tikhonov (ridge) readout solve.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// A real state vector (plant state, reservoir state).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Reusable stage buffers for the classical fourth-order Runge-Kutta method.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], stage: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advances `x` in place from `t` to `t + h`. The vector field is called
    /// as `f(t, x, dx)`. On a non-finite result `x` is left untouched.
    pub fn step<F>(&mut self, mut f: F, x: &mut [f64], t: f64, h: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        if n != self.dim() {
            *self = Rk4::new(n);
        }
        let half = 0.5 * h;

        f(t, x, &mut self.k1);
        for i in 0..n {
            self.stage[i] = x[i] + half * self.k1[i];
        }
        f(t + half, &self.stage, &mut self.k2);
        for i in 0..n {
            self.stage[i] = x[i] + half * self.k2[i];
        }
        f(t + half, &self.stage, &mut self.k3);
        for i in 0..n {
            self.stage[i] = x[i] + h * self.k3[i];
        }
        f(t + h, &self.stage, &mut self.k4);

        let sixth = h / 6.0;
        for i in 0..n {
            self.stage[i] = x[i] + sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if self.stage.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: t + h });
        }
        x.copy_from_slice(&self.stage);
        Ok(())
    }
}

/// One classical RK4 step of `f` from `(t, x)` with step `h`.
pub fn rk4_step<F>(f: F, x: &StateVector, t: f64, h: f64) -> Result<StateVector>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let mut out = x.clone();
    Rk4::new(x.len()).step(f, &mut out, t, h)?;
    Ok(out)
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix { rows, cols, row_ptr: vec![0; rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Builds from `(row, col, value)` triplets. Entries must be sorted by
    /// row then column and unique; zeros are kept as explicit entries.
    pub fn from_sorted_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for &(r, c, v) in entries {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix { rows, cols, row_ptr, col_idx, values }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_sorted_triplets(m.nrows(), m.ncols(), &entries)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// Entries of row `r` as `(column, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `out = self * x`
    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[r] = acc;
        }
    }
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_TOL: f64 = 1e-10;
const RITZ_EVERY: usize = 20;
const KRYLOV_DIM: usize = 10;

/// Magnitude of the largest eigenvalue of a square matrix.
///
/// Power iteration from a fixed pseudo-random start. Every few sweeps a
/// short Arnoldi factorisation is built from the current iterate and the
/// largest-modulus Ritz value is taken as the estimate, which resolves the
/// complex-conjugate dominant pairs that make plain power iteration
/// oscillate. Returns 0 for nilpotent and zero matrices.
pub fn spectral_radius(w: &SparseMatrix) -> f64 {
    assert_eq!(w.rows(), w.cols(), "spectral radius needs a square matrix");
    let n = w.rows();
    if n == 0 || w.values.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let krylov = n.min(KRYLOV_DIM);
    let mut y = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut settled = 0;
    for it in 0..POWER_MAX_ITERS {
        if it % RITZ_EVERY == 0 {
            let est = ritz_radius(w, &x, krylov);
            if est == 0.0 {
                return 0.0;
            }
            if (est - prev).abs() <= POWER_TOL * est {
                settled += 1;
                if settled >= 2 {
                    return est;
                }
            } else {
                settled = 0;
            }
            prev = est;
        }
        w.mul_vec_into(&x, &mut y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    prev
}

/// Largest |Ritz value| of an Arnoldi factorisation of size `k` started at `x`.
fn ritz_radius(w: &SparseMatrix, x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    let x0 = norm2(x);
    basis.push(x.iter().map(|v| v / x0).collect());
    let mut h = DenseMatrix::zeros(k + 1, k);
    let mut size = k;
    let mut wv = vec![0.0; n];
    let scale = w.values.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    for j in 0..k {
        w.mul_vec_into(&basis[j], &mut wv);
        // modified Gram-Schmidt, two passes
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let proj: f64 = b.iter().zip(&wv).map(|(a, c)| a * c).sum();
                h[(i, j)] += proj;
                wv.iter_mut().zip(b).for_each(|(c, a)| *c -= proj * a);
            }
        }
        let hn = norm2(&wv);
        h[(j + 1, j)] = hn;
        if hn <= 1e-13 * scale {
            size = j + 1;
            break;
        }
        if j + 1 < k {
            basis.push(wv.iter().map(|v| v / hn).collect());
        }
    }
    let square = h.view((0, 0), (size, size)).into_owned();
    square.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Streaming accumulator for the ridge normal equations.
///
/// Holds `G = sum u u^T` and `C = sum v u^T`; samples are buffered into
/// blocks so the Gram update runs as a matrix product.
#[derive(Debug, Clone)]
pub struct RidgeAccumulator {
    gram: DenseMatrix,
    cross: DenseMatrix,
    block_u: DenseMatrix,
    block_v: DenseMatrix,
    filled: usize,
    samples: usize,
}

const RIDGE_BLOCK: usize = 256;

impl RidgeAccumulator {
    pub fn new(features: usize, outputs: usize) -> Self {
        RidgeAccumulator {
            gram: DenseMatrix::zeros(features, features),
            cross: DenseMatrix::zeros(outputs, features),
            block_u: DenseMatrix::zeros(features, RIDGE_BLOCK),
            block_v: DenseMatrix::zeros(outputs, RIDGE_BLOCK),
            filled: 0,
            samples: 0,
        }
    }

    pub fn features(&self) -> usize {
        self.gram.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.cross.nrows()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn push(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.features());
        debug_assert_eq!(v.len(), self.outputs());
        self.block_u.column_mut(self.filled).copy_from_slice(u);
        self.block_v.column_mut(self.filled).copy_from_slice(v);
        self.filled += 1;
        self.samples += 1;
        if self.filled == RIDGE_BLOCK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.filled == 0 {
            return;
        }
        let u = self.block_u.columns(0, self.filled);
        let v = self.block_v.columns(0, self.filled);
        self.gram.gemm(1.0, &u, &u.transpose(), 1.0);
        self.cross.gemm(1.0, &v, &u.transpose(), 1.0);
        self.filled = 0;
    }

    /// Adds another accumulator's samples into this one.
    pub fn absorb(&mut self, other: &mut RidgeAccumulator) {
        other.flush();
        self.flush();
        self.gram += &other.gram;
        self.cross += &other.cross;
        self.samples += other.samples;
    }

    /// `(G, C)` with all buffered samples included.
    pub fn normal_equations(&mut self) -> (&DenseMatrix, &DenseMatrix) {
        self.flush();
        (&self.gram, &self.cross)
    }

    /// Solves `W (G + beta^2 I) = C` for the readout `W` (outputs x features).
    pub fn solve(&mut self, beta: f64) -> Result<DenseMatrix> {
        if !(beta >= 0.0) {
            return Err(Error::Config(format!("beta must be non-negative, got {beta}")));
        }
        if self.samples == 0 {
            return Err(Error::Shape("ridge solve needs at least one sample".into()));
        }
        self.flush();
        solve_normal_equations(&self.gram, &self.cross, beta)
    }
}

fn solve_normal_equations(gram: &DenseMatrix, cross: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
    let n = gram.nrows();
    let shift = beta * beta;
    if beta > 0.0 {
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += shift;
        }
        if let Some(chol) = a.cholesky() {
            return Ok(chol.solve(&cross.transpose()).transpose());
        }
    }
    // Eigen route: singular with beta = 0 is reported, otherwise the shifted
    // spectrum is inverted directly.
    let eig = gram.clone().symmetric_eigen();
    let smax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = (n as f64) * f64::EPSILON * smax.max(f64::MIN_POSITIVE);
    if beta == 0.0 {
        let null_dim = eig.eigenvalues.iter().filter(|&&s| s <= tol).count();
        if null_dim > 0 {
            return Err(Error::RankDeficient { null_dim });
        }
    }
    let inv: DVector<f64> = eig.eigenvalues.map(|s| 1.0 / (s.max(0.0) + shift));
    let q = &eig.eigenvectors;
    let scaled = q * DMatrix::from_diagonal(&inv) * q.transpose();
    Ok(cross * scaled)
}

/// Ridge solutions of `W (G + beta^2 I) = C` for several `beta` from one
/// eigendecomposition of `G`. Directions with `lambda + beta^2 = 0` are
/// dropped (minimum-norm solution).
pub fn ridge_path(gram: &DenseMatrix, cross: &DenseMatrix, betas: &[f64]) -> Vec<DenseMatrix> {
    let eig = gram.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let cq = cross * q;
    betas
        .iter()
        .map(|&beta| {
            let shift = beta * beta;
            let mut scaled = cq.clone();
            for (j, &s) in eig.eigenvalues.iter().enumerate() {
                let d = s.max(0.0) + shift;
                let f = if d > 0.0 { 1.0 / d } else { 0.0 };
                scaled.column_mut(j).scale_mut(f);
            }
            scaled * q.transpose()
        })
        .collect()
}

/// Ridge readout `argmin_W sum_t |v_d(t) - W u(t)|^2 + |beta W|^2`.
///
/// `u` is features x samples and `v_d` outputs x samples; the solution is
/// `V_d U^T (U U^T + beta^2 I)^-1`.
pub fn ridge_solve(u: &DenseMatrix, v_d: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
    if u.ncols() != v_d.ncols() {
        return Err(Error::Shape(format!("U has {} samples but V_d has {}", u.ncols(), v_d.ncols())));
    }
    if u.ncols() == 0 {
        return Err(Error::Shape("ridge solve needs at least one sample".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("beta must be non-negative, got {beta}")));
    }
    let gram = u * u.transpose();
    let cross = v_d * u.transpose();
    solve_normal_equations(&gram, &cross, beta)
}

/// Trapezoidal weights for `n` samples spaced `dt` apart.
pub(crate) fn trapezoid_weight(i: usize, n: usize, dt: f64) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 || i + 1 == n {
        0.5 * dt
    } else {
        dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn decay(_t: f64, x: &[f64], dx: &mut [f64]) {
        dx[0] = -x[0];
    }

    #[test]
    fn rk4_exponential_decay_single_step() {
        let x = rk4_step(decay, &StateVector(vec![1.0]), 0.0, 0.1).unwrap();
        // classical RK4 on x' = -x gives the Taylor polynomial of e^-h to 4th order
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - taylor).abs() < 1e-15);
        assert!((x[0] - 0.904_837_50).abs() < 5e-9);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_constant_and_linear_fields() {
        let c = rk4_step(|_, _, dx: &mut [f64]| dx[0] = 0.0, &StateVector(vec![3.25]), 1.0, 0.7).unwrap();
        assert_eq!(c[0], 3.25);
        let l = rk4_step(|_, _, dx: &mut [f64]| dx[0] = 1.0, &StateVector(vec![0.0]), 0.0, 0.5).unwrap();
        assert_eq!(l[0], 0.5);
    }

    #[test]
    fn rk4_hundred_steps_matches_exponential() {
        let mut rk = Rk4::new(1);
        let mut x = [1.0];
        for i in 0..100 {
            rk.step(decay, &mut x, i as f64 * 0.1, 0.1).unwrap();
        }
        // RK4 amplification factor for dx/dt = -x
        let g: f64 = 1.0 - 0.1 + 0.01 / 2.0 - 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((x[0] - g.powi(100)).abs() < 1e-15);
        let exact = (-10.0f64).exp();
        assert!(((x[0] - exact) / exact).abs() < 2e-5);
    }

    #[test]
    fn rk4_reports_divergence_time() {
        let err =
            rk4_step(|_, _, dx: &mut [f64]| dx[0] = f64::INFINITY, &StateVector(vec![0.0]), 2.0, 0.5).unwrap_err();
        match err {
            Error::Diverged { t } => assert_eq!(t, 2.5),
            e => panic!("unexpected {e}"),
        }
        assert!(rk4_step(decay, &StateVector(vec![1.0]), 0.0, 0.0).is_err());
    }

    #[test]
    fn spectral_radius_small_cases() {
        let d = SparseMatrix::from_dense(&DenseMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0, 1.0])));
        assert!((spectral_radius(&d) - 3.0).abs() < 1e-9);
        assert_eq!(spectral_radius(&SparseMatrix::zeros(4, 4)), 0.0);
        // eigenvalues +-i: characteristic polynomial z^2 + 1
        let rot = SparseMatrix::from_dense(&DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!((spectral_radius(&rot) - 1.0).abs() < 1e-9);
        // strictly upper triangular is nilpotent
        let nil = SparseMatrix::from_dense(&DenseMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0],
        ));
        assert!(spectral_radius(&nil) < 1e-9);
    }

    fn dense_radius(m: &DenseMatrix) -> f64 {
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn spectral_radius_matches_dense_eigendecomposition(
            n in 1usize..=10,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DenseMatrix::from_fn(n, n, |_, _| {
                if rng.random_bool(0.6) { rng.random_range(-1.0..1.0) } else { 0.0 }
            });
            let expected = dense_radius(&m);
            let got = spectral_radius(&SparseMatrix::from_dense(&m));
            prop_assert!((got - expected).abs() <= 1e-6 * expected.max(1.0),
                "got {got}, expected {expected}");
        }

        #[test]
        fn ridge_satisfies_normal_equations(
            n in 1usize..8, l in 1usize..4, extra in 5usize..40, seed in any::<u64>(), beta in 0.0f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = n + extra;
            let u = DenseMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0));
            let v = DenseMatrix::from_fn(l, t, |_, _| rng.random_range(-1.0..1.0));
            let w = ridge_solve(&u, &v, beta).unwrap();
            let mut a = &u * u.transpose();
            for i in 0..n { a[(i, i)] += beta * beta; }
            let rhs = &v * u.transpose();
            let resid = (&w * a - &rhs).norm();
            prop_assert!(resid < 1e-10 * rhs.norm().max(1e-300));

            // the streaming accumulator lands on the same solution
            let mut acc = RidgeAccumulator::new(n, l);
            for c in 0..t {
                let uc: Vec<f64> = u.column(c).iter().copied().collect();
                let vc: Vec<f64> = v.column(c).iter().copied().collect();
                acc.push(&uc, &vc);
            }
            let w2 = acc.solve(beta).unwrap();
            prop_assert!((&w2 - &w).norm() <= 1e-9 * w.norm().max(1.0));
        }
    }

    #[test]
    fn ridge_closed_forms() {
        let one = DenseMatrix::from_element(1, 1, 1.0);
        assert!((ridge_solve(&one, &one, 0.0).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((ridge_solve(&one, &one, 1.0).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        let u = DenseMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let v = DenseMatrix::from_row_slice(1, 2, &[2.0, 2.0]);
        assert!((ridge_solve(&u, &v, 0.0).unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ridge_rank_deficiency_names_null_dimension() {
        // three identical feature rows span a single direction
        let u = DenseMatrix::from_row_slice(3, 4, &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let v = DenseMatrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 0.0]);
        match ridge_solve(&u, &v, 0.0) {
            Err(Error::RankDeficient { null_dim }) => assert_eq!(null_dim, 2),
            other => panic!("expected rank error, got {other:?}"),
        }
        assert!(ridge_solve(&u, &v, 0.1).is_ok());
    }

    #[test]
    fn ridge_norm_shrinks_with_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = DenseMatrix::from_fn(5, 30, |_, _| rng.random_range(-1.0..1.0));
        let v = DenseMatrix::from_fn(2, 30, |_, _| rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for beta in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let n = ridge_solve(&u, &v, beta).unwrap().norm();
            assert!(n < last);
            last = n;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn ridge_path_matches_individual_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DenseMatrix::from_fn(6, 40, |_, _| rng.random_range(-1.0..1.0));
        let v = DenseMatrix::from_fn(2, 40, |_, _| rng.random_range(-1.0..1.0));
        let betas = [1e-3, 0.1, 2.0];
        let path = ridge_path(&(&u * u.transpose()), &(&v * u.transpose()), &betas);
        for (w, &b) in path.iter().zip(&betas) {
            let direct = ridge_solve(&u, &v, b).unwrap();
            assert!((w - &direct).norm() < 1e-10 * direct.norm());
        }
        let mut a = RidgeAccumulator::new(6, 2);
        let mut b = RidgeAccumulator::new(6, 2);
        for c in 0..40 {
            let uc: Vec<f64> = u.column(c).iter().copied().collect();
            let vc: Vec<f64> = v.column(c).iter().copied().collect();
            if c < 17 {
                a.push(&uc, &vc)
            } else {
                b.push(&uc, &vc)
            }
        }
        a.absorb(&mut b);
        assert_eq!(a.samples(), 40);
        assert!((a.solve(0.1).unwrap() - ridge_solve(&u, &v, 0.1).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn sparse_product_matches_dense() {
        let m = DenseMatrix::from_row_slice(2, 3, &[1.0, 0.0, -2.0, 0.0, 3.0, 0.5]);
        let s = SparseMatrix::from_dense(&m);
        assert_eq!(s.nnz(), 4);
        let mut out = [0.0; 2];
        s.mul_vec_into(&[1.0, 2.0, 4.0], &mut out);
        assert_eq!(out, [-7.0, 8.0]);
        assert_eq!(s.to_dense(), m);
    }
}
