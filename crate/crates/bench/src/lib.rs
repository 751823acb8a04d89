//! Fixtures shared by the benchmarks.

use resctl_core::{instantiate, DenseMatrix, Esn, EsnHyperparams};

/// Deterministic pseudo-random fill in `[-1, 1]`.
pub fn filled(rows: usize, cols: usize, salt: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |i, j| ((i * cols + j) as f64 * 0.618_033 + salt).sin())
}

/// A Lorenz-sized reservoir of `n` nodes with a small random readout.
pub fn lorenz_layer(n: usize) -> Esn {
    let mut esn = instantiate(&EsnHyperparams::lorenz().with_n(n).with_seed(1), 3, 3).expect("valid hyperparameters");
    esn.set_readout(filled(3, n, 0.3) * 0.01).expect("readout shape");
    esn
}
