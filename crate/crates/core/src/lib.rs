//! Model-free control of dynamical systems with layered echo state networks.
//!
//! A reservoir is trained to map the pair (current observable, observable
//! `δ` later) onto the plant input that produced the transition. Replacing
//! the future observable with a reference closes the loop. Further layers
//! are trained on the partially controlled plant and their readouts added.

pub mod controller;
pub mod error;
pub mod experiment;
pub mod fpga_emu;
pub mod numerics;
pub mod plants;
pub mod reservoir;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{ridge_solve, rk4_step, spectral_radius, DenseMatrix, SparseMatrix, StateVector};
pub use plants::{CircuitPlant, LorenzPlant, MackeyGlassPlant, Plant};
pub use reservoir::{instantiate, Esn, EsnHyperparams};

pub use controller::{
    add_layer, closed_loop_run, fit_ellipse, square_wave_reference, ControlRunResult, DeepController, EllipseReference,
    LayerTraining, Reference,
};
pub use experiment::{run_all, run_experiment, ExperimentConfig, ExperimentSummary, RunStatus, RunSummary};
pub use fpga_emu::{emulate_control_run, quantize, FixedConfig, FixedEsn, FixedPoint, QFormat, TanhLut};
pub use training::{
    gen_train_signal, harvest, train_readout, train_readout_with, ControlTimescales, Regularization, TrainReport,
    TrainSignalParams, TrainingRecord,
};
