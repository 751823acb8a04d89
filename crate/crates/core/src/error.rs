use thiserror::Error;

/// Errors raised anywhere in the control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("controlled system diverged at t = {t} (|y| = {norm:.3e} exceeds {bound:.3e})")]
    ControlDiverged { t: f64, norm: f64, bound: f64 },

    #[error("ridge system is rank deficient: null space of dimension {null_dim}")]
    RankDeficient { null_dim: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("readout has not been trained")]
    Untrained,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("window [{start}, {end}] exceeds recorded trajectory [{first}, {last}]")]
    Window { start: f64, end: f64, first: f64, last: f64 },

    #[error("ellipse fit failed: {0}")]
    Fit(String),

    #[error("{name} = {value} does not fit the fixed-point format (|x| < {limit})")]
    Format { name: String, value: f64, limit: f64 },

    #[error("training layer {layer} failed: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed record: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
