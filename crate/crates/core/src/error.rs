use thiserror::Error;

/// Unified error type for the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("geometric singularity: {0}")]
    Singularity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate detection test: hypotheses are indistinguishable")]
    DegenerateTest,

    #[error("degenerate channel: Bob and Willie channels are parallel")]
    DegenerateChannel,

    #[error("empty positive subspace: no feasible artificial-noise direction")]
    EmptySubspace,

    #[error("sensing constraint infeasible: needs {required_w:.3e} W, budget {budget_w:.3e} W")]
    SensingInfeasible { required_w: f64, budget_w: f64 },

    #[error("tracking divergence: {0}")]
    TrackingDivergence(String),

    #[error("training divergence: {0}")]
    TrainingDivergence(String),

    #[error("replay buffer not ready: {have} stored, {need} required")]
    BufferNotReady { have: usize, need: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
