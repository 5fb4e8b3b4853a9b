use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown bus id {0}")]
    UnknownBus(usize),

    #[error("unknown line {from}-{to}")]
    UnknownLine { from: usize, to: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("missing virtual inertia for storage bus {0}")]
    MissingControl(usize),

    #[error("{what} must be positive at bus {bus} (got {value})")]
    NonPositiveParameter {
        bus: usize,
        what: &'static str,
        value: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time step must be positive (got {0})")]
    InvalidTimeStep(f64),

    #[error("integration produced a non-finite value at bus {bus}")]
    NonFinite { bus: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("horizon {span} s is not an integer multiple of the step {ts} s")]
    StageCount { span: f64, ts: f64 },

    #[error("initial state component {axis} = {value} lies outside the grid [{lo}, {hi}]")]
    InitialOutsideGrid {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite dynamics at stage {stage}, grid point {point:?}")]
    DpNonFinite { stage: usize, point: Vec<f64> },

    #[error("rollout left the state grid at stage {stage}")]
    RolloutExit { stage: usize },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("evaluation failed at optimizer iteration {iteration}: {source}")]
    Optimizer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario error at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("incompatible reports: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input rather than by a solver.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownBus(_)
                | Error::UnknownLine { .. }
                | Error::InvalidNetwork(_)
                | Error::MissingControl(_)
                | Error::NonPositiveParameter { .. }
                | Error::Grid(_)
                | Error::StageCount { .. }
                | Error::InitialOutsideGrid { .. }
                | Error::Scenario { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
