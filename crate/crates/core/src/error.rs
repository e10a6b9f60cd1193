use thiserror::Error;

/// Error type shared by all maglev-nmpc components.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("air gap must be positive, got {gap} m")]
    NonPositiveAirGap { gap: f64 },

    #[error("magnet table lookup outside grid: {axis} = {value} not in [{min}, {max}]")]
    TableOutOfRange {
        axis: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("magnet table file malformed: {0}")]
    TableFormat(String),

    #[error("equilibrium solve failed: {0}")]
    InfeasibleEquilibrium(String),

    #[error("non-finite derivative in component {component}")]
    NonFiniteDerivative { component: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("shooting stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("controller configuration invalid: {0}")]
    ControllerConfig(String),

    #[error("scenario invalid: {0}")]
    Scenario(String),

    #[error("measurement is not finite")]
    NonFiniteMeasurement,

    #[error("analysis input invalid: {0}")]
    Analysis(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
