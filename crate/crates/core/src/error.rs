use thiserror::Error;

/// Errors raised by the simulator, controller and signal pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation (time, patch, empty input).
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller-side precondition was violated (exposure outside sensor bounds, etc).
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// All samples share the same exposure, so no slope can be fitted.
    #[error("degenerate abscissa: all samples share exposure {exposure} ms")]
    DegenerateAbscissa { exposure: f64 },
    /// The fitted slope is below the usable threshold.
    #[error("flat response: slope {slope} codes/ms is below {epsilon}")]
    FlatResponse { slope: f64, epsilon: f64 },
    /// Two grids or segment lists that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A scenario or configuration value is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
