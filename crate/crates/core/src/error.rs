use thiserror::Error;

/// Errors raised by lattice construction, solvers and the Monte Carlo harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of range. `field` is the dotted config path.
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Array operands whose shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A required operand was not supplied.
    #[error("missing operand: {0}")]
    MissingOperand(&'static str),

    /// A non-finite value appeared inside the solution domain.
    #[error("non-finite value in {quantity} at node ({i}, {j})")]
    NonFinite {
        quantity: &'static str,
        i: usize,
        j: usize,
    },

    /// A user-supplied derivative disagrees with its finite-difference probe.
    #[error("derivative probe failed for {what}: analytic {analytic}, finite difference {numeric}")]
    DerivativeMismatch {
        what: String,
        analytic: f64,
        numeric: f64,
    },

    /// Two computations that must agree did not.
    #[error("consistency check failed: {0}")]
    Consistency(String),

    /// Input data that cannot support the requested statistic.
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
