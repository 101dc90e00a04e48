use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (shapes, lengths, labels).
    #[error("input error: {0}")]
    Input(String),

    /// Numerical data that cannot be used (NaN, infinities).
    #[error("data error: {0}")]
    Data(String),

    /// A parameter outside the range an operation accepts.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A Gram matrix failed positive semi-definiteness validation.
    #[error("kernel `{kernel}` is not PSD: min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e}, symmetric defect {symmetric_defect:e}")]
    NotPsd {
        kernel: String,
        min_eig: f64,
        max_eig: f64,
        symmetric_defect: f64,
    },

    /// A quadratic form came out negative beyond round-off.
    #[error("quadratic form is negative ({value:e}) beyond clamp tolerance {tolerance:e}")]
    PsdViolation { value: f64, tolerance: f64 },

    /// Combination weights infeasible for their constraint.
    #[error("constraint error: {0}")]
    Constraint(String),

    /// Exhaustive enumeration requested beyond its configured cap.
    #[error("sample size {m} exceeds the exact enumeration cap of {cap}")]
    Capacity { m: usize, cap: usize },

    /// Training data that cannot produce a classifier.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A hypothesis outside the margin-constrained class.
    #[error("hypothesis is not in the class at rho = {rho}: rho * sqrt(alpha' K alpha) = {scaled_norm}; largest admissible rho is {rho_max}")]
    Membership {
        rho: f64,
        scaled_norm: f64,
        rho_max: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
