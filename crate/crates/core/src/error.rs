use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {what} has length {found}, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("point {point:?} lies outside the potential domain [-{half_width}, {half_width}]")]
    Domain { point: Vec<f64>, half_width: f64 },

    #[error("atoms {i} and {j} coincide; pair potential is singular")]
    Singularity { i: usize, j: usize },

    #[error("numerical blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("estimator error: {0}")]
    Estimator(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("boundary guard failed on axis {axis}: amplitude {amplitude:e} exceeds {limit:e}")]
    Boundary {
        axis: &'static str,
        amplitude: f64,
        limit: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
