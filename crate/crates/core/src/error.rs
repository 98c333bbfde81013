use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("function is not superlinear at infinity (exponent {exponent}), conjugate is degenerate")]
    Sublinear { exponent: f64 },
    #[error("growth index unbounded: sampled ratio {sampled} exceeds cap {cap}")]
    UnboundedIndex { sampled: f64, cap: f64 },
    #[error("exact volume formula requires a power-sum function")]
    ExactVolumeUnsupported,
    #[error("bisection failed to bracket: {0}")]
    NotBracketed(String),
    #[error("value {y} above table range and no upper extrapolation exponent")]
    OutOfRange { y: f64 },
    #[error("table too short: {0}")]
    TableTooShort(String),
    #[error("(Phi_0) fails: lower integral diverges (fitted exponent {exponent})")]
    IntegrabilityFailed { exponent: f64 },
    #[error("harmonic mean exponent {p_bar} >= dimension {n}: outside the divergent (Phi_1) regime")]
    BoundedConjugate { p_bar: f64, n: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no valley: energy stayed nonnegative after {doublings} doublings ((f3) likely violated)")]
    NoValley { doublings: usize },
    #[error("radius {r} too large for box half-width {half_width}")]
    RadiusTooLarge { r: f64, half_width: f64 },
    #[error("center {0:?} is not on the potential lattice / grid")]
    OffLattice(Vec<f64>),
    #[error("invalid problem: {0}")]
    Validation(String),
    #[error("parse error {}: {message}", location(.line))]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Line 0 marks a command-line override.
fn location(line: &usize) -> String {
    match line {
        0 => "in override".to_string(),
        n => format!("at line {n}"),
    }
}
