//! Error type shared across the crate.
//!
//! Indices in error messages are 1-based so they line up with the state
//! labels used in data files and CLI output, regardless of how values are
//! stored internally.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, outside tolerance {tol} of 1")]
    RowSumViolation { row: usize, sum: f64, tol: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch in {field}: {detail}")]
    DimensionMismatch { field: String, detail: String },

    #[error("index out of range: {what}")]
    IndexOutOfRange { what: String },

    #[error("power iteration did not converge within {max_iter} iterations")]
    NotConverged { max_iter: usize },

    #[error(
        "stationary distribution is not unique: found {closed_classes} closed communicating classes"
    )]
    AmbiguousStationary { closed_classes: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("state enumeration too large: {size:.3e} latent sequences exceeds limit {limit:.1e}")]
    EnumerationTooLarge { size: f64, limit: f64 },

    #[error("trajectory has probability zero under the model at step {step}")]
    ZeroLikelihood { step: usize },

    #[error("states never transitioned from in the data: {}", format_states(.states))]
    UnreachedStates { states: Vec<usize> },

    #[error("trip exceeded {max_len} transitions without reaching a terminal state")]
    TripTooLong { max_len: usize },

    #[error(
        "trip junction mismatch: trip {trip} ends in state {end} but trip {next} starts in state {start}"
    )]
    JunctionMismatch {
        trip: usize,
        end: usize,
        next: usize,
        start: usize,
    },

    #[error("positive probability {value} on non-edge {from} -> {to}")]
    AdjacencyViolation { from: usize, to: usize, value: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("latent state space too large for exhaustive label alignment: {num_latent} > {limit}")]
    TooManyLatentStates { num_latent: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid format: {0}")]
    InvalidFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_states(states: &[usize]) -> String {
    states
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Short machine-parsable code for an error, used by the CLI on stderr.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::NegativeEntry { .. } => "NEGATIVE_ENTRY",
        Error::RowSumViolation { .. } => "ROW_SUM",
        Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
        Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
        Error::IndexOutOfRange { .. } => "INDEX_RANGE",
        Error::NotConverged { .. } => "NOT_CONVERGED",
        Error::AmbiguousStationary { .. } => "AMBIGUOUS_STATIONARY",
        Error::InvalidPartition(_) => "INVALID_PARTITION",
        Error::EnumerationTooLarge { .. } => "ENUMERATION_TOO_LARGE",
        Error::ZeroLikelihood { .. } => "ZERO_LIKELIHOOD",
        Error::UnreachedStates { .. } => "UNREACHED_STATES",
        Error::TripTooLong { .. } => "TRIP_TOO_LONG",
        Error::JunctionMismatch { .. } => "JUNCTION_MISMATCH",
        Error::AdjacencyViolation { .. } => "ADJACENCY_VIOLATION",
        Error::InvalidScenario(_) => "INVALID_SCENARIO",
        Error::TooManyLatentStates { .. } => "TOO_MANY_LATENT_STATES",
        Error::InvalidConfig(_) => "INVALID_CONFIG",
        Error::InvalidFormat(_) => "INVALID_FORMAT",
        Error::Io(_) => "IO",
        Error::Json(_) => "JSON",
    }
}
