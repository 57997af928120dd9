use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    /// Non-finite value in the row with this 0-based index.
    #[error("non-finite value in row {0}")]
    BadValue(usize),

    /// A CSV record that could not be read as two numbers (1-based line).
    #[error("malformed record at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("argument outside [0, 1]: {0}")]
    DomainError(f64),

    /// (s, t) is not in the region where the inverse map is defined.
    #[error("point ({s}, {t}) outside the domain (discriminant {discriminant})")]
    OutsideDomain { s: f64, t: f64, discriminant: f64 },

    #[error("region requires u <= v, got u = {u}, v = {v}")]
    BadRegion { u: f64, v: f64 },

    #[error("no convergence after {iterations} iterations in {what}")]
    NumericalNonconvergence { what: &'static str, iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cache file {path} does not match: {reason}")]
    CacheMismatch { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
