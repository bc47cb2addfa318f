use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value violates a documented precondition.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("magnets do not fit: magnet arc {magnet_arc:.6} rad, pole pitch {pole_pitch:.6} rad")]
    GeometryInfeasible { magnet_arc: f64, pole_pitch: f64 },

    #[error("point r = {r} m lies outside the modelled domain (outer radius {r_out} m)")]
    OutOfDomain { r: f64, r_out: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (last relative residual {last:.3e})")]
    NonConvergence { iterations: usize, residual_history: Vec<f64>, last: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("element {element} has non-finite reluctivity")]
    NonFiniteReluctivity { element: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
