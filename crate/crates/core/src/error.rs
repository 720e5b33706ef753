use thiserror::Error;

use crate::rom::FosterLtiModel;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite value was supplied or produced.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A configuration or parameter set violates its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The explicit integrator was asked to take a step above its stability bound.
    #[error("explicit step dt = {dt} s exceeds the stability bound; use dt <= {max_dt:.6} s")]
    Stability { dt: f64, max_dt: f64 },

    /// The Foster fit did not converge. The best candidate found is attached.
    #[error("fit did not converge after {iterations} iterations (rms = {rms:e})")]
    Fit {
        iterations: usize,
        rms: f64,
        best: Box<FosterLtiModel>,
    },

    /// One vertex of an LPV grid could not be built.
    #[error("grid vertex {vertex:?} failed: {source}")]
    Vertex {
        vertex: [usize; 3],
        #[source]
        source: Box<Error>,
    },

    /// A file did not match its expected layout.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name} is not finite ({value})")))
    }
}
