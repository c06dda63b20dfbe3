use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the planner library.
#[derive(Debug, Error)]
pub enum Error {
    /// A spline or polygon could not be assembled from the given inputs.
    #[error("construction error: {0}")]
    Construction(String),
    /// A value was outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs disagree on sizes or layout.
    #[error("contract error: {0}")]
    Contract(String),
    /// Start and goal coincide, so no path direction exists.
    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),
    #[error("parse error: {0}")]
    Parse(String),
    /// No collision-free grid path connects the start and goal cells.
    #[error("no reference path between start and goal")]
    NoReferencePath,
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("scenario generation failed: {0}")]
    Generation(String),
    /// The independent re-check disagreed with a planner's verdict.
    #[error("verification failure: {0}")]
    Verification(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
