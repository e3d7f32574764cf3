//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A query point lies outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A file or text stream could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// The requested model/camera combination has no solver.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// An iterative method hit its iteration cap.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reads a whole file, naming the path in any error.
pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// [`read_file`] as UTF-8 text.
pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| Error::Parse(format!("{}: not UTF-8 text", path.display())))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
