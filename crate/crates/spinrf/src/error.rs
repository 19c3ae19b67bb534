use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit codes: `Config` -> 2, `Io`/`Parse`/
/// `Corrupt` -> 3, `Domain`/`Shape`/`NonFinite`/`NonConvergence` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical precondition was violated (e.g. non-positive resonance
    /// frequency, negative input power).
    #[error("domain error: {0}")]
    Domain(String),

    /// Array dimensions do not match the declared layer shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Bad configuration (unknown key, unparsable value, invalid range).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data; carries the 1-based row number where known.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// Checkpoint or data file failed an integrity check.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// A degenerate numerical situation (e.g. constant dataset cannot be
    /// min-max scaled).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A non-finite value surfaced where training cannot continue.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An iterative fit exhausted its iteration budget. The message carries
    /// the best-so-far residual so callers can decide whether to keep it.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code for this error per the documented contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::Corrupt(_) => 3,
            Error::Domain(_)
            | Error::Shape(_)
            | Error::Degenerate(_)
            | Error::NonFinite(_)
            | Error::NonConvergence(_) => 4,
        }
    }
}
