use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model configuration: {0}")]
    UnsupportedConfig(String),

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot([usize; 4]),

    #[error("variable does not belong to this tape")]
    ForeignVar,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("zero-norm or zero-variance reference: {0}")]
    DegenerateReference(String),

    #[error("CFL violation: courant number {courant:.3} exceeds {limit}; try dt <= {suggested_dt:.3e}")]
    Cfl { courant: f64, limit: f64, suggested_dt: f64 },

    #[error("solver blew up after {last_valid_frame} valid frames: {reason}")]
    SolverBlowUp { last_valid_frame: usize, reason: String },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape { op, detail: detail.into() }
}
