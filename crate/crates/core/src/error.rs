use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("singular tie block: tie buses cannot be eliminated")]
    SingularTieBlock,
    #[error(
        "islanded or degenerate network: admittance block over non-slack buses is not invertible"
    )]
    SingularNetwork,
    #[error("degenerate equivalent source: zero entry at bus {0}")]
    DegenerateSource(u32),
    #[error(
        "real-form Jacobian has imaginary residue {0:.3e}; block construction is inconsistent"
    )]
    NonrealJacobian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insolvable base case: {0}")]
    InsolvableBase(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
