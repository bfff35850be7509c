use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The document is not well-formed JSON or does not match the instance schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A structurally valid value violates a domain invariant.
    #[error("invariant violated on `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("infeasible input: {0}")]
    Feasibility(String),

    #[error("problem too large: {what} = {size} exceeds the cap of {cap}")]
    Size {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    /// A quantity is undefined on this instance (e.g. some dimension never arrives in a round).
    #[error("degenerate instance: {0}")]
    Degenerate(String),

    /// The information a policy needs is not part of the instance.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("lp solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
