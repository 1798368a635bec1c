use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    Numeric { op: &'static str },

    #[error("state diverged at step {step}: |x| = {magnitude:e} exceeds 1e6")]
    Divergence { step: usize, magnitude: f64 },

    #[error("{what}: requires {required} points but only {available} are available")]
    Sizing {
        what: String,
        required: usize,
        available: usize,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Whether this error belongs to the "bad input" family (exit code 2) as
    /// opposed to runtime or numeric failures (exit code 3).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Sizing { .. } | Error::Empty(_) => true,
            Error::Task { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
