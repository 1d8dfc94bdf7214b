use thiserror::Error;

/// Errors produced by the geometry, flow and fiber-calculus routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("outside the domain: {0}")]
    Domain(String),

    #[error("no horizons: nondegeneracy violated (margin {margin:e})")]
    NoHorizon { margin: f64 },

    #[error("inner product is singular")]
    SingularForm,

    #[error("tensor power too large: {dim} > {limit}")]
    SizeGuard { dim: usize, limit: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage { stage, source: Box::new(e) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
