use thiserror::Error;

/// Errors raised across the discretization, solver and process layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("snowflake depth {depth} exceeds the maximum of {max}")]
    DepthTooLarge { depth: usize, max: usize },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("support does not conform to the mesh: {0}")]
    NonConforming(String),

    #[error("measure support is empty: {0}")]
    EmptySupport(String),

    #[error("iterative solver did not converge: {iterations} iterations, relative residual {relres:e}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    SolverDiverged {
        iterations: usize,
        relres: f64,
        context: Option<String>,
    },

    #[error("{dim} support dofs exceed the dense threshold {threshold}")]
    TooLargeForDense { dim: usize, threshold: usize },

    #[error("requested {requested} eigenpairs but only {available} support dofs exist")]
    TooManyRequested { requested: usize, available: usize },

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("off-diagonal entry ({row}, {col}) = {value:e} of the form matrix is positive beyond tolerance")]
    NonMarkovianDiscretization { row: usize, col: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Geometry,
    Solver,
    Input,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::DepthTooLarge { .. }
            | Error::UnsupportedGeometry(_)
            | Error::InvalidPolygon(_)
            | Error::NonConforming(_)
            | Error::EmptySupport(_) => ErrorFamily::Geometry,
            Error::SolverDiverged { .. }
            | Error::TooLargeForDense { .. }
            | Error::EigenFailure(_)
            | Error::NonMarkovianDiscretization { .. } => ErrorFamily::Solver,
            Error::TooManyRequested { .. } | Error::InvalidArgument(_) | Error::Parse { .. } => {
                ErrorFamily::Input
            }
        }
    }

    /// Attaches a location hint (e.g. a time-step index) to solver failures.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::SolverDiverged {
                iterations, relres, ..
            } => Error::SolverDiverged {
                iterations,
                relres,
                context: Some(ctx.into()),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
