use thiserror::Error;

/// Errors raised anywhere in the offline/online pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resolution: n_cells = {0}, need at least 2")]
    InvalidResolution(usize),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("layout incomplete: no element type for cell ({row}, {col})")]
    LayoutIncomplete { row: usize, col: usize },

    #[error("unknown interface edge id {0}")]
    UnknownEdge(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "linear solver failed after {iterations} iterations (relative residual {residual:.3e})"
    )]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("time step {dt} violates stability bound {bound} at step {step}")]
    Stability { step: usize, dt: f64, bound: f64 },

    #[error("solution diverged (non-finite value) at step {step}")]
    Divergence { step: usize },

    #[error("snapshot matrix is degenerate: {0}")]
    DegenerateData(String),

    #[error("archive is corrupt: {0}")]
    CorruptArchive(String),

    #[error("unsupported archive version {0:?}")]
    UnsupportedVersion(String),

    #[error("incompatible component: {0}")]
    Incompatible(String),

    #[error("static condensation failed for element type {element_type:?}: {reason}")]
    CondensationFailure {
        element_type: String,
        reason: String,
    },

    #[error("coupling is infeasible: constraint null space is empty (increase basis size or loosen constraint_tol)")]
    InfeasibleCoupling,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("relative error undefined: reference has zero norm")]
    UndefinedMetric,

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("layout {rows}x{cols}: {source}")]
    Layout {
        rows: usize,
        cols: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from numerics rather than input validation or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SolverFailure { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Stability { .. }
            | Error::Divergence { .. }
            | Error::DegenerateData(_)
            | Error::CondensationFailure { .. }
            | Error::InfeasibleCoupling
            | Error::UndefinedMetric => true,
            Error::Sample { source, .. } | Error::Layout { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::CorruptArchive(_) | Error::UnsupportedVersion(_) => true,
            Error::Sample { source, .. } | Error::Layout { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
