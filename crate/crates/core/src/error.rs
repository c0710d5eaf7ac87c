use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    NonConvergence(usize),

    #[error("matrix exponential overflow (norm {0:e})")]
    Overflow(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown catalog system `{0}`")]
    UnknownSystem(String),

    #[error("trajectory hits coordinate origin at column {column} (pair {pair:?})")]
    OriginHit { column: usize, pair: (usize, usize) },

    #[error("observable row {row} is not a state coordinate: non-real value at column {column}")]
    NonRealState { row: usize, column: usize },

    #[error("phase observable row {row} has modulus {modulus} at column {column}, expected 1")]
    ModulusViolation { row: usize, column: usize, modulus: f64 },

    #[error("no active observables in window k={k}, s={s}")]
    EmptyActiveSet { k: usize, s: usize },

    #[error("invalid stencil window k={k}, s={s} for {columns} snapshot columns")]
    InvalidWindow { k: usize, s: usize, columns: usize },

    #[error("degenerate stencil at k={0}: all snapshots are zero")]
    DegenerateStencil(usize),

    #[error("local operator at k={0} has effective rank 0")]
    ZeroRank(usize),

    #[error(
        "projection error exceeds epsilon in the first window (k=1); \
         start the snapshot sequence with a switch-free warm-up segment of at least {stencil} steps"
    )]
    WarmUp { stencil: usize },

    #[error("snapshot sequence too short: {columns} columns, stencil needs {needed}")]
    TooShort { columns: usize, needed: usize },

    #[error("observable row {row} is zero at step {step}; cannot form the one-step ratio")]
    ZeroDenominator { row: usize, step: usize },

    #[error(
        "aliasing: observable row {row} turns by {phase:.4} rad at step {step}, \
         above the admissible {limit:.4} rad per step"
    )]
    Aliasing {
        row: usize,
        step: usize,
        phase: f64,
        limit: f64,
    },

    #[error("eigenbasis is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("snapshot file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
