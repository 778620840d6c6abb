use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomError {
    #[error("unsupported dimension {0}; only 2 and 3 are implemented")]
    Dimension(usize),
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("degenerate hole ratio: a_eps = eps gives |log(a_eps/eps)| = 0 in two dimensions")]
    DegenerateRatio,
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid incompatibility: {0}")]
    GridIncompatible(String),
    #[error("hole under-resolved: spans {cells:.2} grid cells per axis, need at least {required}")]
    Resolution { cells: f64, required: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ambiguous regime: {0}")]
    Ambiguous(String),
    #[error("invalid source: {0}")]
    SourceInvalid(String),
    #[error("right-hand side not in the operator range (projection {projection:.3e} of norm {norm:.3e})")]
    Range { projection: f64, norm: f64 },
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e}, target {target:.1e})")]
    NonConvergence { iterations: usize, residual: f64, target: f64 },
    #[error("local solve around hole {hole} failed: {reason}")]
    LocalSolveFailure { hole: usize, reason: String },
    #[error("energy and average formulas for the tensor differ by {0:.3e} (relative)")]
    Discrepancy(f64),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("mean mode not admissible: {0}")]
    ZeroMode(String),
    #[error("ladder needs at least {required} points, got {got}")]
    InsufficientLadder { required: usize, got: usize },
    #[error("error sequence not strictly decreasing: {0}")]
    NonDecreasing(String),
    #[error("FFT size {0} is not a product of small primes")]
    FftSize(usize),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = HomError> = std::result::Result<T, E>;
