use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("root bracket [{lo}, {hi}] does not straddle a sign change (f(lo)={f_lo:e}, f(hi)={f_hi:e})")]
    BracketFailure { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("L^p norm of the kernel gradient diverges for p = {0} (need p > 2)")]
    InvalidExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel under-resolved: R = {radius} is below two grid spacings (h = {spacing})")]
    UnderResolved { radius: f64, spacing: f64 },

    #[error("grid does not resolve the field perturbation: width {width} < {min_width}")]
    Resolution { width: f64, min_width: f64 },

    #[error("cutoff {cutoff} exceeds the trusted spectral range {trusted}")]
    Reliability { cutoff: f64, trusted: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { method: &'static str, iterations: usize, residual: f64 },

    #[error("backtracking line search collapsed at iteration {iteration} (step {step:e})")]
    StepCollapse { iteration: usize, step: f64 },

    #[error("exchange symmetry leaked: projection residual {0:e}")]
    SymmetryLeak(f64),

    #[error("memory budget exceeded: {points} points per dimension (cap {cap})")]
    MemoryBudget { points: usize, cap: usize },

    #[error("importance sampler degenerate: {0}")]
    VarianceOverflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
