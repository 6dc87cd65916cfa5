use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate support: Pareto-type measure needs s > 2, got s = {s}")]
    DegenerateSupport { s: f64 },

    #[error("custom density is negative ({value}) at s = {s}, eps = {eps}")]
    NonAdmissible { s: f64, eps: f64, value: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    QuadratureFailure { a: f64, b: f64, estimate: f64 },

    #[error("normalizing integral vanishes at s = {s}")]
    ZeroDenominator { s: f64 },

    #[error("total wealth is zero, the fraction r is undefined")]
    ZeroTotal,

    #[error("operation requires an s-independent redistribution measure")]
    SDependentMeasure,

    #[error("saving propensity lambda = 1 makes the moment recursion degenerate")]
    Degenerate,

    #[error("truncation bound is vacuous: contraction factor {factor} >= 1")]
    TruncationOverflow { factor: f64 },

    #[error("wealth duality needs x + y = 1, got {total}")]
    UnnormalizedTotal { total: f64 },

    #[error("drift undefined at the boundary r = {r}")]
    BoundaryUndefined { r: f64 },

    #[error("density is not positive at r = {r}")]
    NonpositiveDensity { r: f64 },

    #[error("time step {dt} exceeds the maximum 1e-2")]
    StepTooLarge { dt: f64 },

    #[error("stationary density is not integrable ({0})")]
    NonIntegrable(String),

    #[error("kernel is not symmetric: p({i},{j}) = {pij} but p({j},{i}) = {pji}")]
    AsymmetricKernel { i: usize, j: usize, pij: f64, pji: f64 },

    #[error("row {row} of the kernel sums to {sum}, expected 1")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("redistribution measure has mean {mean}, the N-agent model needs 1/2")]
    AsymmetricMean { mean: f64 },

    #[error("variance {variance} is degenerate for mean {mean}")]
    DegenerateVariance { mean: f64, variance: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
