use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates a type invariant (negative rate, `n = 0`, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The arguments are valid but outside the region where the requested
    /// analytic formula holds (for example `rho >= 1` for `EL_i(t)`).
    #[error("outside analytic domain: {0}")]
    Domain(String),

    #[error(
        "quadrature did not converge: best value {value:e}, error estimate {error_estimate:e} \
         after {evaluations} evaluations"
    )]
    NonConvergence {
        value: f64,
        error_estimate: f64,
        evaluations: usize,
    },

    #[error(
        "state cap {cap} leaves a tail bound of {tail_bound:e}, above tolerance {tolerance:e}"
    )]
    TruncationInsufficient {
        cap: u32,
        tail_bound: f64,
        tolerance: f64,
    },

    #[error("integrand value {value:e} at t = {t} exceeds the declared growth envelope {bound:e}")]
    GrowthEnvelope { t: f64, value: f64, bound: f64 },
}
