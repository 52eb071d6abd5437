use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probe configuration: {0}")]
    InvalidConfig(String),

    #[error("moment order p+q = {0} exceeds the supported maximum of 4")]
    MomentOrder(usize),

    #[error("observable {observable} has a vanishing denominator at ε = 0")]
    ZeroDenominator { observable: &'static str },

    #[error("observable {observable} is insensitive to the absorbance (∂⟨O⟩/∂ε = 0)")]
    InsensitiveObservable { observable: &'static str },

    #[error("n_T = {n_total} is below the squeezed-vacuum floor {floor} at r = {r}")]
    Infeasible { n_total: f64, floor: f64, r: f64 },

    #[error("seed amplitude solve failed to bracket a root: {0}")]
    NoRoot(String),

    #[error("scaling fit has r² = {r_squared} < {required}")]
    PoorFit { r_squared: f64, required: f64, exponent: f64, prefactor: f64 },

    #[error("invalid scaling grid: {0}")]
    InvalidGrid(String),

    #[error("Fock truncation unsafe: population {tail:e} above level {level} exceeds {tol:e}")]
    TruncationUnsafe { tail: f64, level: usize, tol: f64 },

    #[error("finite-difference derivative unstable: step estimates differ by {rel:e} (relative)")]
    DerivativeUnstable { rel: f64 },
}
