use thiserror::Error;

/// Errors produced by the scattering solvers and the sweep engine.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The dressed basis `|1> + (2 lambda / omega) |2>` does not exist at
    /// `omega = 0`; callers that support decoupled channels handle that case
    /// before building barrier matrices.
    #[error("dressed basis undefined for omega = 0")]
    DegenerateDressedBasis,

    /// A matching or amplitude-extraction system was singular (or too close
    /// to singular to trust).  `condition` is a cheap norm-based estimate.
    #[error("singular linear system in {context} (condition estimate {condition:.3e})")]
    SingularSystem { context: &'static str, condition: f64 },

    /// The excited channel wavenumber is exactly zero (detuning at the
    /// cutoff), so the asymptotic plane-wave basis degenerates.
    #[error("excited channel wavenumber is zero (detuning at cutoff)")]
    CriticalChannel,

    /// The boundary-matching residual of a solve exceeded the trust
    /// threshold of 1e-6.
    #[error("boundary matching residual {residual:.3e} exceeds 1e-6")]
    ResidualTooLarge { residual: f64 },

    /// A resummed denominator vanished (exact scattering resonance).
    #[error("vanishing denominator in {0}")]
    VanishingDenominator(&'static str),

    /// Requested a quantity that only exists when the excited channel is
    /// open (`delta > delta_cr`).
    #[error("excited channel closed (delta <= delta_cr = {delta_cr})")]
    ClosedChannel { delta_cr: f64 },

    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
}
