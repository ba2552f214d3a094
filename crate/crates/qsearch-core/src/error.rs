//! Error type shared by all modules of the crate.

/// Errors from parameter validation, the threshold solver, quadrature, and
/// the simulators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A constructor argument violates its documented range.
    #[error("invalid parameter `{name}` = {value}: must satisfy {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    /// A function argument falls outside the domain of the operation.
    #[error("argument `{name}` = {value} outside domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    /// The root finder could not establish a sign change on its bracket.
    /// Should be impossible for validated parameters; reported as an
    /// internal error rather than panicking.
    #[error("root bracketing failed on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    BracketFailed {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },
    /// Adaptive quadrature hit its depth limit before reaching tolerance.
    #[error("quadrature did not converge to relative tolerance {tol:e} on [{a}, {b}]")]
    QuadratureFailed { a: f64, b: f64, tol: f64 },
    /// The switching-trigger offset required by the plan underflows f64.
    /// Carries the time bound that made the `16 t e^{32 t}` factor blow up.
    #[error(
        "epsilon plan infeasible: required trigger offset underflows f64 \
         (t_bound = {t_bound:.3e}, log10(eps2) ~= {log10_eps2:.1})"
    )]
    PlanInfeasible {
        t_bound: f64,
        expected_tau: f64,
        log10_eps2: f64,
    },
    /// Safety cap for open-ended first-passage simulation.
    #[error("first-passage simulation exceeded {max_steps} steps without hitting {level}")]
    HittingCapExceeded { level: f64, max_steps: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
