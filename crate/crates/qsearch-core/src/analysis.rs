//! Hitting-time quadrature, epsilon-optimal planning, and Monte Carlo risk
//! estimation against the analytic value function.
//!
//! The driftless posterior diffusion has speed-measure density
//! `m(z) = 1/(z^2 (1-z)^2)`, so the expected first-passage time of the
//! process reflected at `pihat` from `x` up to `b` is the nested integral
//! `int_x^b M(y) dy` with `M(y) = int_pihat^y 2 m(z) dz`.  The inner
//! integral is closed-form (partial fractions); the outer one is done by
//! adaptive Simpson quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, logit, ModelParams, ThresholdSolution};
use crate::sde::{self, SimGrid};
use crate::stats::RiskEstimate;

/// Relative tolerance for the outer hitting-time integral.
const HITTING_TIME_REL_TOL: f64 = 1e-10;

/// Adaptive Simpson quadrature with the classic `|S_fine - S_coarse|/15`
/// error criterion, bisecting until the local tolerance is met.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    // Absolute budget derived from the first coarse estimate.
    let tol = rel_tol * whole.abs().max(1e-300);
    adapt(f, a, m, b, fa, fm, fb, whole, tol, 60).ok_or(Error::QuadratureFailed {
        a,
        b,
        tol: rel_tol,
    })
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = adapt(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adapt(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

/// Closed-form antiderivative of the doubled speed-measure density
/// `2/(z^2 (1-z)^2)`, by partial fractions:
/// `-2/z + 2/(1-z) + 4 ln(z/(1-z))`.
pub fn speed_measure_antiderivative(z: f64) -> f64 {
    -2.0 / z + 2.0 / (1.0 - z) + 4.0 * logit(z)
}

/// `M(y) = int_pihat^y 2/(z^2(1-z)^2) dz`, the inner speed-measure integral.
pub fn speed_measure_mass(pi_hat: f64, y: f64) -> f64 {
    speed_measure_antiderivative(y) - speed_measure_antiderivative(pi_hat)
}

/// Expected time for the posterior reflected at `pi_hat`, started at `x`, to
/// first reach `b`.
pub fn expected_hitting_time(pi_hat: f64, x: f64, b: f64) -> Result<f64> {
    if !(pi_hat > 0.0 && pi_hat < 1.0) {
        return Err(Error::OutOfDomain {
            name: "pi_hat",
            value: pi_hat,
            domain: "(0, 1)",
        });
    }
    if !(x >= pi_hat && x <= b) {
        return Err(Error::OutOfDomain {
            name: "x",
            value: x,
            domain: "[pi_hat, b]",
        });
    }
    if !(b < 1.0 && b >= x) {
        return Err(Error::OutOfDomain {
            name: "b",
            value: b,
            domain: "[x, 1)",
        });
    }
    if x == b {
        return Ok(0.0);
    }
    let base = speed_measure_antiderivative(pi_hat);
    integrate_adaptive(
        &|y| speed_measure_antiderivative(y) - base,
        x,
        b,
        HITTING_TIME_REL_TOL,
    )
}

/// Output of the epsilon-optimal planning procedure: threshold, time bound
/// with `P(tau > t) < eps/4`, and the switching-trigger offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPlan {
    /// Overall optimality gap the plan is built for.
    pub eps_target: f64,
    /// Stopping threshold from the free-boundary solve.
    pub pi_star: f64,
    /// Time bound `4 E[tau] / eps_target` (Markov inequality).
    pub t_bound: f64,
    /// Switching trigger offset satisfying
    /// `16 t e^{32 t} eps2^2 + eps2 < eps_target / 2`.
    pub eps2: f64,
    /// Expected threshold-hitting time from the speed-measure quadrature.
    pub expected_tau: f64,
}

impl EpsilonPlan {
    /// Recheck `16 t e^{32t} eps2^2 + eps2 < eps/2` in log space so the
    /// astronomically large exponential cannot overflow the check.
    pub fn bound_inequality_holds(&self) -> bool {
        let ln_term = (16.0 * self.t_bound).ln() + 32.0 * self.t_bound + 2.0 * self.eps2.ln();
        let term = if ln_term < -745.0 { 0.0 } else { ln_term.exp() };
        term + self.eps2 < 0.5 * self.eps_target
    }
}

/// Builds the epsilon-optimal plan: threshold via the free-boundary solve,
/// time bound via Markov's inequality on the quadrature `E[tau]`, trigger
/// offset as the positive root of `16 t e^{32t} x^2 + x = eps/2` shrunk by
/// 0.99 and clamped into `(0, pihat/2]`.
///
/// The `e^{32t}` constant is so conservative that the root underflows f64
/// for modest time bounds; that case is reported as
/// [`Error::PlanInfeasible`] rather than silently clamped.
pub fn plan_epsilon_optimal(params: &ModelParams, eps_target: f64) -> Result<EpsilonPlan> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps_target",
            value: eps_target,
            constraint: "0 < eps_target < 1",
        });
    }
    let sol = model::solve_threshold(params, model::DEFAULT_SOLVER_TOL)?;
    let expected_tau = expected_hitting_time(params.prior, params.prior, sol.pi_star)?;
    let t_bound = 4.0 * expected_tau / eps_target;

    // Root of a x^2 + x = eps/2 with a = 16 t e^{32t}, in the
    // cancellation-free form x = eps / (1 + sqrt(1 + 2 a eps)).
    let ln_a = (16.0 * t_bound).ln() + 32.0 * t_bound;
    let ln_u = std::f64::consts::LN_2 + ln_a + eps_target.ln();
    let root = if ln_u <= 700.0 {
        let u = ln_u.exp();
        eps_target / (1.0 + (1.0 + u).sqrt())
    } else {
        // 1 + sqrt(1+u) ~ sqrt(u) to relative error < e^{-350} here.
        (eps_target.ln() - 0.5 * ln_u).exp()
    };
    if root == 0.0 || !root.is_finite() {
        return Err(Error::PlanInfeasible {
            t_bound,
            expected_tau,
            log10_eps2: (eps_target.ln() - 0.5 * ln_u) / std::f64::consts::LN_10,
        });
    }
    let eps2 = (0.99 * root).min(0.5 * params.prior);
    Ok(EpsilonPlan {
        eps_target,
        pi_star: sol.pi_star,
        t_bound,
        eps2,
        expected_tau,
    })
}

/// Monte Carlo estimate of the reflected-problem risk
/// `c E[tau] + E[1 - pi_tau]` under the threshold rule: each path runs until
/// it first reaches `pi_star` (horizon extended as needed, never truncated).
pub fn estimate_risk_reflected(
    params: &ModelParams,
    sol: &ThresholdSolution,
    grid: &SimGrid,
    n: usize,
) -> Result<RiskEstimate> {
    grid.validate()?;
    if n < 100 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            constraint: "n >= 100",
        });
    }
    let costs = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let (tau, v) = sde::reflected_first_passage(
                params,
                grid.dt,
                params.prior,
                sol.pi_star,
                grid.seed,
                i,
            )?;
            Ok(params.c * tau + (1.0 - v))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RiskEstimate::from_samples(&costs, grid.dt))
}

/// Result of checking `E[(pi^eps - pi^r)^{*2}_t] <= 16 t e^{32t} eps^2 + eps`
/// on a batch of shared-noise coupled paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub eps: f64,
    pub t: f64,
    pub n: usize,
    pub dt: f64,
    /// Empirical mean of the squared sup distance between the two posteriors.
    pub empirical_sup_sq: f64,
    /// Mean of the squared sup distance between the unregulated parts.
    pub empirical_y_sup_sq: f64,
    /// Theoretical bound `16 t e^{32t} eps^2 + eps` (may be infinite).
    pub bound: f64,
    /// Whether the empirical estimate sits below the bound.
    pub passes: bool,
    /// Largest `|A(Y^eps) - A^eps(Y^eps)|` seen on any path.
    pub max_reg_diff: f64,
    /// Whether the floor property `sup |A - A^eps| <= eps` held on every path.
    pub reg_diff_within_eps: bool,
}

/// Estimates the coupled sup distance over `n` paths and compares with the
/// theoretical bound at time `t`.
pub fn verify_coupling_bound(
    params: &ModelParams,
    eps: f64,
    t: f64,
    grid: &SimGrid,
    n: usize,
) -> Result<CouplingReport> {
    grid.validate()?;
    if !(t <= grid.horizon && t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            constraint: "t <= grid.horizon",
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            constraint: "n >= 2",
        });
    }
    let stats = (0..n as u64)
        .into_par_iter()
        .map(|i| sde::coupled_stats(params, eps, t, grid.dt, grid.seed, i))
        .collect::<Result<Vec<_>>>()?;
    let sup_sq: Vec<f64> = stats.iter().map(|s| s.sup_x_diff * s.sup_x_diff).collect();
    let y_sup_sq: Vec<f64> = stats.iter().map(|s| s.sup_y_diff * s.sup_y_diff).collect();
    let empirical_sup_sq = crate::stats::mean(&sup_sq);
    let empirical_y_sup_sq = crate::stats::mean(&y_sup_sq);
    let max_reg_diff = stats.iter().map(|s| s.sup_reg_diff).fold(0.0, f64::max);
    let bound = 16.0 * t * (32.0 * t).exp() * eps * eps + eps;
    Ok(CouplingReport {
        eps,
        t,
        n,
        dt: grid.dt,
        empirical_sup_sq,
        empirical_y_sup_sq,
        bound,
        passes: empirical_sup_sq <= bound,
        max_reg_diff,
        reg_diff_within_eps: max_reg_diff <= eps,
    })
}
