//! Closed-form solution of the free-boundary problem behind the quickest
//! search threshold.
//!
//! On the continuation region the value function solves
//! `(1/2) [x(1-x)]^2 f''(x) = -c` with reflecting condition `f'(pihat) = 0`
//! and smooth fit `f(pi*) = 1 - pi*`, `f'(pi*) = -1` at the stopping
//! boundary.  The general solution of the ODE is
//! `Psi(x) + A x + B` with `Psi(x) = 2c (1-2x) ln(x/(1-x))`, so the whole
//! problem reduces to one scalar root for `pi*` plus two linear constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root-finder tolerance used when callers do not pick their own.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;

/// Observation cost `c` and prior success probability `pihat` — the two
/// scalars that parameterize the entire problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Cost per unit observation time (> 0).
    pub c: f64,
    /// Prior probability that a fresh channel has unit drift (in (0,1)).
    pub prior: f64,
}

impl ModelParams {
    pub fn new(c: f64, prior: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "c",
                value: c,
                constraint: "c > 0",
            });
        }
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::InvalidParameter {
                name: "prior",
                value: prior,
                constraint: "0 < prior < 1",
            });
        }
        Ok(ModelParams { c, prior })
    }
}

/// `ln(x / (1-x))` with the logs split to stay accurate near both endpoints.
#[inline]
pub fn logit(x: f64) -> f64 {
    x.ln() - (-x).ln_1p()
}

/// Inverse of [`logit`], saturation-free for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn check_open_unit(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name,
            value: x,
            domain: "(0, 1)",
        })
    }
}

#[inline]
fn check_cost(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "c",
            value: c,
            constraint: "c > 0",
        })
    }
}

#[inline]
pub(crate) fn psi_raw(x: f64, c: f64) -> f64 {
    2.0 * c * (1.0 - 2.0 * x) * logit(x)
}

#[inline]
pub(crate) fn psi_prime_raw(x: f64, c: f64) -> f64 {
    let s = x * (1.0 - x);
    2.0 * c * ((1.0 - 2.0 * x) - 2.0 * s * logit(x)) / s
}

/// Particular ODE solution `Psi(x) = 2c (1-2x) ln(x/(1-x))`.
///
/// Finite on all of (0,1) and symmetric about 1/2.
pub fn psi(x: f64, c: f64) -> Result<f64> {
    check_open_unit("x", x)?;
    check_cost(c)?;
    Ok(psi_raw(x, c))
}

/// `Psi'(x) = 2c [ (1-2x) - 2x(1-x) ln(x/(1-x)) ] / (x(1-x))`.
///
/// Strictly decreasing on (0,1); diverges to -inf as x -> 1.
pub fn psi_prime(x: f64, c: f64) -> Result<f64> {
    check_open_unit("x", x)?;
    check_cost(c)?;
    Ok(psi_prime_raw(x, c))
}

/// Linear coefficient `A = -Psi'(pihat)` forced by the reflecting condition
/// `f'(pihat) = 0`.
pub fn a_bar(params: &ModelParams) -> f64 {
    -psi_prime_raw(params.prior, params.c)
}

/// Output of the free-boundary solve: the stopping threshold together with
/// the two constants completing the value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub params: ModelParams,
    /// Stopping threshold `pi*` in (prior, 1).
    pub pi_star: f64,
    /// Linear coefficient of the continuation branch.
    pub a_bar: f64,
    /// Constant of the continuation branch, fixed by continuity at `pi*`.
    pub b_bar: f64,
    /// Root-finder tolerance this solution was requested at.
    pub tol: f64,
}

/// Locates the unique root of `g(x) = Psi'(x) + A + 1` on (prior, 1).
///
/// `g(prior) = 1` and `g` is strictly decreasing with `g -> -inf` at 1, so
/// plain bisection is unconditionally convergent; we run it down to the f64
/// fixed point (the midpoint stops moving), which leaves `|g|` far below any
/// requested tolerance in `(0, 1e-6)`.
pub fn solve_threshold(params: &ModelParams, tol: f64) -> Result<ThresholdSolution> {
    ModelParams::new(params.c, params.prior)?;
    if !(tol > 0.0 && tol < 1e-6) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            constraint: "0 < tol < 1e-6",
        });
    }
    let a = a_bar(params);
    let g = |x: f64| psi_prime_raw(x, params.c) + a + 1.0;

    let mut lo = params.prior;
    let mut hi = 1.0 - 1e-12;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::BracketFailed { lo, hi, g_lo, g_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval no longer splittable in f64
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pi_star = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    // Continuity at pi*: 1 - pi* = Psi(pi*) + A pi* + B.
    let b_bar = (1.0 - pi_star) - (psi_raw(pi_star, params.c) + a * pi_star);
    Ok(ThresholdSolution {
        params: *params,
        pi_star,
        a_bar: a,
        b_bar,
        tol,
    })
}

impl ThresholdSolution {
    fn check_state_space(&self, x: f64) -> Result<()> {
        if x >= self.params.prior && x <= 1.0 {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                name: "x",
                value: x,
                domain: "[prior, 1]",
            })
        }
    }

    /// Candidate value function: continuation branch on [prior, pi*) and the
    /// stopping payoff `1 - x` on [pi*, 1].
    pub fn value(&self, x: f64) -> Result<f64> {
        self.check_state_space(x)?;
        if x >= self.pi_star {
            Ok(1.0 - x)
        } else {
            Ok(self.continuation_value(x))
        }
    }

    /// The continuation branch `Psi(x) + A x + B` evaluated without the
    /// domain split; used for continuity checks at `pi*`.
    pub fn continuation_value(&self, x: f64) -> f64 {
        psi_raw(x, self.params.c) + self.a_bar * x + self.b_bar
    }

    /// `f'`: `Psi'(x) + A` on [prior, pi*), -1 on [pi*, 1].
    pub fn value_derivative(&self, x: f64) -> Result<f64> {
        self.check_state_space(x)?;
        if x >= self.pi_star {
            Ok(-1.0)
        } else {
            Ok(psi_prime_raw(x, self.params.c) + self.a_bar)
        }
    }

    /// `f'' = -2c / (x^2 (1-x)^2)` on the continuation region.
    pub fn value_second_derivative(&self, x: f64) -> Result<f64> {
        self.check_continuation_interior(x)?;
        let s = x * (1.0 - x);
        Ok(-2.0 * self.params.c / (s * s))
    }

    /// ODE residual `(1/2) x^2 (1-x)^2 f''(x) + c`; zero in exact arithmetic
    /// on (prior, pi*).  Exposed for verification sweeps.
    pub fn ode_residual(&self, x: f64) -> Result<f64> {
        let f2 = self.value_second_derivative(x)?;
        let s = x * (1.0 - x);
        Ok(0.5 * s * s * f2 + self.params.c)
    }

    fn check_continuation_interior(&self, x: f64) -> Result<()> {
        if x > self.params.prior && x < self.pi_star {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                name: "x",
                value: x,
                domain: "(prior, pi_star)",
            })
        }
    }

    /// Residual of the smooth-fit condition at the stopping boundary,
    /// `Psi'(pi*) + A + 1`.
    pub fn smooth_fit_gap(&self) -> f64 {
        psi_prime_raw(self.pi_star, self.params.c) + self.a_bar + 1.0
    }

    /// True when the solved threshold sits within 1e-6 of the prior.  The
    /// theory leaves open whether `pi* = pihat` can occur at extreme
    /// parameters, so we surface the near-degenerate case instead of
    /// guessing.
    pub fn near_prior(&self) -> bool {
        self.pi_star - self.params.prior < 1e-6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: f64, prior: f64) -> ModelParams {
        ModelParams::new(c, prior).unwrap()
    }

    fn solved(c: f64, prior: f64) -> ThresholdSolution {
        solve_threshold(&params(c, prior), DEFAULT_SOLVER_TOL).unwrap()
    }

    // --- psi ---

    #[test]
    fn psi_vanishes_at_one_half() {
        assert_eq!(psi(0.5, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn psi_matches_high_precision_reference() {
        // Independent 50-digit evaluation, cross-checked by numerically
        // integrating f'' = -2c/(x^2(1-x)^2) twice.
        let v = psi(0.977, 0.01).unwrap();
        assert!((v - (-0.07153077568104812)).abs() < 1e-15, "psi = {v}");
    }

    #[test]
    fn psi_symmetric_about_one_half() {
        for &x in &[0.01, 0.2, 0.35, 0.49, 0.77, 0.93] {
            let a = psi(x, 0.04).unwrap();
            let b = psi(1.0 - x, 0.04).unwrap();
            assert!(
                (a - b).abs() <= 1e-14 * a.abs().max(1.0),
                "x = {x}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn psi_rejects_bad_arguments() {
        assert!(matches!(psi(0.0, 0.01), Err(Error::OutOfDomain { .. })));
        assert!(matches!(psi(1.0, 0.01), Err(Error::OutOfDomain { .. })));
        assert!(matches!(psi(-0.3, 0.01), Err(Error::OutOfDomain { .. })));
        assert!(matches!(psi(0.5, 0.0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(
            psi(0.5, -2.0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    // --- psi_prime ---

    #[test]
    fn psi_prime_vanishes_at_one_half() {
        assert!(psi_prime(0.5, 0.03).unwrap().abs() < 1e-15);
    }

    #[test]
    fn psi_prime_matches_reference() {
        let v = psi_prime(0.7, 0.01).unwrap();
        assert!((v - (-0.07198715251072624)).abs() < 1e-15, "psi' = {v}");
    }

    #[test]
    fn psi_prime_matches_central_difference() {
        let h = 1e-6;
        for &(x, c) in &[(0.7, 0.01), (0.3, 0.02), (0.55, 0.1)] {
            let fd = (psi(x + h, c).unwrap() - psi(x - h, c).unwrap()) / (2.0 * h);
            let an = psi_prime(x, c).unwrap();
            assert!((fd - an).abs() < 1e-6, "x={x} c={c}: fd={fd} analytic={an}");
        }
    }

    #[test]
    fn psi_prime_diverges_near_one() {
        assert!(psi_prime(1.0 - 1e-9, 0.0025).unwrap() < -1e3);
    }

    #[test]
    fn psi_prime_strictly_decreasing() {
        let c = 0.05;
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let x = k as f64 / 200.0;
            let v = psi_prime(x, c).unwrap();
            assert!(v < last, "not decreasing at x = {x}");
            last = v;
        }
    }

    // --- a_bar ---

    #[test]
    fn a_bar_vanishes_at_symmetric_prior() {
        assert!(a_bar(&params(0.01, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn a_bar_is_negated_psi_prime() {
        let p = params(0.07, 0.33);
        assert_eq!(a_bar(&p), -psi_prime(0.33, 0.07).unwrap());
    }

    #[test]
    fn a_bar_agrees_with_alternate_closed_form() {
        // The alternate arrangement -2c [ (2p - 2(p-1)p ln(p/(1-p)) - 1) / ((p-1)p) ].
        let (c, p): (f64, f64) = (0.03, 0.75);
        let alt = -2.0
            * c
            * ((2.0 * p - 2.0 * (p - 1.0) * p * (p / (1.0 - p)).ln() - 1.0) / ((p - 1.0) * p));
        let direct = a_bar(&params(c, p));
        assert!((alt - direct).abs() < 1e-14, "alt={alt} direct={direct}");
        assert!((direct - 0.2918334746401732).abs() < 1e-15);
    }

    // --- solve_threshold ---

    #[test]
    fn threshold_reference_values() {
        // 50-digit bisection references.
        assert!((solved(0.01, 0.5).pi_star - 0.9770238575834246).abs() < 1e-12);
        assert!((solved(0.1, 0.5).pi_star - 0.754724).abs() < 1e-3);
        assert!((solved(0.03, 0.2).pi_star - 0.867_388_677_241_377).abs() < 1e-12);
    }

    #[test]
    fn threshold_satisfies_its_invariants() {
        for &(c, p) in &[
            (0.01, 0.5),
            (0.1, 0.5),
            (0.03, 0.2),
            (0.0025, 0.75),
            (0.03, 0.025),
        ] {
            let sol = solved(c, p);
            assert!(sol.pi_star > p && sol.pi_star < 1.0);
            assert!(
                sol.smooth_fit_gap().abs() <= sol.tol,
                "smooth fit at c={c} p={p}"
            );
            let cont = sol.continuation_value(sol.pi_star) - (1.0 - sol.pi_star);
            assert!(cont.abs() <= 10.0 * f64::EPSILON, "continuity {cont:e}");
            let slope0 = psi_prime(p, c).unwrap() + sol.a_bar;
            assert!(
                slope0.abs() <= 10.0 * f64::EPSILON,
                "reflecting slope {slope0:e}"
            );
        }
    }

    #[test]
    fn threshold_rejects_bad_tolerance() {
        let p = params(0.01, 0.5);
        assert!(solve_threshold(&p, 0.0).is_err());
        assert!(solve_threshold(&p, 1e-5).is_err());
    }

    #[test]
    fn threshold_reports_unbracketable_root() {
        // c so small that the root lies beyond 1 - 1e-12.
        let p = params(1e-15, 0.5);
        assert!(matches!(
            solve_threshold(&p, 1e-12),
            Err(Error::BracketFailed { .. })
        ));
    }

    #[test]
    fn threshold_not_near_prior_for_table_parameters() {
        assert!(!solved(0.03, 0.025).near_prior());
    }

    // --- value ---

    #[test]
    fn value_equals_stopping_payoff_at_threshold() {
        let sol = solved(0.01, 0.5);
        assert_eq!(sol.value(sol.pi_star).unwrap(), 1.0 - sol.pi_star);
    }

    #[test]
    fn value_linear_branch() {
        let sol = solved(0.01, 0.5);
        assert!((sol.value(0.99).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn value_at_prior_matches_reference() {
        // Equals b_bar here since Psi(1/2) = 0 and A = 0.
        let sol = solved(0.01, 0.5);
        assert!((sol.value(0.5).unwrap() - 0.09453076439362263).abs() < 1e-12);
        assert!((sol.value(0.6).unwrap() - 0.09290890396118998).abs() < 1e-12);
    }

    #[test]
    fn value_rejects_out_of_range() {
        let sol = solved(0.01, 0.5);
        assert!(matches!(sol.value(0.49), Err(Error::OutOfDomain { .. })));
        assert!(matches!(sol.value(1.01), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn value_within_bounds_on_grid() {
        let sol = solved(0.03, 0.25);
        for k in 0..=1000 {
            let x = 0.25 + 0.75 * k as f64 / 1000.0;
            let v = sol.value(x).unwrap();
            assert!((-1e-15..=0.75 + 1e-15).contains(&v), "value({x}) = {v}");
        }
    }

    // --- value_derivative ---

    #[test]
    fn derivative_boundary_conditions() {
        let sol = solved(0.01, 0.5);
        assert!(sol.value_derivative(0.5).unwrap().abs() <= 1e-9);
        // Left limit at pi*: evaluate the continuation slope exactly at pi*.
        let left = psi_prime(sol.pi_star, 0.01).unwrap() + sol.a_bar;
        assert!((left + 1.0).abs() <= 10.0 * sol.tol);
        assert_eq!(sol.value_derivative(sol.pi_star).unwrap(), -1.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sol = solved(0.01, 0.5);
        let h = 1e-6;
        let fd = (sol.value(0.6 + h).unwrap() - sol.value(0.6 - h).unwrap()) / (2.0 * h);
        assert!((fd - sol.value_derivative(0.6).unwrap()).abs() < 1e-6);
    }

    // --- ode_residual ---

    #[test]
    fn residual_tiny_at_midpoint() {
        let sol = solved(0.03, 0.5);
        let mid = 0.5 * (sol.params.prior + sol.pi_star);
        assert!(sol.ode_residual(mid).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn residual_tiny_on_grid() {
        let sol = solved(0.03, 0.5);
        let (lo, hi) = (sol.params.prior, sol.pi_star);
        let mut max_res: f64 = 0.0;
        for k in 1..1000 {
            let x = lo + (hi - lo) * k as f64 / 1000.0;
            max_res = max_res.max(sol.ode_residual(x).unwrap().abs());
        }
        assert!(max_res <= 1e-9, "max residual {max_res:e}");
    }

    #[test]
    fn residual_rejects_outside_continuation() {
        let sol = solved(0.03, 0.5);
        assert!(sol.ode_residual(0.5).is_err());
        assert!(sol.ode_residual(sol.pi_star).is_err());
        assert!(sol.ode_residual(0.99).is_err());
    }
}
