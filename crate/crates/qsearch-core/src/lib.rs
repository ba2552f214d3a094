//! Continuous-time Bayesian quickest search.
//!
//! An observer samples one channel at a time from an infinite pool; each
//! channel is a Brownian motion whose drift is 0 or 1 with prior success
//! probability `pihat`.  Observation costs `c` per unit time and the goal is
//! to stop on a drift-1 channel while minimizing `c E[tau] + P(wrong)`.
//! The optimal rule is a threshold `pi*` on the posterior together with
//! ever-faster channel switching near the prior, which in the limit turns
//! the posterior into a diffusion reflected at `pihat`.
//!
//! The crate provides:
//! - [`model`]: the closed-form threshold `pi*` and value function;
//! - [`sde`]: seeded simulators for the raw, reflected, and impulse
//!   posterior processes, plus the shared-noise coupled pair;
//! - [`analysis`]: speed-measure hitting-time quadrature, the epsilon-optimal
//!   planning procedure, and Monte Carlo risk checks;
//! - [`search`]: the end-to-end multi-channel search simulator driven by raw
//!   observation increments with exact Bayes updates;
//! - [`stats`]: small estimators shared by the Monte Carlo code paths.
//!
//! ```
//! use qsearch_core::{solve_threshold, ModelParams};
//!
//! let params = ModelParams::new(0.01, 0.5).unwrap();
//! let sol = solve_threshold(&params, 1e-12).unwrap();
//! assert!((sol.pi_star - 0.977).abs() < 1e-3);
//! assert!((sol.value(0.5).unwrap() - 0.0945).abs() < 1e-3);
//! ```

pub mod analysis;
pub mod error;
pub mod model;
pub mod sde;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
pub use model::{psi, psi_prime, solve_threshold, ModelParams, ThresholdSolution};
pub use stats::RiskEstimate;
