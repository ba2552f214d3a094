//! End-to-end multi-channel quickest-search simulator.
//!
//! Each trial draws a hidden drift `theta in {0,1}` with success probability
//! `prior`, observes raw increments `dxi = theta dt + sqrt(dt) Z`, and keeps
//! the exact likelihood ratio `Phi = exp(xi_t - t/2)` of the observed
//! channel.  The strategy discards the channel (fresh draw, posterior back
//! at the prior) when the posterior falls to `prior - eps2`, and stops
//! accepting the current channel when it reaches `pi_star`.
//!
//! Internally the trial loop tracks `lambda = ln Phi`, so the two posterior
//! thresholds become constant log-odds levels and no transcendental is
//! needed per step; [`ChannelState`] carries the equivalent multiplicative
//! update and the two routes are pinned together by tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logit, sigmoid, ModelParams};
use crate::sde::path_rng;
use crate::stats::{self, RiskEstimate};

/// Switching/stopping thresholds and discretization for one search run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Stop and accept the current channel when the posterior reaches this.
    pub pi_star: f64,
    /// Discard the channel when the posterior falls to `prior - eps2`.
    pub eps2: f64,
    /// Observation step.
    pub dt: f64,
    /// Safety horizon; trials running past it are flagged truncated.
    pub max_time: f64,
}

impl StrategyConfig {
    pub fn new(
        params: &ModelParams,
        pi_star: f64,
        eps2: f64,
        dt: f64,
        max_time: f64,
    ) -> Result<Self> {
        if !(eps2 > 0.0 && params.prior - eps2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eps2",
                value: eps2,
                constraint: "0 < eps2 < prior",
            });
        }
        if !(pi_star > params.prior && pi_star < 1.0) {
            return Err(Error::InvalidParameter {
                name: "pi_star",
                value: pi_star,
                constraint: "prior < pi_star < 1",
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                constraint: "dt > 0",
            });
        }
        if !(max_time >= dt && max_time.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "max_time",
                value: max_time,
                constraint: "max_time >= dt",
            });
        }
        Ok(StrategyConfig {
            pi_star,
            eps2,
            dt,
            max_time,
        })
    }

    /// Default safety horizon: 1e4 expected hitting times.
    pub fn default_max_time(expected_tau: f64) -> f64 {
        1e4 * expected_tau
    }
}

/// Posterior bookkeeping of the channel currently under observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Ordinal of the channel in the order observed.
    pub index: usize,
    /// Hidden drift of this channel.
    pub theta: u8,
    /// Likelihood ratio `Phi_t = exp(xi_t - t/2)` of the observed span.
    pub odds: f64,
    /// Posterior `prior * odds / (prior * odds + 1 - prior)`.
    pub posterior: f64,
}

impl ChannelState {
    pub fn fresh(index: usize, theta: u8, prior: f64) -> Self {
        ChannelState {
            index,
            theta,
            odds: 1.0,
            posterior: prior,
        }
    }

    /// Exact multiplicative likelihood-ratio update for one raw increment.
    pub fn observe(&mut self, dxi: f64, dt: f64, prior: f64) {
        self.odds *= (dxi - 0.5 * dt).exp();
        self.posterior = prior * self.odds / (prior * self.odds + 1.0 - prior);
    }
}

/// One completed trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Total observation time.
    pub tau: f64,
    /// Number of channel changes.
    pub switches: u64,
    /// Hidden drift of the channel accepted at `tau`.
    pub chosen_theta: u8,
    /// Realized cost `c tau + 1{chosen_theta = 0}`.
    pub cost: f64,
    /// Set when the safety horizon cut the trial short.
    pub truncated: bool,
}

/// Batch summary: cost estimate plus its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRiskReport {
    pub cost: RiskEstimate,
    /// Fraction of trials that accepted a drift-0 channel.
    pub p_wrong: f64,
    pub mean_tau: f64,
    pub mean_switches: f64,
    /// Trials cut by the safety horizon (reported, never dropped).
    pub truncated_trials: usize,
}

fn draw_theta<R: Rng>(rng: &mut R, prior: f64) -> u8 {
    u8::from(rng.gen_bool(prior))
}

fn trial_with_rng<R: Rng>(
    params: &ModelParams,
    cfg: &StrategyConfig,
    rng: &mut R,
) -> SearchOutcome {
    let prior_logit = logit(params.prior);
    // Posterior thresholds as log-odds offsets from a fresh channel.
    let lambda_switch = logit(params.prior - cfg.eps2) - prior_logit;
    let lambda_stop = logit(cfg.pi_star) - prior_logit;
    let sqrt_dt = cfg.dt.sqrt();
    let steps_max = (cfg.max_time / cfg.dt).ceil() as u64;

    let mut theta = draw_theta(rng, params.prior);
    let mut lambda = 0.0f64;
    let mut switches = 0u64;
    let mut t = 0.0;
    for step in 1..=steps_max {
        let z: f64 = rng.sample(StandardNormal);
        let dxi = f64::from(theta) * cfg.dt + sqrt_dt * z;
        lambda += dxi - 0.5 * cfg.dt;
        t = step as f64 * cfg.dt;
        if lambda <= lambda_switch {
            switches += 1;
            theta = draw_theta(rng, params.prior);
            lambda = 0.0;
        } else if lambda >= lambda_stop {
            return SearchOutcome {
                tau: t,
                switches,
                chosen_theta: theta,
                cost: params.c * t + f64::from(theta == 0),
                truncated: false,
            };
        }
    }
    // Safety horizon reached: accept the channel under observation.
    SearchOutcome {
        tau: t,
        switches,
        chosen_theta: theta,
        cost: params.c * t + f64::from(theta == 0),
        truncated: true,
    }
}

/// Runs a single seeded trial.
pub fn run_search_trial(
    params: &ModelParams,
    cfg: &StrategyConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    run_search_trial_stream(params, cfg, seed, 0)
}

/// Runs the trial on the RNG stream `(base_seed, trial_index)` — the exact
/// per-trial entry the batch estimator iterates, so logs rebuilt from it
/// match the aggregates.
pub fn run_search_trial_stream(
    params: &ModelParams,
    cfg: &StrategyConfig,
    base_seed: u64,
    trial_index: u64,
) -> Result<SearchOutcome> {
    ModelParams::new(params.c, params.prior)?;
    StrategyConfig::new(params, cfg.pi_star, cfg.eps2, cfg.dt, cfg.max_time)?;
    let mut rng = path_rng(base_seed, trial_index);
    Ok(trial_with_rng(params, cfg, &mut rng))
}

/// Mean cost over `n` independent trials (streams keyed by
/// `(base_seed, trial index)`), with the error/observation-time
/// decomposition reported alongside.
pub fn estimate_search_risk(
    params: &ModelParams,
    cfg: &StrategyConfig,
    n: usize,
    base_seed: u64,
) -> Result<SearchRiskReport> {
    ModelParams::new(params.c, params.prior)?;
    StrategyConfig::new(params, cfg.pi_star, cfg.eps2, cfg.dt, cfg.max_time)?;
    if n < 100 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            constraint: "n >= 100",
        });
    }
    let outcomes: Vec<SearchOutcome> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(base_seed, i);
            trial_with_rng(params, cfg, &mut rng)
        })
        .collect();
    for o in &outcomes {
        debug_assert!(o.cost >= params.c * o.tau && o.tau <= cfg.max_time);
    }
    let costs: Vec<f64> = outcomes.iter().map(|o| o.cost).collect();
    let taus: Vec<f64> = outcomes.iter().map(|o| o.tau).collect();
    let wrong = outcomes.iter().filter(|o| o.chosen_theta == 0).count();
    let switch_counts: Vec<f64> = outcomes.iter().map(|o| o.switches as f64).collect();
    Ok(SearchRiskReport {
        cost: RiskEstimate::from_samples(&costs, cfg.dt),
        p_wrong: wrong as f64 / n as f64,
        mean_tau: stats::mean(&taus),
        mean_switches: stats::mean(&switch_counts),
        truncated_trials: outcomes.iter().filter(|o| o.truncated).count(),
    })
}

/// Concatenates the innovation increments `dxi - posterior dt` of whichever
/// channel is observed under the switching strategy (no stopping) into one
/// stream covering `[0, horizon]`.  In the limit this stream is a standard
/// Brownian motion regardless of the switching rule.
pub fn reconstruct_observed_brownian(
    params: &ModelParams,
    cfg: &StrategyConfig,
    seed: u64,
    horizon: f64,
) -> Result<Vec<f64>> {
    ModelParams::new(params.c, params.prior)?;
    StrategyConfig::new(params, cfg.pi_star, cfg.eps2, cfg.dt, cfg.max_time)?;
    if !(horizon >= cfg.dt && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon,
            constraint: "horizon >= dt",
        });
    }
    let steps = (horizon / cfg.dt).ceil() as usize;
    let prior_logit = logit(params.prior);
    let lambda_switch = logit(params.prior - cfg.eps2) - prior_logit;
    let sqrt_dt = cfg.dt.sqrt();
    let mut rng: ChaCha8Rng = path_rng(seed, 0);
    let mut theta = draw_theta(&mut rng, params.prior);
    let mut lambda = 0.0f64;
    let mut increments = Vec::with_capacity(steps);
    for _ in 0..steps {
        let posterior = sigmoid(prior_logit + lambda);
        let z: f64 = rng.sample(StandardNormal);
        let dxi = f64::from(theta) * cfg.dt + sqrt_dt * z;
        increments.push(dxi - posterior * cfg.dt);
        lambda += dxi - 0.5 * cfg.dt;
        if lambda <= lambda_switch {
            theta = draw_theta(&mut rng, params.prior);
            lambda = 0.0;
        }
    }
    Ok(increments)
}
