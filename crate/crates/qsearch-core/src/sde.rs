//! Seeded path simulation of the posterior diffusions.
//!
//! Four processes share the driving noise convention (exactly one standard
//! normal draw per grid step, streams keyed by `(seed, path_index)`):
//!
//! - the raw posterior `d pi = pi (1 - pi) dW`, integrated in logit
//!   coordinates where the drift is `pi - 1/2` and the diffusion is 1, so
//!   Euler steps cannot leave (0,1);
//! - the posterior reflected at the prior, via projection
//!   `pi <- max(pihat, pi + pi(1-pi) sqrt(dt) Z)` with the projection
//!   amounts accumulated into the regulator;
//! - the impulse posterior, which diffuses freely on `(pihat - eps, 1)` and
//!   resets to `pihat` whenever a step lands at or below `pihat - eps`
//!   (each reset books exactly `eps` of regulator);
//! - the coupled pair `(Y, Y^eps)` in Skorokhod form, where the running
//!   maximum of `(pihat - Y)^+` plays the regulator for `Y` and its
//!   `eps`-floored version regulates `Y^eps`.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logit, sigmoid, ModelParams};

/// Paths are clipped just below 1 so the diffusion coefficient stays
/// nonnegative; with the supported step sizes the clip is unreachable.
const MAX_LEVEL: f64 = 1.0 - 1e-12;

/// Largest f64 strictly below 1, for keeping mapped posteriors inside (0,1).
const MAX_LEVEL_OPEN: f64 = 1.0 - f64::EPSILON / 2.0;

/// Safety cap for open-ended first-passage simulation (about 8.6e9 steps).
const FIRST_PASSAGE_STEP_CAP: u64 = 1 << 33;

/// Time discretization plus the RNG seed paths are keyed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    /// Step size (> 0).
    pub dt: f64,
    /// Simulated horizon; the grid covers `ceil(horizon/dt)` steps.
    pub horizon: f64,
    /// Base seed; per-path streams are derived from it.
    pub seed: u64,
}

impl SimGrid {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        let grid = SimGrid { dt, horizon, seed };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt,
                constraint: "dt > 0",
            });
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                constraint: "horizon >= dt",
            });
        }
        if self.horizon / self.dt > u32::MAX as f64 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                constraint: "horizon/dt must stay below 2^32 steps",
            });
        }
        Ok(())
    }

    /// Number of steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).ceil() as usize
    }
}

/// One discretized trajectory together with its regulator/impulse record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    /// Grid times starting at 0.
    pub times: Vec<f64>,
    /// Process values (posterior scale).
    pub values: Vec<f64>,
    /// Cumulative regulator (reflection push or impulse bookkeeping),
    /// nondecreasing from 0.
    pub regulator: Vec<f64>,
    /// Indices of impulse/switch events, if any.
    pub impulses: Vec<usize>,
}

impl PathSample {
    fn with_capacity(n: usize) -> Self {
        PathSample {
            times: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            regulator: Vec::with_capacity(n),
            impulses: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, value: f64, regulator: f64) {
        self.times.push(t);
        self.values.push(value);
        self.regulator.push(regulator);
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("empty path")
    }

    /// Smallest grid time at which the path reaches `level` (value >= level),
    /// or `None` if it never does within the horizon.
    pub fn first_hit(&self, level: f64) -> Option<f64> {
        self.values
            .iter()
            .position(|&v| v >= level)
            .map(|i| self.times[i])
    }

    /// Path dump with columns `t,value,regulator,event_flag`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,value,regulator,event_flag")?;
        let mut next_event = self.impulses.iter().peekable();
        for i in 0..self.times.len() {
            let flag = if next_event.peek() == Some(&&i) {
                next_event.next();
                1
            } else {
                0
            };
            writeln!(
                w,
                "{},{},{},{}",
                self.times[i], self.values[i], self.regulator[i], flag
            )?;
        }
        Ok(())
    }
}

/// Shared-noise pair `(Y, Y^eps)` with its running coupling distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSample {
    /// Reflected-side path (values are `X = Y + A(Y)`).
    pub y: PathSample,
    /// Impulse-side path (values are `X^eps = Y^eps + A^eps`).
    pub y_eps: PathSample,
    /// Running max of `|Y_s - Y^eps_s|`.
    pub sup_diff: f64,
    /// Running max of `|A_s(Y^eps) - A^eps_s(Y^eps)|`; at most eps by the
    /// floor construction.
    pub sup_reg_diff: f64,
}

/// Per-path coupling summary used by the batched bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledStats {
    /// sup over the grid of `|X_s - X^eps_s|` (the physical posteriors).
    pub sup_x_diff: f64,
    /// sup of `|Y_s - Y^eps_s|` (the unregulated parts).
    pub sup_y_diff: f64,
    /// sup of `|A(Y^eps) - A^eps(Y^eps)|`.
    pub sup_reg_diff: f64,
}

/// RNG stream for path `path_index` under `seed`; parallel generation is
/// reproducible because streams are independent of scheduling.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

fn check_probability(name: &'static str, x: f64) -> Result<()> {
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

fn check_eps(eps: f64, prior: f64) -> Result<()> {
    if eps > 0.0 && eps < prior {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: "eps",
            value: eps,
            domain: "(0, prior)",
        })
    }
}

#[inline]
fn sigma(x: f64) -> f64 {
    (x * (1.0 - x)).max(0.0)
}

// --- core steppers, generic over the noise source so tests can inject ---

fn unreflected_with(grid: &SimGrid, x0: f64, mut draw: impl FnMut() -> f64) -> PathSample {
    let steps = grid.steps();
    let sqrt_dt = grid.dt.sqrt();
    let mut path = PathSample::with_capacity(steps + 1);
    let mut x = logit(x0);
    let mut pi = x0;
    path.push(0.0, pi, 0.0);
    for i in 1..=steps {
        x += sqrt_dt * draw() + (pi - 0.5) * grid.dt;
        // The state lives in logit coordinates; clamp only the mapped value
        // so sigmoid saturation cannot emit an exact 0 or 1.
        pi = sigmoid(x).clamp(f64::MIN_POSITIVE, MAX_LEVEL_OPEN);
        path.push(i as f64 * grid.dt, pi, 0.0);
    }
    path
}

fn reflected_with(
    params: &ModelParams,
    grid: &SimGrid,
    mut draw: impl FnMut() -> f64,
) -> PathSample {
    let pihat = params.prior;
    let steps = grid.steps();
    let sqrt_dt = grid.dt.sqrt();
    let mut path = PathSample::with_capacity(steps + 1);
    let mut v = pihat;
    let mut reg = 0.0;
    path.push(0.0, v, reg);
    for i in 1..=steps {
        let prop = v + v * (1.0 - v) * sqrt_dt * draw();
        if prop < pihat {
            reg += pihat - prop;
            v = pihat;
        } else {
            v = prop.min(MAX_LEVEL);
        }
        path.push(i as f64 * grid.dt, v, reg);
    }
    path
}

fn impulse_with(
    params: &ModelParams,
    eps: f64,
    grid: &SimGrid,
    mut draw: impl FnMut() -> f64,
) -> PathSample {
    let pihat = params.prior;
    let floor_level = pihat - eps;
    let steps = grid.steps();
    let sqrt_dt = grid.dt.sqrt();
    let mut path = PathSample::with_capacity(steps + 1);
    let mut v = pihat;
    let mut events = 0u64;
    path.push(0.0, v, 0.0);
    for i in 1..=steps {
        let prop = v + v * (1.0 - v) * sqrt_dt * draw();
        if prop <= floor_level {
            events += 1;
            v = pihat;
            path.impulses.push(i);
        } else {
            v = prop.min(MAX_LEVEL);
        }
        path.push(i as f64 * grid.dt, v, events as f64 * eps);
    }
    path
}

struct CoupledState {
    barrier: f64,
    eps: f64,
    y: f64,
    reg_y: f64,
    y_eps: f64,
    run_max_eps: f64,
    floor_count: u64,
    reg_eps: f64,
    sup_y_diff: f64,
    sup_x_diff: f64,
    sup_reg_diff: f64,
}

impl CoupledState {
    fn new(pihat: f64, eps: f64) -> Self {
        CoupledState {
            barrier: pihat,
            eps,
            y: pihat,
            reg_y: 0.0,
            y_eps: pihat,
            run_max_eps: 0.0,
            floor_count: 0,
            reg_eps: 0.0,
            sup_y_diff: 0.0,
            sup_x_diff: 0.0,
            sup_reg_diff: 0.0,
        }
    }

    /// One shared-noise Euler step; returns true when the floored regulator
    /// jumped this step.
    fn step(&mut self, sqrt_dt: f64, z: f64) -> bool {
        let dw = sqrt_dt * z;
        self.y += sigma(self.x()) * dw;
        self.y_eps += sigma(self.x_eps()) * dw;
        self.reg_y = self.reg_y.max(self.barrier - self.y);
        self.run_max_eps = self.run_max_eps.max(self.barrier - self.y_eps);
        // Floor bookkeeping through an integer count keeps the regulator an
        // exact multiple of eps.
        let mut jumped = false;
        while self.run_max_eps - self.reg_eps >= self.eps {
            self.floor_count += 1;
            self.reg_eps = self.floor_count as f64 * self.eps;
            jumped = true;
        }
        self.sup_y_diff = self.sup_y_diff.max((self.y - self.y_eps).abs());
        self.sup_x_diff = self.sup_x_diff.max((self.x() - self.x_eps()).abs());
        self.sup_reg_diff = self
            .sup_reg_diff
            .max((self.run_max_eps - self.reg_eps).abs());
        jumped
    }

    /// `X = Y + A(Y)`; at least the barrier by construction, so sum rounding
    /// is clipped back onto it.
    fn x(&self) -> f64 {
        (self.y + self.reg_y).max(self.barrier)
    }

    /// `X^eps = Y^eps + A^eps`; at least `barrier - eps` by the floor rule.
    fn x_eps(&self) -> f64 {
        (self.y_eps + self.reg_eps).max(self.barrier - self.eps)
    }
}

fn coupled_with(
    params: &ModelParams,
    eps: f64,
    grid: &SimGrid,
    mut draw: impl FnMut() -> f64,
) -> CoupledSample {
    let pihat = params.prior;
    let steps = grid.steps();
    let sqrt_dt = grid.dt.sqrt();
    let mut st = CoupledState::new(pihat, eps);
    let mut y = PathSample::with_capacity(steps + 1);
    let mut y_eps = PathSample::with_capacity(steps + 1);
    y.push(0.0, pihat, 0.0);
    y_eps.push(0.0, pihat, 0.0);
    for i in 1..=steps {
        let jumped = st.step(sqrt_dt, draw());
        if jumped {
            y_eps.impulses.push(i);
        }
        let t = i as f64 * grid.dt;
        y.push(t, st.x(), st.reg_y);
        y_eps.push(t, st.x_eps(), st.reg_eps);
    }
    CoupledSample {
        y,
        y_eps,
        sup_diff: st.sup_y_diff,
        sup_reg_diff: st.sup_reg_diff,
    }
}

// --- public simulators ---

/// Raw posterior path from `x0`, integrated in logit coordinates.
pub fn simulate_unreflected(params: &ModelParams, grid: &SimGrid, x0: f64) -> Result<PathSample> {
    simulate_unreflected_stream(params, grid, x0, 0)
}

/// As [`simulate_unreflected`] on the RNG stream of `path_index`.
pub fn simulate_unreflected_stream(
    params: &ModelParams,
    grid: &SimGrid,
    x0: f64,
    path_index: u64,
) -> Result<PathSample> {
    ModelParams::new(params.c, params.prior)?;
    grid.validate()?;
    check_probability("x0", x0)?;
    let mut rng = path_rng(grid.seed, path_index);
    Ok(unreflected_with(grid, x0, move || {
        rng.sample(StandardNormal)
    }))
}

/// Posterior reflected at the prior, by projection; starts at the prior.
pub fn simulate_reflected(params: &ModelParams, grid: &SimGrid) -> Result<PathSample> {
    simulate_reflected_stream(params, grid, 0)
}

pub fn simulate_reflected_stream(
    params: &ModelParams,
    grid: &SimGrid,
    path_index: u64,
) -> Result<PathSample> {
    ModelParams::new(params.c, params.prior)?;
    grid.validate()?;
    let mut rng = path_rng(grid.seed, path_index);
    Ok(reflected_with(params, grid, move || {
        rng.sample(StandardNormal)
    }))
}

/// Impulse posterior: resets to the prior whenever a step lands at or below
/// `prior - eps`; each reset books exactly `eps` of regulator.
pub fn simulate_impulse(params: &ModelParams, eps: f64, grid: &SimGrid) -> Result<PathSample> {
    simulate_impulse_stream(params, eps, grid, 0)
}

pub fn simulate_impulse_stream(
    params: &ModelParams,
    eps: f64,
    grid: &SimGrid,
    path_index: u64,
) -> Result<PathSample> {
    ModelParams::new(params.c, params.prior)?;
    grid.validate()?;
    check_eps(eps, params.prior)?;
    let mut rng = path_rng(grid.seed, path_index);
    Ok(impulse_with(params, eps, grid, move || {
        rng.sample(StandardNormal)
    }))
}

/// Shared-noise coupled pair `(Y, Y^eps)` in Skorokhod form.
pub fn simulate_coupled(params: &ModelParams, eps: f64, grid: &SimGrid) -> Result<CoupledSample> {
    simulate_coupled_stream(params, eps, grid, 0)
}

pub fn simulate_coupled_stream(
    params: &ModelParams,
    eps: f64,
    grid: &SimGrid,
    path_index: u64,
) -> Result<CoupledSample> {
    ModelParams::new(params.c, params.prior)?;
    grid.validate()?;
    check_eps(eps, params.prior)?;
    let mut rng = path_rng(grid.seed, path_index);
    Ok(coupled_with(params, eps, grid, move || {
        rng.sample(StandardNormal)
    }))
}

/// Streaming coupling distances over `ceil(t/dt)` steps, without storing the
/// paths; used by the batched bound verification.
pub fn coupled_stats(
    params: &ModelParams,
    eps: f64,
    t: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
) -> Result<CoupledStats> {
    ModelParams::new(params.c, params.prior)?;
    check_eps(eps, params.prior)?;
    if !(dt > 0.0 && t >= dt) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            constraint: "t >= dt > 0",
        });
    }
    let steps = (t / dt).ceil() as u64;
    let sqrt_dt = dt.sqrt();
    let mut rng = path_rng(seed, path_index);
    let mut st = CoupledState::new(params.prior, eps);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        st.step(sqrt_dt, z);
    }
    Ok(CoupledStats {
        sup_x_diff: st.sup_x_diff,
        sup_y_diff: st.sup_y_diff,
        sup_reg_diff: st.sup_reg_diff,
    })
}

/// Streaming first passage of the reflected posterior to `level`, started at
/// `start >= prior`; returns the hit time and the value at the hit.  The
/// horizon is open-ended (no truncation), guarded only by a far-out step cap.
pub fn reflected_first_passage(
    params: &ModelParams,
    dt: f64,
    start: f64,
    level: f64,
    seed: u64,
    path_index: u64,
) -> Result<(f64, f64)> {
    ModelParams::new(params.c, params.prior)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            constraint: "dt > 0",
        });
    }
    if !(start >= params.prior && start <= level) {
        return Err(Error::OutOfDomain {
            name: "start",
            value: start,
            domain: "[prior, level]",
        });
    }
    if !(level < 1.0 && level >= start) {
        return Err(Error::OutOfDomain {
            name: "level",
            value: level,
            domain: "[start, 1)",
        });
    }
    let pihat = params.prior;
    let sqrt_dt = dt.sqrt();
    let mut rng = path_rng(seed, path_index);
    let mut v = start;
    if v >= level {
        return Ok((0.0, v));
    }
    let mut step: u64 = 0;
    loop {
        step += 1;
        if step > FIRST_PASSAGE_STEP_CAP {
            return Err(Error::HittingCapExceeded {
                level,
                max_steps: FIRST_PASSAGE_STEP_CAP,
            });
        }
        let z: f64 = rng.sample(StandardNormal);
        let prop = v + v * (1.0 - v) * sqrt_dt * z;
        v = if prop < pihat {
            pihat
        } else {
            prop.min(MAX_LEVEL)
        };
        if v >= level {
            return Ok((step as f64 * dt, v));
        }
    }
}
