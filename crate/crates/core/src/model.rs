//! Controlled Markov decision problems in discrete time.
//!
//! A model is a dynamics map `x' = phi(n, x, xi, u)` driven by a vector of independent
//! uniform(0,1) draws `xi`, a running reward `f(n, x, u)`, a terminal reward `g(x)`, a
//! box-shaped state domain and a compact box of controls. Every transition produced
//! through [`step`] or [`step_into`] is clamped back into the state domain.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlmcError};

/// Number of decision epochs and the physical horizon they discretise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    num_steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(num_steps: usize, horizon: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(RlmcError::Argument("time grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(RlmcError::Argument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid { num_steps, horizon })
    }

    /// Grid with unit horizon.
    pub fn steps(num_steps: usize) -> Result<Self> {
        Self::new(num_steps, 1.0)
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.num_steps as f64
    }
}

/// Axis-aligned closed box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// The state space of a model.
pub type StateDomain = BoxDomain;

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(RlmcError::Argument(format!(
                "box bounds need matching nonzero lengths, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(RlmcError::Argument(format!("axis {i}: need finite lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    /// One-dimensional interval.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    /// True when `other` lies inside `self`.
    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    #[inline]
    pub fn clamp_in_place(&self, x: &mut [f64]) {
        for (v, (&l, &h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            // NaN stays NaN so callers can detect it.
            if *v < l {
                *v = l;
            } else if *v > h {
                *v = h;
            }
        }
    }

    pub(crate) fn check_point(&self, what: &str, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(RlmcError::Argument(format!(
                "{what} {x:?} outside box lo={:?} hi={:?}",
                self.lo, self.hi
            )))
        }
    }
}

/// Compact control box, optionally restricted to a finite tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    bounds: BoxDomain,
    /// When set, the admissible controls are exactly this many equispaced points per axis.
    grid: Option<Vec<usize>>,
}

impl ControlSet {
    /// Continuous control box.
    pub fn continuous(bounds: BoxDomain) -> Self {
        ControlSet { bounds, grid: None }
    }

    /// Finite control set: `points[i]` equispaced values per axis, endpoints included.
    pub fn discrete(bounds: BoxDomain, points: Vec<usize>) -> Result<Self> {
        if points.len() != bounds.dim() || points.iter().any(|&p| p < 2) {
            return Err(RlmcError::Argument(
                "discrete control grid needs >= 2 points on every axis".into(),
            ));
        }
        Ok(ControlSet {
            bounds,
            grid: Some(points),
        })
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn grid(&self) -> Option<&[usize]> {
        self.grid.as_deref()
    }
}

/// Direction of optimisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// Multiplier turning the objective into one to maximise.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

/// Declared sup-norms of the running and terminal rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBounds {
    pub running: f64,
    pub terminal: f64,
}

/// A finite-horizon controlled Markov decision problem.
///
/// Implementations must be pure: identical arguments give identical results.
pub trait ControlledModel: Send + Sync {
    fn name(&self) -> &str;

    fn time_grid(&self) -> &TimeGrid;

    fn state_domain(&self) -> &StateDomain;

    fn control_set(&self) -> &ControlSet;

    /// Number of uniform draws consumed by one transition.
    fn noise_dim(&self) -> usize;

    /// Unclamped transition; the caller clamps `out` into the state domain.
    fn dynamics(&self, n: usize, x: &[f64], xi: &[f64], u: &[f64], out: &mut [f64]);

    fn running_reward(&self, n: usize, x: &[f64], u: &[f64]) -> f64;

    fn terminal_reward(&self, x: &[f64]) -> f64;

    fn reward_bounds(&self) -> RewardBounds;

    fn sense(&self) -> Sense;

    /// Gaussian form of the pre-clamp transition `x' = clamp(mean + sd * z)` with independent
    /// standard normal coordinates `z`. Writes `mean` and `sd` (length `d`) and returns `true`
    /// when the model has this form; availability must not depend on the arguments.
    fn gaussian_step(&self, _n: usize, _x: &[f64], _u: &[f64], _mean: &mut [f64], _sd: &mut [f64]) -> bool {
        false
    }

    /// Lebesgue density of the non-atomic part of `X_{n+1}` at `y`, when known.
    fn transition_density(&self, _n: usize, _x: &[f64], _u: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }

    fn num_steps(&self) -> usize {
        self.time_grid().num_steps()
    }

    fn state_dim(&self) -> usize {
        self.state_domain().dim()
    }
}

impl fmt::Debug for dyn ControlledModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledModel")
            .field("name", &self.name())
            .field("num_steps", &self.num_steps())
            .field("state_domain", self.state_domain())
            .finish()
    }
}

/// Validated single transition.
pub fn step(model: &dyn ControlledModel, n: usize, x: &[f64], xi: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if n >= model.num_steps() {
        return Err(RlmcError::Argument(format!(
            "time index {n} out of range 0..{}",
            model.num_steps()
        )));
    }
    model.state_domain().check_point("state", x)?;
    model.control_set().bounds().check_point("control", u)?;
    if xi.len() != model.noise_dim() || xi.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(RlmcError::Argument(format!(
            "noise must be {} draws in (0,1), got {xi:?}",
            model.noise_dim()
        )));
    }
    let mut out = vec![0.0; model.state_dim()];
    step_into(model, n, x, xi, u, &mut out);
    Ok(out)
}

/// Unchecked transition used on hot paths; always clamps.
#[inline]
pub fn step_into(model: &dyn ControlledModel, n: usize, x: &[f64], xi: &[f64], u: &[f64], out: &mut [f64]) {
    model.dynamics(n, x, xi, u, out);
    model.state_domain().clamp_in_place(out);
}

/// `sum_{s=n}^{N-1} f(s, x_s, u_s) + g(x_N)` for a path starting at time `n`.
pub fn pathwise_performance(
    model: &dyn ControlledModel,
    n: usize,
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
) -> Result<f64> {
    let big_n = model.num_steps();
    if n > big_n {
        return Err(RlmcError::Argument(format!("time index {n} beyond horizon {big_n}")));
    }
    let steps = big_n - n;
    if states.len() != steps + 1 || controls.len() != steps {
        return Err(RlmcError::Argument(format!(
            "path from n={n} needs {} states and {steps} controls, got {} and {}",
            steps + 1,
            states.len(),
            controls.len()
        )));
    }
    let running: f64 = (0..steps)
        .map(|i| model.running_reward(n + i, &states[i], &controls[i]))
        .sum();
    Ok(running + model.terminal_reward(&states[steps]))
}

/// Trivial bound `(N - 1) |f|_inf + |g|_inf` on the value function at times `n >= 1`.
pub fn value_bound(model: &dyn ControlledModel) -> f64 {
    let b = model.reward_bounds();
    (model.num_steps() as f64 - 1.0) * b.running + b.terminal
}

type DynamicsFn = dyn Fn(usize, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
type RunningFn = dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GaussianFn = dyn Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync;
type DensityFn = dyn Fn(usize, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;

/// A model assembled from closures.
#[derive(Clone)]
pub struct FnModel {
    name: String,
    time_grid: TimeGrid,
    state_domain: StateDomain,
    control_set: ControlSet,
    noise_dim: usize,
    dynamics: Arc<DynamicsFn>,
    running: Arc<RunningFn>,
    terminal: Arc<TerminalFn>,
    bounds: RewardBounds,
    sense: Sense,
    gaussian: Option<Arc<GaussianFn>>,
    density: Option<Arc<DensityFn>>,
}

impl FnModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        time_grid: TimeGrid,
        state_domain: StateDomain,
        control_set: ControlSet,
        noise_dim: usize,
        dynamics: impl Fn(usize, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        running: impl Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        bounds: RewardBounds,
        sense: Sense,
    ) -> Self {
        FnModel {
            name: name.into(),
            time_grid,
            state_domain,
            control_set,
            noise_dim,
            dynamics: Arc::new(dynamics),
            running: Arc::new(running),
            terminal: Arc::new(terminal),
            bounds,
            sense,
            gaussian: None,
            density: None,
        }
    }

    /// Declare the pre-clamp Gaussian form of the transition.
    pub fn with_gaussian_step(
        mut self,
        g: impl Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gaussian = Some(Arc::new(g));
        self
    }

    pub fn with_transition_density(
        mut self,
        p: impl Fn(usize, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.density = Some(Arc::new(p));
        self
    }
}

impl ControlledModel for FnModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }
    fn state_domain(&self) -> &StateDomain {
        &self.state_domain
    }
    fn control_set(&self) -> &ControlSet {
        &self.control_set
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn dynamics(&self, n: usize, x: &[f64], xi: &[f64], u: &[f64], out: &mut [f64]) {
        (self.dynamics)(n, x, xi, u, out)
    }
    fn running_reward(&self, n: usize, x: &[f64], u: &[f64]) -> f64 {
        (self.running)(n, x, u)
    }
    fn terminal_reward(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }
    fn reward_bounds(&self) -> RewardBounds {
        self.bounds
    }
    fn sense(&self) -> Sense {
        self.sense
    }
    fn gaussian_step(&self, n: usize, x: &[f64], u: &[f64], mean: &mut [f64], sd: &mut [f64]) -> bool {
        match &self.gaussian {
            Some(g) => {
                g(n, x, u, mean, sd);
                true
            }
            None => false,
        }
    }
    fn transition_density(&self, n: usize, x: &[f64], u: &[f64], y: &[f64]) -> Option<f64> {
        self.density.as_ref().map(|p| p(n, x, u, y))
    }
}
