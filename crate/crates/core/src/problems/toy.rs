//! Small problems with known answers, used for checks and quick experiments.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{BoxDomain, ControlSet, FnModel, RewardBounds, Sense, TimeGrid};
use crate::numerics::{norm_inv_cdf, norm_pdf};

/// All rewards zero, `x' = clamp(x + u / 10 + z / 10)` on `[-1, 1]`.
pub fn zero_problem(num_steps: usize) -> Result<FnModel> {
    Ok(FnModel::new(
        "zero",
        TimeGrid::steps(num_steps)?,
        BoxDomain::interval(-1.0, 1.0)?,
        ControlSet::continuous(BoxDomain::interval(-1.0, 1.0)?),
        1,
        |_, x, xi, u, out| out[0] = x[0] + 0.1 * u[0] + 0.1 * norm_inv_cdf(xi[0]),
        |_, _, _| 0.0,
        |_| 0.0,
        RewardBounds {
            running: 0.0,
            terminal: 0.0,
        },
        Sense::Maximize,
    )
    .with_gaussian_step(|_, x, u, m, s| {
        m[0] = x[0] + 0.1 * u[0];
        s[0] = 0.1;
    }))
}

/// Uncontrolled walk `x' = x + drift + sd z` on a wide box, `f = 0`, `g(x) = x`.
pub fn random_walk(num_steps: usize, drift: f64, sd: f64) -> Result<FnModel> {
    let half = 50.0 * (1.0 + drift.abs() * num_steps as f64 + sd * (num_steps as f64).sqrt());
    Ok(FnModel::new(
        "random_walk",
        TimeGrid::steps(num_steps)?,
        BoxDomain::interval(-half, half)?,
        ControlSet::continuous(BoxDomain::interval(-1.0, 1.0)?),
        1,
        move |_, x, xi, _, out| out[0] = x[0] + drift + sd * norm_inv_cdf(xi[0]),
        |_, _, _| 0.0,
        |x| x[0],
        RewardBounds {
            running: 0.0,
            terminal: half,
        },
        Sense::Maximize,
    )
    .with_gaussian_step(move |_, x, _, m, s| {
        m[0] = x[0] + drift;
        s[0] = sd;
    }))
}

/// Three-step problem on `[-1, 1]` with five admissible controls, used as a
/// backward-induction reference.
///
/// `x' = clamp(x + shift * u + sd * z)`, running cost `level + x^2 + effort * u^2`,
/// terminal cost `1 + x^2`, minimised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallDpSpec {
    pub num_steps: usize,
    pub controls: usize,
    pub shift: f64,
    pub noise_sd: f64,
    pub level: f64,
    pub effort: f64,
}

impl Default for SmallDpSpec {
    fn default() -> Self {
        SmallDpSpec {
            num_steps: 3,
            controls: 5,
            shift: 0.4,
            noise_sd: 0.2,
            level: 0.5,
            effort: 0.1,
        }
    }
}

pub fn small_dp(spec: &SmallDpSpec) -> Result<FnModel> {
    let SmallDpSpec {
        shift,
        noise_sd,
        level,
        effort,
        ..
    } = spec.clone();
    Ok(FnModel::new(
        "small_dp",
        TimeGrid::steps(spec.num_steps)?,
        BoxDomain::interval(-1.0, 1.0)?,
        ControlSet::discrete(BoxDomain::interval(-1.0, 1.0)?, vec![spec.controls])?,
        1,
        move |_, x, xi, u, out| out[0] = x[0] + shift * u[0] + noise_sd * norm_inv_cdf(xi[0]),
        move |_, x, u| level + x[0] * x[0] + effort * u[0] * u[0],
        |x| 1.0 + x[0] * x[0],
        RewardBounds {
            running: level + 1.0 + effort,
            terminal: 2.0,
        },
        Sense::Minimize,
    )
    .with_gaussian_step(move |_, x, u, m, s| {
        m[0] = x[0] + shift * u[0];
        s[0] = noise_sd;
    })
    .with_transition_density(move |_, x, u, y| norm_pdf((y[0] - x[0] - shift * u[0]) / noise_sd) / noise_sd))
}
