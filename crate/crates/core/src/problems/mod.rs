//! Built-in problems and a name registry used by the command-line interface.

pub mod doorways;
pub mod lq;
pub mod toy;
pub mod two_period;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlmcError};
use crate::model::ControlledModel;

pub use doorways::{build_doorways, DoorwaysModel, DoorwaysSpec};
pub use lq::{build_lq, lq_reference_value, LqModel, LqSpec, RiccatiSolution};
pub use toy::{random_walk, small_dp, zero_problem, SmallDpSpec};
pub use two_period::{build_two_period, TwoPeriodModel, TwoPeriodSpec};

/// Names accepted by [`ProblemSpec`].
pub const PROBLEM_NAMES: [&str; 5] = ["lq1", "doorways", "two_period", "zero", "small_dp"];

/// A built-in problem together with its parameters, tagged by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    #[serde(rename = "lq1")]
    Lq1(LqSpec),
    Doorways(DoorwaysSpec),
    TwoPeriod(TwoPeriodSpec),
    Zero {
        #[serde(default = "default_zero_steps")]
        num_steps: usize,
    },
    SmallDp(SmallDpSpec),
}

fn default_zero_steps() -> usize {
    5
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Lq1(_) => "lq1",
            ProblemSpec::Doorways(_) => "doorways",
            ProblemSpec::TwoPeriod(_) => "two_period",
            ProblemSpec::Zero { .. } => "zero",
            ProblemSpec::SmallDp(_) => "small_dp",
        }
    }

    /// Default parameters for a registered name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "lq1" => ProblemSpec::Lq1(LqSpec::default()),
            "doorways" => ProblemSpec::Doorways(DoorwaysSpec::default()),
            "two_period" => ProblemSpec::TwoPeriod(TwoPeriodSpec::default()),
            "zero" => ProblemSpec::Zero {
                num_steps: default_zero_steps(),
            },
            "small_dp" => ProblemSpec::SmallDp(SmallDpSpec::default()),
            other => {
                return Err(RlmcError::Configuration(format!(
                    "problem.name: unknown problem {other:?}, expected one of {PROBLEM_NAMES:?}"
                )))
            }
        })
    }

    /// Every violated field, prefixed with `problem.`.
    pub fn validate(&self) -> Vec<String> {
        let errors = match self {
            ProblemSpec::Lq1(s) => s.validate(),
            ProblemSpec::Doorways(s) => s.validate(),
            ProblemSpec::TwoPeriod(s) => s.validate(),
            ProblemSpec::Zero { num_steps } => {
                if *num_steps == 0 {
                    vec!["num_steps must be positive".to_string()]
                } else {
                    Vec::new()
                }
            }
            ProblemSpec::SmallDp(s) => {
                let mut e = Vec::new();
                if s.num_steps == 0 {
                    e.push("num_steps must be positive".to_string());
                }
                if s.controls < 2 {
                    e.push("controls must be at least 2".to_string());
                }
                if !(s.noise_sd > 0.0 && s.noise_sd.is_finite()) {
                    e.push("noise_sd must be positive".to_string());
                }
                e
            }
        };
        errors.into_iter().map(|e| format!("problem.{e}")).collect()
    }

    pub fn build(&self) -> Result<Box<dyn ControlledModel>> {
        let errors = self.validate();
        if !errors.is_empty() {
            return Err(RlmcError::Configuration(errors.join("; ")));
        }
        Ok(match self {
            ProblemSpec::Lq1(s) => Box::new(build_lq(s)?),
            ProblemSpec::Doorways(s) => Box::new(build_doorways(s)?),
            ProblemSpec::TwoPeriod(s) => Box::new(build_two_period(s)?),
            ProblemSpec::Zero { num_steps } => Box::new(zero_problem(*num_steps)?),
            ProblemSpec::SmallDp(s) => Box::new(small_dp(s)?),
        })
    }
}
