//! Backward regress-later solvers.
//!
//! Both solvers walk backwards through time, drawing a fresh layer of training points from
//! the training measure at every step and regressing a target on the basis of the next
//! state. Value iteration regresses the (truncated) Bellman optimum; performance iteration
//! regresses the realised cost of trajectories resimulated under the already-fitted future
//! policy.

mod perf;
mod value;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, CondExpEvaluator, CondExpScratch, GramMatrix};
use crate::error::{Result, RlmcError};
use crate::measures::TrainingMeasure;
use crate::model::{value_bound, ControlledModel};
use crate::optimizer::{ControlOptimizer, OptimizerConfig};
use crate::projection::{CoefficientMatrix, CoefficientMetadata};

pub use perf::solve_perf;
pub use value::solve_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Value,
    Performance,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Value => "value",
            SolverKind::Performance => "performance",
        }
    }
}

/// Budget and settings shared by both solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Training points per layer.
    pub samples: usize,
    pub seed: u64,
    /// Truncation level for value iteration; the model's trivial bound when absent.
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl SolveConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        SolveConfig {
            samples,
            seed,
            truncation: None,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.samples == 0 {
            errors.push("samples must be at least 1".to_string());
        }
        if let Some(g) = self.truncation {
            if !(g > 0.0) {
                errors.push(format!("truncation must be positive, got {g}"));
            }
        }
        errors.extend(self.optimizer.validate());
        errors
    }
}

/// Per-layer statistics, one entry per stored time index `n = N..=1` in solve order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub n: usize,
    /// Share of points whose Bellman optimum was clamped to `[-Gamma, Gamma]`.
    pub truncated_fraction: f64,
    pub value_min: f64,
    pub value_max: f64,
    pub target_mean: f64,
    pub target_variance: f64,
    /// Stored targets outside the admissible band (`Gamma` or the trivial bound).
    pub violations: usize,
    /// Share of optimal controls on the boundary of the control box.
    pub boundary_control_fraction: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub solver: SolverKind,
    /// Truncation level (value iteration) or admissible band (performance iteration).
    pub gamma: f64,
    pub gamma_bar: f64,
    pub samples: usize,
    pub basis_size: usize,
    pub gram_min_eigenvalue: f64,
    pub gram_jitter: f64,
    pub warnings: Vec<String>,
    pub layers: Vec<LayerDiagnostics>,
    pub total_violations: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub coefficients: CoefficientMatrix,
    pub diagnostics: SolveDiagnostics,
}

/// Dispatch to [`solve_value`] or [`solve_perf`].
pub fn solve(
    kind: SolverKind,
    model: &dyn ControlledModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    measure: &TrainingMeasure,
    config: &SolveConfig,
) -> Result<SolveOutput> {
    match kind {
        SolverKind::Value => solve_value(model, basis, evaluator, measure, config),
        SolverKind::Performance => solve_perf(model, basis, evaluator, measure, config),
    }
}

/// Maximise `sign * (f(n, x, u) + sum_k alpha_k phi_hat_k^n(x, u))` and return the optimum
/// in the model's own sense together with the maximiser.
pub fn bellman_target(
    n: usize,
    x: &[f64],
    alpha_next: &[f64],
    evaluator: &CondExpEvaluator<'_>,
    optimizer: &ControlOptimizer,
    scratch: &mut CondExpScratch,
    control: &mut [f64],
) -> Result<f64> {
    let model = evaluator.model();
    let sign = model.sense().sign();
    optimizer
        .maximize(
            |u| sign * (model.running_reward(n, x, u) + evaluator.continuation(n, x, u, alpha_next, scratch)),
            control,
        )
        .map(|v| sign * v)
        .ok_or_else(|| RlmcError::numerical("optimizer", format!("no finite objective value at state {x:?}")))
}

/// Estimated optimal control at epoch `s` for state `x` under `coefficients`.
pub fn control_map_from(
    coefficients: &CoefficientMatrix,
    evaluator: &CondExpEvaluator<'_>,
    optimizer: &ControlOptimizer,
    s: usize,
    x: &[f64],
    scratch: &mut CondExpScratch,
    control: &mut [f64],
) -> Result<()> {
    bellman_target(s, x, coefficients.next_row(s), evaluator, optimizer, scratch, control).map(|_| ())
}

pub(crate) struct Prepared {
    pub grams: Vec<GramMatrix>,
    pub gamma_bar: f64,
    pub warnings: Vec<String>,
    pub started: Instant,
}

/// Validate inputs and factor one Gram matrix per time index `0..=N`.
pub(crate) fn prepare(
    model: &dyn ControlledModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    measure: &TrainingMeasure,
    config: &SolveConfig,
) -> Result<Prepared> {
    let started = Instant::now();
    let errors = config.validate();
    if !errors.is_empty() {
        return Err(RlmcError::Configuration(errors.join("; ")));
    }
    if evaluator.basis().size() != basis.size() || evaluator.model().name() != model.name() {
        return Err(RlmcError::Configuration("evaluator was built for a different model or basis".into()));
    }
    if !basis.domain().contains_box(model.state_domain()) {
        return Err(RlmcError::Argument("basis domain must contain the state domain".into()));
    }
    measure.validate_for(model.num_steps(), model.state_domain())?;
    let mut warnings = Vec::new();
    if config.samples < basis.size() {
        warnings.push(format!(
            "samples per layer ({}) below basis size ({}): regression is high-variance",
            config.samples,
            basis.size()
        ));
    }
    let mut grams: Vec<GramMatrix> = Vec::with_capacity(model.num_steps() + 1);
    for n in 0..=model.num_steps() {
        let c = measure.component(n);
        let reuse = n > 0 && std::ptr::eq(c, measure.component(n - 1));
        let g = if reuse { grams[n - 1].clone() } else { GramMatrix::compute(basis, c)? };
        grams.push(g);
    }
    Ok(Prepared {
        grams,
        gamma_bar: value_bound(model),
        warnings,
        started,
    })
}

pub(crate) fn metadata(model: &dyn ControlledModel, basis: &BasisFamily, measure: &TrainingMeasure, kind: SolverKind, config: &SolveConfig) -> CoefficientMetadata {
    CoefficientMetadata {
        model: model.name().to_string(),
        basis: basis.spec().clone(),
        measure: measure.clone(),
        solver: kind.as_str().to_string(),
        seed: config.seed,
        samples: config.samples,
        basis_size: basis.size(),
    }
}

pub(crate) fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

pub(crate) fn on_boundary(u: &[f64], model: &dyn ControlledModel) -> bool {
    let b = model.control_set().bounds();
    u.iter().zip(b.lo().iter().zip(b.hi())).any(|(v, (l, h))| v <= l || v >= h)
}
