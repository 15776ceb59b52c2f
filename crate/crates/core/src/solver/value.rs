use std::time::Instant;

use rayon::prelude::*;

use super::{bellman_target, mean_variance, metadata, on_boundary, prepare, LayerDiagnostics, SolveConfig, SolveDiagnostics, SolveOutput, SolverKind};
use crate::basis::{BasisFamily, CondExpEvaluator};
use crate::error::{Result, RlmcError};
use crate::measures::{sample_layer, TrainingMeasure};
use crate::model::ControlledModel;
use crate::optimizer::ControlOptimizer;
use crate::projection::{project_mc, CoefficientMatrix, CoefficientVector};

struct PointResult {
    value: f64,
    truncated: bool,
    boundary: bool,
}

/// Value iteration: regress the truncated Bellman optimum on the next-state basis.
pub fn solve_value(
    model: &dyn ControlledModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    measure: &TrainingMeasure,
    config: &SolveConfig,
) -> Result<SolveOutput> {
    let prep = prepare(model, basis, evaluator, measure, config)?;
    let gamma = config.truncation.unwrap_or(prep.gamma_bar);
    let big_n = model.num_steps();
    let m = config.samples;
    let optimizer = ControlOptimizer::new(model.control_set(), config.optimizer.clone());
    let q = model.control_set().dim();

    let layer_start = Instant::now();
    let mut points = sample_layer(measure, big_n, m, config.seed);
    let mut values: Vec<f64> = points.iter().map(|x| model.terminal_reward(x)).collect();
    let mut layers = Vec::with_capacity(big_n + 1);
    let (mean, var) = mean_variance(&values);
    layers.push(LayerDiagnostics {
        n: big_n,
        truncated_fraction: 0.0,
        value_min: values.iter().copied().fold(f64::INFINITY, f64::min),
        value_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        target_mean: mean,
        target_variance: var,
        violations: 0,
        boundary_control_fraction: 0.0,
        seconds: layer_start.elapsed().as_secs_f64(),
    });
    let mut rows: Vec<CoefficientVector> = Vec::with_capacity(big_n);

    for n in (0..big_n).rev() {
        let layer_start = Instant::now();
        let alpha = project_mc(&points, &values, basis, &prep.grams[n + 1], n + 1).map_err(|e| e.at("projection", n + 1, None))?;
        rows.push(alpha);
        if n == 0 {
            break;
        }
        let alpha = &rows[rows.len() - 1].alpha;
        points = sample_layer(measure, n, m, config.seed);
        let results: Vec<Result<PointResult>> = points
            .par_iter()
            .enumerate()
            .map_init(
                || (evaluator.scratch(), vec![0.0; q]),
                |(scratch, u), (i, x)| {
                    let v = bellman_target(n, x, alpha, evaluator, &optimizer, scratch, u).map_err(|e| e.at("solver_value", n, Some(i)))?;
                    if !v.is_finite() {
                        return Err(RlmcError::Numerical {
                            module: "solver_value",
                            n: Some(n),
                            m: Some(i),
                            detail: format!("non-finite Bellman value {v}"),
                        });
                    }
                    let clamped = v.clamp(-gamma, gamma);
                    Ok(PointResult {
                        value: clamped,
                        truncated: clamped != v,
                        boundary: on_boundary(u, model),
                    })
                },
            )
            .collect();
        let results: Vec<PointResult> = results.into_iter().collect::<Result<_>>()?;
        values = results.iter().map(|r| r.value).collect();
        let (mean, var) = mean_variance(&values);
        layers.push(LayerDiagnostics {
            n,
            truncated_fraction: results.iter().filter(|r| r.truncated).count() as f64 / m as f64,
            value_min: values.iter().copied().fold(f64::INFINITY, f64::min),
            value_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            target_mean: mean,
            target_variance: var,
            violations: values.iter().filter(|v| v.abs() > gamma).count(),
            boundary_control_fraction: results.iter().filter(|r| r.boundary).count() as f64 / m as f64,
            seconds: layer_start.elapsed().as_secs_f64(),
        });
    }
    rows.reverse();
    let total_violations = layers.iter().map(|l| l.violations).sum();
    Ok(SolveOutput {
        coefficients: CoefficientMatrix {
            metadata: metadata(model, basis, measure, SolverKind::Value, config),
            rows,
        },
        diagnostics: SolveDiagnostics {
            solver: SolverKind::Value,
            gamma,
            gamma_bar: prep.gamma_bar,
            samples: m,
            basis_size: basis.size(),
            gram_min_eigenvalue: prep.grams.iter().map(|g| g.min_eigenvalue()).fold(f64::INFINITY, f64::min),
            gram_jitter: prep.grams.iter().map(|g| g.jitter()).fold(0.0, f64::max),
            warnings: prep.warnings,
            layers,
            total_violations,
            wall_seconds: prep.started.elapsed().as_secs_f64(),
        },
    })
}
