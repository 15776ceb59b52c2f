use std::time::Instant;

use rayon::prelude::*;

use super::{bellman_target, mean_variance, metadata, on_boundary, prepare, LayerDiagnostics, SolveConfig, SolveDiagnostics, SolveOutput, SolverKind};
use crate::basis::{BasisFamily, CondExpEvaluator};
use crate::error::{Result, RlmcError};
use crate::measures::{sample_layer, TrainingMeasure};
use crate::model::{step_into, ControlledModel};
use crate::optimizer::ControlOptimizer;
use crate::projection::{project_mc, CoefficientMatrix, CoefficientVector};
use crate::rng::{fill_open01, stream_rng, tags};

/// Performance iteration: regress realised costs of trajectories resimulated from each
/// training point under the policy defined by the coefficient rows fitted so far.
///
/// Resimulation noise for point `m` of layer `n` comes from its own derived stream, disjoint
/// from training-point and evaluation streams.
pub fn solve_perf(
    model: &dyn ControlledModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    measure: &TrainingMeasure,
    config: &SolveConfig,
) -> Result<SolveOutput> {
    let prep = prepare(model, basis, evaluator, measure, config)?;
    let gamma_bar = prep.gamma_bar;
    let big_n = model.num_steps();
    let m = config.samples;
    let optimizer = ControlOptimizer::new(model.control_set(), config.optimizer.clone());
    let (d, q, r) = (model.state_dim(), model.control_set().dim(), model.noise_dim());

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
        violations: values.iter().filter(|v| v.abs() > gamma_bar).count(),
        boundary_control_fraction: 0.0,
        seconds: layer_start.elapsed().as_secs_f64(),
    });
    // Rows for n+1..=N, stored front-first as they are produced.
    let mut rows: Vec<CoefficientVector> = Vec::with_capacity(big_n);

    for n in (0..big_n).rev() {
        let layer_start = Instant::now();
        let alpha = project_mc(&points, &values, basis, &prep.grams[n + 1], n + 1).map_err(|e| e.at("projection", n + 1, None))?;
        rows.insert(0, alpha);
        if n == 0 {
            break;
        }
        points = sample_layer(measure, n, m, config.seed);
        let future = &rows;
        let results: Vec<Result<(f64, bool)>> = points
            .par_iter()
            .enumerate()
            .map_init(
                || (evaluator.scratch(), vec![0.0; q], vec![0.0; d], vec![0.0; d], vec![0.0; r]),
                |(scratch, u, x, next, xi), (i, start)| {
                    let mut rng = stream_rng(config.seed, tags::PERF_RESIM, n as u64, i as u64);
                    x.copy_from_slice(start);
                    let mut total = 0.0;
                    let mut first_boundary = false;
                    for s in n..big_n {
                        bellman_target(s, x, &future[s - n].alpha, evaluator, &optimizer, scratch, u).map_err(|e| e.at("solver_perf", s, Some(i)))?;
                        if s == n {
                            first_boundary = on_boundary(u, model);
                        }
                        total += model.running_reward(s, x, u);
                        fill_open01(&mut rng, xi);
                        step_into(model, s, x, xi, u, next);
                        x.copy_from_slice(next);
                    }
                    total += model.terminal_reward(x);
                    if !total.is_finite() {
                        return Err(RlmcError::Numerical {
                            module: "solver_perf",
                            n: Some(n),
                            m: Some(i),
                            detail: format!("non-finite pathwise performance {total}"),
                        });
                    }
                    Ok((total, first_boundary))
                },
            )
            .collect();
        let results: Vec<(f64, bool)> = results.into_iter().collect::<Result<_>>()?;
        values = results.iter().map(|r| r.0).collect();
        let (mean, var) = mean_variance(&values);
        layers.push(LayerDiagnostics {
            n,
            truncated_fraction: 0.0,
            value_min: values.iter().copied().fold(f64::INFINITY, f64::min),
            value_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            target_mean: mean,
            target_variance: var,
            violations: values.iter().filter(|v| v.abs() > gamma_bar).count(),
            boundary_control_fraction: results.iter().filter(|r| r.1).count() as f64 / m as f64,
            seconds: layer_start.elapsed().as_secs_f64(),
        });
    }
    let total_violations = layers.iter().map(|l| l.violations).sum();
    Ok(SolveOutput {
        coefficients: CoefficientMatrix {
            metadata: metadata(model, basis, measure, SolverKind::Performance, config),
            rows,
        },
        diagnostics: SolveDiagnostics {
            solver: SolverKind::Performance,
            gamma: gamma_bar,
            gamma_bar,
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
