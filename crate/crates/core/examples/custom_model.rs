//! A user-defined model assembled from closures, solved with both solvers and evaluated.
//!
//! Inventory steering: the state drifts back towards zero, the control pushes it, and the
//! objective penalises distance from a target level plus control effort.
//!
//! Usage: `cargo run --release --example custom_model -- [samples] [seed]`

use rlmc::basis::{make_basis, BasisSpec, CondExpEvaluator};
use rlmc::evaluate::{evaluate_policy, EvaluationOptions};
use rlmc::measures::TrainingMeasure;
use rlmc::model::{BoxDomain, ControlSet, ControlledModel, FnModel, RewardBounds, Sense, TimeGrid};
use rlmc::numerics::norm_inv_cdf;
use rlmc::optimizer::{ControlOptimizer, OptimizerConfig};
use rlmc::solver::{solve, SolveConfig, SolverKind};

const TARGET: f64 = 0.5;
const REVERSION: f64 = 0.2;
const PUSH: f64 = 0.3;
const NOISE: f64 = 0.15;

fn inventory(num_steps: usize) -> rlmc::Result<FnModel> {
    let step_mean = |x: f64, u: f64| x - REVERSION * x + PUSH * u;
    Ok(FnModel::new(
        "inventory",
        TimeGrid::steps(num_steps)?,
        BoxDomain::interval(-2.0, 2.0)?,
        ControlSet::continuous(BoxDomain::interval(-1.0, 1.0)?),
        1,
        move |_, x, xi, u, out| out[0] = step_mean(x[0], u[0]) + NOISE * norm_inv_cdf(xi[0]),
        |_, x, u| (x[0] - TARGET).powi(2) + 0.2 * u[0] * u[0],
        |x| 2.0 * (x[0] - TARGET).powi(2),
        RewardBounds {
            running: 2.5f64.powi(2) + 0.2,
            terminal: 2.0 * 2.5f64.powi(2),
        },
        Sense::Minimize,
    )
    .with_gaussian_step(move |_, x, u, m, s| {
        m[0] = step_mean(x[0], u[0]);
        s[0] = NOISE;
    }))
}

fn main() -> rlmc::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let samples = args.first().copied().unwrap_or(4000) as usize;
    let seed = args.get(1).copied().unwrap_or(7);

    let model = inventory(10)?;
    let basis = make_basis(&BasisSpec::orthonormal(3), model.state_domain())?;
    let evaluator = CondExpEvaluator::auto(&model, &basis, seed)?;
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    let optimizer = ControlOptimizer::new(model.control_set(), OptimizerConfig::default());
    println!("conditional expectations: {:?}", evaluator.strategy());

    for kind in [SolverKind::Value, SolverKind::Performance] {
        let out = solve(kind, &model, &basis, &evaluator, &measure, &SolveConfig::new(samples, seed))?;
        for x0 in [-1.0, 0.0, 1.0] {
            let report = evaluate_policy(&model, &out.coefficients, &evaluator, &optimizer, &[x0], &EvaluationOptions::new(5000, seed + 1))?;
            println!(
                "{:<12} x0 = {x0:+.1}  cost {:.4} +/- {:.4}  mean |u| {:.3}",
                kind.as_str(),
                report.mean,
                report.std_error,
                report.mean_abs_control
            );
        }
        println!("{:<12} solve {:.2}s, {} violations", kind.as_str(), out.diagnostics.wall_seconds, out.diagnostics.total_violations);
    }
    Ok(())
}
