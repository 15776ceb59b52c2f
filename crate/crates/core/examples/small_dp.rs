//! Both solvers on a three-step problem with five admissible controls, compared through
//! forward evaluation from several starting states.
//!
//! Usage: `cargo run --release --example small_dp -- [samples] [seed]`

use rlmc::basis::{make_basis, BasisSpec, CondExpEvaluator, CondExpStrategy};
use rlmc::evaluate::{evaluate_policy, EvaluationOptions};
use rlmc::measures::TrainingMeasure;
use rlmc::model::ControlledModel;
use rlmc::optimizer::{ControlOptimizer, OptimizerConfig};
use rlmc::problems::{small_dp, SmallDpSpec};
use rlmc::solver::{bellman_target, solve, SolveConfig, SolverKind};

fn main() -> rlmc::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let samples = args.first().copied().unwrap_or(8000) as usize;
    let seed = args.get(1).copied().unwrap_or(1);

    let model = small_dp(&SmallDpSpec::default())?;
    let basis = make_basis(&BasisSpec::piecewise_affine(vec![16]), model.state_domain())?;
    let evaluator = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm)?;
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    let optimizer = ControlOptimizer::new(model.control_set(), OptimizerConfig::default());

    for kind in [SolverKind::Value, SolverKind::Performance] {
        let out = solve(kind, &model, &basis, &evaluator, &measure, &SolveConfig::new(samples, seed))?;
        println!("{} iteration ({:.2}s)", kind.as_str(), out.diagnostics.wall_seconds);
        let mut scratch = evaluator.scratch();
        let mut u = vec![0.0];
        for x0 in [-0.8, -0.4, 0.0, 0.4, 0.8] {
            let estimate = bellman_target(0, &[x0], out.coefficients.row(1), &evaluator, &optimizer, &mut scratch, &mut u)?;
            let report = evaluate_policy(&model, &out.coefficients, &evaluator, &optimizer, &[x0], &EvaluationOptions::new(20_000, seed + 100))?;
            println!(
                "  x0 {x0:+.1}  estimate {estimate:.4}  policy value {:.4} +/- {:.4}  first control {:+.1}",
                report.mean, report.std_error, u[0]
            );
        }
    }
    Ok(())
}
