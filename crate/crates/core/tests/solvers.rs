//! Value and performance iteration, policy evaluation and their determinism.

mod common;

use proptest::prelude::*;
use rlmc::basis::{make_basis, BasisFamily, BasisSpec, CondExpEvaluator, CondExpStrategy};
use rlmc::evaluate::{evaluate_policy, EvaluationOptions};
use rlmc::measures::TrainingMeasure;
use rlmc::model::{BoxDomain, ControlledModel};
use rlmc::optimizer::{ControlOptimizer, OptimizerConfig};
use rlmc::problems::{random_walk, small_dp, zero_problem, SmallDpSpec};
use rlmc::projection::CoefficientMatrix;
use rlmc::solver::{bellman_target, solve, SolveConfig, SolverKind};

const BOTH: [SolverKind; 2] = [SolverKind::Value, SolverKind::Performance];

fn fit(model: &dyn ControlledModel, basis: &BasisFamily, measure: &TrainingMeasure, kind: SolverKind, samples: usize, seed: u64) -> CoefficientMatrix {
    let ev = CondExpEvaluator::new(model, basis, CondExpStrategy::ClosedForm).unwrap();
    let out = solve(kind, model, basis, &ev, measure, &SolveConfig::new(samples, seed)).unwrap();
    assert_eq!(out.diagnostics.total_violations, 0);
    out.coefficients
}

/// `V_hat(0, x)`: the Bellman optimum at time 0 against the fitted row for time 1.
fn value_at_zero(model: &dyn ControlledModel, basis: &BasisFamily, coeffs: &CoefficientMatrix, x: f64) -> f64 {
    let ev = CondExpEvaluator::new(model, basis, CondExpStrategy::ClosedForm).unwrap();
    let opt = ControlOptimizer::new(model.control_set(), OptimizerConfig::default());
    let mut u = vec![0.0];
    bellman_target(0, &[x], coeffs.row(1), &ev, &opt, &mut ev.scratch(), &mut u).unwrap()
}

#[test]
fn zero_problem_has_zero_coefficients_and_zero_performance() {
    let model = zero_problem(4).unwrap();
    let basis = make_basis(&BasisSpec::monomial(2), model.state_domain()).unwrap();
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    for kind in BOTH {
        let c = fit(&model, &basis, &measure, kind, 300, 5);
        assert_eq!(c.num_steps(), 4);
        assert!(c.rows.iter().all(|r| r.alpha.iter().all(|&a| a == 0.0)));
        let ev = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm).unwrap();
        let opt = ControlOptimizer::new(model.control_set(), OptimizerConfig::default());
        let rep = evaluate_policy(&model, &c, &ev, &opt, &[0.2], &EvaluationOptions::new(200, 1)).unwrap();
        assert_eq!(rep.mean, 0.0);
        assert_eq!(rep.std_error, 0.0);
    }
}

#[test]
fn random_walk_value_is_recovered() {
    let (steps, drift) = (3, 0.25);
    let model = random_walk(steps, drift, 0.5).unwrap();
    let basis = make_basis(&BasisSpec::monomial(1), model.state_domain()).unwrap();
    let measure = TrainingMeasure::uniform(BoxDomain::interval(-5.0, 5.0).unwrap());
    let value = fit(&model, &basis, &measure, SolverKind::Value, 20_000, 2);
    let perf = fit(&model, &basis, &measure, SolverKind::Performance, 20_000, 2);
    for c in [&value, &perf] {
        for n in 1..=steps {
            assert!((c.row(n)[0] - drift * (steps - n) as f64).abs() < 0.05, "n={n}: {:?}", c.row(n));
            assert!((c.row(n)[1] - 1.0).abs() < 0.02, "n={n}: {:?}", c.row(n));
        }
    }
    let ev = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm).unwrap();
    let opt = ControlOptimizer::new(model.control_set(), OptimizerConfig::default());
    let rep = evaluate_policy(&model, &value, &ev, &opt, &[1.0], &EvaluationOptions::new(4000, 8)).unwrap();
    assert!((rep.mean - (1.0 + 3.0 * drift)).abs() < 4.0 * rep.std_error);
    let big = evaluate_policy(&model, &value, &ev, &opt, &[1.0], &EvaluationOptions::new(16_000, 9)).unwrap();
    let ratio = big.std_error / rep.std_error;
    assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
}

#[test]
fn single_step_solvers_coincide() {
    let spec = SmallDpSpec {
        num_steps: 1,
        ..SmallDpSpec::default()
    };
    let model = small_dp(&spec).unwrap();
    let basis = make_basis(&BasisSpec::piecewise_affine(vec![8]), model.state_domain()).unwrap();
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    let v = fit(&model, &basis, &measure, SolverKind::Value, 1000, 17);
    let p = fit(&model, &basis, &measure, SolverKind::Performance, 1000, 17);
    assert_eq!(v.rows, p.rows);
}

fn small_dp_errors(samples: usize, seed: u64) -> Vec<f64> {
    let model = small_dp(&SmallDpSpec::default()).unwrap();
    let basis = make_basis(&BasisSpec::piecewise_affine(vec![16]), model.state_domain()).unwrap();
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    let coeffs = fit(&model, &basis, &measure, SolverKind::Value, samples, seed);
    let (grid, oracle) = common::small_dp_oracle(&common::DpProblem::default(), 2001);
    (0..20)
        .map(|i| {
            let x = -0.95 + 1.9 * i as f64 / 19.0;
            let want = common::interpolate(&grid, &oracle, x);
            ((value_at_zero(&model, &basis, &coeffs, x) - want) / want).abs()
        })
        .collect()
}

#[test]
fn small_dp_value_iteration_tracks_backward_induction() {
    let coarse: f64 = (0..4).map(|s| small_dp_errors(400, s).iter().sum::<f64>()).sum::<f64>() / 80.0;
    let fine: f64 = (0..4).map(|s| small_dp_errors(6400, s).iter().sum::<f64>()).sum::<f64>() / 80.0;
    assert!(fine < coarse, "{fine} vs {coarse}");
    assert!(small_dp_errors(6400, 11).iter().all(|&e| e < 0.03));
}

#[test]
fn solves_are_reproducible_and_thread_count_independent() {
    let model = small_dp(&SmallDpSpec::default()).unwrap();
    let basis = make_basis(&BasisSpec::monomial(2), model.state_domain()).unwrap();
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    for kind in BOTH {
        let run = |threads: usize, seed: u64| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| fit(&model, &basis, &measure, kind, 3000, seed))
        };
        let a = run(1, 4);
        assert_eq!(a.rows, run(3, 4).rows);
        assert_ne!(a.rows, run(1, 5).rows);
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let model = zero_problem(2).unwrap();
    let basis = make_basis(&BasisSpec::monomial(1), model.state_domain()).unwrap();
    let ev = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm).unwrap();
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    assert!(solve(SolverKind::Value, &model, &basis, &ev, &measure, &SolveConfig::new(0, 1)).is_err());
    let narrow = TrainingMeasure::uniform(BoxDomain::interval(-0.5, 0.5).unwrap());
    let small_basis = make_basis(&BasisSpec::monomial(1), narrow.support()).unwrap();
    assert!(CondExpEvaluator::new(&model, &small_basis, CondExpStrategy::ClosedForm)
        .and_then(|e| solve(SolverKind::Value, &model, &small_basis, &e, &measure, &SolveConfig::new(10, 1)))
        .is_err());
}

#[test]
fn coefficient_matrix_round_trips_through_json_and_csv() {
    let model = small_dp(&SmallDpSpec::default()).unwrap();
    let basis = make_basis(&BasisSpec::monomial(2), model.state_domain()).unwrap();
    let measure = TrainingMeasure::uniform(model.state_domain().clone());
    let c = fit(&model, &basis, &measure, SolverKind::Value, 500, 3);
    let back = CoefficientMatrix::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back.rows, c.rows);
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let rows = CoefficientMatrix::read_csv_rows(buf.as_slice()).unwrap();
    assert_eq!(rows.iter().map(|r| r.alpha.clone()).collect::<Vec<_>>(), c.rows.iter().map(|r| r.alpha.clone()).collect::<Vec<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn truncation_keeps_value_targets_bounded(gamma in 0.5..5.0f64, seed in 0u64..100) {
        let model = small_dp(&SmallDpSpec::default()).unwrap();
        let basis = make_basis(&BasisSpec::piecewise_affine(vec![4]), model.state_domain()).unwrap();
        let ev = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm).unwrap();
        let measure = TrainingMeasure::uniform(model.state_domain().clone());
        let mut cfg = SolveConfig::new(200, seed);
        cfg.truncation = Some(gamma);
        let out = solve(SolverKind::Value, &model, &basis, &ev, &measure, &cfg).unwrap();
        prop_assert_eq!(out.diagnostics.total_violations, 0);
        for layer in out.diagnostics.layers.iter().filter(|l| l.n < model.num_steps()) {
            prop_assert!(layer.value_min >= -gamma && layer.value_max <= gamma);
        }
    }

    #[test]
    fn evaluation_paths_are_independent_of_path_count(seed in 0u64..50) {
        let model = random_walk(2, 0.1, 0.3).unwrap();
        let basis = make_basis(&BasisSpec::monomial(1), model.state_domain()).unwrap();
        let measure = TrainingMeasure::uniform(BoxDomain::interval(-2.0, 2.0).unwrap());
        let c = fit(&model, &basis, &measure, SolverKind::Value, 50, 1);
        let ev = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm).unwrap();
        let opt = ControlOptimizer::new(model.control_set(), OptimizerConfig::default());
        let a = evaluate_policy(&model, &c, &ev, &opt, &[0.0], &EvaluationOptions::new(10, seed)).unwrap();
        let b = evaluate_policy(&model, &c, &ev, &opt, &[0.0], &EvaluationOptions::new(20, seed)).unwrap();
        prop_assert_eq!(&a.performances[..], &b.performances[..10]);
    }
}
