//! Subcommand implementations.

use std::collections::BTreeMap;

use serde_json::json;

use crate::basis::{make_basis, BasisFamily, CondExpEvaluator, GramMatrix};
use crate::error::{Result, RlmcError};
use crate::evaluate::{evaluate_policy, EvaluationOptions};
use crate::measures::{estimate_r_bar, iterate_measure, GridSpec, MeasureDiagnostics, MeasureIteration, MeasureIterationConfig, TrainingMeasure};
use crate::model::ControlledModel;
use crate::optimizer::ControlOptimizer;
use crate::problems::doorways::{distinct_values, run_doorways_experiment, DoorwaysExperimentConfig};
use crate::problems::lq::{run_lq_experiment, LqExperimentConfig};
use crate::problems::two_period::run_measure_tradeoff;
use crate::problems::ProblemSpec;
use crate::projection::{projection_error, CoefficientMatrix};
use crate::rng::derive_seed;
use crate::solver::{solve, SolveOutput, SolverKind};

use super::config::{IterationSettings, ResolvedConfig};
use super::output::OutputDir;
use super::Command;

pub(crate) fn execute(command: Command, cfg: &ResolvedConfig) -> Result<()> {
    let mut out = OutputDir::create(&cfg.out, command.name())?;
    out.write_json("config.json", "fully resolved configuration", cfg)?;
    match command {
        Command::Solve => solve_cmd(cfg, &mut out)?,
        Command::Evaluate => evaluate_cmd(cfg, &mut out)?,
        Command::BenchLq => bench_lq(cfg, &mut out)?,
        Command::BenchDoorways => bench_doorways(cfg, &mut out)?,
        Command::MeasureTradeoff => measure_tradeoff(cfg, &mut out)?,
        Command::Diagnose => diagnose(cfg, &mut out)?,
    }
    out.finish()?;
    Ok(())
}

fn evaluator<'a>(model: &'a dyn ControlledModel, basis: &'a BasisFamily, cfg: &ResolvedConfig) -> Result<CondExpEvaluator<'a>> {
    match &cfg.cond_exp {
        Some(s) => CondExpEvaluator::new(model, basis, s.clone()),
        None => CondExpEvaluator::auto(model, basis, derive_seed(cfg.seed, "inner-mc-seed", &[])),
    }
}

fn write_solve(out: &mut OutputDir, dir: &str, solved: &SolveOutput) -> Result<()> {
    out.write_with(&format!("{dir}/coefficients.csv"), "coefficient matrix, one row per time index", |w| {
        solved.coefficients.write_csv(w)
    })?;
    out.write_json(&format!("{dir}/coefficients.json"), "coefficient matrix with solve metadata", &solved.coefficients)?;
    out.write_json(&format!("{dir}/diagnostics.json"), "per-layer solver diagnostics", &solved.diagnostics)
}

fn write_schedule(out: &mut OutputDir, dir: &str, fit: &MeasureIteration) -> Result<()> {
    out.write_json(
        &format!("{dir}/schedule.json"),
        "fitted training-measure schedule",
        &json!({
            "measure": fit.measure,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "mean_changes": fit.mean_changes,
        }),
    )?;
    let TrainingMeasure::Schedule { components } = &fit.measure else {
        return Ok(());
    };
    out.write_with(&format!("{dir}/schedule.csv"), "schedule component means and standard deviations", |w| {
        let mut csv = csv::Writer::from_writer(w);
        let d = components[0].support().dim();
        let mut header = vec!["n".to_string()];
        header.extend((0..d).map(|i| format!("mean_{i}")));
        header.extend((0..d).map(|i| format!("sd_{i}")));
        csv.write_record(&header)?;
        for (n, c) in components.iter().enumerate() {
            let mut rec = vec![n.to_string()];
            match c {
                TrainingMeasure::TruncatedGaussian { mean, sd, .. } => {
                    rec.extend(mean.iter().chain(sd).map(|v| format!("{v:?}")));
                }
                other => {
                    let s = other.support();
                    rec.extend(s.lo().iter().zip(s.hi()).map(|(l, h)| format!("{:?}", 0.5 * (l + h))));
                    rec.extend(std::iter::repeat_n("nan".to_string(), d));
                }
            }
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    })
}

fn fit_measure(
    model: &dyn ControlledModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    cfg: &ResolvedConfig,
    settings: &IterationSettings,
    kind: SolverKind,
) -> Result<MeasureIteration> {
    let mut solve = cfg.solve_config();
    solve.samples = settings.samples.unwrap_or(cfg.samples);
    solve.seed = derive_seed(cfg.seed, "measure-fit", &[]);
    let config = MeasureIterationConfig {
        solver: settings.solver.unwrap_or(kind),
        solve,
        x0: cfg.x0.clone(),
        eval_paths: settings.eval_paths,
        max_iters: settings.max_iters,
        tol: settings.tol,
        sd_floor: settings.sd_floor,
    };
    iterate_measure(model, basis, evaluator, &TrainingMeasure::uniform(model.state_domain().clone()), &config)
}

fn solve_cmd(cfg: &ResolvedConfig, out: &mut OutputDir) -> Result<()> {
    let model = cfg.problem.build()?;
    let model = model.as_ref();
    let basis = make_basis(&cfg.basis, model.state_domain())?;
    let ev = evaluator(model, &basis, cfg)?;
    let fixed = cfg.measure.build(model.state_domain())?;
    let mut fits: BTreeMap<&'static str, MeasureIteration> = BTreeMap::new();
    for kind in cfg.solver.kinds() {
        let dir = kind.as_str();
        let measure = match &fixed {
            Some(m) => m.clone(),
            None => {
                let settings = cfg.iteration_settings();
                let driver = settings.solver.unwrap_or(kind);
                let fit = match fits.get(driver.as_str()) {
                    Some(f) => f.clone(),
                    None => fit_measure(model, &basis, &ev, cfg, &settings, kind)?,
                };
                write_schedule(out, dir, &fit)?;
                let m = fit.measure.clone();
                fits.insert(driver.as_str(), fit);
                m
            }
        };
        let solved = solve(kind, model, &basis, &ev, &measure, &cfg.solve_config())?;
        write_solve(out, dir, &solved)?;
    }
    Ok(())
}

fn evaluate_cmd(cfg: &ResolvedConfig, out: &mut OutputDir) -> Result<()> {
    let path = cfg.coefficients.as_ref().expect("validated");
    let text = std::fs::read_to_string(path).map_err(|e| RlmcError::Io(format!("{}: {e}", path.display())))?;
    let coefficients = CoefficientMatrix::from_json(&text)?;
    let model = cfg.problem.build()?;
    let model = model.as_ref();
    if coefficients.metadata.model != model.name() {
        return Err(RlmcError::Configuration(format!(
            "coefficients were fitted for {:?}, configured problem is {:?}",
            coefficients.metadata.model,
            model.name()
        )));
    }
    let basis = make_basis(&coefficients.metadata.basis, model.state_domain())?;
    let ev = evaluator(model, &basis, cfg)?;
    let optimizer = ControlOptimizer::new(model.control_set(), cfg.optimizer.clone());
    let options = EvaluationOptions {
        paths: cfg.eval_paths,
        seed: cfg.seed,
        retain_cross_sections: false,
        histogram_bins: cfg.histogram_bins,
    };
    let report = evaluate_policy(model, &coefficients, &ev, &optimizer, &cfg.x0, &options)?;
    out.write_json("eval_report.json", "forward evaluation of the stored policy", &report)?;
    out.write_with("histogram.csv", "histogram of pathwise performances", |w| report.histogram.write_csv(w))
}

fn bench_lq(cfg: &ResolvedConfig, out: &mut OutputDir) -> Result<()> {
    let ProblemSpec::Lq1(spec) = &cfg.problem else {
        unreachable!("validated problem");
    };
    let model = cfg.problem.build()?;
    let measure = cfg
        .measure
        .build(model.state_domain())?
        .ok_or_else(|| RlmcError::Configuration("measure.kind: bench-lq needs a static measure".into()))?;
    let config = LqExperimentConfig {
        solvers: cfg.solver.kinds(),
        basis: cfg.basis.clone(),
        measure,
        solve: cfg.solve_config(),
        eval_paths: cfg.eval_paths,
    };
    let experiment = run_lq_experiment(spec, &config)?;
    out.write_with("curves/lq_error_curve.csv", "evaluated value and relative error per x0 and solver", |w| {
        experiment.write_curve_csv(w)
    })?;
    let mut summary = Vec::new();
    for run in &experiment.runs {
        let dir = run.kind.as_str();
        write_solve(out, dir, &run.solve)?;
        out.write_json(&format!("{dir}/eval_reports.json"), "forward evaluation at each x0", &run.reports)?;
        summary.push(json!({
            "solver": dir,
            "max_relative_error": run.curve.iter().map(|p| p.relative_error).fold(0.0, f64::max),
            "mean_relative_error": run.curve.iter().map(|p| p.relative_error).sum::<f64>() / run.curve.len() as f64,
            "solve_seconds": run.solve.diagnostics.wall_seconds,
            "violations": run.solve.diagnostics.total_violations,
        }));
    }
    out.write_json("summary.json", "per-solver error summary", &summary)
}

fn bench_doorways(cfg: &ResolvedConfig, out: &mut OutputDir) -> Result<()> {
    let ProblemSpec::Doorways(spec) = &cfg.problem else {
        unreachable!("validated problem");
    };
    if cfg.x0.len() != 1 {
        return Err(RlmcError::Configuration("x0: doorways is one-dimensional".into()));
    }
    let settings = cfg.iteration_settings();
    let config = DoorwaysExperimentConfig {
        basis: cfg.basis.clone(),
        solve: cfg.solve_config(),
        eval_paths: cfg.eval_paths,
        x0: cfg.x0[0],
        measure_solver: settings.solver,
        measure_samples: settings.samples.unwrap_or(cfg.samples),
        measure_eval_paths: settings.eval_paths,
        measure_max_iters: settings.max_iters,
        measure_tol: settings.tol,
        map_points: cfg.map_points,
    };
    let experiment = run_doorways_experiment(spec, &config)?;
    let mut summary = Vec::new();
    for run in &experiment.runs {
        let dir = run.kind.as_str();
        write_solve(out, dir, &run.solve)?;
        write_schedule(out, dir, &run.measure)?;
        out.write_json(&format!("{dir}/eval_report.json"), "forward evaluation from x0", &run.report)?;
        out.write_with(&format!("{dir}/histogram.csv"), "histogram of pathwise costs", |w| run.report.histogram.write_csv(w))?;
        out.write_with(&format!("curves/doorways_control_map_{dir}.csv"), "estimated control on an (n, x) grid", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["n", "x", "u"])?;
            for (n, row) in run.control_map.iter().enumerate() {
                for (x, u) in experiment.map_states.iter().zip(row) {
                    csv.write_record([n.to_string(), format!("{x:?}"), format!("{u:?}")])?;
                }
            }
            csv.flush()?;
            Ok(())
        })?;
        let sections = run.report.cross_sections.as_ref().expect("retained");
        let shown = sections.first().map_or(0, Vec::len).min(50);
        out.write_with(&format!("curves/doorways_paths_{dir}.csv"), "sample controlled trajectories", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["path", "n", "x"])?;
            for m in 0..shown {
                for (n, section) in sections.iter().enumerate() {
                    csv.write_record([m.to_string(), n.to_string(), format!("{:?}", section[m][0])])?;
                }
            }
            csv.flush()?;
            Ok(())
        })?;
        summary.push(json!({
            "solver": dir,
            "mean_cost": run.report.mean,
            "std_error": run.report.std_error,
            "miss_at_least_1": run.miss_frequency(1),
            "miss_at_least_2": run.miss_frequency(2),
            "distinct_continuation_minima": distinct_values(&run.argmin_series, 1e-3),
            "schedule_iterations": run.measure.iterations,
            "schedule_converged": run.measure.converged,
            "solve_seconds": run.solve.diagnostics.wall_seconds,
            "violations": run.solve.diagnostics.total_violations,
        }));
    }
    out.write_with("curves/doorways_argmin.csv", "minimiser of the non-constant continuation part per epoch", |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string()];
        header.extend(experiment.runs.iter().map(|r| r.kind.as_str().to_string()));
        csv.write_record(&header)?;
        for n in 0..spec.num_steps {
            let mut rec = vec![n.to_string()];
            rec.extend(experiment.runs.iter().map(|r| format!("{:?}", r.argmin_series[n])));
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    out.write_json("summary.json", "per-solver cost and door-miss summary", &summary)
}

fn measure_tradeoff(cfg: &ResolvedConfig, out: &mut OutputDir) -> Result<()> {
    let ProblemSpec::TwoPeriod(spec) = &cfg.problem else {
        unreachable!("validated problem");
    };
    let result = run_measure_tradeoff(spec)?;
    out.write_with("curves/tradeoff_table.csv", "projection error, density-ratio bound and coefficients per sigma", |w| {
        result.write_table_csv(w)
    })?;
    out.write_with("curves/tradeoff_curves.csv", "estimated and exact control-effect curves per sigma", |w| {
        result.write_curves_csv(w)
    })?;
    out.write_json("summary.json", "tradeoff rows", &result.rows)
}

fn diagnose(cfg: &ResolvedConfig, out: &mut OutputDir) -> Result<()> {
    let model = cfg.problem.build()?;
    let model = model.as_ref();
    let basis = make_basis(&cfg.basis, model.state_domain())?;
    let measure = cfg
        .measure
        .build(model.state_domain())?
        .ok_or_else(|| RlmcError::Configuration("measure.kind: diagnose needs a static measure".into()))?;
    let gram = GramMatrix::compute(&basis, measure.component(model.num_steps()))?;
    let epsilon = projection_error(|x: &[f64]| model.terminal_reward(x), &basis, measure.component(model.num_steps()), &gram)?;
    let grid = GridSpec {
        resolution: cfg.r_bar_resolution,
        ..GridSpec::default()
    };
    let (r_bar, r_bar_unavailable) = match estimate_r_bar(model, &measure, &grid) {
        Ok(r) => (r, None),
        Err(RlmcError::Capability(msg)) => (f64::INFINITY, Some(msg)),
        Err(e) => return Err(e),
    };
    let diag = MeasureDiagnostics::new(epsilon, r_bar, grid.resolution);
    out.write_json(
        "diagnostics.json",
        "Gram conditioning, projection error of the terminal reward and density-ratio bound",
        &json!({
            "basis": cfg.basis,
            "basis_size": basis.size(),
            "measure": measure,
            "gram": {
                "method": gram.method(),
                "min_eigenvalue": gram.min_eigenvalue(),
                "max_eigenvalue": gram.max_eigenvalue(),
                "condition_number": gram.condition_number(),
                "jitter": gram.jitter(),
            },
            "epsilon_k": diag.epsilon_k,
            "r_bar": if r_bar_unavailable.is_some() { None } else { diag.r_bar },
            "r_bar_unavailable": r_bar_unavailable,
            "r_bar_resolution": diag.resolution,
        }),
    )?;
    out.write_with("gram.csv", "Gram matrix of the basis under the measure", |w| gram.write_csv(w))
}
