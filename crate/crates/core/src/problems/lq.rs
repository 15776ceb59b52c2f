//! One-dimensional linear-quadratic benchmark.
//!
//! Dynamics `X_{n+1} = X_n + (kappa + X_n + u_n)/N + xi_n / sqrt(N)` with standard normal
//! `xi_n`, clamped to the state box, and cost `sum_{s<N} (X_s^2 + u_s^2)/N + X_N^2` to be
//! minimised. The continuous-time limit has value `a(t) x^2 + b(t) x + c(t)`.

use serde::{Deserialize, Serialize};

use crate::basis::{make_basis, BasisSpec, CondExpEvaluator, CondExpStrategy};
use crate::error::{Result, RlmcError};
use crate::evaluate::{evaluate_policy, EvaluationOptions, EvaluationReport};
use crate::measures::TrainingMeasure;
use crate::model::{BoxDomain, ControlSet, ControlledModel, RewardBounds, Sense, StateDomain, TimeGrid};
use crate::numerics::{linspace, norm_inv_cdf, norm_pdf};
use crate::optimizer::{ControlOptimizer, OptimizerConfig};
use crate::rng::derive_seed;
use crate::solver::{solve, SolveConfig, SolveOutput, SolverKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqSpec {
    pub num_steps: usize,
    pub state_bounds: [f64; 2],
    pub control_bounds: [f64; 2],
    /// Constant term of the drift; `0` gives a problem symmetric in `x`.
    pub drift_constant: f64,
    /// Starting points of the error curve.
    pub x0_range: [f64; 2],
    pub x0_points: usize,
}

impl Default for LqSpec {
    fn default() -> Self {
        LqSpec {
            num_steps: 100,
            state_bounds: [-5.0, 5.0],
            control_bounds: [-10.0, 10.0],
            drift_constant: 1.0,
            x0_range: [-1.0, 1.0],
            x0_points: 21,
        }
    }
}

impl LqSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.num_steps < 2 {
            errors.push("num_steps must be at least 2".into());
        }
        for (name, b) in [("state_bounds", self.state_bounds), ("control_bounds", self.control_bounds)] {
            if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                errors.push(format!("{name} must be a finite interval with lo < hi"));
            }
        }
        if self.x0_points == 0 || !(self.x0_range[0] <= self.x0_range[1]) {
            errors.push("x0_range/x0_points must describe a nonempty grid".into());
        } else if self.x0_range[0] < self.state_bounds[0] || self.x0_range[1] > self.state_bounds[1] {
            errors.push("x0_range must lie inside state_bounds".into());
        }
        errors
    }

    pub fn x0_grid(&self) -> Vec<f64> {
        linspace(self.x0_range[0], self.x0_range[1], self.x0_points)
    }
}

#[derive(Debug, Clone)]
pub struct LqModel {
    spec: LqSpec,
    time_grid: TimeGrid,
    domain: StateDomain,
    controls: ControlSet,
}

pub fn build_lq(spec: &LqSpec) -> Result<LqModel> {
    let errors = spec.validate();
    if !errors.is_empty() {
        return Err(RlmcError::Configuration(errors.join("; ")));
    }
    Ok(LqModel {
        spec: spec.clone(),
        time_grid: TimeGrid::new(spec.num_steps, 1.0)?,
        domain: BoxDomain::interval(spec.state_bounds[0], spec.state_bounds[1])?,
        controls: ControlSet::continuous(BoxDomain::interval(spec.control_bounds[0], spec.control_bounds[1])?),
    })
}

impl LqModel {
    pub fn spec(&self) -> &LqSpec {
        &self.spec
    }

    #[inline]
    fn mean(&self, x: f64, u: f64) -> f64 {
        x + (self.spec.drift_constant + x + u) / self.spec.num_steps as f64
    }

    #[inline]
    fn sd(&self) -> f64 {
        (self.spec.num_steps as f64).sqrt().recip()
    }
}

impl ControlledModel for LqModel {
    fn name(&self) -> &str {
        "lq1"
    }
    fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }
    fn state_domain(&self) -> &StateDomain {
        &self.domain
    }
    fn control_set(&self) -> &ControlSet {
        &self.controls
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn dynamics(&self, _n: usize, x: &[f64], xi: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = self.mean(x[0], u[0]) + self.sd() * norm_inv_cdf(xi[0]);
    }
    fn running_reward(&self, _n: usize, x: &[f64], u: &[f64]) -> f64 {
        (x[0] * x[0] + u[0] * u[0]) / self.spec.num_steps as f64
    }
    fn terminal_reward(&self, x: &[f64]) -> f64 {
        x[0] * x[0]
    }
    fn reward_bounds(&self) -> RewardBounds {
        let xm = self.spec.state_bounds[0].abs().max(self.spec.state_bounds[1].abs());
        let um = self.spec.control_bounds[0].abs().max(self.spec.control_bounds[1].abs());
        RewardBounds {
            running: (xm * xm + um * um) / self.spec.num_steps as f64,
            terminal: xm * xm,
        }
    }
    fn sense(&self) -> Sense {
        Sense::Minimize
    }
    fn gaussian_step(&self, _n: usize, x: &[f64], u: &[f64], mean: &mut [f64], sd: &mut [f64]) -> bool {
        mean[0] = self.mean(x[0], u[0]);
        sd[0] = self.sd();
        true
    }
    fn transition_density(&self, _n: usize, x: &[f64], u: &[f64], y: &[f64]) -> Option<f64> {
        let s = self.sd();
        Some(norm_pdf((y[0] - self.mean(x[0], u[0])) / s) / s)
    }
}

/// Coefficients of the quadratic continuous-time value `a(t) x^2 + b(t) x + c(t)` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub step: f64,
    /// Values at `t_j = j * step`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl RiccatiSolution {
    /// Backward RK4 integration from `a(1) = 1, b(1) = c(1) = 0`.
    pub fn integrate(drift_constant: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1e-4) {
            return Err(RlmcError::numerical("lq_reference", format!("integrator step {step} rejected (need 0 < step <= 1e-4)")));
        }
        let k = drift_constant;
        let steps = (1.0 / step).round() as usize;
        let h = 1.0 / steps as f64;
        let rhs = |y: [f64; 3]| -> [f64; 3] {
            let [a, b, _] = y;
            [a * a - 2.0 * a - 1.0, a * b - 2.0 * a * k - b, 0.25 * b * b - k * b - a]
        };
        let mut a = vec![0.0; steps + 1];
        let mut b = vec![0.0; steps + 1];
        let mut c = vec![0.0; steps + 1];
        let mut y = [1.0, 0.0, 0.0];
        a[steps] = 1.0;
        for j in (0..steps).rev() {
            // Backward in time: dy/d(-t) = -rhs.
            let f = |y: [f64; 3]| rhs(y).map(|v| -v);
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], y[2] + 0.5 * h * k1[2]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1], y[2] + 0.5 * h * k2[2]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1], y[2] + h * k3[2]]);
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(RlmcError::numerical("lq_reference", format!("integrator diverged at t = {}", j as f64 * h)));
            }
            a[j] = y[0];
            b[j] = y[1];
            c[j] = y[2];
        }
        Ok(RiccatiSolution { step: h, a, b, c })
    }

    /// Value at time `t in [0, 1]`, linearly interpolated between integrator nodes.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        let pos = (t / self.step).clamp(0.0, (self.a.len() - 1) as f64);
        let j = (pos.floor() as usize).min(self.a.len() - 2);
        let w = pos - j as f64;
        let lerp = |v: &[f64]| v[j] * (1.0 - w) + v[j + 1] * w;
        lerp(&self.a) * x * x + lerp(&self.b) * x + lerp(&self.c)
    }
}

/// Continuous-time optimal cost from `(t, x)`.
pub fn lq_reference_value(spec: &LqSpec, t: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(RlmcError::Argument(format!("time {t} outside [0, 1]")));
    }
    if x < spec.state_bounds[0] || x > spec.state_bounds[1] {
        return Err(RlmcError::Argument(format!("state {x} outside the domain")));
    }
    Ok(RiccatiSolution::integrate(spec.drift_constant, 1e-4)?.value(t, x))
}

/// Budgets of the error-curve experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqExperimentConfig {
    pub solvers: Vec<SolverKind>,
    pub basis: BasisSpec,
    pub measure: TrainingMeasure,
    pub solve: SolveConfig,
    pub eval_paths: usize,
}

impl LqExperimentConfig {
    /// Both solvers, `{1, x, x^2}`, uniform training points on `[-3, 3]`.
    pub fn standard(samples: usize, eval_paths: usize, seed: u64) -> Self {
        LqExperimentConfig {
            solvers: vec![SolverKind::Value, SolverKind::Performance],
            basis: BasisSpec::monomial(2),
            measure: TrainingMeasure::uniform(BoxDomain::interval(-3.0, 3.0).expect("valid box")),
            solve: SolveConfig {
                samples,
                seed,
                truncation: None,
                optimizer: OptimizerConfig::default(),
            },
            eval_paths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqCurvePoint {
    pub x0: f64,
    pub reference: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct LqSolverRun {
    pub kind: SolverKind,
    pub solve: SolveOutput,
    pub curve: Vec<LqCurvePoint>,
    pub reports: Vec<EvaluationReport>,
}

#[derive(Debug, Clone)]
pub struct LqExperiment {
    pub runs: Vec<LqSolverRun>,
}

impl LqExperiment {
    /// CSV `x0,reference,<kind>_value,<kind>_se,<kind>_rel_error,...`.
    pub fn write_curve_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["x0".to_string(), "reference".to_string()];
        for r in &self.runs {
            let k = r.kind.as_str();
            header.extend([format!("{k}_value"), format!("{k}_se"), format!("{k}_rel_error")]);
        }
        w.write_record(&header)?;
        let rows = self.runs.first().map_or(0, |r| r.curve.len());
        for i in 0..rows {
            let p0 = &self.runs[0].curve[i];
            let mut rec = vec![format!("{:?}", p0.x0), format!("{:?}", p0.reference)];
            for r in &self.runs {
                let p = &r.curve[i];
                rec.extend([format!("{:?}", p.estimate), format!("{:?}", p.std_error), format!("{:?}", p.relative_error)]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solve with each configured solver and compare evaluated policy values against the
/// continuous-time reference on the `x0` grid.
pub fn run_lq_experiment(spec: &LqSpec, config: &LqExperimentConfig) -> Result<LqExperiment> {
    let model = build_lq(spec)?;
    let basis = make_basis(&config.basis, model.state_domain())?;
    let evaluator = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm)?;
    let optimizer = ControlOptimizer::new(model.control_set(), config.solve.optimizer.clone());
    let riccati = RiccatiSolution::integrate(spec.drift_constant, 1e-4)?;
    let mut runs = Vec::new();
    for &kind in &config.solvers {
        let solved = solve(kind, &model, &basis, &evaluator, &config.measure, &config.solve)?;
        let mut curve = Vec::new();
        let mut reports = Vec::new();
        for (i, x0) in spec.x0_grid().into_iter().enumerate() {
            let opts = EvaluationOptions::new(config.eval_paths, derive_seed(config.solve.seed, "lq-evaluation", &[i as u64]));
            let report = evaluate_policy(&model, &solved.coefficients, &evaluator, &optimizer, &[x0], &opts)?;
            let reference = riccati.value(0.0, x0);
            curve.push(LqCurvePoint {
                x0,
                reference,
                estimate: report.mean,
                std_error: report.std_error,
                relative_error: (report.mean - reference).abs() / reference.abs(),
            });
            reports.push(report);
        }
        runs.push(LqSolverRun {
            kind,
            solve: solved,
            curve,
            reports,
        });
    }
    Ok(LqExperiment { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::step;

    #[test]
    fn step_running_and_terminal_examples() {
        let m = build_lq(&LqSpec::default()).unwrap();
        let x1 = step(&m, 0, &[0.0], &[0.5], &[0.0]).unwrap();
        assert!((x1[0] - 0.01).abs() < 1e-15);
        assert!((m.running_reward(0, &[1.0], &[1.0]) - 0.02).abs() < 1e-15);
        assert_eq!(m.terminal_reward(&[2.0]), 4.0);
    }

    #[test]
    fn reference_terminal_condition() {
        assert!((lq_reference_value(&LqSpec::default(), 1.0, 2.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(RiccatiSolution::integrate(1.0, 1e-3).is_err());
    }

    #[test]
    fn riccati_a_stays_positive() {
        let r = RiccatiSolution::integrate(1.0, 1e-4).unwrap();
        assert!(r.a.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn symmetric_without_drift_constant() {
        let spec = LqSpec {
            drift_constant: 0.0,
            ..LqSpec::default()
        };
        for t in [0.0, 0.3, 0.9] {
            for x in [0.2, 1.0, 3.5] {
                let (p, q) = (lq_reference_value(&spec, t, x).unwrap(), lq_reference_value(&spec, t, -x).unwrap());
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn x0_grid_has_21_points() {
        let g = LqSpec::default().x0_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[20], 1.0);
    }
}
