//! Steering a particle through a sequence of doorways.
//!
//! `X_{n+1} = clamp(X_n + u_n / scale + sd * xi_n, lo, hi)` with cost
//! `sum_s [ b u_s^2 + c 1{s = t_i, X_s outside door i} ]`, where the door at `t_i = N`
//! is charged through the terminal reward.

use serde::{Deserialize, Serialize};

use crate::basis::{make_basis, BasisFamily, BasisSpec, CondExpEvaluator, CondExpStrategy};
use crate::error::{Result, RlmcError};
use crate::evaluate::{evaluate_policy, EvaluationOptions, EvaluationReport};
use crate::measures::{iterate_measure, MeasureIteration, MeasureIterationConfig, TrainingMeasure};
use crate::model::{BoxDomain, ControlSet, ControlledModel, RewardBounds, Sense, StateDomain, TimeGrid};
use crate::numerics::{linspace, norm_inv_cdf, norm_pdf};
use crate::optimizer::ControlOptimizer;
use crate::projection::CoefficientMatrix;
use crate::rng::derive_seed;
use crate::solver::{control_map_from, solve, SolveConfig, SolveOutput, SolverKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoorwaysSpec {
    pub num_steps: usize,
    pub door_times: Vec<usize>,
    pub doors: Vec<[f64; 2]>,
    pub control_cost: f64,
    pub wall_penalty: f64,
    pub state_bounds: [f64; 2],
    pub control_bound: f64,
    /// Divisor applied to the control in the dynamics.
    pub control_scale: f64,
    pub noise_sd: f64,
}

impl Default for DoorwaysSpec {
    fn default() -> Self {
        DoorwaysSpec {
            num_steps: 100,
            door_times: vec![25, 50, 75, 100],
            doors: vec![[-0.3, 0.3], [0.2, 0.8], [-0.8, -0.2], [-0.3, 0.3]],
            control_cost: 1.0,
            wall_penalty: 100.0,
            state_bounds: [-2.0, 2.0],
            control_bound: 30.0,
            control_scale: 100.0,
            noise_sd: 0.1,
        }
    }
}

impl DoorwaysSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.num_steps == 0 {
            errors.push("num_steps must be positive".into());
        }
        if self.door_times.len() != self.doors.len() {
            errors.push("door_times and doors differ in length".into());
        }
        if self.door_times.windows(2).any(|w| w[0] >= w[1]) {
            errors.push("door_times must be strictly increasing".into());
        }
        if self.door_times.iter().any(|&t| t > self.num_steps) {
            errors.push("door_times must not exceed num_steps".into());
        }
        let [lo, hi] = self.state_bounds;
        if !(lo < hi) {
            errors.push("state_bounds must satisfy lo < hi".into());
        }
        if self.doors.iter().any(|d| !(d[0] <= d[1]) || d[0] < lo || d[1] > hi) {
            errors.push("doors must be intervals inside state_bounds".into());
        }
        if !(self.control_bound > 0.0 && self.control_bound.is_finite()) {
            errors.push("control_bound must be positive and finite".into());
        }
        if !(self.control_scale > 0.0) || !(self.noise_sd > 0.0) {
            errors.push("control_scale and noise_sd must be positive".into());
        }
        if self.control_cost < 0.0 || self.wall_penalty < 0.0 {
            errors.push("control_cost and wall_penalty must be nonnegative".into());
        }
        errors
    }

    /// Door index charged at time `s`, if any.
    pub fn door_at(&self, s: usize) -> Option<usize> {
        self.door_times.iter().position(|&t| t == s)
    }

    pub fn outside_door(&self, door: usize, x: f64) -> bool {
        let [lo, hi] = self.doors[door];
        x < lo || x > hi
    }

    /// Number of doors missed along `states[0..=N]`.
    pub fn door_misses(&self, states: &[Vec<f64>]) -> usize {
        self.door_times
            .iter()
            .enumerate()
            .filter(|&(i, &t)| states.get(t).is_some_and(|x| self.outside_door(i, x[0])))
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct DoorwaysModel {
    spec: DoorwaysSpec,
    /// Door interval charged at each time index `0..=N`.
    door_by_step: Vec<Option<[f64; 2]>>,
    time_grid: TimeGrid,
    domain: StateDomain,
    controls: ControlSet,
}

pub fn build_doorways(spec: &DoorwaysSpec) -> Result<DoorwaysModel> {
    let errors = spec.validate();
    if !errors.is_empty() {
        return Err(RlmcError::Configuration(errors.join("; ")));
    }
    Ok(DoorwaysModel {
        spec: spec.clone(),
        door_by_step: (0..=spec.num_steps).map(|s| spec.door_at(s).map(|i| spec.doors[i])).collect(),
        time_grid: TimeGrid::steps(spec.num_steps)?,
        domain: BoxDomain::interval(spec.state_bounds[0], spec.state_bounds[1])?,
        controls: ControlSet::continuous(BoxDomain::interval(-spec.control_bound, spec.control_bound)?),
    })
}

impl DoorwaysModel {
    pub fn spec(&self) -> &DoorwaysSpec {
        &self.spec
    }

    #[inline]
    fn wall_cost(&self, s: usize, x: f64) -> f64 {
        match self.door_by_step[s] {
            Some([lo, hi]) if x < lo || x > hi => self.spec.wall_penalty,
            _ => 0.0,
        }
    }
}

impl ControlledModel for DoorwaysModel {
    fn name(&self) -> &str {
        "doorways"
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
        out[0] = x[0] + u[0] / self.spec.control_scale + self.spec.noise_sd * norm_inv_cdf(xi[0]);
    }
    fn running_reward(&self, n: usize, x: &[f64], u: &[f64]) -> f64 {
        self.spec.control_cost * u[0] * u[0] + self.wall_cost(n, x[0])
    }
    fn terminal_reward(&self, x: &[f64]) -> f64 {
        self.wall_cost(self.spec.num_steps, x[0])
    }
    fn reward_bounds(&self) -> RewardBounds {
        RewardBounds {
            running: self.spec.control_cost * self.spec.control_bound.powi(2) + self.spec.wall_penalty,
            terminal: self.spec.wall_penalty,
        }
    }
    fn sense(&self) -> Sense {
        Sense::Minimize
    }
    fn gaussian_step(&self, _n: usize, x: &[f64], u: &[f64], mean: &mut [f64], sd: &mut [f64]) -> bool {
        mean[0] = x[0] + u[0] / self.spec.control_scale;
        sd[0] = self.spec.noise_sd;
        true
    }
    fn transition_density(&self, _n: usize, x: &[f64], u: &[f64], y: &[f64]) -> Option<f64> {
        let s = self.spec.noise_sd;
        Some(norm_pdf((y[0] - x[0] - u[0] / self.spec.control_scale) / s) / s)
    }
}

/// Budgets of the value-versus-performance comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorwaysExperimentConfig {
    pub basis: BasisSpec,
    pub solve: SolveConfig,
    pub eval_paths: usize,
    pub x0: f64,
    /// Solver whose policy drives the schedule fit; each solver fits its own when absent.
    pub measure_solver: Option<SolverKind>,
    pub measure_samples: usize,
    pub measure_eval_paths: usize,
    pub measure_max_iters: usize,
    pub measure_tol: f64,
    /// Points of the `x` axis of the control-map grid.
    pub map_points: usize,
}

impl DoorwaysExperimentConfig {
    pub fn standard(samples: usize, eval_paths: usize, seed: u64) -> Self {
        DoorwaysExperimentConfig {
            basis: BasisSpec::monomial(2),
            solve: SolveConfig::new(samples, seed),
            eval_paths,
            x0: 0.0,
            measure_solver: Some(SolverKind::Value),
            measure_samples: samples,
            measure_eval_paths: 2000,
            measure_max_iters: 5,
            measure_tol: 0.05,
            map_points: 41,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DoorwaysRun {
    pub kind: SolverKind,
    pub measure: MeasureIteration,
    pub solve: SolveOutput,
    pub report: EvaluationReport,
    /// Missed doors per evaluation path.
    pub door_misses: Vec<usize>,
    /// Minimiser of `x -> alpha_2 phi_hat_2(x, 0) + alpha_3 phi_hat_3(x, 0)` at each epoch.
    pub argmin_series: Vec<f64>,
    /// `control_map[n][j]`: control at epoch `n` and the `j`-th grid state.
    pub control_map: Vec<Vec<f64>>,
}

impl DoorwaysRun {
    /// Share of evaluation paths missing at least `k` doors.
    pub fn miss_frequency(&self, k: usize) -> f64 {
        self.door_misses.iter().filter(|&&m| m >= k).count() as f64 / self.door_misses.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct DoorwaysExperiment {
    pub spec: DoorwaysSpec,
    pub runs: Vec<DoorwaysRun>,
    pub map_states: Vec<f64>,
}

/// Location of the minimum over a dense grid of `x -> sum_{k>=1} alpha_k phi_hat_k^n(x, 0)`.
pub fn continuation_argmin(evaluator: &CondExpEvaluator<'_>, alpha: &[f64], n: usize) -> f64 {
    let dom = evaluator.model().state_domain();
    let (lo, hi) = (dom.lo()[0], dom.hi()[0]);
    let mut scratch = evaluator.scratch();
    let mut phi = vec![0.0; alpha.len()];
    let points = 4001;
    let zero = vec![0.0; evaluator.model().control_set().dim()];
    let mut best = (f64::INFINITY, lo);
    for j in 0..points {
        let x = lo + (hi - lo) * j as f64 / (points - 1) as f64;
        evaluator.eval_into(n, &[x], &zero, &mut scratch, &mut phi);
        let v: f64 = alpha.iter().zip(&phi).skip(1).map(|(a, p)| a * p).sum();
        if v < best.0 {
            best = (v, x);
        }
    }
    best.1
}

/// Number of clusters of `values` when points closer than `tol` are chained together.
pub fn distinct_values(values: &[f64], tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    1 + v.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

fn run_one(
    model: &DoorwaysModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    kind: SolverKind,
    measure: MeasureIteration,
    config: &DoorwaysExperimentConfig,
    map_states: &[f64],
) -> Result<DoorwaysRun> {
    let spec = model.spec();
    let solved = solve(kind, model, basis, evaluator, &measure.measure, &config.solve)?;
    let optimizer = ControlOptimizer::new(model.control_set(), config.solve.optimizer.clone());
    let options = EvaluationOptions {
        paths: config.eval_paths,
        seed: derive_seed(config.solve.seed, "doorways-evaluation", &[]),
        retain_cross_sections: true,
        histogram_bins: None,
    };
    let mut report = evaluate_policy(model, &solved.coefficients, evaluator, &optimizer, &[config.x0], &options)?;
    let sections = report.cross_sections.take().expect("retained");
    let door_misses = (0..config.eval_paths)
        .map(|m| {
            spec.door_times
                .iter()
                .enumerate()
                .filter(|&(i, &t)| spec.outside_door(i, sections[t][m][0]))
                .count()
        })
        .collect();
    report.cross_sections = Some(sections);
    let coeffs = &solved.coefficients;
    let argmin_series = (0..spec.num_steps).map(|n| continuation_argmin(evaluator, coeffs.next_row(n), n)).collect();
    let control_map = control_map_grid(coeffs, evaluator, &optimizer, map_states)?;
    Ok(DoorwaysRun {
        kind,
        measure,
        solve: solved,
        report,
        door_misses,
        argmin_series,
        control_map,
    })
}

/// Controls on an `(n, x)` grid.
pub fn control_map_grid(
    coefficients: &CoefficientMatrix,
    evaluator: &CondExpEvaluator<'_>,
    optimizer: &ControlOptimizer,
    states: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let mut scratch = evaluator.scratch();
    let mut u = vec![0.0; optimizer.dim()];
    (0..coefficients.num_steps())
        .map(|n| {
            states
                .iter()
                .map(|&x| {
                    control_map_from(coefficients, evaluator, optimizer, n, &[x], &mut scratch, &mut u)?;
                    Ok(u[0])
                })
                .collect()
        })
        .collect()
}

/// Fit schedule measures by iteration from a uniform start, then solve and evaluate with
/// both solvers.
pub fn run_doorways_experiment(spec: &DoorwaysSpec, config: &DoorwaysExperimentConfig) -> Result<DoorwaysExperiment> {
    let model = build_doorways(spec)?;
    let basis = make_basis(&config.basis, model.state_domain())?;
    let evaluator = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm)?;
    let uniform = TrainingMeasure::uniform(model.state_domain().clone());
    let iterate = |kind: SolverKind| {
        let mut solve_cfg = config.solve.clone();
        solve_cfg.samples = config.measure_samples;
        solve_cfg.seed = derive_seed(config.solve.seed, "doorways-measure", &[]);
        let cfg = MeasureIterationConfig {
            solver: kind,
            solve: solve_cfg,
            x0: vec![config.x0],
            eval_paths: config.measure_eval_paths,
            max_iters: config.measure_max_iters,
            tol: config.measure_tol,
            sd_floor: None,
        };
        iterate_measure(&model, &basis, &evaluator, &uniform, &cfg)
    };
    let [lo, hi] = spec.state_bounds;
    let map_states = linspace(lo, hi, config.map_points);
    let mut runs = Vec::new();
    let shared = match config.measure_solver {
        Some(kind) => Some(iterate(kind)?),
        None => None,
    };
    for kind in [SolverKind::Value, SolverKind::Performance] {
        let measure = match &shared {
            Some(m) => m.clone(),
            None => iterate(kind)?,
        };
        runs.push(run_one(&model, &basis, &evaluator, kind, measure, config, &map_states)?);
    }
    Ok(DoorwaysExperiment {
        spec: spec.clone(),
        runs,
        map_states,
    })
}
