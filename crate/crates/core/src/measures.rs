//! Training measures: where the regression points of each backward layer are drawn.
//!
//! A measure is either static (uniform on a box, or a product of truncated Gaussians) or a
//! schedule holding one static component per time index `0..=N`. Besides sampling and
//! densities, this module provides the exploration diagnostic `R̄` (grid supremum of the
//! transition-to-training density ratio), schedule fitting from simulated cross-sections and
//! the iterated solve/simulate/fit loop.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, CondExpEvaluator};
use crate::error::{Result, RlmcError};
use crate::evaluate::{evaluate_policy, EvaluationOptions};
use crate::model::{BoxDomain, ControlledModel};
use crate::numerics::{log_norm_mass, norm_cdf, norm_inv_cdf, norm_mass, normal_partial_moments};
use crate::optimizer::ControlOptimizer;
use crate::projection::CoefficientMatrix;
use crate::rng::{open01, stream_rng, tags};
use crate::solver::{solve, SolveConfig, SolverKind};

/// Distribution of training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingMeasure {
    Uniform {
        support: BoxDomain,
    },
    /// Independent normals `N(mean_i, sd_i^2)` conditioned on the support box.
    TruncatedGaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
        support: BoxDomain,
    },
    /// One static component per time index `n = 0..=N`.
    Schedule {
        components: Vec<TrainingMeasure>,
    },
}

impl TrainingMeasure {
    pub fn uniform(support: BoxDomain) -> Self {
        TrainingMeasure::Uniform { support }
    }

    pub fn truncated_gaussian(mean: Vec<f64>, sd: Vec<f64>, support: BoxDomain) -> Result<Self> {
        if mean.len() != support.dim() || sd.len() != support.dim() {
            return Err(RlmcError::Construction("truncated gaussian: dimension mismatch".into()));
        }
        if sd.iter().any(|&s| !(s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(RlmcError::Construction(format!(
                "truncated gaussian needs finite mean and positive sd, got mean={mean:?} sd={sd:?}"
            )));
        }
        Ok(TrainingMeasure::TruncatedGaussian { mean, sd, support })
    }

    pub fn schedule(components: Vec<TrainingMeasure>) -> Result<Self> {
        if components.is_empty() {
            return Err(RlmcError::Construction("empty schedule".into()));
        }
        let dim = components[0].support().dim();
        for c in &components {
            if matches!(c, TrainingMeasure::Schedule { .. }) {
                return Err(RlmcError::Construction("schedules cannot be nested".into()));
            }
            if c.support().dim() != dim {
                return Err(RlmcError::Construction("schedule components differ in dimension".into()));
            }
        }
        Ok(TrainingMeasure::Schedule { components })
    }

    pub fn is_schedule(&self) -> bool {
        matches!(self, TrainingMeasure::Schedule { .. })
    }

    /// Static measure used at time `n`.
    pub fn component(&self, n: usize) -> &TrainingMeasure {
        match self {
            TrainingMeasure::Schedule { components } => &components[n.min(components.len() - 1)],
            other => other,
        }
    }

    /// Support of the static measure (or of the first schedule component).
    pub fn support(&self) -> &BoxDomain {
        match self {
            TrainingMeasure::Uniform { support } | TrainingMeasure::TruncatedGaussian { support, .. } => support,
            TrainingMeasure::Schedule { components } => components[0].support(),
        }
    }

    /// Check the measure against a horizon and a state domain.
    pub fn validate_for(&self, num_steps: usize, domain: &BoxDomain) -> Result<()> {
        if let TrainingMeasure::Schedule { components } = self {
            if components.len() != num_steps + 1 {
                return Err(RlmcError::Argument(format!(
                    "schedule has {} components, horizon needs {}",
                    components.len(),
                    num_steps + 1
                )));
            }
            for c in components {
                c.validate_for(num_steps, domain)?;
            }
            return Ok(());
        }
        if !domain.contains_box(self.support()) {
            return Err(RlmcError::Argument(format!(
                "measure support {:?} not inside state domain {:?}",
                self.support(),
                domain
            )));
        }
        Ok(())
    }

    /// Density at `x` with respect to Lebesgue measure, for the component at time `n`.
    pub fn density(&self, n: usize, x: &[f64]) -> Result<f64> {
        let c = self.component(n);
        c.support().check_point("point", x)?;
        Ok(c.log_density_unchecked(x).exp())
    }

    /// Log density; `x` must lie in the support.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            TrainingMeasure::Uniform { support } => -support.volume().ln(),
            TrainingMeasure::TruncatedGaussian { mean, sd, support } => {
                let mut log_p = 0.0;
                for i in 0..x.len() {
                    let z = (x[i] - mean[i]) / sd[i];
                    let alpha = (support.lo()[i] - mean[i]) / sd[i];
                    let beta = (support.hi()[i] - mean[i]) / sd[i];
                    log_p += -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - sd[i].ln() - log_norm_mass(alpha, beta);
                }
                log_p
            }
            TrainingMeasure::Schedule { components } => components[0].log_density_unchecked(x),
        }
    }

    /// Transform independent uniforms into one draw of the component at time `n`.
    pub fn map_uniforms(&self, n: usize, u: &[f64], out: &mut [f64]) {
        match self.component(n) {
            TrainingMeasure::Uniform { support } => {
                for i in 0..out.len() {
                    out[i] = support.lo()[i] + u[i] * (support.hi()[i] - support.lo()[i]);
                }
            }
            TrainingMeasure::TruncatedGaussian { mean, sd, support } => {
                for i in 0..out.len() {
                    let alpha = (support.lo()[i] - mean[i]) / sd[i];
                    let beta = (support.hi()[i] - mean[i]) / sd[i];
                    // Work in the tail with more mass so the inverse CDF keeps precision.
                    let z = if alpha > 0.0 {
                        let (ca, cb) = (norm_cdf(-beta), norm_cdf(-alpha));
                        -norm_inv_cdf(ca + u[i] * (cb - ca))
                    } else {
                        let (ca, cb) = (norm_cdf(alpha), norm_cdf(beta));
                        norm_inv_cdf(ca + u[i] * (cb - ca))
                    };
                    out[i] = (mean[i] + sd[i] * z).clamp(support.lo()[i], support.hi()[i]);
                }
            }
            TrainingMeasure::Schedule { .. } => unreachable!("component() never returns a schedule"),
        }
    }

    /// `E[X_axis^k 1{a <= X_axis < b}]`, `k = 0..=max_k`, under the static component.
    pub fn axis_partial_moments(&self, axis: usize, a: f64, b: f64, max_k: usize) -> Vec<f64> {
        let mut out = vec![0.0; max_k + 1];
        match self {
            TrainingMeasure::Uniform { support } => {
                let (lo, hi) = (support.lo()[axis], support.hi()[axis]);
                let (a, b) = (a.max(lo), b.min(hi));
                if b > a {
                    let width = hi - lo;
                    let (mut pa, mut pb) = (a, b);
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = (pb - pa) / ((k as f64 + 1.0) * width);
                        pa *= a;
                        pb *= b;
                    }
                }
            }
            TrainingMeasure::TruncatedGaussian { mean, sd, support } => {
                let (lo, hi) = (support.lo()[axis], support.hi()[axis]);
                let (a, b) = (a.max(lo), b.min(hi));
                if b > a {
                    let (m, s) = (mean[axis], sd[axis]);
                    normal_partial_moments(m, s, a, b, max_k, &mut out);
                    let mass = norm_mass((lo - m) / s, (hi - m) / s);
                    for o in out.iter_mut() {
                        *o /= mass;
                    }
                }
            }
            TrainingMeasure::Schedule { components } => return components[0].axis_partial_moments(axis, a, b, max_k),
        }
        out
    }

    /// Raw moments of one coordinate over the whole support.
    pub fn axis_moments(&self, axis: usize, max_k: usize) -> Vec<f64> {
        let s = self.support();
        self.axis_partial_moments(axis, s.lo()[axis], s.hi()[axis], max_k)
    }
}

/// Draw `count` i.i.d. training points for layer `n`; deterministic in `(seed, n, count)`.
pub fn sample_layer(measure: &TrainingMeasure, n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = measure.component(n).support().dim();
    let mut rng = stream_rng(seed, tags::TRAINING_LAYER, n as u64, 0);
    let mut u = vec![0.0; d];
    (0..count)
        .map(|_| {
            for v in u.iter_mut() {
                *v = open01(&mut rng);
            }
            let mut x = vec![0.0; d];
            measure.map_uniforms(n, &u, &mut x);
            x
        })
        .collect()
}

/// Grid used by [`estimate_r_bar`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis for the state, control and landing grids (endpoints included).
    pub resolution: usize,
    /// Time indices to scan; all of `0..N` when absent.
    pub times: Option<Vec<usize>>,
    /// Optional sub-box of starting states; the state domain when absent.
    pub states: Option<BoxDomain>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 201,
            times: None,
            states: None,
        }
    }
}

fn axis_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn tensor_grid(b: &BoxDomain, points: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..b.dim()).map(|i| axis_grid(b.lo()[i], b.hi()[i], points)).collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Estimate `R̄` as the square root of the grid supremum of `p(y | n, x, u) / mu_{n+1}(y)`.
///
/// Returns `f64::INFINITY` when the supremum overflows double precision or the transition
/// puts density on states outside the measure's support. Grids with
/// resolution `2r - 1` contain the grid of resolution `r`, so refining that way never
/// lowers the estimate.
pub fn estimate_r_bar(model: &dyn ControlledModel, measure: &TrainingMeasure, grid: &GridSpec) -> Result<f64> {
    let big_n = model.num_steps();
    let probe_x: Vec<f64> = model.state_domain().lo().iter().zip(model.state_domain().hi()).map(|(l, h)| 0.5 * (l + h)).collect();
    let probe_u: Vec<f64> = model.control_set().bounds().lo().iter().zip(model.control_set().bounds().hi()).map(|(l, h)| 0.5 * (l + h)).collect();
    if model.transition_density(0, &probe_x, &probe_u, &probe_x).is_none() {
        return Err(RlmcError::Capability(format!("model '{}' has no transition density", model.name())));
    }
    let times: Vec<usize> = grid.times.clone().unwrap_or_else(|| (0..big_n).collect());
    let states = tensor_grid(grid.states.as_ref().unwrap_or(model.state_domain()), grid.resolution);
    let controls = tensor_grid(model.control_set().bounds(), grid.resolution);
    let mut sup_log = f64::NEG_INFINITY;
    for &n in &times {
        let target = measure.component(n + 1);
        let mut landing = tensor_grid(target.support(), grid.resolution);
        // Landing points outside the support carry no training mass: any density there is unbounded.
        let uncovered: Vec<Vec<f64>> = if target.support().contains_box(model.state_domain()) {
            Vec::new()
        } else {
            tensor_grid(model.state_domain(), grid.resolution)
                .into_iter()
                .filter(|y| !target.support().contains(y))
                .collect()
        };
        let log_mu: Vec<f64> = landing.iter().map(|y| target.log_density_unchecked(y)).collect();
        let covered = landing.len();
        landing.extend(uncovered);
        for x in &states {
            for u in &controls {
                for (j, y) in landing.iter().enumerate() {
                    let p = model.transition_density(n, x, u, y).unwrap_or(0.0);
                    if p > 0.0 {
                        if j >= covered {
                            return Ok(f64::INFINITY);
                        }
                        sup_log = sup_log.max(p.ln() - log_mu[j]);
                    }
                }
            }
        }
    }
    if sup_log > f64::MAX.ln() {
        return Ok(f64::INFINITY);
    }
    Ok((0.5 * sup_log).exp().max(0.0))
}

/// `max_n sup_y mu_n(y) / reference(y)` over a grid, for schedule measures.
pub fn schedule_density_factor(schedule: &TrainingMeasure, reference: &TrainingMeasure, resolution: usize) -> f64 {
    let TrainingMeasure::Schedule { components } = schedule else {
        return 1.0;
    };
    let mut sup = f64::NEG_INFINITY;
    for c in components {
        for y in tensor_grid(c.support(), resolution) {
            if reference.support().contains(&y) {
                sup = sup.max(c.log_density_unchecked(&y) - reference.log_density_unchecked(&y));
            }
        }
    }
    sup.exp()
}

/// Diagnostics pairing representation error and exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDiagnostics {
    pub epsilon_k: f64,
    /// `None` encodes the infinite sentinel in JSON.
    pub r_bar: Option<f64>,
    pub resolution: usize,
}

impl MeasureDiagnostics {
    pub fn new(epsilon_k: f64, r_bar: f64, resolution: usize) -> Self {
        MeasureDiagnostics {
            epsilon_k,
            r_bar: r_bar.is_finite().then_some(r_bar),
            resolution,
        }
    }
}

/// Result of [`fit_schedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSchedule {
    pub measure: TrainingMeasure,
    /// Time indices whose cross-section had (near) zero spread and got the floor.
    pub floored_times: Vec<usize>,
}

/// Per-time truncated Gaussians matched to the sample mean and standard deviation of
/// simulated cross-sections. `cross_sections[n][m]` is the state of path `m` at time `n`.
///
/// Standard deviations below `sd_floor` (default: 5% of each axis half-width) are raised to it.
pub fn fit_schedule(cross_sections: &[Vec<Vec<f64>>], support: &BoxDomain, sd_floor: Option<f64>) -> Result<FittedSchedule> {
    if cross_sections.is_empty() || cross_sections.iter().any(Vec::is_empty) {
        return Err(RlmcError::Argument("fit_schedule needs nonempty cross-sections".into()));
    }
    let d = support.dim();
    let mut components = Vec::with_capacity(cross_sections.len());
    let mut floored_times = Vec::new();
    for (n, section) in cross_sections.iter().enumerate() {
        let count = section.len() as f64;
        let mut mean = vec![0.0; d];
        for x in section {
            support.check_point("trajectory state", x)?;
            for i in 0..d {
                mean[i] += x[i] / count;
            }
        }
        let mut sd = vec![0.0; d];
        if section.len() > 1 {
            for x in section {
                for i in 0..d {
                    sd[i] += (x[i] - mean[i]).powi(2);
                }
            }
            for s in sd.iter_mut() {
                *s = (*s / (count - 1.0)).sqrt();
            }
        }
        let mut floored = false;
        for i in 0..d {
            let floor = sd_floor.unwrap_or(0.05 * 0.5 * (support.hi()[i] - support.lo()[i]));
            if sd[i] < floor {
                sd[i] = floor;
                floored = true;
            }
        }
        if floored {
            floored_times.push(n);
        }
        components.push(TrainingMeasure::truncated_gaussian(mean, sd, support.clone())?);
    }
    Ok(FittedSchedule {
        measure: TrainingMeasure::schedule(components)?,
        floored_times,
    })
}

/// Component means of a schedule, `[n][axis]`.
pub fn schedule_means(measure: &TrainingMeasure) -> Option<Vec<Vec<f64>>> {
    match measure {
        TrainingMeasure::Schedule { components } => Some(
            components
                .iter()
                .map(|c| match c {
                    TrainingMeasure::TruncatedGaussian { mean, .. } => mean.clone(),
                    other => {
                        let s = other.support();
                        s.lo().iter().zip(s.hi()).map(|(l, h)| 0.5 * (l + h)).collect()
                    }
                })
                .collect(),
        ),
        _ => None,
    }
}

/// Settings of the iterated measure fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureIterationConfig {
    pub solver: SolverKind,
    pub solve: SolveConfig,
    /// Starting state of the forward simulations.
    pub x0: Vec<f64>,
    pub eval_paths: usize,
    pub max_iters: usize,
    /// Sup-norm tolerance on successive schedule means.
    pub tol: f64,
    pub sd_floor: Option<f64>,
}

/// Outcome of [`iterate_measure`].
#[derive(Debug, Clone)]
pub struct MeasureIteration {
    pub measure: TrainingMeasure,
    /// Coefficients of the last solve.
    pub coefficients: CoefficientMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of schedule means per iteration (first entry `None`: nothing to compare).
    pub mean_changes: Vec<Option<f64>>,
}

/// Alternate solve -> forward simulation -> [`fit_schedule`] until the schedule means move
/// by less than `tol` in sup norm or `max_iters` solves have been made.
pub fn iterate_measure(
    model: &dyn ControlledModel,
    basis: &BasisFamily,
    evaluator: &CondExpEvaluator<'_>,
    initial: &TrainingMeasure,
    config: &MeasureIterationConfig,
) -> Result<MeasureIteration> {
    if config.max_iters == 0 {
        return Err(RlmcError::Argument("max_iters must be at least 1".into()));
    }
    let optimizer = ControlOptimizer::new(model.control_set(), config.solve.optimizer.clone());
    let mut measure = initial.clone();
    let mut previous_means = schedule_means(initial);
    let mut changes = Vec::new();
    let mut iterations = 0;
    loop {
        let solved = solve(config.solver, model, basis, evaluator, &measure, &config.solve)?;
        iterations += 1;
        let options = EvaluationOptions {
            paths: config.eval_paths,
            seed: crate::rng::derive_seed(config.solve.seed, "measure-iteration", &[iterations as u64]),
            retain_cross_sections: true,
            histogram_bins: None,
        };
        let report = evaluate_policy(model, &solved.coefficients, evaluator, &optimizer, &config.x0, &options)?;
        let sections = report.cross_sections.as_ref().expect("cross-sections retained");
        let fitted = fit_schedule(sections, model.state_domain(), config.sd_floor)?;
        let means = schedule_means(&fitted.measure).expect("fit returns a schedule");
        let change = previous_means.as_ref().map(|prev| {
            prev.iter()
                .zip(&means)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0_f64, f64::max)
        });
        changes.push(change);
        measure = fitted.measure;
        previous_means = Some(means);
        let converged = change.is_some_and(|c| c < config.tol);
        if converged || iterations >= config.max_iters {
            return Ok(MeasureIteration {
                measure,
                coefficients: solved.coefficients,
                iterations,
                converged,
                mean_changes: changes,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_pdf;

    #[test]
    fn uniform_density_is_inverse_volume() {
        let m = TrainingMeasure::uniform(BoxDomain::interval(-2.0, 2.0).unwrap());
        assert_eq!(m.density(0, &[0.3]).unwrap(), 0.25);
        assert!(m.density(0, &[2.5]).is_err());
    }

    #[test]
    fn truncated_gaussian_density_at_mode() {
        let m = TrainingMeasure::truncated_gaussian(vec![0.0], vec![1.0], BoxDomain::interval(-5.0, 5.0).unwrap()).unwrap();
        let expected = norm_pdf(0.0) / (norm_cdf(5.0) - norm_cdf(-5.0));
        assert!((m.density(0, &[0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.398_942_4).abs() < 1e-6);
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let m = TrainingMeasure::uniform(BoxDomain::interval(0.0, 1.0).unwrap());
        let a = sample_layer(&m, 0, 3, 11);
        assert_eq!(a, sample_layer(&m, 0, 3, 11));
        assert_ne!(a, sample_layer(&m, 1, 3, 11));
        assert!(a.iter().all(|x| (0.0..=1.0).contains(&x[0])));
    }

    #[test]
    fn schedule_indexes_components() {
        let b = BoxDomain::interval(-1.0, 1.0).unwrap();
        let comps: Vec<_> = (0..30)
            .map(|n| TrainingMeasure::truncated_gaussian(vec![n as f64 / 100.0], vec![0.01], b.clone()).unwrap())
            .collect();
        let s = TrainingMeasure::schedule(comps).unwrap();
        let pts = sample_layer(&s, 25, 200, 3);
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / 200.0;
        assert!((mean - 0.25).abs() < 0.005);
        assert!((s.density(25, &[0.25]).unwrap() - s.component(25).density(0, &[0.25]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cross_sections_get_the_floor() {
        let b = BoxDomain::interval(-2.0, 2.0).unwrap();
        let sections = vec![vec![vec![0.0]; 10]; 4];
        let fit = fit_schedule(&sections, &b, None).unwrap();
        assert_eq!(fit.floored_times, vec![0, 1, 2, 3]);
        for n in 0..4 {
            assert_eq!(
                fit.measure.component(n),
                &TrainingMeasure::truncated_gaussian(vec![0.0], vec![0.1], b.clone()).unwrap()
            );
        }
    }

    #[test]
    fn moment_matching_fit() {
        let b = BoxDomain::interval(-2.0, 2.0).unwrap();
        // mean 0.3, sample sd 0.2 exactly: points 0.3 +- 0.2 * sqrt((k-1)/k) ... use two points
        let s = 0.2 / 2f64.sqrt();
        let sections = vec![vec![vec![0.3 - s], vec![0.3 + s]]];
        let fit = fit_schedule(&sections, &b, None).unwrap();
        match fit.measure.component(0) {
            TrainingMeasure::TruncatedGaussian { mean, sd, .. } => {
                assert!((mean[0] - 0.3).abs() < 1e-12);
                assert!((sd[0] - 0.2).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn axis_moments_uniform_unit_interval() {
        let m = TrainingMeasure::uniform(BoxDomain::interval(0.0, 1.0).unwrap());
        let mo = m.axis_moments(0, 4);
        for (k, v) in mo.iter().enumerate() {
            assert!((v - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
