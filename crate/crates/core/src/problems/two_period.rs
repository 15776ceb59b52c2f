//! One-step problem illustrating the training-measure tradeoff.
//!
//! `X_1 = clamp(X_0 + u_0 + xi_0, -5, 5)` with standard normal `xi_0`; minimise
//! `E[u_0^2 / 2 + g(X_1)]` with `g(x) = min(1, x^2)`. Concentrated training measures
//! represent `g` better where they put mass but explore less of the landing region.

use serde::{Deserialize, Serialize};

use crate::basis::{make_basis, BasisSpec, CondExpEvaluator, CondExpStrategy, GramMatrix};
use crate::error::{Result, RlmcError};
use crate::measures::{estimate_r_bar, GridSpec, MeasureDiagnostics, TrainingMeasure};
use crate::model::{BoxDomain, ControlSet, ControlledModel, RewardBounds, Sense, StateDomain, TimeGrid};
use crate::numerics::{clamped_normal_cell_moments, linspace, norm_inv_cdf, norm_pdf};
use crate::projection::{project_exact_with, projection_error_with, QuadratureOptions};

/// `g(x) = min(1, x^2)`.
pub fn terminal_cost(x: f64) -> f64 {
    (x * x).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPeriodSpec {
    pub state_bound: f64,
    pub control_bound: f64,
    /// Standard deviations of the centred training measures, in the order reported.
    pub sigmas: Vec<f64>,
    /// Starting state of the control-effect curves.
    pub probe_x0: f64,
    pub curve_points: usize,
    pub r_bar_resolution: usize,
}

impl Default for TwoPeriodSpec {
    fn default() -> Self {
        TwoPeriodSpec {
            state_bound: 5.0,
            control_bound: 5.0,
            sigmas: vec![2.0, 1.0, 0.5, 0.25, 0.1],
            probe_x0: 1.5,
            curve_points: 101,
            r_bar_resolution: 201,
        }
    }
}

impl TwoPeriodSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.state_bound > 0.0) || !(self.control_bound > 0.0) {
            errors.push("state_bound and control_bound must be positive".into());
        }
        if self.sigmas.is_empty() {
            errors.push("sigmas must be nonempty".into());
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            errors.push("sigmas must be positive".into());
        }
        if self.probe_x0.abs() > self.state_bound {
            errors.push("probe_x0 must lie in the state domain".into());
        }
        if self.curve_points < 2 || self.r_bar_resolution < 2 {
            errors.push("curve_points and r_bar_resolution must be at least 2".into());
        }
        errors
    }

    pub fn measure(&self, sigma: f64) -> Result<TrainingMeasure> {
        TrainingMeasure::truncated_gaussian(vec![0.0], vec![sigma], BoxDomain::interval(-self.state_bound, self.state_bound)?)
    }
}

#[derive(Debug, Clone)]
pub struct TwoPeriodModel {
    time_grid: TimeGrid,
    domain: StateDomain,
    controls: ControlSet,
}

pub fn build_two_period(spec: &TwoPeriodSpec) -> Result<TwoPeriodModel> {
    let errors = spec.validate();
    if !errors.is_empty() {
        return Err(RlmcError::Configuration(errors.join("; ")));
    }
    Ok(TwoPeriodModel {
        time_grid: TimeGrid::steps(1)?,
        domain: BoxDomain::interval(-spec.state_bound, spec.state_bound)?,
        controls: ControlSet::continuous(BoxDomain::interval(-spec.control_bound, spec.control_bound)?),
    })
}

impl ControlledModel for TwoPeriodModel {
    fn name(&self) -> &str {
        "two_period"
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
        out[0] = x[0] + u[0] + norm_inv_cdf(xi[0]);
    }
    fn running_reward(&self, _n: usize, _x: &[f64], u: &[f64]) -> f64 {
        0.5 * u[0] * u[0]
    }
    fn terminal_reward(&self, x: &[f64]) -> f64 {
        terminal_cost(x[0])
    }
    fn reward_bounds(&self) -> RewardBounds {
        let um = self.controls.bounds().hi()[0].abs().max(self.controls.bounds().lo()[0].abs());
        RewardBounds {
            running: 0.5 * um * um,
            terminal: 1.0,
        }
    }
    fn sense(&self) -> Sense {
        Sense::Minimize
    }
    fn gaussian_step(&self, _n: usize, x: &[f64], u: &[f64], mean: &mut [f64], sd: &mut [f64]) -> bool {
        mean[0] = x[0] + u[0];
        sd[0] = 1.0;
        true
    }
    fn transition_density(&self, _n: usize, x: &[f64], u: &[f64], y: &[f64]) -> Option<f64> {
        Some(norm_pdf(y[0] - x[0] - u[0]))
    }
}

impl TwoPeriodModel {
    /// Exact `E[g(X_1) | X_0 = x, u_0 = u]`.
    pub fn expected_terminal(&self, x: f64, u: f64) -> f64 {
        let (lo, hi) = (self.domain.lo()[0], self.domain.hi()[0]);
        let mut inner = [0.0; 3];
        clamped_normal_cell_moments(x + u, 1.0, lo, hi, -1.0, 1.0, 2, &mut inner);
        inner[2] + (1.0 - inner[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub sigma: f64,
    pub alpha: Vec<f64>,
    #[serde(flatten)]
    pub diagnostics: MeasureDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurvePoint {
    pub sigma: f64,
    pub u: f64,
    pub estimated: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureTradeoff {
    pub rows: Vec<TradeoffRow>,
    pub curves: Vec<TradeoffCurvePoint>,
}

impl MeasureTradeoff {
    /// CSV `sigma,epsilon_3,r_bar,alpha_0,...`; an infinite `r_bar` is written as `inf`.
    pub fn write_table_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k = self.rows.first().map_or(0, |r| r.alpha.len());
        let mut header = vec!["sigma".to_string(), "epsilon_3".to_string(), "r_bar".to_string()];
        header.extend((0..k).map(|i| format!("alpha_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                format!("{:?}", r.sigma),
                format!("{:?}", r.diagnostics.epsilon_k),
                r.diagnostics.r_bar.map_or_else(|| "inf".to_string(), |v| format!("{v:?}")),
            ];
            rec.extend(r.alpha.iter().map(|a| format!("{a:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_curves_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sigma", "u", "estimated", "exact"])?;
        for p in &self.curves {
            w.write_record([format!("{:?}", p.sigma), format!("{:?}", p.u), format!("{:?}", p.estimated), format!("{:?}", p.exact)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For each `sigma`: projection error of `g` under the truncated `N(0, sigma^2)`, the
/// density-ratio bound of the one-step transition, and the estimated control-effect curve.
pub fn run_measure_tradeoff(spec: &TwoPeriodSpec) -> Result<MeasureTradeoff> {
    let model = build_two_period(spec)?;
    let basis = make_basis(&BasisSpec::monomial(2), model.state_domain())?;
    let evaluator = CondExpEvaluator::new(&model, &basis, CondExpStrategy::ClosedForm)?;
    let quad = QuadratureOptions {
        breakpoints: vec![vec![-1.0, 1.0]],
        ..QuadratureOptions::default()
    };
    let grid = GridSpec {
        resolution: spec.r_bar_resolution,
        ..GridSpec::default()
    };
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut scratch = evaluator.scratch();
    for &sigma in &spec.sigmas {
        let measure = spec.measure(sigma)?;
        let gram = GramMatrix::compute(&basis, &measure)?;
        let g = |x: &[f64]| terminal_cost(x[0]);
        let alpha = project_exact_with(g, &basis, &measure, &gram, &quad)?.alpha;
        let epsilon = projection_error_with(g, &basis, &measure, &gram, &quad)?;
        let r_bar = estimate_r_bar(&model, &measure, &grid)?;
        rows.push(TradeoffRow {
            sigma,
            alpha: alpha.clone(),
            diagnostics: MeasureDiagnostics::new(epsilon, r_bar, grid.resolution),
        });
        let ub = spec.control_bound;
        for u in linspace(-ub, ub, spec.curve_points) {
            let estimated = 0.5 * u * u + evaluator.continuation(0, &[spec.probe_x0], &[u], &alpha, &mut scratch);
            let exact = 0.5 * u * u + model.expected_terminal(spec.probe_x0, u);
            curves.push(TradeoffCurvePoint { sigma, u, estimated, exact });
        }
    }
    Ok(MeasureTradeoff { rows, curves })
}
