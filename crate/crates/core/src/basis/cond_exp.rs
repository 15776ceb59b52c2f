use serde::{Deserialize, Serialize};

use super::{BasisFamily, Repr};
use crate::error::{Result, RlmcError};
use crate::model::ControlledModel;
use crate::numerics::{clamped_normal_cell_moments, clamped_normal_moments, norm_cdf, norm_mass, HermiteRule};
use crate::rng::{fill_open01, stream_rng, tags};

/// How `phi_hat_k^n(x, u) = E[phi_k(X_{n+1}) | X_n = x, u_n = u]` is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CondExpStrategy {
    /// Exact moments of the clamped Gaussian transition.
    ClosedForm,
    /// Tensor Gauss-Hermite rule on the pre-clamp Gaussian with a clamped integrand.
    GaussHermite { order: usize },
    /// Fixed-seed inner Monte Carlo through the model's dynamics.
    InnerMonteCarlo { samples: usize, seed: u64 },
}

impl CondExpStrategy {
    pub fn gauss_hermite() -> Self {
        CondExpStrategy::GaussHermite { order: 16 }
    }

    pub fn inner_monte_carlo(seed: u64) -> Self {
        CondExpStrategy::InnerMonteCarlo { samples: 512, seed }
    }
}

/// Per-thread working memory for [`CondExpEvaluator`].
#[derive(Debug, Clone)]
pub struct CondExpScratch {
    mean: Vec<f64>,
    sd: Vec<f64>,
    moments: Vec<Vec<f64>>,
    cell: Vec<[f64; 2]>,
    point: Vec<f64>,
    phi: Vec<f64>,
    out: Vec<f64>,
}

/// Conditional expectations of a basis family under a model's transition.
///
/// Inner Monte Carlo uses the same draws for every `(x, u)` at a given time, so repeated
/// evaluation is deterministic and the result is smooth in `u` whenever the dynamics are.
pub struct CondExpEvaluator<'a> {
    model: &'a dyn ControlledModel,
    basis: &'a BasisFamily,
    strategy: CondExpStrategy,
    hermite: Option<HermiteRule>,
    /// `noise[n]` holds `samples * noise_dim` uniforms.
    noise: Vec<Vec<f64>>,
    /// Degree of a one-dimensional monomial basis under the closed form.
    monomial_1d: Option<usize>,
    /// State bounds of a one-dimensional model.
    walls: (f64, f64),
}

const MONOMIAL_FAST_MAX: usize = 8;

impl std::fmt::Debug for CondExpEvaluator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CondExpEvaluator")
            .field("model", &self.model.name())
            .field("basis_size", &self.basis.size())
            .field("strategy", &self.strategy)
            .finish()
    }
}

fn has_gaussian_step(model: &dyn ControlledModel) -> bool {
    let d = model.state_dim();
    let dom = model.state_domain();
    let x: Vec<f64> = (0..d).map(|i| 0.5 * (dom.lo()[i] + dom.hi()[i])).collect();
    let cb = model.control_set().bounds();
    let u: Vec<f64> = (0..cb.dim()).map(|i| 0.5 * (cb.lo()[i] + cb.hi()[i])).collect();
    let (mut m, mut s) = (vec![0.0; d], vec![0.0; d]);
    model.gaussian_step(0, &x, &u, &mut m, &mut s)
}

impl<'a> CondExpEvaluator<'a> {
    /// Build an evaluator; strategies needing a Gaussian transition fail with a
    /// configuration error on models that do not declare one.
    pub fn new(model: &'a dyn ControlledModel, basis: &'a BasisFamily, strategy: CondExpStrategy) -> Result<Self> {
        if basis.domain().dim() != model.state_dim() {
            return Err(RlmcError::Configuration(format!(
                "basis dimension {} differs from state dimension {}",
                basis.domain().dim(),
                model.state_dim()
            )));
        }
        let mut hermite = None;
        let mut noise = Vec::new();
        match &strategy {
            CondExpStrategy::ClosedForm | CondExpStrategy::GaussHermite { .. } => {
                if !has_gaussian_step(model) {
                    return Err(RlmcError::Configuration(format!(
                        "strategy {strategy:?} needs a Gaussian transition, which model '{}' does not declare",
                        model.name()
                    )));
                }
                if let CondExpStrategy::GaussHermite { order } = strategy {
                    if order == 0 {
                        return Err(RlmcError::Configuration("Gauss-Hermite order must be positive".into()));
                    }
                    hermite = Some(HermiteRule::new(order));
                }
            }
            CondExpStrategy::InnerMonteCarlo { samples, seed } => {
                if *samples == 0 {
                    return Err(RlmcError::Configuration("inner Monte Carlo needs at least one sample".into()));
                }
                let width = samples * model.noise_dim();
                noise = (0..model.num_steps())
                    .map(|n| {
                        let mut rng = stream_rng(*seed, tags::INNER_MC, n as u64, 0);
                        let mut buf = vec![0.0; width];
                        fill_open01(&mut rng, &mut buf);
                        buf
                    })
                    .collect();
            }
        }
        let monomial_1d = match (&strategy, &basis.repr) {
            (CondExpStrategy::ClosedForm, Repr::Polynomial { max_degree, legendre: false, .. }) if model.state_dim() == 1 && *max_degree <= MONOMIAL_FAST_MAX => Some(*max_degree),
            _ => None,
        };
        Ok(CondExpEvaluator {
            model,
            basis,
            strategy,
            hermite,
            noise,
            monomial_1d,
            walls: (model.state_domain().lo()[0], model.state_domain().hi()[0]),
        })
    }

    /// Closed form when the model is Gaussian, otherwise inner Monte Carlo with `seed`.
    pub fn auto(model: &'a dyn ControlledModel, basis: &'a BasisFamily, seed: u64) -> Result<Self> {
        let strategy = if has_gaussian_step(model) {
            CondExpStrategy::ClosedForm
        } else {
            CondExpStrategy::inner_monte_carlo(seed)
        };
        Self::new(model, basis, strategy)
    }

    pub fn strategy(&self) -> &CondExpStrategy {
        &self.strategy
    }

    pub fn model(&self) -> &'a dyn ControlledModel {
        self.model
    }

    pub fn basis(&self) -> &'a BasisFamily {
        self.basis
    }

    pub fn scratch(&self) -> CondExpScratch {
        let d = self.model.state_dim();
        let k = self.basis.size();
        let max_k = self.basis.polynomial_degree().unwrap_or(1).max(1);
        CondExpScratch {
            mean: vec![0.0; d],
            sd: vec![0.0; d],
            moments: vec![vec![0.0; max_k + 1]; d],
            cell: vec![[0.0; 2]; d],
            point: vec![0.0; d],
            phi: vec![0.0; k],
            out: vec![0.0; k],
        }
    }

    /// Checked evaluation of the vector `(phi_hat_1, ..., phi_hat_K)`.
    pub fn eval(&self, n: usize, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if n >= self.model.num_steps() {
            return Err(RlmcError::Argument(format!(
                "time index {n} out of range 0..{}",
                self.model.num_steps()
            )));
        }
        self.model.state_domain().check_point("state", x)?;
        self.model.control_set().bounds().check_point("control", u)?;
        let mut scratch = self.scratch();
        let mut out = vec![0.0; self.basis.size()];
        self.eval_into(n, x, u, &mut scratch, &mut out);
        Ok(out)
    }

    /// Continuation value `sum_k alpha_k phi_hat_k^n(x, u)`.
    #[inline]
    pub fn continuation(&self, n: usize, x: &[f64], u: &[f64], alpha: &[f64], scratch: &mut CondExpScratch) -> f64 {
        if let Some(degree) = self.monomial_1d {
            // Same moments and summation order as the general path, without the copies.
            self.model.gaussian_step(n, x, u, &mut scratch.mean, &mut scratch.sd);
            let (mean, sd) = (scratch.mean[0], scratch.sd[0]);
            let (lo, hi) = self.walls;
            let mut m = [0.0; MONOMIAL_FAST_MAX + 1];
            if sd > 0.0 && (mean - lo) > 9.0 * sd && (hi - mean) > 9.0 * sd {
                m[0] = 1.0;
                m[1] = mean;
                for k in 2..=degree {
                    m[k] = mean * m[k - 1] + sd * sd * (k as f64 - 1.0) * m[k - 2];
                }
            } else {
                clamped_normal_moments(mean, sd, lo, hi, degree, &mut m);
            }
            return m[..=degree].iter().zip(alpha).map(|(a, b)| a * b).sum();
        }
        let mut out = std::mem::take(&mut scratch.out);
        self.eval_into(n, x, u, scratch, &mut out);
        let v = out.iter().zip(alpha).map(|(a, b)| a * b).sum();
        scratch.out = out;
        v
    }

    /// Unchecked evaluation into `out` (length `K`).
    pub fn eval_into(&self, n: usize, x: &[f64], u: &[f64], s: &mut CondExpScratch, out: &mut [f64]) {
        match &self.strategy {
            CondExpStrategy::ClosedForm => {
                self.model.gaussian_step(n, x, u, &mut s.mean, &mut s.sd);
                self.closed_form(s, out);
            }
            CondExpStrategy::GaussHermite { .. } => {
                self.model.gaussian_step(n, x, u, &mut s.mean, &mut s.sd);
                self.hermite(s, out);
            }
            CondExpStrategy::InnerMonteCarlo { samples, .. } => self.inner_mc(n, x, u, *samples, s, out),
        }
    }

    fn closed_form(&self, s: &mut CondExpScratch, out: &mut [f64]) {
        let dom = self.model.state_domain();
        let (lo, hi) = (dom.lo(), dom.hi());
        match &self.basis.repr {
            Repr::Polynomial {
                axis_polys,
                exponents,
                max_degree,
                legendre,
            } => {
                for i in 0..s.mean.len() {
                    clamped_normal_moments(s.mean[i], s.sd[i], lo[i], hi[i], *max_degree, &mut s.moments[i]);
                }
                if s.mean.len() == 1 && !legendre {
                    out.copy_from_slice(&s.moments[0][..out.len()]);
                    return;
                }
                // Expected value of each axis factor, reusing `phi` as a flat table.
                let stride = max_degree + 1;
                let table = &mut s.phi;
                table.resize(s.mean.len() * stride, 0.0);
                for (i, polys) in axis_polys.iter().enumerate() {
                    for (j, p) in polys.iter().enumerate() {
                        table[i * stride + j] = p.iter().zip(&s.moments[i]).map(|(c, m)| c * m).sum();
                    }
                }
                for (o, e) in out.iter_mut().zip(exponents) {
                    *o = e.iter().enumerate().map(|(i, &j)| table[i * stride + j]).product();
                }
                table.resize(out.len(), 0.0);
            }
            Repr::Piecewise { cells, .. } => {
                let d = s.mean.len();
                for (c, cell) in cells.iter().enumerate() {
                    let base = c * (d + 1);
                    let mut negligible = false;
                    for i in 0..d {
                        let (a, b) = (cell.lo()[i], cell.hi()[i]);
                        let (m, sd) = (s.mean[i], s.sd[i]);
                        if sd > 0.0 && (m + 9.0 * sd < a.max(lo[i]) && a > lo[i] || m - 9.0 * sd > b.min(hi[i]) && b < hi[i]) {
                            negligible = true;
                            break;
                        }
                        let mut buf = [0.0; 2];
                        clamped_normal_cell_moments(m, sd, lo[i], hi[i], a, b, 1, &mut buf);
                        s.cell[i] = buf;
                    }
                    if negligible {
                        out[base..base + d + 1].iter_mut().for_each(|o| *o = 0.0);
                        continue;
                    }
                    out[base] = s.cell.iter().map(|c| c[0]).product();
                    for j in 0..d {
                        out[base + 1 + j] = (0..d).map(|i| s.cell[i][usize::from(i == j)]).product();
                    }
                }
            }
            Repr::Radial {
                centers,
                weights,
                norms,
            } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let mut v = norms[k];
                    for i in 0..s.mean.len() {
                        v *= clamped_gaussian_kernel(s.mean[i], s.sd[i], lo[i], hi[i], centers[k][i], weights[k][i]);
                    }
                    *o = v;
                }
            }
        }
    }

    fn hermite(&self, s: &mut CondExpScratch, out: &mut [f64]) {
        let rule = self.hermite.as_ref().expect("hermite rule present");
        let dom = self.model.state_domain();
        let d = s.mean.len();
        let order = rule.nodes.len();
        let total = order.pow(d as u32);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let mut w = 1.0;
            for i in 0..d {
                s.point[i] = (s.mean[i] + s.sd[i] * rule.nodes[idx[i]]).clamp(dom.lo()[i], dom.hi()[i]);
                w *= rule.weights[idx[i]];
            }
            self.basis.eval_into(&s.point, &mut s.phi);
            for (o, p) in out.iter_mut().zip(&s.phi) {
                *o += w * p;
            }
            for j in 0..d {
                idx[j] += 1;
                if idx[j] < order {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    fn inner_mc(&self, n: usize, x: &[f64], u: &[f64], samples: usize, s: &mut CondExpScratch, out: &mut [f64]) {
        let q = self.model.noise_dim();
        let dom = self.model.state_domain();
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..samples {
            let xi = &self.noise[n][j * q..(j + 1) * q];
            self.model.dynamics(n, x, xi, u, &mut s.point);
            dom.clamp_in_place(&mut s.point);
            self.basis.eval_into(&s.point, &mut s.phi);
            for (o, p) in out.iter_mut().zip(&s.phi) {
                *o += p;
            }
        }
        let inv = 1.0 / samples as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }
}

/// `E[exp(-w (C - c)^2 / 2)]` for `C = clamp(Y, lo, hi)`, `Y ~ N(m, sd^2)`.
fn clamped_gaussian_kernel(m: f64, sd: f64, lo: f64, hi: f64, c: f64, w: f64) -> f64 {
    let kernel = |y: f64| (-0.5 * w * (y - c) * (y - c)).exp();
    if sd == 0.0 {
        return kernel(m.clamp(lo, hi));
    }
    let s2 = sd * sd;
    let denom = 1.0 + w * s2;
    let scale = (-0.5 * w * (m - c) * (m - c) / denom).exp() / denom.sqrt();
    let precision = w + 1.0 / s2;
    let m_post = (w * c + m / s2) / precision;
    let sd_post = precision.recip().sqrt();
    let interior = scale * norm_mass((lo - m_post) / sd_post, (hi - m_post) / sd_post);
    interior + norm_cdf((lo - m) / sd) * kernel(lo) + norm_cdf((m - hi) / sd) * kernel(hi)
}
