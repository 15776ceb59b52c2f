//! Least-squares projections onto a basis span.
//!
//! The exact projection `alpha = A_K^{-1} <h, phi>` is computed by composite Gauss-Legendre
//! quadrature over the measure's support, and the Monte Carlo projection replaces the inner
//! product by a sample mean over training points.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::gram::measure_quadrature;
use crate::basis::{BasisFamily, BasisSpec, GramMatrix};
use crate::error::{Result, RlmcError};
use crate::measures::TrainingMeasure;

/// Regression coefficients for one time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub n: usize,
    /// Number of samples behind the estimate (0 for a quadrature projection).
    pub samples: usize,
    pub alpha: Vec<f64>,
}

/// Everything needed to reproduce a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMetadata {
    pub model: String,
    pub basis: BasisSpec,
    pub measure: TrainingMeasure,
    pub solver: String,
    pub seed: u64,
    pub samples: usize,
    pub basis_size: usize,
}

/// Solver output: rows for `n = 1..=N`; row `n` is used at decision epoch `n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    pub metadata: CoefficientMetadata,
    pub rows: Vec<CoefficientVector>,
}

impl CoefficientMatrix {
    pub fn num_steps(&self) -> usize {
        self.rows.len()
    }

    pub fn basis_size(&self) -> usize {
        self.metadata.basis_size
    }

    /// Coefficients of `V(n, .)`, `1 <= n <= N`.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n - 1].alpha
    }

    /// Coefficients used when choosing the control at epoch `s`.
    pub fn next_row(&self, s: usize) -> &[f64] {
        &self.rows[s].alpha
    }

    /// RFC-4180 CSV: header `n,alpha_0,...`, one row per time index.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["n".to_string()];
        header.extend((0..self.basis_size()).map(|k| format!("alpha_{k}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.n.to_string()];
            rec.extend(row.alpha.iter().map(|a| format!("{a:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the coefficient rows of a CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<CoefficientVector>> {
        let mut r = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut fields = rec.iter();
            let n = fields
                .next()
                .ok_or_else(|| RlmcError::Io("empty coefficient row".into()))?
                .parse::<usize>()
                .map_err(|e| RlmcError::Io(format!("bad time index: {e}")))?;
            let alpha = fields
                .map(|f| f.parse::<f64>().map_err(|e| RlmcError::Io(format!("bad coefficient '{f}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(CoefficientVector { n, samples: 0, alpha });
        }
        Ok(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: CoefficientMatrix = serde_json::from_str(text)?;
        if m.rows.iter().any(|r| r.alpha.len() != m.metadata.basis_size) {
            return Err(RlmcError::Io("coefficient row length differs from basis size".into()));
        }
        Ok(m)
    }
}

const CHUNK: usize = 1024;

/// `(1/M) sum_m values_m phi(points_m)` with a fixed chunked summation order.
pub(crate) fn sample_moment(points: &[Vec<f64>], values: &[f64], basis: &BasisFamily) -> Result<Vec<f64>> {
    if points.is_empty() || points.len() != values.len() {
        return Err(RlmcError::Argument(format!(
            "need matching nonempty points and values, got {} and {}",
            points.len(),
            values.len()
        )));
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(RlmcError::Data { index, value });
    }
    let k = basis.size();
    let partial: Vec<Vec<f64>> = points
        .par_chunks(CHUNK)
        .zip(values.par_chunks(CHUNK))
        .map(|(pts, vals)| {
            let mut acc = vec![0.0; k];
            let mut phi = vec![0.0; k];
            for (p, v) in pts.iter().zip(vals) {
                basis.eval_into(p, &mut phi);
                for (a, f) in acc.iter_mut().zip(&phi) {
                    *a += v * f;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; k];
    for acc in &partial {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let inv = 1.0 / points.len() as f64;
    total.iter_mut().for_each(|t| *t *= inv);
    Ok(total)
}

/// Monte Carlo projection `A_K^{-1} (1/M) sum_m h(x_m) phi(x_m)`.
///
/// The sum is split into fixed chunks whose partial sums are added in order, so the result
/// does not depend on the number of worker threads.
pub fn project_mc(points: &[Vec<f64>], values: &[f64], basis: &BasisFamily, gram: &GramMatrix, n: usize) -> Result<CoefficientVector> {
    if gram.size() != basis.size() {
        return Err(RlmcError::Argument("gram matrix and basis differ in size".into()));
    }
    let moment = sample_moment(points, values, basis)?;
    Ok(CoefficientVector {
        n,
        samples: points.len(),
        alpha: gram.apply_inverse(&moment),
    })
}

/// Settings of the refining quadrature behind [`project_exact`] and [`projection_error`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureOptions {
    /// Extra per-axis breakpoints where the integrand has kinks.
    pub breakpoints: Vec<Vec<f64>>,
    pub rel_tol: f64,
    pub order: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            breakpoints: Vec::new(),
            rel_tol: 1e-8,
            order: 10,
        }
    }
}

/// Integrate a vector-valued function against `measure`, doubling the panel count until two
/// successive levels agree to `rel_tol` in sup norm.
fn refine<F>(measure: &TrainingMeasure, basis: &BasisFamily, opts: &QuadratureOptions, len: usize, integrand: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64], &mut [f64]) + Sync,
{
    let d = measure.support().dim();
    let mut cuts = basis.breakpoints();
    for (i, extra) in opts.breakpoints.iter().enumerate().take(d) {
        cuts[i].extend(extra.iter().copied());
    }
    let max_panels = match d {
        1 => 1 << 14,
        2 => 128,
        _ => 16,
    };
    let mut previous: Option<Vec<f64>> = None;
    let mut panels = 2;
    loop {
        let (points, weights) = measure_quadrature(measure, &cuts, panels, opts.order);
        let partial: Vec<Vec<f64>> = points
            .par_chunks(CHUNK)
            .zip(weights.par_chunks(CHUNK))
            .map(|(pts, ws)| {
                let mut acc = vec![0.0; len];
                let mut val = vec![0.0; len];
                let mut phi = vec![0.0; basis.size()];
                for (p, w) in pts.iter().zip(ws) {
                    integrand(p, &mut val, &mut phi);
                    for (a, v) in acc.iter_mut().zip(&val) {
                        *a += w * v;
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; len];
        for acc in &partial {
            for (t, a) in total.iter_mut().zip(acc) {
                *t += a;
            }
        }
        if total.iter().any(|t| !t.is_finite()) {
            return Err(RlmcError::numerical("projection", "non-finite quadrature value"));
        }
        if let Some(prev) = &previous {
            let scale = total.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
            let diff = total.iter().zip(prev).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if diff <= opts.rel_tol * scale {
                return Ok(total);
            }
            if panels >= max_panels {
                return Err(RlmcError::numerical(
                    "projection",
                    format!("quadrature not converged at {panels} panels per piece: change {diff:e}, scale {scale:e}"),
                ));
            }
        }
        previous = Some(total);
        panels *= 2;
    }
}

/// Exact projection `A_K^{-1} <h, phi>_mu` by refining quadrature.
pub fn project_exact<H>(h: H, basis: &BasisFamily, measure: &TrainingMeasure, gram: &GramMatrix) -> Result<CoefficientVector>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    project_exact_with(h, basis, measure, gram, &QuadratureOptions::default())
}

pub fn project_exact_with<H>(h: H, basis: &BasisFamily, measure: &TrainingMeasure, gram: &GramMatrix, opts: &QuadratureOptions) -> Result<CoefficientVector>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    check_static(measure, basis)?;
    let k = basis.size();
    let inner = refine(measure, basis, opts, k, |p, out, phi| {
        let hv = h(p);
        basis.eval_into(p, phi);
        for (o, f) in out.iter_mut().zip(phi.iter()) {
            *o = hv * f;
        }
    })?;
    Ok(CoefficientVector {
        n: 0,
        samples: 0,
        alpha: gram.apply_inverse(&inner),
    })
}

/// `|| Pi_K h - h ||_{L^2(mu)}`.
pub fn projection_error<H>(h: H, basis: &BasisFamily, measure: &TrainingMeasure, gram: &GramMatrix) -> Result<f64>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    projection_error_with(h, basis, measure, gram, &QuadratureOptions::default())
}

pub fn projection_error_with<H>(h: H, basis: &BasisFamily, measure: &TrainingMeasure, gram: &GramMatrix, opts: &QuadratureOptions) -> Result<f64>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    let alpha = project_exact_with(&h, basis, measure, gram, opts)?.alpha;
    let sq = refine(measure, basis, opts, 2, |p, out, phi| {
        let hv = h(p);
        basis.eval_into(p, phi);
        let fit: f64 = alpha.iter().zip(phi.iter()).map(|(a, f)| a * f).sum();
        out[0] = (hv - fit) * (hv - fit);
        // Keeps the convergence test meaningful when the residual is tiny.
        out[1] = hv * hv;
    })?;
    Ok(sq[0].max(0.0).sqrt())
}

fn check_static(measure: &TrainingMeasure, basis: &BasisFamily) -> Result<()> {
    if measure.is_schedule() {
        return Err(RlmcError::Configuration("project against a single schedule component".into()));
    }
    if !basis.domain().contains_box(measure.support()) {
        return Err(RlmcError::Argument("measure support not inside basis domain".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_basis;
    use crate::measures::sample_layer;
    use crate::model::BoxDomain;

    fn setup(spec: BasisSpec, lo: f64, hi: f64) -> (BasisFamily, TrainingMeasure, GramMatrix) {
        let dom = BoxDomain::interval(lo, hi).unwrap();
        let basis = make_basis(&spec, &dom).unwrap();
        let mu = TrainingMeasure::uniform(dom);
        let gram = GramMatrix::compute(&basis, &mu).unwrap();
        (basis, mu, gram)
    }

    #[test]
    fn constant_values_give_constant_coefficient() {
        let (basis, mu, gram) = setup(BasisSpec::monomial(0), 0.0, 1.0);
        let pts = sample_layer(&mu, 0, 17, 4);
        let v = project_mc(&pts, &[2.5; 17], &basis, &gram, 0).unwrap();
        assert!((v.alpha[0] - 2.5).abs() < 1e-14);
        assert_eq!(v.samples, 17);
    }

    #[test]
    fn non_finite_value_is_located() {
        let (basis, mu, gram) = setup(BasisSpec::monomial(1), 0.0, 1.0);
        let pts = sample_layer(&mu, 0, 4, 4);
        let err = project_mc(&pts, &[0.0, 1.0, f64::NAN, 0.0], &basis, &gram, 0).unwrap_err();
        assert!(matches!(err, RlmcError::Data { index: 2, .. }));
    }

    #[test]
    fn basis_element_projects_to_unit_vector() {
        let (basis, mu, gram) = setup(BasisSpec::orthonormal(3), 0.0, 1.0);
        for j in 0..4 {
            let a = project_exact(|x| basis.eval(x).unwrap()[j], &basis, &mu, &gram).unwrap();
            for (k, v) in a.alpha.iter().enumerate() {
                assert!((v - f64::from(u8::from(k == j))).abs() < 1e-10);
            }
        }
        let zero = project_exact(|_| 0.0, &basis, &mu, &gram).unwrap();
        assert!(zero.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn in_span_function_has_no_error() {
        let (basis, mu, gram) = setup(BasisSpec::monomial(2), -1.0, 2.0);
        let e = projection_error(|x| 2.0 - x[0] * x[0], &basis, &mu, &gram).unwrap();
        assert!(e <= 1e-8);
    }

    #[test]
    fn cubic_residual_matches_closed_form() {
        // x^3 - Pi x^3 on [0,1] is the shifted Legendre P3 / 20, whose norm is 1/(20 sqrt 7).
        let (basis, mu, gram) = setup(BasisSpec::monomial(2), 0.0, 1.0);
        let e = projection_error(|x| x[0].powi(3), &basis, &mu, &gram).unwrap();
        assert!((e - 1.0 / (20.0 * 7f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip() {
        let m = CoefficientMatrix {
            metadata: CoefficientMetadata {
                model: "m".into(),
                basis: BasisSpec::monomial(1),
                measure: TrainingMeasure::uniform(BoxDomain::interval(0.0, 1.0).unwrap()),
                solver: "value".into(),
                seed: 1,
                samples: 10,
                basis_size: 2,
            },
            rows: vec![
                CoefficientVector { n: 1, samples: 10, alpha: vec![0.1, -3.0e-17] },
                CoefficientVector { n: 2, samples: 10, alpha: vec![1.0 / 3.0, 2.0] },
            ],
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,alpha_0,alpha_1\n"));
        let rows = CoefficientMatrix::read_csv_rows(buf.as_slice()).unwrap();
        assert_eq!(rows[1].alpha, m.rows[1].alpha);
        let back = CoefficientMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
