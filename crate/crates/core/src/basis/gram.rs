use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{BasisFamily, Repr};
use crate::error::{Result, RlmcError};
use crate::measures::TrainingMeasure;
use crate::numerics::tensor_gauss_legendre;

/// How the Gram matrix entries were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GramMethod {
    ClosedForm,
    Quadrature { nodes: usize },
}

/// `A_K = E_mu[phi phi^T]` with a Cholesky factor for applying its inverse.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    jitter: f64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    method: GramMethod,
}

/// Entries below this magnitude are stored as exact zeros for radial families.
const SPARSITY_THRESHOLD: f64 = 1e-14;
/// Jitter is added when `min_eig < JITTER_TRIGGER * max_eig`.
const JITTER_TRIGGER: f64 = 1e-12;

/// Lebesgue-weighted Gauss-Legendre nodes with the measure density folded into the weights.
pub(crate) fn measure_quadrature(
    measure: &TrainingMeasure,
    breakpoints: &[Vec<f64>],
    panels: usize,
    order: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let s = measure.support();
    let mut cuts: Vec<Vec<f64>> = (0..s.dim()).map(|i| breakpoints.get(i).cloned().unwrap_or_default()).collect();
    if let TrainingMeasure::TruncatedGaussian { mean, sd, .. } = measure {
        // Resolve the bulk of a narrow Gaussian even on the coarsest level.
        for (i, c) in cuts.iter_mut().enumerate() {
            c.extend([-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0].iter().map(|k| mean[i] + k * sd[i]));
        }
    }
    let (points, mut weights) = tensor_gauss_legendre(s.lo(), s.hi(), &cuts, panels, order);
    for (w, p) in weights.iter_mut().zip(&points) {
        *w *= measure.log_density_unchecked(p).exp();
    }
    (points, weights)
}

fn require_static(measure: &TrainingMeasure) -> Result<()> {
    if measure.is_schedule() {
        return Err(RlmcError::Configuration(
            "pass a single schedule component (measure.component(n)), not the whole schedule".into(),
        ));
    }
    Ok(())
}

fn polynomial_gram(axis_polys: &[Vec<Vec<f64>>], exponents: &[Vec<usize>], max_degree: usize, measure: &TrainingMeasure) -> DMatrix<f64> {
    let d = axis_polys.len();
    let moments: Vec<Vec<f64>> = (0..d).map(|i| measure.axis_moments(i, 2 * max_degree)).collect();
    // E[p_a(X_i) p_b(X_i)] per axis and degree pair.
    let pair: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|i| {
            (0..=max_degree)
                .map(|a| {
                    (0..=max_degree)
                        .map(|b| {
                            let (pa, pb) = (&axis_polys[i][a], &axis_polys[i][b]);
                            let mut s = 0.0;
                            for (ia, ca) in pa.iter().enumerate() {
                                for (ib, cb) in pb.iter().enumerate() {
                                    s += ca * cb * moments[i][ia + ib];
                                }
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let k = exponents.len();
    DMatrix::from_fn(k, k, |r, c| (0..d).map(|i| pair[i][exponents[r][i]][exponents[c][i]]).product())
}

fn piecewise_gram(cells: &[crate::model::BoxDomain], measure: &TrainingMeasure) -> DMatrix<f64> {
    let d = cells[0].dim();
    let k = cells.len() * (d + 1);
    let mut a = DMatrix::zeros(k, k);
    for (ci, cell) in cells.iter().enumerate() {
        let m: Vec<Vec<f64>> = (0..d)
            .map(|i| measure.axis_partial_moments(i, cell.lo()[i], cell.hi()[i], 2))
            .collect();
        let base = ci * (d + 1);
        // Feature 0 is the indicator, feature j+1 is x_j.
        let entry = |f: usize, g: usize| -> f64 {
            (0..d)
                .map(|i| {
                    let power = usize::from(f == i + 1) + usize::from(g == i + 1);
                    m[i][power]
                })
                .product()
        };
        for f in 0..=d {
            for g in 0..=d {
                a[(base + f, base + g)] = entry(f, g);
            }
        }
    }
    a
}

impl GramMatrix {
    /// Gram matrix of `basis` under a static measure.
    ///
    /// Polynomial and piecewise-affine families use exact moment formulas; radial families use
    /// composite Gauss-Legendre quadrature refined until two levels agree to `1e-12` relative.
    pub fn compute(basis: &BasisFamily, measure: &TrainingMeasure) -> Result<Self> {
        require_static(measure)?;
        if !basis.domain().contains_box(measure.support()) {
            return Err(RlmcError::Argument(format!(
                "measure support {:?} not inside basis domain {:?}",
                measure.support(),
                basis.domain()
            )));
        }
        let (matrix, method) = match &basis.repr {
            Repr::Polynomial {
                axis_polys,
                exponents,
                max_degree,
                ..
            } => (polynomial_gram(axis_polys, exponents, *max_degree, measure), GramMethod::ClosedForm),
            Repr::Piecewise { cells, .. } => (piecewise_gram(cells, measure), GramMethod::ClosedForm),
            Repr::Radial { .. } => {
                let (m, nodes) = Self::quadrature_matrix(basis, measure)?;
                let m = m.map(|v| if v.abs() < SPARSITY_THRESHOLD { 0.0 } else { v });
                (m, GramMethod::Quadrature { nodes })
            }
        };
        Self::from_matrix(matrix, method)
    }

    fn quadrature_matrix(basis: &BasisFamily, measure: &TrainingMeasure) -> Result<(DMatrix<f64>, usize)> {
        let k = basis.size();
        let breakpoints = basis.breakpoints();
        let mut previous: Option<DMatrix<f64>> = None;
        let mut phi = vec![0.0; k];
        let max_panels = if measure.support().dim() == 1 { 1 << 12 } else { 64 };
        let mut panels = 4;
        loop {
            let (points, weights) = measure_quadrature(measure, &breakpoints, panels, 10);
            let mut a = DMatrix::<f64>::zeros(k, k);
            for (p, w) in points.iter().zip(&weights) {
                basis.eval_into(p, &mut phi);
                for r in 0..k {
                    for c in 0..k {
                        a[(r, c)] += w * phi[r] * phi[c];
                    }
                }
            }
            if let Some(prev) = &previous {
                let scale = a.amax().max(f64::MIN_POSITIVE);
                if (&a - prev).amax() <= 1e-12 * scale {
                    return Ok((a, points.len()));
                }
            }
            if panels >= max_panels {
                return Err(RlmcError::numerical("gram", "quadrature did not converge"));
            }
            previous = Some(a);
            panels *= 2;
        }
    }

    /// Wrap a symmetric matrix, applying the jitter policy and factorising.
    pub fn from_matrix(matrix: DMatrix<f64>, method: GramMethod) -> Result<Self> {
        let k = matrix.nrows();
        if k == 0 || matrix.ncols() != k {
            return Err(RlmcError::Argument("gram matrix must be square and nonempty".into()));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
        let mut min_eigenvalue = eig.min();
        let max_eigenvalue = eig.max();
        let mut jitter = 0.0;
        let mut factored = matrix.clone();
        if !(min_eigenvalue >= JITTER_TRIGGER * max_eigenvalue) {
            jitter = JITTER_TRIGGER * matrix.trace() / k as f64;
            for i in 0..k {
                factored[(i, i)] += jitter;
            }
            min_eigenvalue = SymmetricEigen::new(factored.clone()).eigenvalues.min();
        }
        let cholesky = Cholesky::new(factored).ok_or(RlmcError::Conditioning {
            min_eigenvalue,
            max_eigenvalue,
        })?;
        Ok(GramMatrix {
            matrix,
            cholesky,
            jitter,
            min_eigenvalue,
            max_eigenvalue,
            method,
        })
    }

    /// `A_K^{-1} rhs` through the Cholesky factor.
    pub fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.cholesky.solve(&b).as_slice().to_vec()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Diagonal shift actually applied before factorising (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Smallest eigenvalue of the matrix that was factorised.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    pub fn condition_number(&self) -> f64 {
        self.max_eigenvalue / self.min_eigenvalue
    }

    pub fn method(&self) -> &GramMethod {
        &self.method
    }

    /// RFC-4180 CSV, one row per matrix row, header `c0..c{K-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k = self.size();
        w.write_record((0..k).map(|c| format!("c{c}")))?;
        for r in 0..k {
            w.write_record((0..k).map(|c| format!("{:e}", self.matrix[(r, c)])))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_basis, BasisSpec};
    use crate::model::BoxDomain;

    fn uniform(lo: f64, hi: f64) -> TrainingMeasure {
        TrainingMeasure::uniform(BoxDomain::interval(lo, hi).unwrap())
    }

    #[test]
    fn hilbert_matrix_for_monomials() {
        let b = make_basis(&BasisSpec::monomial(2), &BoxDomain::interval(0.0, 1.0).unwrap()).unwrap();
        let g = GramMatrix::compute(&b, &uniform(0.0, 1.0)).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((g.matrix()[(r, c)] - 1.0 / (r + c + 1) as f64).abs() < 1e-15);
            }
        }
        assert_eq!(g.jitter(), 0.0);
        assert_eq!(g.method(), &GramMethod::ClosedForm);
    }

    #[test]
    fn constant_basis_has_unit_gram() {
        let dom = BoxDomain::interval(-3.0, 3.0).unwrap();
        let b = make_basis(&BasisSpec::monomial(0), &dom).unwrap();
        let tg = TrainingMeasure::truncated_gaussian(vec![0.4], vec![0.7], dom.clone()).unwrap();
        for m in [uniform(-3.0, 3.0), tg] {
            let g = GramMatrix::compute(&b, &m).unwrap();
            assert!((g.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn piecewise_gram_is_block_diagonal() {
        let dom = BoxDomain::interval(-1.0, 1.0).unwrap();
        let b = make_basis(&BasisSpec::piecewise_affine(vec![4]), &dom).unwrap();
        let g = GramMatrix::compute(&b, &uniform(-1.0, 1.0)).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                if r / 2 != c / 2 {
                    assert_eq!(g.matrix()[(r, c)], 0.0);
                }
            }
        }
        // First cell [-1, -0.5): mass 1/4, E[x 1] = -3/16, E[x^2 1] = 7/48.
        assert!((g.matrix()[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((g.matrix()[(0, 1)] + 3.0 / 16.0).abs() < 1e-15);
        assert!((g.matrix()[(1, 1)] - 7.0 / 48.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_rejected() {
        let dom = BoxDomain::interval(0.0, 1.0).unwrap();
        let b = make_basis(&BasisSpec::monomial(1), &dom).unwrap();
        let s = TrainingMeasure::schedule(vec![uniform(0.0, 1.0); 3]).unwrap();
        assert!(matches!(GramMatrix::compute(&b, &s), Err(RlmcError::Configuration(_))));
    }

    #[test]
    fn jitter_applied_for_near_singular_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GramMatrix::from_matrix(m, GramMethod::ClosedForm).unwrap();
        assert!(g.jitter() > 0.0);
        let x = g.apply_inverse(&[1.0, 1.0]);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let b = make_basis(&BasisSpec::monomial(1), &BoxDomain::interval(0.0, 1.0).unwrap()).unwrap();
        let g = GramMatrix::compute(&b, &uniform(0.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("c0,c1\n"));
    }
}
