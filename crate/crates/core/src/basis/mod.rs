//! Basis-function families on a box-shaped state domain.
//!
//! Four families are available: monomials of bounded total degree, tensor products of
//! orthonormal (shifted, normalised) Legendre polynomials, affine functions with disjoint
//! hypercube supports, and truncated Gaussian radial functions.

mod cond_exp;
pub(crate) mod gram;

pub use cond_exp::{CondExpEvaluator, CondExpScratch, CondExpStrategy};
pub use gram::{GramMatrix, GramMethod};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlmcError};
use crate::model::BoxDomain;

/// Parameters selecting a basis family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    /// All monomials `x^j` with total degree `|j| <= max_degree`.
    Monomial { max_degree: usize },
    /// Products of orthonormal Legendre polynomials, total degree `<= max_degree`;
    /// orthonormal under the uniform distribution on the domain.
    OrthonormalPolynomial { max_degree: usize },
    /// `1, x_1, ..., x_d` on each cell of a partition into hypercubes.
    PiecewiseAffine {
        /// Regular partition with this many equal cells per axis.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cells_per_axis: Option<Vec<usize>>,
        /// Explicit partition.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cells: Option<Vec<BoxDomain>>,
    },
    /// `phi_k(x) = sqrt(prod w_k) / (2 pi)^(d/2) * exp(-1/2 sum_i w_{k,i} (x_i - c_{k,i})^2)`.
    GaussianRadial {
        centers: Vec<Vec<f64>>,
        weights: Vec<Vec<f64>>,
    },
}

impl BasisSpec {
    pub fn monomial(max_degree: usize) -> Self {
        BasisSpec::Monomial { max_degree }
    }

    pub fn orthonormal(max_degree: usize) -> Self {
        BasisSpec::OrthonormalPolynomial { max_degree }
    }

    pub fn piecewise_affine(cells_per_axis: Vec<usize>) -> Self {
        BasisSpec::PiecewiseAffine {
            cells_per_axis: Some(cells_per_axis),
            cells: None,
        }
    }

    pub fn piecewise_affine_cells(cells: Vec<BoxDomain>) -> Self {
        BasisSpec::PiecewiseAffine {
            cells_per_axis: None,
            cells: Some(cells),
        }
    }
}

/// Univariate polynomial as coefficients of `1, x, x^2, ...`.
pub(crate) type Poly = Vec<f64>;

#[derive(Debug, Clone)]
pub(crate) enum Repr {
    Polynomial {
        /// `axis_polys[i][j]`: degree-`j` factor on axis `i`.
        axis_polys: Vec<Vec<Poly>>,
        /// Multi-index of each basis function.
        exponents: Vec<Vec<usize>>,
        max_degree: usize,
        legendre: bool,
    },
    Piecewise {
        cells: Vec<BoxDomain>,
        /// Cell edges per axis when the partition is a regular grid.
        grid: Option<Vec<Vec<f64>>>,
    },
    Radial {
        centers: Vec<Vec<f64>>,
        weights: Vec<Vec<f64>>,
        norms: Vec<f64>,
    },
}

/// A validated family of `K` basis functions on a domain.
#[derive(Debug, Clone)]
pub struct BasisFamily {
    spec: BasisSpec,
    domain: BoxDomain,
    size: usize,
    pub(crate) repr: Repr,
}

fn total_degree_exponents(d: usize, max_degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for deg in 0..=max_degree {
        let mut current = vec![0usize; d];
        fill_degree(&mut out, &mut current, 0, deg);
    }
    out
}

// Exponents of total degree `remaining` on axes `axis..`, earlier axes first.
fn fill_degree(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, axis: usize, remaining: usize) {
    if axis == current.len() - 1 {
        current[axis] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[axis] = e;
        fill_degree(out, current, axis + 1, remaining - e);
    }
    current[axis] = 0;
}

fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Orthonormal Legendre factors on `[lo, hi]` as polynomials in `x`, degrees `0..=max_degree`.
fn legendre_polys(lo: f64, hi: f64, max_degree: usize) -> Vec<Poly> {
    // t = s x + c maps [lo, hi] onto [-1, 1].
    let s = 2.0 / (hi - lo);
    let c = -(hi + lo) / (hi - lo);
    let t: Poly = vec![c, s];
    let mut p: Vec<Poly> = vec![vec![1.0]];
    if max_degree >= 1 {
        p.push(t.clone());
    }
    for k in 1..max_degree {
        // (k+1) P_{k+1} = (2k+1) t P_k - k P_{k-1}
        let tp = poly_mul(&t, &p[k]);
        let mut next = vec![0.0; tp.len()];
        for (i, v) in tp.iter().enumerate() {
            next[i] += (2.0 * k as f64 + 1.0) * v;
        }
        for (i, v) in p[k - 1].iter().enumerate() {
            next[i] -= k as f64 * v;
        }
        for v in next.iter_mut() {
            *v /= k as f64 + 1.0;
        }
        p.push(next);
    }
    p.into_iter()
        .enumerate()
        .map(|(j, poly)| {
            let norm = (2.0 * j as f64 + 1.0).sqrt();
            poly.into_iter().map(|v| v * norm).collect()
        })
        .collect()
}

fn regular_cells(domain: &BoxDomain, per_axis: &[usize]) -> Result<(Vec<BoxDomain>, Vec<Vec<f64>>)> {
    if per_axis.len() != domain.dim() || per_axis.contains(&0) {
        return Err(RlmcError::Construction(
            "piecewise_affine: need a positive cell count for every axis".into(),
        ));
    }
    let edges: Vec<Vec<f64>> = (0..domain.dim())
        .map(|i| {
            let (lo, hi, c) = (domain.lo()[i], domain.hi()[i], per_axis[i]);
            (0..=c).map(|j| if j == c { hi } else { lo + (hi - lo) * j as f64 / c as f64 }).collect()
        })
        .collect();
    let mut cells = Vec::new();
    let total: usize = per_axis.iter().product();
    let mut idx = vec![0usize; domain.dim()];
    for _ in 0..total {
        let lo: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| edges[i][j]).collect();
        let hi: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| edges[i][j + 1]).collect();
        cells.push(BoxDomain::new(lo, hi)?);
        // Last axis fastest.
        for i in (0..domain.dim()).rev() {
            idx[i] += 1;
            if idx[i] < per_axis[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok((cells, edges))
}

fn validate_partition(domain: &BoxDomain, cells: &[BoxDomain]) -> Result<()> {
    if cells.is_empty() {
        return Err(RlmcError::Construction("piecewise_affine: empty partition".into()));
    }
    for (i, c) in cells.iter().enumerate() {
        if !domain.contains_box(c) {
            return Err(RlmcError::Construction(format!("piecewise_affine: cell {i} leaves the domain")));
        }
    }
    for i in 0..cells.len() {
        for j in (i + 1)..cells.len() {
            let overlap: f64 = (0..domain.dim())
                .map(|a| (cells[i].hi()[a].min(cells[j].hi()[a]) - cells[i].lo()[a].max(cells[j].lo()[a])).max(0.0))
                .product();
            if overlap > 1e-12 * domain.volume() {
                return Err(RlmcError::Construction(format!("piecewise_affine: cells {i} and {j} overlap")));
            }
        }
    }
    let covered: f64 = cells.iter().map(BoxDomain::volume).sum();
    if (covered - domain.volume()).abs() > 1e-9 * domain.volume() {
        return Err(RlmcError::Construction(format!(
            "piecewise_affine: cells cover volume {covered}, domain has {}",
            domain.volume()
        )));
    }
    Ok(())
}

/// Build a basis family from its parameters.
pub fn make_basis(spec: &BasisSpec, domain: &BoxDomain) -> Result<BasisFamily> {
    let d = domain.dim();
    let repr = match spec {
        BasisSpec::Monomial { max_degree } | BasisSpec::OrthonormalPolynomial { max_degree } => {
            let legendre = matches!(spec, BasisSpec::OrthonormalPolynomial { .. });
            let axis_polys = (0..d)
                .map(|i| {
                    if legendre {
                        legendre_polys(domain.lo()[i], domain.hi()[i], *max_degree)
                    } else {
                        (0..=*max_degree)
                            .map(|j| {
                                let mut p = vec![0.0; j + 1];
                                p[j] = 1.0;
                                p
                            })
                            .collect()
                    }
                })
                .collect();
            Repr::Polynomial {
                axis_polys,
                exponents: total_degree_exponents(d, *max_degree),
                max_degree: *max_degree,
                legendre,
            }
        }
        BasisSpec::PiecewiseAffine { cells_per_axis, cells } => match (cells_per_axis, cells) {
            (Some(per_axis), None) => {
                let (cells, edges) = regular_cells(domain, per_axis)?;
                Repr::Piecewise { cells, grid: Some(edges) }
            }
            (None, Some(cells)) => {
                validate_partition(domain, cells)?;
                Repr::Piecewise {
                    cells: cells.clone(),
                    grid: None,
                }
            }
            _ => {
                return Err(RlmcError::Construction(
                    "piecewise_affine: give exactly one of cells_per_axis or cells".into(),
                ))
            }
        },
        BasisSpec::GaussianRadial { centers, weights } => {
            if centers.is_empty() || centers.len() != weights.len() {
                return Err(RlmcError::Construction(
                    "gaussian_radial: need one weight vector per center".into(),
                ));
            }
            for (k, (c, w)) in centers.iter().zip(weights).enumerate() {
                if !domain.contains(c) {
                    return Err(RlmcError::Construction(format!("gaussian_radial: center {k} outside domain")));
                }
                if w.len() != d || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(RlmcError::Construction(format!(
                        "gaussian_radial: weights of center {k} must be {d} positive numbers"
                    )));
                }
            }
            let norms = weights
                .iter()
                .map(|w| w.iter().product::<f64>().sqrt() / (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0))
                .collect();
            Repr::Radial {
                centers: centers.clone(),
                weights: weights.clone(),
                norms,
            }
        }
    };
    let size = match &repr {
        Repr::Polynomial { exponents, .. } => exponents.len(),
        Repr::Piecewise { cells, .. } => cells.len() * (d + 1),
        Repr::Radial { centers, .. } => centers.len(),
    };
    Ok(BasisFamily {
        spec: spec.clone(),
        domain: domain.clone(),
        size,
        repr,
    })
}

impl BasisFamily {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Number of basis functions `K`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Checked evaluation of all basis functions at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain.check_point("state", x)?;
        let mut out = vec![0.0; self.size];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    /// Evaluation without the domain check; `out.len()` must be `K`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.repr {
            Repr::Polynomial {
                axis_polys,
                exponents,
                max_degree,
                legendre,
            } => {
                if x.len() == 1 && !legendre {
                    let mut p = 1.0;
                    for o in out.iter_mut() {
                        *o = p;
                        p *= x[0];
                    }
                    return;
                }
                let vals: Vec<Vec<f64>> = axis_polys
                    .iter()
                    .zip(x)
                    .map(|(polys, &xi)| {
                        if *legendre {
                            legendre_values(xi, polys, *max_degree)
                        } else {
                            polys.iter().map(|p| horner(p, xi)).collect()
                        }
                    })
                    .collect();
                for (o, e) in out.iter_mut().zip(exponents) {
                    *o = e.iter().enumerate().map(|(i, &j)| vals[i][j]).product();
                }
            }
            Repr::Piecewise { cells, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                if let Some(c) = self.cell_of(x) {
                    let base = c * (x.len() + 1);
                    out[base] = 1.0;
                    out[base + 1..base + 1 + x.len()].copy_from_slice(x);
                }
                debug_assert!(!cells.is_empty());
            }
            Repr::Radial {
                centers,
                weights,
                norms,
            } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let q: f64 = x
                        .iter()
                        .zip(&centers[k])
                        .zip(&weights[k])
                        .map(|((xi, ci), wi)| wi * (xi - ci) * (xi - ci))
                        .sum();
                    *o = norms[k] * (-0.5 * q).exp();
                }
            }
        }
    }

    /// Index of the cell containing `x` (half-open cells, closed at the domain's upper edge).
    pub(crate) fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let Repr::Piecewise { cells, grid } = &self.repr else {
            return None;
        };
        if let Some(edges) = grid {
            let mut idx = 0usize;
            for (i, e) in edges.iter().enumerate() {
                let c = e.len() - 1;
                let (lo, hi) = (e[0], e[c]);
                if x[i] < lo || x[i] > hi {
                    return None;
                }
                let mut j = (((x[i] - lo) / (hi - lo)) * c as f64).floor() as usize;
                j = j.min(c - 1);
                // Guard against rounding at the edges.
                while j > 0 && x[i] < e[j] {
                    j -= 1;
                }
                while j + 1 < c && x[i] >= e[j + 1] {
                    j += 1;
                }
                idx = idx * c + j;
            }
            return Some(idx);
        }
        cells.iter().position(|cell| {
            (0..x.len()).all(|i| {
                let (lo, hi) = (cell.lo()[i], cell.hi()[i]);
                x[i] >= lo && (x[i] < hi || (x[i] == hi && hi == self.domain.hi()[i]))
            })
        })
    }

    /// Axis breakpoints where basis functions are discontinuous.
    pub fn breakpoints(&self) -> Vec<Vec<f64>> {
        match &self.repr {
            Repr::Piecewise { cells, .. } => (0..self.domain.dim())
                .map(|i| {
                    let mut v: Vec<f64> = cells.iter().flat_map(|c| [c.lo()[i], c.hi()[i]]).collect();
                    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                    v.dedup();
                    v
                })
                .collect(),
            _ => vec![Vec::new(); self.domain.dim()],
        }
    }

    /// Polynomial degree bound, used to pick exact quadrature orders.
    pub(crate) fn polynomial_degree(&self) -> Option<usize> {
        match &self.repr {
            Repr::Polynomial { max_degree, .. } => Some(*max_degree),
            Repr::Piecewise { .. } => Some(1),
            Repr::Radial { .. } => None,
        }
    }
}

#[inline]
fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// Normalised Legendre values via the three-term recurrence, using the stored polynomials'
// affine map (degree-1 polynomial / sqrt(3)).
fn legendre_values(x: f64, polys: &[Poly], max_degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree == 0 {
        return out;
    }
    let t = horner(&polys[1], x) / 3f64.sqrt();
    let (mut p_prev, mut p) = (1.0, t);
    out.push(3f64.sqrt() * t);
    for k in 1..max_degree {
        let next = ((2.0 * k as f64 + 1.0) * t * p - k as f64 * p_prev) / (k as f64 + 1.0);
        p_prev = p;
        p = next;
        out.push((2.0 * (k + 1) as f64 + 1.0).sqrt() * p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoxDomain {
        BoxDomain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn monomial_evaluation() {
        let b = make_basis(&BasisSpec::monomial(2), &unit()).unwrap();
        assert_eq!(b.size(), 3);
        assert_eq!(b.eval(&[0.5]).unwrap(), vec![1.0, 0.5, 0.25]);
        assert!(b.eval(&[1.5]).is_err());
    }

    #[test]
    fn legendre_is_antisymmetric_at_the_midpoint() {
        let b = make_basis(&BasisSpec::orthonormal(1), &unit()).unwrap();
        let v = b.eval(&[0.5]).unwrap();
        assert_eq!(b.size(), 2);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
        // sqrt(3) (2x - 1) at x = 1
        assert!((b.eval(&[1.0]).unwrap()[1] - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn legendre_recurrence_matches_stored_polynomials() {
        let dom = BoxDomain::interval(-2.0, 3.0).unwrap();
        let b = make_basis(&BasisSpec::orthonormal(5), &dom).unwrap();
        let Repr::Polynomial { axis_polys, .. } = &b.repr else { unreachable!() };
        for &x in &[-2.0, -0.3, 1.7, 3.0] {
            let v = b.eval(&[x]).unwrap();
            for j in 0..6 {
                assert!((v[j] - horner(&axis_polys[0][j], x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn piecewise_cells_are_disjoint_supports() {
        let b = make_basis(&BasisSpec::piecewise_affine(vec![2]), &unit()).unwrap();
        assert_eq!(b.eval(&[0.25]).unwrap(), vec![1.0, 0.25, 0.0, 0.0]);
        assert_eq!(b.eval(&[1.0]).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(b.eval(&[0.5]).unwrap(), vec![0.0, 0.0, 1.0, 0.5]);
        let four = make_basis(&BasisSpec::piecewise_affine(vec![4]), &BoxDomain::interval(-2.0, 2.0).unwrap()).unwrap();
        assert_eq!(four.size(), 8);
    }

    #[test]
    fn explicit_partitions_are_validated() {
        let cells = vec![BoxDomain::interval(0.0, 0.6).unwrap(), BoxDomain::interval(0.5, 1.0).unwrap()];
        assert!(make_basis(&BasisSpec::piecewise_affine_cells(cells), &unit()).is_err());
        let gap = vec![BoxDomain::interval(0.0, 0.4).unwrap(), BoxDomain::interval(0.5, 1.0).unwrap()];
        assert!(make_basis(&BasisSpec::piecewise_affine_cells(gap), &unit()).is_err());
        let ok = vec![BoxDomain::interval(0.0, 0.3).unwrap(), BoxDomain::interval(0.3, 1.0).unwrap()];
        let b = make_basis(&BasisSpec::piecewise_affine_cells(ok), &unit()).unwrap();
        assert_eq!(b.eval(&[0.3]).unwrap(), vec![0.0, 0.0, 1.0, 0.3]);
    }

    #[test]
    fn two_dimensional_monomials_and_radials() {
        let dom = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let b = make_basis(&BasisSpec::monomial(2), &dom).unwrap();
        assert_eq!(b.size(), 6);
        assert_eq!(b.eval(&[2.0f64.min(1.0), 0.5]).unwrap(), vec![1.0, 1.0, 0.5, 1.0, 0.5, 0.25]);
        let centers: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64 / 4.0, 0.5]).collect();
        let weights = vec![vec![4.0, 4.0]; 5];
        let r = make_basis(&BasisSpec::GaussianRadial { centers, weights }, &dom).unwrap();
        assert_eq!(r.size(), 5);
        let v = r.eval(&[0.0, 0.5]).unwrap();
        assert!((v[0] - 4.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
        let bad = BasisSpec::GaussianRadial {
            centers: vec![vec![2.0, 0.0]],
            weights: vec![vec![1.0, 1.0]],
        };
        assert!(make_basis(&bad, &dom).is_err());
        let neg = BasisSpec::GaussianRadial {
            centers: vec![vec![0.5, 0.5]],
            weights: vec![vec![1.0, 0.0]],
        };
        assert!(make_basis(&neg, &dom).is_err());
    }
}
