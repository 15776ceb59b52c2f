//! Normal-distribution helpers and deterministic quadrature rules.

use std::f64::consts::{PI, SQRT_2};
use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};
use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `n` equispaced points from `lo` to `hi` inclusive; `[lo]` when `n == 1`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let last = (n - 1) as f64;
    (0..n).map(|i| (lo * (last - i as f64) + hi * i as f64) / last).collect()
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / SQRT_2)
    }
}

/// Inverse of the standard normal CDF on (0, 1).
#[inline]
pub fn norm_inv_cdf(p: f64) -> f64 {
    if p > 0.5 {
        return -norm_inv_cdf(1.0 - p);
    }
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    // One Halley step against the accurate CDF.
    let density = norm_pdf(z);
    if density <= 0.0 {
        return z;
    }
    let r = (norm_cdf(z) - p) / density;
    z - r / (1.0 + 0.5 * z * r)
}

/// Probability mass of a standard normal on `[alpha, beta]`, accurate in both tails.
pub fn norm_mass(alpha: f64, beta: f64) -> f64 {
    if alpha > 0.0 {
        norm_cdf(-alpha) - norm_cdf(-beta)
    } else {
        norm_cdf(beta) - norm_cdf(alpha)
    }
}

/// Log of `norm_mass`, finite even when the mass underflows in linear scale.
pub fn log_norm_mass(alpha: f64, beta: f64) -> f64 {
    let mass = norm_mass(alpha, beta);
    if mass > 1e-300 {
        return mass.ln();
    }
    // Deep tail: Mills-ratio asymptotics on the endpoint closest to the bulk.
    let z = if alpha > 0.0 { alpha } else { -beta };
    -0.5 * z * z - (z * (2.0 * PI).sqrt()).ln()
}

/// Partial moments `E[Y^k 1{a < Y < b}]`, `k = 0..=max_k`, of `Y ~ N(mean, sd^2)`.
///
/// Endpoints may be infinite. `sd == 0` is treated as a point mass at `mean`.
pub fn normal_partial_moments(mean: f64, sd: f64, a: f64, b: f64, max_k: usize, out: &mut [f64]) {
    debug_assert!(out.len() > max_k);
    if sd <= 0.0 {
        let inside = mean > a && mean < b;
        let mut p = if inside { 1.0 } else { 0.0 };
        for o in out.iter_mut().take(max_k + 1) {
            *o = p;
            p *= mean;
        }
        return;
    }
    let alpha = (a - mean) / sd;
    let beta = (b - mean) / sd;
    let pa = if a.is_finite() { norm_pdf(alpha) } else { 0.0 };
    let pb = if b.is_finite() { norm_pdf(beta) } else { 0.0 };
    out[0] = norm_mass(alpha, beta);
    // a^{k-1} and b^{k-1}, guarded against inf * 0.
    let mut a_pow = 1.0;
    let mut b_pow = 1.0;
    for k in 1..=max_k {
        let boundary = sd * (if pb > 0.0 { b_pow * pb } else { 0.0 } - if pa > 0.0 { a_pow * pa } else { 0.0 });
        let prev2 = if k >= 2 { out[k - 2] } else { 0.0 };
        out[k] = mean * out[k - 1] + sd * sd * (k as f64 - 1.0) * prev2 - boundary;
        a_pow *= a;
        b_pow *= b;
    }
}

/// Raw moments `E[C^k]`, `k = 0..=max_k`, of `C = clamp(Y, lo, hi)` with `Y ~ N(mean, sd^2)`.
pub fn clamped_normal_moments(mean: f64, sd: f64, lo: f64, hi: f64, max_k: usize, out: &mut [f64]) {
    clamped_normal_cell_moments(mean, sd, lo, hi, lo, hi, max_k, out)
}

/// Partial moments `E[C^k 1{C in cell}]` of the clamped normal `C = clamp(Y, lo, hi)`,
/// where `[a, b]` is a cell of a partition of `[lo, hi]`. The atom at `lo` belongs to the
/// cell starting at `lo`, the atom at `hi` to the cell ending at `hi`.
#[allow(clippy::too_many_arguments)]
pub fn clamped_normal_cell_moments(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
    max_k: usize,
    out: &mut [f64],
) {
    // Far from both walls the clamp is invisible in double precision.
    let far = sd == 0.0 || ((mean - lo) > 9.0 * sd && (hi - mean) > 9.0 * sd);
    if far && a <= lo && b >= hi {
        let c = mean.clamp(lo, hi);
        if sd == 0.0 {
            let mut p = 1.0;
            for o in out.iter_mut().take(max_k + 1) {
                *o = p;
                p *= c;
            }
            return;
        }
        out[0] = 1.0;
        if max_k >= 1 {
            out[1] = mean;
        }
        for k in 2..=max_k {
            out[k] = mean * out[k - 1] + sd * sd * (k as f64 - 1.0) * out[k - 2];
        }
        return;
    }
    if sd == 0.0 {
        let c = mean.clamp(lo, hi);
        let inside = (c >= a && c < b) || (c == hi && b >= hi);
        let mut p = if inside { 1.0 } else { 0.0 };
        for o in out.iter_mut().take(max_k + 1) {
            *o = p;
            p *= c;
        }
        return;
    }
    normal_partial_moments(mean, sd, a.max(lo), b.min(hi), max_k, out);
    if a <= lo {
        let mass = norm_cdf((lo - mean) / sd);
        let mut p = mass;
        for o in out.iter_mut().take(max_k + 1) {
            *o += p;
            p *= lo;
        }
    }
    if b >= hi {
        let mass = norm_cdf((mean - hi) / sd);
        let mut p = mass;
        for o in out.iter_mut().take(max_k + 1) {
            *o += p;
            p *= hi;
        }
    }
}

/// Probabilists' Gauss-Hermite rule: `E[f(Z)] ~ sum w_i f(z_i)` for `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    pub fn new(order: usize) -> Self {
        let rule = GaussHermite::new(NonZeroUsize::new(order.max(1)).expect("nonzero"));
        let norm = PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (SQRT_2 * x, w / norm))
            .unzip();
        HermiteRule { nodes, weights }
    }
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LegendreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LegendreRule {
    pub fn new(order: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("nonzero"));
        let (nodes, weights) = rule.as_node_weight_pairs().iter().copied().unzip();
        LegendreRule { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// Composite Gauss-Legendre nodes over a box.
///
/// Each axis is split at the supplied breakpoints, every piece is further divided into
/// `panels` equal panels, and an `order`-point rule is used on each panel. Returns
/// `(points, weights)` where the weights integrate against Lebesgue measure.
pub fn tensor_gauss_legendre(
    lo: &[f64],
    hi: &[f64],
    breakpoints: &[Vec<f64>],
    panels: usize,
    order: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rule = LegendreRule::new(order);
    let d = lo.len();
    let mut axes: Vec<Vec<(f64, f64)>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut cuts: Vec<f64> = vec![lo[i], hi[i]];
        if let Some(bp) = breakpoints.get(i) {
            cuts.extend(bp.iter().copied().filter(|&c| c > lo[i] && c < hi[i]));
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        cuts.dedup();
        let mut axis = Vec::new();
        for w in cuts.windows(2) {
            let step = (w[1] - w[0]) / panels as f64;
            for p in 0..panels {
                let a = w[0] + step * p as f64;
                axis.extend(rule.on_interval(a, a + step));
            }
        }
        axes.push(axis);
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut p = Vec::with_capacity(d);
        let mut w = 1.0;
        for (axis, &i) in axes.iter().zip(&idx) {
            p.push(axis[i].0);
            w *= axis[i].1;
        }
        points.push(p);
        weights.push(w);
        for (j, axis) in axes.iter().enumerate() {
            idx[j] += 1;
            if idx[j] < axis.len() {
                break;
            }
            idx[j] = 0;
        }
    }
    (points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_and_inverse_agree() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999_999] {
            assert!((norm_cdf(norm_inv_cdf(p)) - p).abs() < 1e-12 * p.max(1e-3));
        }
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partial_moments_match_quadrature() {
        let (m, s, a, b) = (0.3, 0.7, -0.4, 1.9);
        let mut out = [0.0; 5];
        normal_partial_moments(m, s, a, b, 4, &mut out);
        let rule = LegendreRule::new(60);
        for k in 0..5 {
            let q: f64 = rule
                .on_interval(a, b)
                .map(|(y, w)| w * y.powi(k as i32) * norm_pdf((y - m) / s) / s)
                .sum();
            assert!((out[k] - q).abs() < 1e-12, "k={k}: {} vs {q}", out[k]);
        }
    }

    #[test]
    fn clamped_moments_include_atoms() {
        // Mean right at the upper wall: half the mass sits on the atom.
        let mut out = [0.0; 3];
        clamped_normal_moments(1.0, 0.2, -1.0, 1.0, 2, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-14);
        let rule = LegendreRule::new(60);
        let e1: f64 = [(-12.0, 0.0), (0.0, 12.0)]
            .iter()
            .flat_map(|&(a, b)| rule.on_interval(a, b).collect::<Vec<_>>())
            .map(|(z, w)| w * norm_pdf(z) * (1.0 + 0.2 * z).clamp(-1.0, 1.0))
            .sum();
        assert!((out[1] - e1).abs() < 1e-12);
    }

    #[test]
    fn hermite_rule_integrates_moments() {
        let h = HermiteRule::new(16);
        let m2: f64 = h.nodes.iter().zip(&h.weights).map(|(z, w)| w * z * z).sum();
        let m4: f64 = h.nodes.iter().zip(&h.weights).map(|(z, w)| w * z.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-13);
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_rule_integrates_volume() {
        let (pts, w) = tensor_gauss_legendre(&[0.0, -1.0], &[2.0, 1.0], &[vec![0.5], vec![]], 2, 3);
        assert_eq!(pts.len(), w.len());
        assert!((w.iter().sum::<f64>() - 4.0).abs() < 1e-13);
    }
}
