//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Composite Simpson rule with `n` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

pub fn std_normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[h(clamp(Y, lo, hi))]` for `Y ~ N(mean, sd^2)`: Simpson on the interior plus both atoms.
pub fn clamped_expectation<F: Fn(f64) -> f64>(h: F, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    clamped_expectation_cut(h, mean, sd, lo, hi, &[])
}

/// As [`clamped_expectation`], with Simpson applied separately between the `cuts` where `h`
/// may jump.
pub fn clamped_expectation_cut<F: Fn(f64) -> f64>(h: F, mean: f64, sd: f64, lo: f64, hi: f64, cuts: &[f64]) -> f64 {
    let a = lo.max(mean - 12.0 * sd);
    let b = hi.min(mean + 12.0 * sd);
    let mut knots = vec![a];
    knots.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    let mut interior = 0.0;
    for w in knots.windows(2) {
        if w[1] > w[0] {
            // Stay off the cut itself so each piece sees one side of a jump.
            let e = 1e-13 * (1.0 + w[0].abs().max(w[1].abs()));
            interior += simpson(|y| h(y) * std_normal_pdf((y - mean) / sd) / sd, w[0] + e, w[1] - e, 20_000);
        }
    }
    interior + h(lo) * std_normal_cdf((lo - mean) / sd) + h(hi) * (1.0 - std_normal_cdf((hi - mean) / sd))
}

/// Weighted least squares of `h` on `fns` over a dense grid of `[a, b]` with density `w`.
pub fn dense_grid_least_squares<H, W>(h: H, fns: &[&dyn Fn(f64) -> f64], w: W, a: f64, b: f64, points: usize) -> Vec<f64>
where
    H: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    let k = fns.len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let dx = (b - a) / (points - 1) as f64;
    for j in 0..points {
        let x = a + dx * j as f64;
        let trap = if j == 0 || j == points - 1 { 0.5 } else { 1.0 };
        let weight = trap * dx * w(x);
        let phi: Vec<f64> = fns.iter().map(|f| f(x)).collect();
        let hx = h(x);
        for r in 0..k {
            rhs[r] += weight * hx * phi[r];
            for c in 0..k {
                gram[(r, c)] += weight * phi[r] * phi[c];
            }
        }
    }
    gram.lu().solve(&rhs).expect("nonsingular dense gram").iter().copied().collect()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / m).abs().max((c - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Parameters of the small backward-induction problem (mirrors the built-in `small_dp` defaults).
pub struct DpProblem {
    pub num_steps: usize,
    pub controls: Vec<f64>,
    pub shift: f64,
    pub noise_sd: f64,
    pub level: f64,
    pub effort: f64,
}

impl Default for DpProblem {
    fn default() -> Self {
        DpProblem {
            num_steps: 3,
            controls: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            shift: 0.4,
            noise_sd: 0.2,
            level: 0.5,
            effort: 0.1,
        }
    }
}

/// Exhaustive backward induction on a uniform grid of `[-1, 1]`; returns `(grid, V(0, grid))`.
///
/// The expectation of the next value under the clamped Gaussian step is a trapezoid sum over
/// the grid (linear interpolation of `V`) plus the two boundary atoms.
pub fn small_dp_oracle(p: &DpProblem, points: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = (-1.0, 1.0);
    let dx = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|j| lo + dx * j as f64).collect();
    let mut v: Vec<f64> = grid.iter().map(|x| 1.0 + x * x).collect();
    for _ in 0..p.num_steps {
        let mut next = vec![0.0; points];
        for (j, &x) in grid.iter().enumerate() {
            let mut best = f64::INFINITY;
            for &u in &p.controls {
                let mean = x + p.shift * u;
                let sd = p.noise_sd;
                let mut e = v[0] * std_normal_cdf((lo - mean) / sd) + v[points - 1] * (1.0 - std_normal_cdf((hi - mean) / sd));
                // Exact integral of the piecewise-linear interpolant against the normal density.
                for i in 0..points - 1 {
                    let (a, b) = (grid[i], grid[i + 1]);
                    let (za, zb) = ((a - mean) / sd, (b - mean) / sd);
                    if zb < -12.0 || za > 12.0 {
                        continue;
                    }
                    let mass = std_normal_cdf(zb) - std_normal_cdf(za);
                    let first = mean * mass + sd * (std_normal_pdf(za) - std_normal_pdf(zb));
                    let slope = (v[i + 1] - v[i]) / (b - a);
                    e += v[i] * mass + slope * (first - a * mass);
                }
                let cost = p.level + x * x + p.effort * u * u + e;
                if cost < best {
                    best = cost;
                }
            }
            next[j] = best;
        }
        v = next;
    }
    (grid, v)
}

/// Linear interpolation of `(grid, values)` at `x`.
pub fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let dx = grid[1] - grid[0];
    let i = (((x - grid[0]) / dx).floor() as usize).min(grid.len() - 2);
    let t = (x - grid[i]) / dx;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Exact discrete-time Riccati recursion for `x' = x + (k + x + u) h + sqrt(h) z`,
/// cost `h (x^2 + u^2)` per step and `x_N^2` at the end, without state or control bounds.
/// Returns `(a, b, c)` with `V_0(x) = a x^2 + b x + c`.
pub fn discrete_lq_value(num_steps: usize, drift: f64) -> (f64, f64, f64) {
    let h = 1.0 / num_steps as f64;
    let (mut a, mut b, mut c) = (1.0, 0.0, 0.0);
    for _ in 0..num_steps {
        // E V(m + sqrt(h) z) = a m^2 + b m + c + a h with m = (1 + h) x + h u + h k.
        let p = 1.0 + h;
        let q = h * drift;
        // Minimise h u^2 + a (p x + h u + q)^2 + b (p x + h u + q) over u.
        let denom = h + a * h * h;
        // u* = -(2 a h (p x + q) + b h) / (2 denom)
        let ux = -(a * h * p) / denom;
        let u0 = -(2.0 * a * h * q + b * h) / (2.0 * denom);
        let mx = p + h * ux;
        let m0 = q + h * u0;
        let na = h + h * ux * ux + a * mx * mx;
        let nb = 2.0 * h * ux * u0 + 2.0 * a * mx * m0 + b * mx;
        let nc = h * u0 * u0 + a * m0 * m0 + b * m0 + c + a * h;
        a = na;
        b = nb;
        c = nc;
    }
    (a, b, c)
}
