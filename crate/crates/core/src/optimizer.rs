//! Deterministic maximisation over a compact control box.
//!
//! A uniform grid is scanned first, then a few rounds of finer local grids are placed
//! around the incumbent, and in one dimension a final parabolic step is tried. Only
//! strict improvements replace the incumbent, so among equal values the control scanned
//! first (the lexicographically smallest on the initial grid) is returned.

use serde::{Deserialize, Serialize};

use crate::model::ControlSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Points per axis of the initial grid.
    pub grid_points: usize,
    pub refine_rounds: usize,
    /// Spacing divisor of each refinement round.
    pub shrink: f64,
    /// Parabolic step after refinement (one-dimensional controls only).
    pub polish: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_points: 33,
            refine_rounds: 2,
            shrink: 4.0,
            polish: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.grid_points < 2 {
            errors.push("optimizer.grid_points must be at least 2".to_string());
        }
        if !(self.shrink > 1.0) {
            errors.push("optimizer.shrink must exceed 1".to_string());
        }
        errors
    }
}

/// Grid-and-refine maximiser bound to a control set.
#[derive(Debug, Clone)]
pub struct ControlOptimizer {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points: Vec<usize>,
    discrete: bool,
    config: OptimizerConfig,
}

impl ControlOptimizer {
    /// Discrete control sets are searched on their own grid with no refinement.
    pub fn new(set: &ControlSet, config: OptimizerConfig) -> Self {
        let q = set.dim();
        let (points, discrete) = match set.grid() {
            Some(g) => (g.to_vec(), true),
            None => (vec![config.grid_points.max(2); q], false),
        };
        ControlOptimizer {
            lo: set.bounds().lo().to_vec(),
            hi: set.bounds().hi().to_vec(),
            points,
            discrete,
            config,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Maximise `f` over the control set. Writes the maximiser into `best` and returns the
    /// maximum, or `None` when every evaluation was non-finite.
    pub fn maximize<F: FnMut(&[f64]) -> f64>(&self, f: F, best: &mut [f64]) -> Option<f64> {
        if self.dim() == 1 {
            return self.maximize_1d(f, best);
        }
        self.maximize_generic(f, best)
    }

    fn maximize_generic<F: FnMut(&[f64]) -> f64>(&self, mut f: F, best: &mut [f64]) -> Option<f64> {
        let q = self.dim();
        let mut u = vec![0.0; q];
        let mut best_val = f64::NEG_INFINITY;
        let mut found = false;
        let mut try_point = |u: &[f64], best: &mut [f64], best_val: &mut f64, found: &mut bool| {
            let v = f(u);
            if v.is_finite() && (!*found || v > *best_val) {
                *best_val = v;
                best.copy_from_slice(u);
                *found = true;
            }
            v
        };

        let mut spacing: Vec<f64> = (0..q)
            .map(|i| (self.hi[i] - self.lo[i]) / (self.points[i] - 1) as f64)
            .collect();
        let mut idx = vec![0usize; q];
        let total: usize = self.points.iter().product();
        for _ in 0..total {
            for i in 0..q {
                u[i] = if idx[i] + 1 == self.points[i] {
                    self.hi[i]
                } else {
                    self.lo[i] + spacing[i] * idx[i] as f64
                };
            }
            try_point(&u, best, &mut best_val, &mut found);
            // Last axis fastest keeps the scan lexicographic.
            for i in (0..q).rev() {
                idx[i] += 1;
                if idx[i] < self.points[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        if !found {
            return None;
        }
        if self.discrete {
            return Some(best_val);
        }

        let half = 4i64;
        let width = (2 * half + 1) as usize;
        for _ in 0..self.config.refine_rounds {
            for s in spacing.iter_mut() {
                *s /= self.config.shrink;
            }
            let centre = best.to_vec();
            let total = width.pow(q as u32);
            let mut idx = vec![0usize; q];
            for _ in 0..total {
                let mut inside = true;
                let mut at_centre = true;
                for i in 0..q {
                    let offset = idx[i] as i64 - half;
                    at_centre &= offset == 0;
                    u[i] = centre[i] + spacing[i] * offset as f64;
                    inside &= u[i] >= self.lo[i] && u[i] <= self.hi[i];
                }
                if inside && !at_centre {
                    try_point(&u, best, &mut best_val, &mut found);
                }
                for i in (0..q).rev() {
                    idx[i] += 1;
                    if idx[i] < width {
                        break;
                    }
                    idx[i] = 0;
                }
            }
        }

        if self.config.polish && q == 1 && self.hi[0] - self.lo[0] >= 2.0 * spacing[0] {
            let (c, h, centre_val) = (best[0], spacing[0], best_val);
            // Three equispaced points around the incumbent, shifted inside the box at a wall.
            let mid = c.clamp(self.lo[0] + h, self.hi[0] - h);
            let mut vals = [0.0; 3];
            for (j, v) in vals.iter_mut().enumerate() {
                let p = mid + h * (j as f64 - 1.0);
                *v = if p == c { centre_val } else { try_point(&[p], best, &mut best_val, &mut found) };
            }
            let curvature = vals[0] - 2.0 * vals[1] + vals[2];
            if vals.iter().all(|v| v.is_finite()) && curvature < 0.0 {
                let vertex = mid + 0.5 * h * (vals[0] - vals[2]) / curvature;
                let p = vertex.clamp((mid - 2.0 * h).max(self.lo[0]), (mid + 2.0 * h).min(self.hi[0]));
                try_point(&[p], best, &mut best_val, &mut found);
            }
        }
        Some(best_val)
    }

    /// Allocation-free one-dimensional version of [`Self::maximize`] with the same scan order.
    fn maximize_1d<F: FnMut(&[f64]) -> f64>(&self, mut f: F, best: &mut [f64]) -> Option<f64> {
        let (lo, hi, points) = (self.lo[0], self.hi[0], self.points[0]);
        let mut best_val = f64::NEG_INFINITY;
        let mut best_u = lo;
        let mut found = false;
        let mut try_point = |u: f64, best_u: &mut f64, best_val: &mut f64, found: &mut bool| {
            let v = f(&[u]);
            if v.is_finite() && (!*found || v > *best_val) {
                *best_val = v;
                *best_u = u;
                *found = true;
            }
            v
        };
        let mut spacing = (hi - lo) / (points - 1) as f64;
        for i in 0..points {
            let u = if i + 1 == points { hi } else { lo + spacing * i as f64 };
            try_point(u, &mut best_u, &mut best_val, &mut found);
        }
        if !found {
            return None;
        }
        if !self.discrete {
            for _ in 0..self.config.refine_rounds {
                spacing /= self.config.shrink;
                let centre = best_u;
                for offset in -4i32..=4 {
                    let u = centre + spacing * offset as f64;
                    if offset != 0 && u >= lo && u <= hi {
                        try_point(u, &mut best_u, &mut best_val, &mut found);
                    }
                }
            }
            if self.config.polish && hi - lo >= 2.0 * spacing {
                let (c, h, centre_val) = (best_u, spacing, best_val);
                let mid = c.clamp(lo + h, hi - h);
                let mut vals = [0.0; 3];
                for (j, v) in vals.iter_mut().enumerate() {
                    let p = mid + h * (j as f64 - 1.0);
                    *v = if p == c { centre_val } else { try_point(p, &mut best_u, &mut best_val, &mut found) };
                }
                let curvature = vals[0] - 2.0 * vals[1] + vals[2];
                if vals.iter().all(|v| v.is_finite()) && curvature < 0.0 {
                    let vertex = mid + 0.5 * h * (vals[0] - vals[2]) / curvature;
                    let p = vertex.clamp((mid - 2.0 * h).max(lo), (mid + 2.0 * h).min(hi));
                    try_point(p, &mut best_u, &mut best_val, &mut found);
                }
            }
        }
        best[0] = best_u;
        Some(best_val)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoxDomain;

    fn box1(lo: f64, hi: f64) -> ControlSet {
        ControlSet::continuous(BoxDomain::interval(lo, hi).unwrap())
    }

    #[test]
    fn pure_penalty_peaks_at_zero() {
        let opt = ControlOptimizer::new(&box1(-1.0, 1.0), OptimizerConfig::default());
        let mut u = [9.0];
        let v = opt.maximize(|u| -u[0] * u[0], &mut u).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn quadratic_stationary_point_is_found() {
        let opt = ControlOptimizer::new(&box1(-10.0, 10.0), OptimizerConfig::default());
        for target in [-7.3, 0.123_456, 3.2718, 9.99] {
            let mut u = [0.0];
            opt.maximize(|u| -2.5 * (u[0] - target).powi(2) + 1.0, &mut u).unwrap();
            assert!((u[0] - target).abs() < 1e-4, "{target}: {}", u[0]);
        }
    }

    #[test]
    fn ties_go_to_smallest_control() {
        let opt = ControlOptimizer::new(&box1(-2.0, 3.0), OptimizerConfig::default());
        let mut u = [0.0];
        opt.maximize(|_| 1.5, &mut u).unwrap();
        assert_eq!(u[0], -2.0);
        let set = ControlSet::continuous(BoxDomain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap());
        let opt = ControlOptimizer::new(&set, OptimizerConfig::default());
        let mut u = [0.0, 0.0];
        opt.maximize(|_| 0.0, &mut u).unwrap();
        assert_eq!(u, [0.0, -1.0]);
    }

    #[test]
    fn non_finite_values_are_skipped() {
        let opt = ControlOptimizer::new(&box1(-1.0, 1.0), OptimizerConfig::default());
        let mut u = [0.0];
        assert!(opt.maximize(|_| f64::NAN, &mut u).is_none());
        let v = opt.maximize(|u| if u[0] < 0.5 { f64::NAN } else { -u[0] }, &mut u).unwrap();
        assert_eq!(u[0], 0.5);
        assert_eq!(v, -0.5);
    }

    #[test]
    fn discrete_sets_stay_on_their_grid() {
        let set = ControlSet::discrete(BoxDomain::interval(-1.0, 1.0).unwrap(), vec![5]).unwrap();
        let opt = ControlOptimizer::new(&set, OptimizerConfig::default());
        let mut u = [0.0];
        opt.maximize(|u| -(u[0] - 0.3).powi(2), &mut u).unwrap();
        assert_eq!(u[0], 0.5);
    }

    #[test]
    fn one_dimensional_path_matches_generic_scan() {
        let opt = ControlOptimizer::new(&box1(-3.0, 2.0), OptimizerConfig::default());
        let objectives: [&dyn Fn(f64) -> f64; 3] = [&|u| -(u - 0.77).powi(2), &|u| (5.0 * u).sin() - 0.1 * u * u, &|u| if u > 1.5 { f64::NAN } else { u.abs() }];
        for g in objectives {
            let mut a = [0.0];
            let mut b = [0.0];
            let va = opt.maximize_1d(|u| g(u[0]), &mut a);
            let vb = opt.maximize_generic(|u| g(u[0]), &mut b);
            assert_eq!(va, vb);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn two_dimensional_refinement() {
        let set = ControlSet::continuous(BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap());
        let opt = ControlOptimizer::new(&set, OptimizerConfig::default());
        let mut u = [0.0, 0.0];
        opt.maximize(|u| -(u[0] - 0.31).powi(2) - (u[1] + 0.42).powi(2), &mut u).unwrap();
        assert!((u[0] - 0.31).abs() < 4e-3 && (u[1] + 0.42).abs() < 4e-3);
    }
}
