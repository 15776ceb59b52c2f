//! Forward Monte Carlo evaluation of the policy induced by a coefficient matrix.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::CondExpEvaluator;
use crate::error::{Result, RlmcError};
use crate::model::{step_into, ControlledModel};
use crate::optimizer::ControlOptimizer;
use crate::projection::CoefficientMatrix;
use crate::rng::{fill_open01, stream_rng, tags};
use crate::solver::control_map_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub paths: usize,
    pub seed: u64,
    /// Keep every simulated state (needed for schedule fitting).
    #[serde(default)]
    pub retain_cross_sections: bool,
    /// Fixed bin count; Freedman-Diaconis when absent.
    #[serde(default)]
    pub histogram_bins: Option<usize>,
}

impl EvaluationOptions {
    pub fn new(paths: usize, seed: u64) -> Self {
        EvaluationOptions {
            paths,
            seed,
            retain_cross_sections: false,
            histogram_bins: None,
        }
    }
}

/// Binned pathwise performances; `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over the sample range; Freedman-Diaconis width unless `bins` is given.
    pub fn build(samples: &[f64], bins: Option<usize>) -> Histogram {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() || !(hi > lo) {
            let c = if samples.is_empty() { 0.0 } else { lo };
            return Histogram {
                edges: vec![c, c],
                counts: vec![samples.len()],
            };
        }
        let count = bins.unwrap_or_else(|| {
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
            let width = 2.0 * iqr / (samples.len() as f64).cbrt();
            if width > 0.0 {
                (((hi - lo) / width).ceil() as usize).clamp(1, 10_000)
            } else {
                (samples.len() as f64).log2().ceil() as usize + 1
            }
        });
        let count = count.max(1);
        let width = (hi - lo) / count as f64;
        let edges: Vec<f64> = (0..=count).map(|i| if i == count { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0usize; count];
        for &s in samples {
            let j = (((s - lo) / width) as usize).min(count - 1);
            counts[j] += 1;
        }
        Histogram { edges, counts }
    }

    /// CSV with columns `bin_lo,bin_hi,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([format!("{:?}", self.edges[i]), format!("{:?}", self.edges[i + 1]), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub histogram: Histogram,
    /// Average of `|u|` (Euclidean norm) over all paths and decision epochs.
    pub mean_abs_control: f64,
    /// Pathwise performances in path order.
    #[serde(skip)]
    pub performances: Vec<f64>,
    /// `cross_sections[n][m]`: state of path `m` at time `n`, when retained.
    #[serde(skip)]
    pub cross_sections: Option<Vec<Vec<Vec<f64>>>>,
}

impl EvaluationReport {
    /// Cross-sections as CSV with columns `n,path,x_0,...`.
    pub fn write_cross_sections_csv<W: Write>(&self, writer: W) -> Result<()> {
        let sections = self
            .cross_sections
            .as_ref()
            .ok_or_else(|| RlmcError::Argument("cross-sections were not retained".into()))?;
        let mut w = csv::Writer::from_writer(writer);
        let d = self.x0.len();
        let mut header = vec!["n".to_string(), "path".to_string()];
        header.extend((0..d).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for (n, section) in sections.iter().enumerate() {
            for (m, x) in section.iter().enumerate() {
                let mut rec = vec![n.to_string(), m.to_string()];
                rec.extend(x.iter().map(|v| format!("{v:?}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct PathOutcome {
    performance: f64,
    abs_control: f64,
    states: Option<Vec<Vec<f64>>>,
}

/// Simulate `options.paths` independent paths from `x0` under the estimated optimal controls
/// and average their pathwise performances.
pub fn evaluate_policy(
    model: &dyn ControlledModel,
    coefficients: &CoefficientMatrix,
    evaluator: &CondExpEvaluator<'_>,
    optimizer: &ControlOptimizer,
    x0: &[f64],
    options: &EvaluationOptions,
) -> Result<EvaluationReport> {
    let big_n = model.num_steps();
    if options.paths == 0 {
        return Err(RlmcError::Argument("evaluation needs at least one path".into()));
    }
    if coefficients.num_steps() != big_n || coefficients.basis_size() != evaluator.basis().size() {
        return Err(RlmcError::Argument(format!(
            "coefficients are {}x{}, model and basis need {}x{}",
            coefficients.num_steps(),
            coefficients.basis_size(),
            big_n,
            evaluator.basis().size()
        )));
    }
    model.state_domain().check_point("x0", x0)?;
    let (d, q, r) = (model.state_dim(), model.control_set().dim(), model.noise_dim());
    let retain = options.retain_cross_sections;
    let outcomes: Vec<Result<PathOutcome>> = (0..options.paths)
        .into_par_iter()
        .map_init(
            || (evaluator.scratch(), vec![0.0; q], vec![0.0; d], vec![0.0; d], vec![0.0; r]),
            |(scratch, u, x, next, xi), m| {
                let mut rng = stream_rng(options.seed, tags::EVALUATION, 0, m as u64);
                x.copy_from_slice(x0);
                let mut states = retain.then(|| {
                    let mut v = Vec::with_capacity(big_n + 1);
                    v.push(x0.to_vec());
                    v
                });
                let mut total = 0.0;
                let mut abs_control = 0.0;
                for s in 0..big_n {
                    control_map_from(coefficients, evaluator, optimizer, s, x, scratch, u).map_err(|e| e.at("evaluate", s, Some(m)))?;
                    abs_control += u.iter().map(|v| v * v).sum::<f64>().sqrt();
                    total += model.running_reward(s, x, u);
                    fill_open01(&mut rng, xi);
                    step_into(model, s, x, xi, u, next);
                    x.copy_from_slice(next);
                    if let Some(st) = states.as_mut() {
                        st.push(x.clone());
                    }
                }
                total += model.terminal_reward(x);
                if !total.is_finite() {
                    return Err(RlmcError::Numerical {
                        module: "evaluate",
                        n: None,
                        m: Some(m),
                        detail: format!("non-finite pathwise performance {total}"),
                    });
                }
                Ok(PathOutcome {
                    performance: total,
                    abs_control: abs_control / big_n as f64,
                    states,
                })
            },
        )
        .collect();
    let outcomes: Vec<PathOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let performances: Vec<f64> = outcomes.iter().map(|o| o.performance).collect();
    let count = performances.len() as f64;
    let mean = performances.iter().sum::<f64>() / count;
    let var = if performances.len() > 1 {
        performances.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let mean_abs_control = outcomes.iter().map(|o| o.abs_control).sum::<f64>() / count;
    let cross_sections = retain.then(|| {
        let mut sections = vec![Vec::with_capacity(outcomes.len()); big_n + 1];
        for o in &outcomes {
            for (n, x) in o.states.as_ref().expect("states retained").iter().enumerate() {
                sections[n].push(x.clone());
            }
        }
        sections
    });
    Ok(EvaluationReport {
        mean,
        std_error: (var / count).sqrt(),
        paths: options.paths,
        seed: options.seed,
        x0: x0.to_vec(),
        histogram: Histogram::build(&performances, options.histogram_bins),
        mean_abs_control,
        performances,
        cross_sections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_sum_to_sample_size() {
        let samples: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let h = Histogram::build(&samples, None);
        assert_eq!(h.counts.iter().sum::<usize>(), 1000);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        assert_eq!(*h.edges.last().unwrap(), samples.iter().copied().fold(f64::MIN, f64::max));
    }

    #[test]
    fn degenerate_histogram_has_one_bin() {
        let h = Histogram::build(&[2.0; 5], None);
        assert_eq!(h.counts, vec![5]);
        let h = Histogram::build(&[1.0, 2.0, 3.0], Some(2));
        assert_eq!(h.counts, vec![1, 2]);
    }

    #[test]
    fn histogram_csv_has_header() {
        let mut buf = Vec::new();
        Histogram::build(&[0.0, 1.0], Some(1)).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_lo,bin_hi,count\n0.0,1.0,2\n");
    }
}
