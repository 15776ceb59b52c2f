//! Experiment configuration: parsing, flag overrides, per-subcommand defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::basis::{make_basis, BasisFamily, BasisSpec, CondExpStrategy};
use crate::error::Result;
use crate::measures::TrainingMeasure;
use crate::model::{BoxDomain, ControlledModel};
use crate::optimizer::OptimizerConfig;
use crate::problems::ProblemSpec;
use crate::solver::{SolveConfig, SolverKind};

use super::Command;

/// Which solvers to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Value,
    Performance,
    Both,
}

impl SolverChoice {
    pub fn kinds(self) -> Vec<SolverKind> {
        match self {
            SolverChoice::Value => vec![SolverKind::Value],
            SolverChoice::Performance => vec![SolverKind::Performance],
            SolverChoice::Both => vec![SolverKind::Value, SolverKind::Performance],
        }
    }
}

/// Settings of the iterated schedule fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationSettings {
    /// Solver driving the fit; each solver fits its own schedule when absent.
    pub solver: Option<SolverKind>,
    /// Training points per layer during the fit; the main budget when absent.
    pub samples: Option<usize>,
    pub eval_paths: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub sd_floor: Option<f64>,
}

impl Default for IterationSettings {
    fn default() -> Self {
        IterationSettings {
            solver: None,
            samples: None,
            eval_paths: 2000,
            max_iters: 5,
            tol: 0.05,
            sd_floor: None,
        }
    }
}

/// Training measure as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    /// Uniform on `[lo, hi]`; the state domain when the bounds are absent.
    Uniform {
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
    /// Truncated Gaussian on `[lo, hi]` (the state domain when absent).
    TruncatedGaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
    /// Per-time truncated Gaussians fitted by alternating solves and forward simulation.
    Iterated(IterationSettings),
    /// A fully specified measure, e.g. a schedule written by an earlier run.
    Explicit { measure: TrainingMeasure },
}

impl MeasureConfig {
    /// The static measure this configuration describes; `None` for an iterated fit.
    pub fn build(&self, domain: &BoxDomain) -> Result<Option<TrainingMeasure>> {
        let support = |lo: &Option<Vec<f64>>, hi: &Option<Vec<f64>>| -> Result<BoxDomain> {
            BoxDomain::new(
                lo.clone().unwrap_or_else(|| domain.lo().to_vec()),
                hi.clone().unwrap_or_else(|| domain.hi().to_vec()),
            )
        };
        Ok(match self {
            MeasureConfig::Uniform { lo, hi } => Some(TrainingMeasure::uniform(support(lo, hi)?)),
            MeasureConfig::TruncatedGaussian { mean, sd, lo, hi } => {
                Some(TrainingMeasure::truncated_gaussian(mean.clone(), sd.clone(), support(lo, hi)?)?)
            }
            MeasureConfig::Iterated(_) => None,
            MeasureConfig::Explicit { measure } => Some(measure.clone()),
        })
    }
}

/// A single JSON document describing one experiment. Absent fields take defaults that
/// depend on the subcommand and problem; the resolved document is written to `config.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Option<ProblemSpec>,
    pub basis: Option<BasisSpec>,
    pub measure: Option<MeasureConfig>,
    pub solver: Option<SolverChoice>,
    /// Training points per layer (`M`).
    pub samples: Option<usize>,
    /// Forward evaluation paths (`M'`).
    pub eval_paths: Option<usize>,
    pub optimizer: Option<OptimizerConfig>,
    pub truncation: Option<f64>,
    /// Strategy for conditional expectations of basis functions; chosen automatically when absent.
    pub cond_exp: Option<CondExpStrategy>,
    /// Master seed; mandatory.
    pub seed: Option<u64>,
    /// Starting state for evaluation.
    pub x0: Option<Vec<f64>>,
    /// Coefficient file (`coefficients.json`) read by `evaluate`.
    pub coefficients: Option<PathBuf>,
    /// Fixed histogram bin count; Freedman-Diaconis when absent.
    pub histogram_bins: Option<usize>,
    /// Grid points per axis for the density-ratio bound.
    pub r_bar_resolution: Option<usize>,
    /// State grid points of the doorways control map.
    pub map_points: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub subcommand: String,
    pub problem: ProblemSpec,
    pub basis: BasisSpec,
    pub measure: MeasureConfig,
    pub solver: SolverChoice,
    pub samples: usize,
    pub eval_paths: usize,
    pub optimizer: OptimizerConfig,
    pub truncation: Option<f64>,
    pub cond_exp: Option<CondExpStrategy>,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub coefficients: Option<PathBuf>,
    pub histogram_bins: Option<usize>,
    pub r_bar_resolution: usize,
    pub map_points: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl ResolvedConfig {
    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            samples: self.samples,
            seed: self.seed,
            truncation: self.truncation,
            optimizer: self.optimizer.clone(),
        }
    }

    /// Settings of the schedule fit: the configured ones, or defaults.
    pub fn iteration_settings(&self) -> IterationSettings {
        match &self.measure {
            MeasureConfig::Iterated(s) => s.clone(),
            _ => IterationSettings::default(),
        }
    }
}

/// Flag values that override configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn default_problem(command: Command) -> ProblemSpec {
    let name = match command {
        Command::BenchDoorways => "doorways",
        Command::MeasureTradeoff => "two_period",
        _ => "lq1",
    };
    ProblemSpec::by_name(name).expect("registered problem")
}

fn default_basis(problem: &ProblemSpec) -> BasisSpec {
    match problem {
        ProblemSpec::SmallDp(_) => BasisSpec::piecewise_affine(vec![16]),
        _ => BasisSpec::monomial(2),
    }
}

fn default_measure(problem: &ProblemSpec) -> MeasureConfig {
    match problem {
        ProblemSpec::Lq1(_) => MeasureConfig::Uniform {
            lo: Some(vec![-3.0]),
            hi: Some(vec![3.0]),
        },
        ProblemSpec::Doorways(_) => MeasureConfig::Iterated(IterationSettings {
            solver: Some(SolverKind::Value),
            ..IterationSettings::default()
        }),
        _ => MeasureConfig::Uniform { lo: None, hi: None },
    }
}

fn default_x0(problem: &ProblemSpec, model: Option<&dyn ControlledModel>) -> Vec<f64> {
    match (problem, model) {
        (ProblemSpec::TwoPeriod(s), _) => vec![s.probe_x0],
        (_, Some(m)) => {
            let d = m.state_domain();
            d.lo().iter().zip(d.hi()).map(|(l, h)| 0.5 * (l + h)).collect()
        }
        _ => vec![0.0],
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    /// Apply flag overrides, fill defaults for `command` and validate. On failure every
    /// violated field is listed.
    pub fn resolve(&self, command: Command, overrides: &Overrides) -> std::result::Result<ResolvedConfig, Vec<String>> {
        let mut errors = Vec::new();
        let problem = self.problem.clone().unwrap_or_else(|| default_problem(command));
        errors.extend(problem.validate());
        let required = match command {
            Command::BenchLq => Some("lq1"),
            Command::BenchDoorways => Some("doorways"),
            Command::MeasureTradeoff => Some("two_period"),
            _ => None,
        };
        if let Some(name) = required {
            if problem.name() != name {
                errors.push(format!("problem.name: {} runs the {name} problem, got {}", command.name(), problem.name()));
            }
        }
        let model = if errors.is_empty() { problem.build().ok() } else { None };

        let seed = overrides.seed.or(self.seed);
        if seed.is_none() {
            errors.push("seed: required (set it in the config or pass --seed)".into());
        }
        let samples = self.samples.unwrap_or(if matches!(problem, ProblemSpec::Doorways(_)) { 5000 } else { 10_000 });
        if samples == 0 {
            errors.push("samples: must be at least 1".into());
        }
        let eval_paths = self.eval_paths.unwrap_or(10_000);
        if eval_paths == 0 {
            errors.push("eval_paths: must be at least 1".into());
        }
        let optimizer = self.optimizer.clone().unwrap_or_default();
        errors.extend(optimizer.validate().into_iter().map(|e| format!("optimizer.{e}")));
        if let Some(g) = self.truncation {
            if !(g > 0.0) {
                errors.push(format!("truncation: must be positive, got {g}"));
            }
        }
        if let Some(b) = self.histogram_bins {
            if b == 0 {
                errors.push("histogram_bins: must be at least 1".into());
            }
        }
        let r_bar_resolution = self.r_bar_resolution.unwrap_or(101);
        if r_bar_resolution < 2 {
            errors.push("r_bar_resolution: must be at least 2".into());
        }
        let map_points = self.map_points.unwrap_or(41);
        if map_points < 2 {
            errors.push("map_points: must be at least 2".into());
        }
        let threads = overrides.threads.or(self.threads);
        if threads == Some(0) {
            errors.push("threads: must be at least 1".into());
        }
        let out = overrides.out.clone().or_else(|| self.out.clone()).unwrap_or_else(|| PathBuf::from("rlmc-output"));

        let basis = self.basis.clone().unwrap_or_else(|| default_basis(&problem));
        let measure = self.measure.clone().unwrap_or_else(|| default_measure(&problem));
        if let MeasureConfig::Iterated(s) = &measure {
            if s.max_iters == 0 {
                errors.push("measure.max_iters: must be at least 1".into());
            }
            if s.eval_paths < 2 {
                errors.push("measure.eval_paths: must be at least 2".into());
            }
            if !(s.tol >= 0.0) {
                errors.push("measure.tol: must be nonnegative".into());
            }
            if s.samples == Some(0) {
                errors.push("measure.samples: must be at least 1".into());
            }
            if let Some(f) = s.sd_floor {
                if !(f > 0.0) {
                    errors.push("measure.sd_floor: must be positive".into());
                }
            }
            if command == Command::Diagnose {
                errors.push("measure.kind: diagnose needs a static measure, not an iterated fit".into());
            }
        }
        let x0 = self.x0.clone().unwrap_or_else(|| default_x0(&problem, model.as_deref()));
        let mut basis_family: Option<BasisFamily> = None;
        if let Some(m) = model.as_deref() {
            let domain = m.state_domain();
            match make_basis(&basis, domain) {
                Ok(b) => basis_family = Some(b),
                Err(e) => errors.push(format!("basis: {e}")),
            }
            match measure.build(domain) {
                Ok(Some(mu)) => {
                    if let Err(e) = mu.validate_for(m.num_steps(), domain) {
                        errors.push(format!("measure: {e}"));
                    }
                }
                Ok(None) => {}
                Err(e) => errors.push(format!("measure: {e}")),
            }
            if let Err(e) = domain.check_point("x0", &x0) {
                errors.push(format!("x0: {e}"));
            }
        }
        if let (Some(m), Some(b)) = (model.as_deref(), basis_family.as_ref()) {
            let strategy = self.cond_exp.clone();
            let check = match strategy {
                Some(s) => crate::basis::CondExpEvaluator::new(m, b, s).map(|_| ()),
                None => crate::basis::CondExpEvaluator::auto(m, b, seed.unwrap_or(0)).map(|_| ()),
            };
            if let Err(e) = check {
                errors.push(format!("cond_exp: {e}"));
            }
        }
        let is_bench = matches!(command, Command::BenchLq | Command::BenchDoorways | Command::MeasureTradeoff);
        if is_bench && !matches!(self.cond_exp, None | Some(CondExpStrategy::ClosedForm)) {
            errors.push(format!("cond_exp: {} always uses the closed form", command.name()));
        }
        if command == Command::Evaluate && self.coefficients.is_none() {
            errors.push("coefficients: evaluate needs the path of a coefficients.json file".into());
        }
        let solver = self.solver.unwrap_or(SolverChoice::Both);

        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(ResolvedConfig {
            subcommand: command.name().to_string(),
            problem,
            basis,
            measure,
            solver,
            samples,
            eval_paths,
            optimizer,
            truncation: self.truncation,
            cond_exp: self.cond_exp.clone(),
            seed: seed.expect("checked"),
            x0,
            coefficients: self.coefficients.clone(),
            histogram_bins: self.histogram_bins,
            r_bar_resolution,
            map_points,
            out,
            threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_is_reported() {
        let err = ExperimentConfig::default().resolve(Command::Solve, &Overrides::default()).unwrap_err();
        assert!(err.iter().any(|e| e.starts_with("seed")));
    }

    #[test]
    fn flags_override_fields() {
        let cfg = ExperimentConfig {
            seed: Some(1),
            ..Default::default()
        };
        let r = cfg
            .resolve(
                Command::Solve,
                &Overrides {
                    seed: Some(9),
                    out: Some("x".into()),
                    threads: Some(2),
                },
            )
            .unwrap();
        assert_eq!((r.seed, r.out, r.threads), (9, PathBuf::from("x"), Some(2)));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"{"samples":0,"eval_paths":0,"threads":0,"optimizer":{"grid_points":1},
                       "problem":{"name":"lq1","num_steps":1},"r_bar_resolution":1}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let err = cfg.resolve(Command::Solve, &Overrides::default()).unwrap_err();
        for field in ["seed", "samples", "eval_paths", "threads", "optimizer.", "problem.num_steps", "r_bar_resolution"] {
            assert!(err.iter().any(|e| e.starts_with(field)), "{field} missing from {err:?}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"sead": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problem":{"name":"lq1","num_stepz":3}}"#).is_err());
    }

    #[test]
    fn bench_defaults_follow_the_subcommand() {
        let cfg = ExperimentConfig {
            seed: Some(1),
            ..Default::default()
        };
        let r = cfg.resolve(Command::BenchDoorways, &Overrides::default()).unwrap();
        assert_eq!(r.problem.name(), "doorways");
        assert_eq!(r.samples, 5000);
        assert!(matches!(r.measure, MeasureConfig::Iterated(_)));
        let r = cfg.resolve(Command::MeasureTradeoff, &Overrides::default()).unwrap();
        assert_eq!(r.x0, vec![1.5]);
        let wrong = ExperimentConfig {
            problem: Some(ProblemSpec::by_name("zero").unwrap()),
            ..cfg
        };
        assert!(wrong.resolve(Command::BenchLq, &Overrides::default()).is_err());
    }
}
