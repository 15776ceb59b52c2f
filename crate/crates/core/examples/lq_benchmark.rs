//! Linear-quadratic benchmark: both solvers against the Riccati reference.
//!
//! Usage: `cargo run --release --example lq_benchmark -- [samples] [eval_paths] [seed]`

use std::time::Instant;

use rlmc::problems::lq::{run_lq_experiment, LqExperimentConfig, LqSpec};

fn main() -> rlmc::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let samples = args.first().copied().unwrap_or(10_000) as usize;
    let eval_paths = args.get(1).copied().unwrap_or(10_000) as usize;
    let seed = args.get(2).copied().unwrap_or(1);
    let spec = LqSpec::default();
    let start = Instant::now();
    let experiment = run_lq_experiment(&spec, &LqExperimentConfig::standard(samples, eval_paths, seed))?;
    for run in &experiment.runs {
        let worst = run.curve.iter().map(|p| p.relative_error).fold(0.0, f64::max);
        println!(
            "{:<12} solve {:6.1}s  worst relative error {:.4}  violations {}",
            run.kind.as_str(),
            run.solve.diagnostics.wall_seconds,
            worst,
            run.solve.diagnostics.total_violations
        );
    }
    experiment.write_curve_csv(std::io::stdout())?;
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
