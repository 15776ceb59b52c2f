//! Value versus performance iteration on the doorways problem with a fitted schedule measure.
//!
//! Usage: `cargo run --release --example doorways -- [samples] [eval_paths] [seed]`

use rlmc::problems::doorways::{run_doorways_experiment, DoorwaysExperimentConfig, DoorwaysSpec};

fn main() -> rlmc::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let samples = args.first().copied().unwrap_or(1000) as usize;
    let eval_paths = args.get(1).copied().unwrap_or(2000) as usize;
    let seed = args.get(2).copied().unwrap_or(1);

    let spec = DoorwaysSpec::default();
    let experiment = run_doorways_experiment(&spec, &DoorwaysExperimentConfig::standard(samples, eval_paths, seed))?;
    println!("doors at times {:?}: {:?}", spec.door_times, spec.doors);
    for run in &experiment.runs {
        println!(
            "{:<12} cost {:8.2} +/- {:.2}  missed >=1: {:.3}  >=2: {:.3}  schedule iterations {} (converged {})",
            run.kind.as_str(),
            run.report.mean,
            run.report.std_error,
            run.miss_frequency(1),
            run.miss_frequency(2),
            run.measure.iterations,
            run.measure.converged
        );
    }
    println!("\nargmin of the continuation part, every 5th epoch");
    println!("{:>4} {:>10} {:>12}", "n", "value", "performance");
    for n in (0..spec.num_steps).step_by(5) {
        println!("{n:>4} {:>10.3} {:>12.3}", experiment.runs[0].argmin_series[n], experiment.runs[1].argmin_series[n]);
    }
    Ok(())
}
