//! Projection error against the density-ratio bound as the training measure narrows.
//!
//! Usage: `cargo run --release --example measure_tradeoff`

use rlmc::problems::two_period::{run_measure_tradeoff, TwoPeriodSpec};

fn main() -> rlmc::Result<()> {
    let spec = TwoPeriodSpec::default();
    let result = run_measure_tradeoff(&spec)?;
    println!("{:>6} {:>12} {:>14}  coefficients", "sigma", "eps_3", "R_bar");
    for row in &result.rows {
        let r_bar = row.diagnostics.r_bar.map_or("+inf".to_string(), |r| format!("{r:.4e}"));
        println!("{:>6} {:>12.6} {:>14}  {:.4?}", row.sigma, row.diagnostics.epsilon_k, r_bar, row.alpha);
    }
    println!("\ncontrol-effect curve at x0 = {} (sigma = 0.5)", spec.probe_x0);
    for p in result.curves.iter().filter(|p| p.sigma == 0.5).step_by(10) {
        println!("u {:+6.2}  estimated {:9.4}  exact {:9.4}", p.u, p.estimated, p.exact);
    }
    Ok(())
}
