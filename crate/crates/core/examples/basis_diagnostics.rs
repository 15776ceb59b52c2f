//! Gram conditioning of monomial and orthonormal Legendre bases, and how the width of a
//! training measure trades projection error against the density-ratio bound on the LQ problem.
//!
//! Usage: `cargo run --release --example basis_diagnostics`

use rlmc::basis::{make_basis, BasisSpec, GramMatrix};
use rlmc::measures::{estimate_r_bar, GridSpec, TrainingMeasure};
use rlmc::model::{BoxDomain, ControlledModel};
use rlmc::problems::{build_lq, LqSpec};
use rlmc::projection::projection_error;

fn main() -> rlmc::Result<()> {
    let unit = BoxDomain::interval(0.0, 1.0)?;
    let uniform = TrainingMeasure::uniform(unit.clone());
    println!("{:>6} {:>16} {:>16}", "degree", "monomial cond", "legendre cond");
    for degree in 1..=8 {
        let cond = |spec: BasisSpec| -> rlmc::Result<f64> { Ok(GramMatrix::compute(&make_basis(&spec, &unit)?, &uniform)?.condition_number()) };
        println!("{degree:>6} {:>16.4e} {:>16.4e}", cond(BasisSpec::monomial(degree))?, cond(BasisSpec::orthonormal(degree))?);
    }

    let spec = LqSpec {
        num_steps: 20,
        ..LqSpec::default()
    };
    let model = build_lq(&spec)?;
    let basis = make_basis(&BasisSpec::monomial(2), model.state_domain())?;
    let grid = GridSpec {
        resolution: 61,
        ..GridSpec::default()
    };
    let terminal_plus_kink = |x: &[f64]| x[0] * x[0] + x[0].abs();
    println!("\n{:>10} {:>12} {:>14}", "half-width", "eps_K", "R_bar");
    for half in [5.0, 3.0, 1.0, 0.5] {
        let measure = TrainingMeasure::uniform(BoxDomain::interval(-half, half)?);
        let gram = GramMatrix::compute(&basis, &measure)?;
        let eps = projection_error(terminal_plus_kink, &basis, &measure, &gram)?;
        let r_bar = estimate_r_bar(&model, &measure, &grid)?;
        println!("{half:>10} {eps:>12.6} {r_bar:>14.4e}");
    }
    Ok(())
}
