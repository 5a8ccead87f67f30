//! Prices the optimal strategy and two perturbations and splits each cost
//! into value function plus the two completed squares.

use mfexec::cost::{verify_square_decomposition, SquareDecomposition};
use mfexec::simulate::{AffineStrategySpec, SimConfig};
use mfexec::{CoefficientPaths, InitialLaw, ModelParams, TimeGrid};

fn main() -> mfexec::Result<()> {
    let p = ModelParams::figure1_left();
    let grid = TimeGrid::horizon(p.horizon, 500)?;
    let coeffs = CoefficientPaths::solve(&p, &TimeGrid::horizon(p.horizon, 5_000)?)?;
    let law = InitialLaw::from_params(&p);
    let cfg = SimConfig::new(4_000, 11);

    let optimal = AffineStrategySpec::optimal(&coeffs, &grid)?;
    let strategies = [
        ("optimal", optimal.clone()),
        ("drift_x1.2", optimal.clone().scale_drift(1.2)),
        ("no_diffusion", optimal.scale_diffusion(0.0)),
    ];
    println!("{}", SquareDecomposition::CSV_HEADER);
    for (id, spec) in strategies {
        let d = verify_square_decomposition(&coeffs, &spec, &law, &cfg)?;
        println!("{}", d.csv_row(id));
    }
    Ok(())
}
