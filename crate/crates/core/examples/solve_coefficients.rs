//! Solves the coefficient ODEs and prints the feedback at a few times.

use mfexec::riccati::crosscheck_full_matrix;
use mfexec::{CoefficientPaths, ModelParams, TimeGrid};

fn main() -> mfexec::Result<()> {
    let p = ModelParams::figure1_left();
    let coeffs = CoefficientPaths::solve(&p, &TimeGrid::horizon(p.horizon, 2_000)?)?;

    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "t", "A11", "B11", "D1", "F");
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let s = coeffs.sample(t)?;
        println!("{t:>5.2} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", s.a[0], s.b[0], s.d[0], s.f);
    }

    let fb = coeffs.feedback(0.0)?;
    println!("I^A(0) = {:.6?}", fb.ia.as_slice());
    println!("I^B(0) = {:.6?}", fb.ib.as_slice());
    println!("I^D(0) = {:.6}", fb.id);

    let check = crosscheck_full_matrix(&coeffs)?;
    println!("full-matrix cross-check sup = {:.3e}", check.sup());
    Ok(())
}
