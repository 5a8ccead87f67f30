//! Certificates for every figure panel and for a parameter set outside the
//! certified regime.

use mfexec::{select_lambda, ModelParams, VolSchedule};

fn main() -> mfexec::Result<()> {
    for (name, p) in ModelParams::figure_panels() {
        let c = select_lambda(&p)?;
        println!("{name:<12} {:<18} Lambda = {:<10.4} min eig = {:.4e}", c.case.to_string(), c.lambda, c.min_eigenvalue());
    }

    let hot = ModelParams { alpha: 50.0, beta: 51.0, lambda: 10.0, sigma: VolSchedule::constant(0.8), ..ModelParams::figure1_left() }
        .validate()?;
    match select_lambda(&hot) {
        Ok(c) => println!("alpha = 50: certified at Lambda = {}", c.lambda),
        Err(e) => println!("alpha = 50: {e}"),
    }
    Ok(())
}
