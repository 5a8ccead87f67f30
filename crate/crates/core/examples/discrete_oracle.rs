//! The discrete-time dynamic program converges to the continuous
//! coefficients at first order.

use mfexec::discrete::{convergence_report, run_dp};
use mfexec::ModelParams;

fn main() -> mfexec::Result<()> {
    let p = ModelParams::figure2_right();
    let report = convergence_report(&p, &[50, 100, 200, 400])?;
    println!("{:>5} {:>11} {:>11} {:>11} {:>11} {:>10}", "N", "errA", "errB", "errD", "errF", "relations");
    for r in &report.rows {
        println!(
            "{:>5} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>10.1e}",
            r.n_steps, r.err_a, r.err_b, r.err_d, r.err_f, r.max_relation_residual
        );
    }
    for (row, o) in report.rows.iter().skip(1).zip(report.orders()) {
        println!("order at N = {}: A {:.3} B {:.3} D {:.3} F {:.3}", row.n_steps, o[0], o[1], o[2], o[3]);
    }

    let dp = run_dp(&p, 100)?;
    println!("discrete A11(0) = {:.6}, B11(0) = {:.6}", dp.a[0][(0, 0)], dp.b[0][(0, 0)]);
    Ok(())
}
