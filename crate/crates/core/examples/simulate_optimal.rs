use mfexec::cost::evaluate_cost;
use mfexec::simulate::{simulate_optimal, solve_mean_path, SimConfig};
use mfexec::{CoefficientPaths, InitialLaw, ModelParams, TimeGrid};

fn main() -> mfexec::Result<()> {
    let p = ModelParams::figure2_right();
    let grid = TimeGrid::horizon(p.horizon, 500)?;
    let coeffs = CoefficientPaths::solve(&p, &TimeGrid::horizon(p.horizon, 5_000)?)?;
    let law = InitialLaw::from_params(&p);
    let mean = solve_mean_path(&coeffs, &law, &grid)?;
    let e = simulate_optimal(&coeffs, mean, &law, &SimConfig::new(2_000, 7))?;

    let inv = e.mean.inventory();
    let min = inv.iter().copied().fold(f64::INFINITY, f64::min);
    println!("mean initial block {:.4}, terminal block {:.4}, min mean inventory {:.4}", e.mean.jump0, e.mean.terminal_block, min);

    let ledger = evaluate_cost(&e)?;
    let [trading, qv, cov, risk] = ledger.component_means();
    println!("cost {:.5} ± {:.5}", ledger.mean(), ledger.standard_error());
    println!("  trading {trading:.5}  quadratic variation {qv:.5}  covariation {cov:.5}  risk {risk:.5}");

    let mut w = std::io::stdout().lock();
    e.write_summary_csv(&mut w).map_err(mfexec::Error::from)?;
    Ok(())
}
