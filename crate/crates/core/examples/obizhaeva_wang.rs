//! Without child orders, noise or risk aversion the optimal schedule is the
//! classical one: equal blocks at both ends and a constant rate in between.

use mfexec::cost::value_function;
use mfexec::simulate::{simulate_optimal, solve_mean_path, SimConfig};
use mfexec::{CoefficientPaths, InitialLaw, ModelParams, TimeGrid};

fn main() -> mfexec::Result<()> {
    let p = ModelParams::obizhaeva_wang();
    let grid = TimeGrid::horizon(p.horizon, 10_000)?;
    let coeffs = CoefficientPaths::solve(&p, &grid)?;
    let law = InitialLaw::from_params(&p);

    let mean = solve_mean_path(&coeffs, &law, &grid)?;
    let e = simulate_optimal(&coeffs, mean, &law, &SimConfig::new(1, 0))?;

    let denom = 2.0 + p.rho * p.horizon;
    let rate = (e.mean.z[1] - e.mean.z[0]) / grid.step();
    println!("initial block  {:.9}  (closed form {:.9})", e.mean.jump0, 1.0 / denom);
    println!("trading rate   {:.9}  (closed form {:.9})", rate, p.rho / denom);
    println!("terminal block {:.9}  (closed form {:.9})", e.mean.terminal_block, 1.0 / denom);
    let v = value_function(&coeffs, &law, 0.0)?.total();
    println!("value          {:.9}  (closed form {:.9})", v, p.gamma2 / denom);
    Ok(())
}
