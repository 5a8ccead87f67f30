use mfexec::wellposedness::alpha_thresholds;
use mfexec::ModelParams;

fn main() -> mfexec::Result<()> {
    let base = ModelParams::figure2_right();
    let t = alpha_thresholds(&base, 0.0, 10.0, 1_000)?;
    let show = |v: Option<f64>| v.map_or("none in bracket".to_string(), |a| format!("{a:.6}"));
    println!("beta = {}", base.beta);
    println!("largest certified alpha: {}", show(t.certificate));
    println!("largest solvable alpha:  {}", show(t.solver));
    Ok(())
}
