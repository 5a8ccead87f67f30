//! Command implementations behind the `mfexec` binary.
//!
//! Every command writes its outputs and a `manifest.json` into the output
//! directory and returns an [`Outcome`] carrying the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::cost::{evaluate_cost, square_decomposition, write_report_csv, SquareDecomposition};
use crate::discrete::convergence_report_with;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{InitialLaw, ModelParams, VolSchedule};
use crate::report::{csv_row, line_plot_svg, CertificateSummary, RunManifest, Series};
use crate::riccati::{crosscheck_full_matrix, CoefficientPaths};
use crate::simulate::{
    foc_refinement_study, simulate_affine, simulate_optimal, solve_mean_path, AffineStrategySpec, FocStudy, PathEnsemble,
    SimConfig,
};
use crate::wellposedness::{alpha_thresholds, certify_psd, select_lambda, WellposednessCertificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_WELLPOSEDNESS: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;
pub const EXIT_BLOWUP: i32 = 5;

/// Simulation grid used when `--steps` is not given.
pub const DEFAULT_SIM_STEPS: usize = 1000;
/// Grids used by the oracle when `--n-list` is not given.
pub const DEFAULT_N_LIST: [usize; 4] = [50, 100, 200, 400];

/// Tolerance on `S_A`, `S_B` and the decomposition residual beyond 3 SE.
pub const DECOMPOSITION_TOL: f64 = 5e-3;
pub const CROSSCHECK_TOL: f64 = 1e-6;
pub const RELATION_TOL: f64 = 1e-12;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoPsdLambdaFound { .. } => EXIT_WELLPOSEDNESS,
        Error::NonFiniteCoefficient { .. } | Error::NonFinite { .. } | Error::SingularDenominator { .. } => EXIT_BLOWUP,
        Error::LiquidationViolation { .. } | Error::MissingDiffusionRecord => EXIT_VERIFICATION,
        _ => EXIT_CONFIG,
    }
}

/// Flags shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub out: PathBuf,
    pub per_path: bool,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub lines: Vec<String>,
}

impl Outcome {
    fn new(code: i32, lines: Vec<String>) -> Self {
        Outcome { code, lines }
    }
}

/// Runs `f` on a dedicated pool when `workers` is given.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidParameter { name: "workers", reason: "must be at least 1".into() }),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidParameter { name: "workers", reason: e.to_string() })?;
            Ok(pool.install(f))
        }
    }
}

fn load_config(opts: &RunOptions) -> Result<RunConfig> {
    let path = opts.config.as_ref().ok_or(Error::Config { line: 0, message: "--config PATH is required".into() })?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(n) = opts.paths {
        if n == 0 {
            return Err(Error::InvalidParameter { name: "paths", reason: "must be positive".into() });
        }
        cfg.n_paths = n;
    }
    Ok(cfg)
}

fn sim_steps(opts: &RunOptions) -> Result<usize> {
    match opts.steps {
        Some(n) if n < 2 => Err(Error::InvalidParameter { name: "steps", reason: "must be at least 2".into() }),
        Some(n) => Ok(n),
        None => Ok(DEFAULT_SIM_STEPS),
    }
}

/// Coefficients on a refinement of the simulation grid with at least
/// `min_steps` steps, so that every simulation node is a coefficient node.
fn coefficients_for(p: &ModelParams, sim: &TimeGrid, min_steps: usize) -> Result<CoefficientPaths> {
    let n = sim.n_steps();
    let fine = n * min_steps.div_ceil(n).max(1);
    CoefficientPaths::solve(p, &TimeGrid::horizon(p.horizon, fine)?)
}

struct Output {
    dir: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl Output {
    fn new(dir: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), manifest, clock: Instant::now() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn lap(&mut self, label: &str) {
        self.manifest.timings_ms.push((label.to_string(), self.clock.elapsed().as_millis()));
        self.clock = Instant::now();
    }

    fn note(&mut self, s: String) {
        self.manifest.notes.push(s);
    }

    fn certificate(&mut self, cert: &WellposednessCertificate) {
        self.manifest.certificate = Some(CertificateSummary {
            case: cert.case.to_string(),
            lambda: cert.lambda,
            min_eigenvalue: cert.min_eigenvalue(),
            passed: cert.passed,
        });
    }

    fn finish(mut self) -> Result<PathBuf> {
        Ok(self.manifest.write(&self.dir)?)
    }
}

fn manifest_for(command: &str, cfg: &RunConfig, grid_steps: usize, opts: &RunOptions) -> RunManifest {
    let mut m = RunManifest::new(command, cfg.to_config_string(), grid_steps, cfg.n_paths, cfg.seed);
    m.workers = opts.workers;
    m
}

/// Certificate, falling back to the failing certificate at the best shift
/// found when none passes.
fn certify(p: &ModelParams) -> WellposednessCertificate {
    match select_lambda(p) {
        Ok(c) => c,
        Err(Error::NoPsdLambdaFound { lambda, .. }) => certify_psd(p, lambda),
        Err(_) => certify_psd(p, 0.0),
    }
}

fn write_certificate(out: &mut Output, cert: &WellposednessCertificate) -> Result<()> {
    out.certificate(cert);
    let c = cert.clone();
    out.write("certificate.csv", |w| c.write_csv(w))
}

/// Describes the solver outcome after a failed certificate.
fn blowup_detail(r: &Result<CoefficientPaths>) -> String {
    match r {
        Ok(_) => "the solver nevertheless finished on the whole horizon".into(),
        Err(e) => format!("the solver also failed: {e}"),
    }
}

pub fn cmd_solve(opts: &RunOptions) -> Result<Outcome> {
    let cfg = load_config(opts)?;
    let steps = opts.steps.unwrap_or(cfg.grid_steps);
    let grid = TimeGrid::horizon(cfg.params.horizon, steps)?;
    let mut out = Output::new(&opts.out, manifest_for("solve", &cfg, steps, opts))?;
    let cert = certify(&cfg.params);
    write_certificate(&mut out, &cert)?;
    out.lap("certificate");
    let solved = CoefficientPaths::solve(&cfg.params, &grid);
    out.lap("solve");
    let mut lines = vec![format!("certificate: {} (case {}, Lambda = {:.6e}, min eigenvalue = {:.3e})", if cert.passed { "passed" } else { "FAILED" }, cert.case, cert.lambda, cert.min_eigenvalue())];
    if let Ok(c) = &solved {
        let c = c.clone();
        out.write("coefficients.csv", |w| c.write_csv(w))?;
        lines.push(format!("solved {} steps; B11(0) = {:.10e}", steps, c.b.values[0][0]));
    }
    let code = if !cert.passed {
        let detail = blowup_detail(&solved);
        out.note(format!("certificate failed; {detail}"));
        lines.push(format!("certificate failed; {detail}"));
        EXIT_WELLPOSEDNESS
    } else if let Err(e) = &solved {
        out.note(format!("solver failed: {e}"));
        lines.push(format!("solver failed: {e}"));
        exit_code(e)
    } else {
        EXIT_OK
    };
    out.finish()?;
    Ok(Outcome::new(code, lines))
}

fn jump_note(e: &PathEnsemble) -> String {
    let n = e.n_paths() as f64;
    let j0 = e.paths.iter().map(|p| p.jump0).sum::<f64>() / n;
    let jt = e.paths.iter().map(|p| p.terminal_block).sum::<f64>() / n;
    format!(
        "jumps: mean initial block {:.10e} (mean system {:.10e}), mean terminal block {:.10e} (mean system {:.10e})",
        j0, e.mean.jump0, jt, e.mean.terminal_block
    )
}

pub fn cmd_simulate(opts: &RunOptions) -> Result<Outcome> {
    let cfg = load_config(opts)?;
    let p = &cfg.params;
    let n = sim_steps(opts)?;
    let grid = TimeGrid::horizon(p.horizon, n)?;
    let mut out = Output::new(&opts.out, manifest_for("simulate", &cfg, n, opts))?;
    let cert = certify(p);
    write_certificate(&mut out, &cert)?;
    let coeffs = coefficients_for(p, &grid, cfg.grid_steps)?;
    out.lap("solve");
    let law = InitialLaw::from_params(p);
    let mean = solve_mean_path(&coeffs, &law, &grid)?;
    let ensemble = simulate_optimal(&coeffs, mean, &law, &SimConfig::new(cfg.n_paths, cfg.seed))?;
    out.lap("simulate");
    let ledger = evaluate_cost(&ensemble)?;
    let dec = square_decomposition(&ensemble, &ledger, &coeffs, &law)?;
    out.lap("cost");
    out.write("ensemble_summary.csv", |w| ensemble.write_summary_csv(w))?;
    out.write("cost_report.csv", |w| write_report_csv(w, &[("optimal".into(), dec)]))?;
    if opts.per_path {
        out.write("paths.csv", |w| ensemble.write_paths_csv(w))?;
        out.write("jumps.csv", |w| {
            writeln!(w, "path,jump0,terminal_block")?;
            for (i, path) in ensemble.paths.iter().enumerate() {
                writeln!(w, "{i},{}", csv_row(&[path.jump0, path.terminal_block]))?;
            }
            Ok(())
        })?;
    }
    out.note(jump_note(&ensemble));
    out.lap("write");
    out.finish()?;
    let lines = vec![
        format!("{} paths on {} steps, seed {}", cfg.n_paths, n, cfg.seed),
        format!("J = {:.8} +- {:.2e} (V = {:.8})", dec.j_mean, dec.j_se, dec.v()),
        jump_note(&ensemble),
    ];
    Ok(Outcome::new(if cert.passed { EXIT_OK } else { EXIT_WELLPOSEDNESS }, lines))
}

/// Inventory ranges and blocks of one figure panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSummary {
    pub name: String,
    /// Min and max of the simulated inventory over `[0+, T−]`.
    pub path_range: (f64, f64),
    pub mean_min: f64,
    pub initial_block: f64,
    pub terminal_block: f64,
}

/// Panel parameters of figure `which`, left then right.
pub fn figure_panels(which: u8) -> Result<[(String, ModelParams); 2]> {
    let all = ModelParams::figure_panels();
    let i = match which {
        1..=3 => 2 * (which as usize - 1),
        _ => return Err(Error::InvalidParameter { name: "which", reason: format!("figure must be 1, 2 or 3, got {which}") }),
    };
    Ok([(all[i].0.to_string(), all[i].1.clone()), (all[i + 1].0.to_string(), all[i + 1].1.clone())])
}

/// Reference without child orders, noise or risk aversion.
pub fn ow_reference(p: &ModelParams) -> ModelParams {
    ModelParams { alpha: 0.0, beta: 0.0, lambda: 0.0, sigma: VolSchedule::constant(0.0), ..p.clone() }
}

/// Simulates one panel on the common path of `seed` and returns the
/// ensemble with the reference mean path.
pub fn run_panel(p: &ModelParams, grid: &TimeGrid, coeff_steps: usize, seed: u64, n_paths: usize) -> Result<(PathEnsemble, Vec<f64>)> {
    let law = InitialLaw::from_params(p);
    let coeffs = coefficients_for(p, grid, coeff_steps)?;
    let ensemble = simulate_optimal(&coeffs, solve_mean_path(&coeffs, &law, grid)?, &law, &SimConfig::new(n_paths, seed))?;
    let ow = ow_reference(p);
    let ow_coeffs = coefficients_for(&ow, grid, coeff_steps)?;
    let ow_mean = solve_mean_path(&ow_coeffs, &InitialLaw::from_params(&ow), grid)?;
    Ok((ensemble, ow_mean.inventory()))
}

pub fn panel_summary(name: &str, e: &PathEnsemble) -> PanelSummary {
    let x = &e.paths[0].x;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    PanelSummary {
        name: name.to_string(),
        path_range: (lo, hi),
        mean_min: e.mean.inventory().into_iter().fold(f64::INFINITY, f64::min),
        initial_block: e.mean.jump0,
        terminal_block: e.mean.terminal_block,
    }
}

pub fn cmd_figures(opts: &RunOptions, which: u8) -> Result<Outcome> {
    let panels = figure_panels(which)?;
    let seed = opts.seed.unwrap_or(crate::config::DEFAULT_SEED);
    let n = sim_steps(opts)?;
    let n_paths = opts.paths.unwrap_or(1);
    let mut cfg = RunConfig::new(panels[0].1.clone());
    cfg.seed = seed;
    cfg.n_paths = n_paths;
    let mut manifest = manifest_for(&format!("figures {which}"), &cfg, n, opts);
    manifest.config = panels.iter().map(|(name, p)| format!("# {name}\n{}", RunConfig::new(p.clone()).to_config_string())).collect();
    let mut out = Output::new(&opts.out, manifest)?;
    let mut lines = Vec::new();
    let mut summaries = Vec::new();
    for (name, p) in &panels {
        let grid = TimeGrid::horizon(p.horizon, n)?;
        let (e, ow) = run_panel(p, &grid, crate::config::DEFAULT_GRID_STEPS, seed, n_paths)?;
        let path = &e.paths[0];
        let mean = e.mean.inventory();
        out.write(&format!("{name}.csv"), |w| {
            writeln!(w, "t,X,X_mean,X_ow")?;
            writeln!(w, "{}", csv_row(&[grid.t0(), path.pre_jump[0], e.mean.pre_jump[0], p.x0_mean]))?;
            for k in 0..grid.n_nodes() {
                writeln!(w, "{}", csv_row(&[grid.node(k), path.x[k], mean[k], ow[k]]))?;
            }
            writeln!(w, "{}", csv_row(&[grid.t_end(), path.terminal[0], e.mean.terminal[0], 0.0]))
        })?;
        let pts = |v: &[f64]| -> Vec<(f64, f64)> { grid.nodes().zip(v.iter().copied()).collect() };
        let series = [
            Series { label: "optimal inventory".into(), color: "#1f77b4", dashed: false, points: pts(&path.x) },
            Series { label: "mean inventory".into(), color: "#d62728", dashed: true, points: pts(&mean) },
            Series { label: "Obizhaeva-Wang".into(), color: "#7f7f7f", dashed: true, points: pts(&ow) },
        ];
        let title = format!("{name}: lambda = {}, alpha = {}, gamma2 = {}", p.lambda, p.alpha, p.gamma2);
        let svg = line_plot_svg(&title, "t", "X(t)", &series);
        out.write(&format!("{name}.svg"), |w| w.write_all(svg.as_bytes()))?;
        let s = panel_summary(name, &e);
        lines.push(format!(
            "{name}: inventory range [{:.4}, {:.4}], mean min {:.4}, initial block {:.4}, terminal block {:.4}",
            s.path_range.0, s.path_range.1, s.mean_min, s.initial_block, s.terminal_block
        ));
        summaries.push(s);
    }
    out.write(&format!("figure{which}_summary.csv"), |w| {
        writeln!(w, "panel,X_min,X_max,mean_min,initial_block,terminal_block")?;
        for s in &summaries {
            writeln!(w, "{},{}", s.name, csv_row(&[s.path_range.0, s.path_range.1, s.mean_min, s.initial_block, s.terminal_block]))?;
        }
        Ok(())
    })?;
    out.lap("figures");
    out.finish()?;
    Ok(Outcome::new(EXIT_OK, lines))
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

/// At least first order: each halving divides the error by 1.5 or more, or
/// the error is already at round-off.
pub fn at_least_first_order(errors: &[f64], floor: f64) -> bool {
    errors.windows(2).all(|w| w[1] <= floor || w[0] / w[1] >= 1.5)
}

/// The checks on the decomposition of one strategy.
pub fn decomposition_checks(id: &str, d: &SquareDecomposition, optimal: bool) -> Vec<Check> {
    let tol = DECOMPOSITION_TOL;
    if optimal {
        vec![
            check(&format!("{id}: square terms vanish"), d.s_a <= tol && d.s_b <= tol, format!("S_A = {:.3e}, S_B = {:.3e}", d.s_a, d.s_b)),
            check(
                &format!("{id}: cost attains the value"),
                (d.j_mean - d.v()).abs() <= 3.0 * d.j_se + tol,
                format!("J = {:.6} +- {:.2e}, V = {:.6}", d.j_mean, d.j_se, d.v()),
            ),
        ]
    } else {
        vec![
            check(
                &format!("{id}: decomposition identity"),
                d.residual.abs() <= 3.0 * d.residual_se + tol,
                format!("residual = {:.3e} +- {:.2e}", d.residual, d.residual_se),
            ),
            check(&format!("{id}: cost dominates the value"), d.j_mean >= d.v() - tol, format!("J = {:.6}, V = {:.6}", d.j_mean, d.v())),
        ]
    }
}

/// Runs the verification battery for `cfg` and writes its CSVs into `out`.
pub fn run_verification(cfg: &RunConfig, n: usize, out_dir: &Path, opts: &RunOptions) -> Result<(Vec<Check>, i32)> {
    let p = &cfg.params;
    let mut out = Output::new(out_dir, manifest_for("verify", cfg, n, opts))?;
    let mut checks = Vec::new();

    let cert = certify(p);
    write_certificate(&mut out, &cert)?;
    checks.push(check("well-posedness certificate", cert.passed, format!("case {}, min eigenvalue {:.3e}", cert.case, cert.min_eigenvalue())));
    if !cert.passed {
        let solved = CoefficientPaths::solve(p, &TimeGrid::horizon(p.horizon, cfg.grid_steps)?);
        let detail = blowup_detail(&solved);
        out.note(format!("certificate failed; {detail}"));
        checks.push(check("solver", solved.is_ok(), detail));
        out.finish()?;
        return Ok((checks, EXIT_WELLPOSEDNESS));
    }
    out.lap("certificate");

    let sim_grid = TimeGrid::horizon(p.horizon, n)?;
    let coeffs = coefficients_for(p, &sim_grid, cfg.grid_steps)?;
    let cc = crosscheck_full_matrix(&coeffs)?;
    checks.push(check("reduced vs full-matrix systems", cc.sup() <= CROSSCHECK_TOL, format!("sup difference {:.3e}", cc.sup())));
    out.lap("coefficients");

    let law = InitialLaw::from_params(p);
    let sim = SimConfig::new(cfg.n_paths, cfg.seed);
    let opt = AffineStrategySpec::optimal(&coeffs, &sim_grid)?;
    let specs = [
        ("optimal", opt.clone(), true),
        ("drift_x1.2", opt.clone().scale_drift(1.2), false),
        ("diffusion_x0", opt.scale_diffusion(0.0), false),
    ];
    let mut rows = Vec::new();
    for (id, spec, optimal) in specs {
        let e = simulate_affine(p, &spec, &law, &sim)?;
        let ledger = evaluate_cost(&e)?;
        let d = square_decomposition(&e, &ledger, &coeffs, &law)?;
        checks.extend(decomposition_checks(id, &d, optimal));
        rows.push((id.to_string(), d));
    }
    out.write("decomposition.csv", |w| write_report_csv(w, &rows))?;
    out.lap("decomposition");

    let steps = [n / 4, n / 2, n];
    let foc_paths = cfg.n_paths.min(1000);
    let study = foc_refinement_study(p, &steps, cfg.grid_steps, &law, &SimConfig::new(foc_paths, cfg.seed))?;
    checks.push(check(
        "mean first-order condition converges",
        at_least_first_order(&study.sup_mean, 1e-12),
        format!("sup errors {:?}, ratios {:?}", study.sup_mean, FocStudy::ratios(&study.sup_mean)),
    ));
    if !p.sigma.is_zero() {
        checks.push(check(
            "deviation first-order condition converges",
            at_least_first_order(&study.mean_sup_dev, 1e-12),
            format!("mean sup errors {:?}, ratios {:?}", study.mean_sup_dev, FocStudy::ratios(&study.mean_sup_dev)),
        ));
    }
    out.write("foc_residuals.csv", |w| {
        writeln!(w, "steps,sup_r_mean,mean_sup_r_dev")?;
        for i in 0..study.steps.len() {
            writeln!(w, "{},{}", study.steps[i], csv_row(&[study.sup_mean[i], study.mean_sup_dev[i]]))?;
        }
        Ok(())
    })?;
    out.lap("first-order conditions");

    let reference = CoefficientPaths::solve(p, &TimeGrid::horizon(p.horizon, crate::discrete::REFERENCE_STEPS)?)?;
    let rep = convergence_report_with(&reference, &DEFAULT_N_LIST)?;
    let rel = rep.rows.iter().map(|r| r.max_relation_residual).fold(0.0, f64::max);
    checks.push(check("discrete relations", rel <= RELATION_TOL, format!("max residual {rel:.3e}")));
    let cols: [fn(&crate::discrete::ConvergenceRow) -> f64; 4] = [|r| r.err_a, |r| r.err_b, |r| r.err_d, |r| r.err_f];
    let converging = cols.iter().all(|f| at_least_first_order(&rep.rows.iter().map(f).collect::<Vec<_>>(), 1e-12));
    checks.push(check("discrete oracle converges", converging, format!("orders {:?}", rep.orders())));
    out.write("oracle_summary.csv", |w| rep.write_summary_csv(w))?;
    out.lap("oracle");

    let failed = checks.iter().filter(|c| !c.passed).count();
    out.write("verify_report.csv", |w| {
        writeln!(w, "check,passed,detail")?;
        for c in &checks {
            writeln!(w, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"))?;
        }
        Ok(())
    })?;
    out.note(format!("{} of {} checks passed", checks.len() - failed, checks.len()));
    out.finish()?;
    Ok((checks, if failed == 0 { EXIT_OK } else { EXIT_VERIFICATION }))
}

pub fn cmd_verify(opts: &RunOptions) -> Result<Outcome> {
    let cfg = load_config(opts)?;
    let n = sim_steps(opts)?;
    if n % 4 != 0 {
        return Err(Error::InvalidParameter { name: "steps", reason: format!("verify needs a multiple of 4, got {n}") });
    }
    let (checks, code) = run_verification(&cfg, n, &opts.out, opts)?;
    let lines = checks.iter().map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)).collect();
    Ok(Outcome::new(code, lines))
}

pub fn cmd_oracle(opts: &RunOptions, n_list: &[usize]) -> Result<Outcome> {
    let cfg = load_config(opts)?;
    let p = &cfg.params;
    let list = if n_list.is_empty() { DEFAULT_N_LIST.to_vec() } else { n_list.to_vec() };
    let ref_steps = opts.steps.unwrap_or(crate::discrete::REFERENCE_STEPS);
    let mut out = Output::new(&opts.out, manifest_for("oracle", &cfg, ref_steps, opts))?;
    let reference = CoefficientPaths::solve(p, &TimeGrid::horizon(p.horizon, ref_steps)?)?;
    let rep = convergence_report_with(&reference, &list)?;
    out.lap("oracle");
    for res in &rep.results {
        out.write(&format!("oracle_N{}.csv", res.n_steps()), |w| res.write_csv(w))?;
    }
    out.write("oracle_summary.csv", |w| rep.write_summary_csv(w))?;
    let mut lines: Vec<String> = rep
        .rows
        .iter()
        .map(|r| {
            format!(
                "N = {:4}: errA {:.3e} errB {:.3e} errD {:.3e} errF {:.3e} | I^A/dt {:.3e} mean inventory {:.3e} relations {:.1e}",
                r.n_steps, r.err_a, r.err_b, r.err_d, r.err_f, r.err_ia, r.err_mean_inventory, r.max_relation_residual
            )
        })
        .collect();
    for o in rep.orders() {
        lines.push(format!("observed orders A {:.3} B {:.3} D {:.3} F {:.3}", o[0], o[1], o[2], o[3]));
    }
    let rel = rep.rows.iter().map(|r| r.max_relation_residual).fold(0.0, f64::max);
    out.finish()?;
    Ok(Outcome::new(if rel <= RELATION_TOL { EXIT_OK } else { EXIT_VERIFICATION }, lines))
}

/// Supremum of `α` allowed by `β − α > 0` and `a > 0`.
pub fn admissible_alpha_bound(p: &ModelParams) -> f64 {
    let by_a = if p.gamma1 > 0.0 { (p.gamma2 * p.rho + p.lambda) / p.gamma1 } else { f64::INFINITY };
    p.beta.min(by_a)
}

pub fn cmd_alpha_threshold(opts: &RunOptions, lo: Option<f64>, hi: Option<f64>) -> Result<Outcome> {
    let cfg = load_config(opts)?;
    let p = &cfg.params;
    let steps = opts.steps.unwrap_or(cfg.grid_steps);
    let mut out = Output::new(&opts.out, manifest_for("alpha-threshold", &cfg, steps, opts))?;
    if p.lambda == 0.0 {
        let line = "lambda = 0: no threshold required, certification holds for every admissible alpha".to_string();
        out.note(line.clone());
        out.finish()?;
        return Ok(Outcome::new(EXIT_OK, vec![line]));
    }
    let (lo, hi) = (lo.unwrap_or(0.0), hi.unwrap_or(p.beta));
    let t = alpha_thresholds(p, lo, hi, steps)?;
    out.lap("bisection");
    let boundary = admissible_alpha_bound(p).min(hi);
    let show = |v: Option<f64>| match v {
        None => format!("none below {hi}"),
        Some(a) if (boundary - a).abs() <= 1e-8 * boundary.abs().max(1.0) => format!("{a:.8} (standing-assumption boundary)"),
        Some(a) => format!("{a:.8}"),
    };
    let lines = vec![
        format!("certificate threshold: {}", show(t.certificate)),
        format!("solver threshold:      {}", show(t.solver)),
    ];
    out.write("alpha_threshold.csv", |w| {
        writeln!(w, "check,alpha_lo,alpha_hi,threshold")?;
        for (name, v) in [("certificate", t.certificate), ("solver", t.solver)] {
            writeln!(w, "{name},{},{}", csv_row(&[lo, hi]), v.map_or("none".to_string(), crate::report::fmt_num))?;
        }
        Ok(())
    })?;
    out.finish()?;
    Ok(Outcome::new(EXIT_OK, lines))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Config { line: 1, message: String::new() }), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::StandingAssumptionViolated { condition: "beta - alpha > 0", value: 0.0 }), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NoPsdLambdaFound { best_min_eigenvalue: -1.0, lambda: 1.0 }), EXIT_WELLPOSEDNESS);
        assert_eq!(exit_code(&Error::NonFiniteCoefficient { system: "B", t: 0.5 }), EXIT_BLOWUP);
    }

    #[test]
    fn first_order_detection() {
        assert!(at_least_first_order(&[4.0, 2.0, 1.0], 0.0));
        assert!(at_least_first_order(&[4.0, 1.0, 0.25], 0.0));
        assert!(!at_least_first_order(&[4.0, 3.5], 0.0));
        assert!(at_least_first_order(&[1e-15, 2e-15], 1e-12));
    }

    #[test]
    fn panels_and_reference() {
        let [(l, pl), (r, pr)] = figure_panels(2).unwrap();
        assert_eq!((l.as_str(), r.as_str()), ("fig2_left", "fig2_right"));
        assert_eq!((pl.alpha, pr.alpha), (0.0, 1.8));
        assert!(figure_panels(4).is_err());
        let ow = ow_reference(&pr);
        assert!(ow.is_degenerate() && ow.sigma.is_zero() && ow.lambda == 0.0);
    }
}
