//! Forward simulation of affine feedback strategies.
//!
//! A strategy trades a block at `t = 0`, then `dZ = b dt + ζ dW` with drift
//! affine in the deviation from the mean state, the mean state and a
//! constant, and optionally closes the position with a block at `T`. The
//! mean-field input `E[S_t]` is the solution of the deterministic mean
//! system, shared by every path.

use std::io::Write;

use nalgebra::{RowVector3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{InitialLaw, ModelParams, StateMatrices};
use crate::report::csv_row;
use crate::riccati::CoefficientPaths;

/// Affine feedback strategy on a grid. Drift gains and the diffusion loading
/// are given at the left node of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStrategySpec {
    pub grid: TimeGrid,
    pub jump_dev: RowVector3<f64>,
    pub jump_mean: RowVector3<f64>,
    pub jump_const: f64,
    pub drift_dev: Vec<RowVector3<f64>>,
    pub drift_mean: Vec<RowVector3<f64>>,
    pub drift_const: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub terminal_block: bool,
}

impl AffineStrategySpec {
    fn zero(grid: &TimeGrid) -> Self {
        let n = grid.n_steps();
        AffineStrategySpec {
            grid: *grid,
            jump_dev: RowVector3::zeros(),
            jump_mean: RowVector3::zeros(),
            jump_const: 0.0,
            drift_dev: vec![RowVector3::zeros(); n],
            drift_mean: vec![RowVector3::zeros(); n],
            drift_const: vec![0.0; n],
            diffusion: vec![0.0; n],
            terminal_block: true,
        }
    }

    /// The optimal strategy: it keeps `I^A (S − E[S]) = 0` and
    /// `I^B E[S] + I^D = 0` for all times.
    pub fn optimal(coeffs: &CoefficientPaths, grid: &TimeGrid) -> Result<Self> {
        let p = &coeffs.params;
        let m = StateMatrices::new(p);
        let hh = m.h + m.h_bar;
        let mut spec = Self::zero(grid);
        let fb0 = coeffs.feedback(grid.t0())?;
        spec.jump_dev = -fb0.ia / fb0.a_tilde;
        spec.jump_mean = -fb0.ib / fb0.a;
        spec.jump_const = -fb0.id / fb0.a;
        for k in 0..grid.n_steps() {
            let t = grid.node(k);
            let fb = coeffs.feedback(t)?;
            spec.drift_dev[k] = -(fb.ia_dot + fb.ia * m.h) / fb.a_tilde;
            spec.drift_mean[k] = -(fb.ib_dot + fb.ib * hh) / fb.a;
            spec.drift_const[k] = -(fb.id_dot + (fb.ib * m.g)[0]) / fb.a;
            spec.diffusion[k] = -fb.ia[1] * p.sigma.at(t) / fb.a_tilde;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// No trading before a single block at `T`.
    pub fn terminal_block_only(grid: &TimeGrid) -> Self {
        Self::zero(grid)
    }

    /// Sells the whole initial inventory at `t = 0`.
    pub fn immediate_block(grid: &TimeGrid) -> Self {
        let mut spec = Self::zero(grid);
        spec.jump_dev = RowVector3::new(1.0, 0.0, 0.0);
        spec.jump_mean = RowVector3::new(1.0, 0.0, 0.0);
        spec
    }

    /// Multiplies all three drift gains.
    pub fn scale_drift(mut self, factor: f64) -> Self {
        for k in 0..self.drift_const.len() {
            self.drift_dev[k] *= factor;
            self.drift_mean[k] *= factor;
            self.drift_const[k] *= factor;
        }
        self
    }

    pub fn scale_diffusion(mut self, factor: f64) -> Self {
        for z in &mut self.diffusion {
            *z *= factor;
        }
        self
    }

    pub fn with_terminal_block(mut self, on: bool) -> Self {
        self.terminal_block = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_steps();
        if self.drift_dev.len() != n || self.drift_mean.len() != n || self.drift_const.len() != n || self.diffusion.len() != n {
            return Err(Error::GridMismatch("strategy gains do not match the grid".into()));
        }
        let finite = self.jump_dev.iter().chain(self.jump_mean.iter()).all(|v| v.is_finite())
            && self.jump_const.is_finite()
            && self.drift_dev.iter().chain(self.drift_mean.iter()).all(|r| r.iter().all(|v| v.is_finite()))
            && self.drift_const.iter().chain(self.diffusion.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite { what: "strategy gain", t: self.grid.t0() });
        }
        Ok(())
    }
}

/// Deterministic mean state and mean cumulative strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPath {
    pub grid: TimeGrid,
    /// `E[S(0−)]`.
    pub pre_jump: Vector3<f64>,
    /// `E[ΔZ_0]`.
    pub jump0: f64,
    /// `E[S]` at the nodes; index 0 is after the initial block, index `n` is `T−`.
    pub states: Vec<Vector3<f64>>,
    /// `E[Z]` at the nodes, including the initial block.
    pub z: Vec<f64>,
    /// `E[ΔZ_T]`.
    pub terminal_block: f64,
    /// `E[S(T)]` after the terminal block.
    pub terminal: Vector3<f64>,
}

impl MeanPath {
    pub fn inventory(&self) -> Vec<f64> {
        self.states.iter().map(|s| s[0]).collect()
    }
}

/// One simulated path. Node 0 is after the initial block, node `n` is `T−`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub pre_jump: Vector3<f64>,
    pub jump0: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub c: Vec<f64>,
    /// Cumulative strategy, including the initial block.
    pub z: Vec<f64>,
    pub terminal_block: f64,
    /// State after the terminal block.
    pub terminal: Vector3<f64>,
}

impl PathRecord {
    pub fn state(&self, k: usize) -> Vector3<f64> {
        Vector3::new(self.x[k], self.y[k], self.c[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Resolution at which Brownian increments are drawn; they are summed
    /// onto the simulation grid. Must be a multiple of the grid steps.
    /// `None` draws at the grid resolution.
    pub noise_steps: Option<usize>,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        SimConfig { n_paths, seed, noise_steps: None }
    }

    pub fn with_noise_steps(mut self, steps: usize) -> Self {
        self.noise_steps = Some(steps);
        self
    }
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub params: ModelParams,
    pub grid: TimeGrid,
    pub seed: u64,
    pub noise_steps: usize,
    pub mean: MeanPath,
    pub paths: Vec<PathRecord>,
    /// Diffusion loading `ζ` per step.
    pub diffusion: Option<Vec<f64>>,
    /// `σ` per step.
    pub sigma: Vec<f64>,
    pub terminal_block: bool,
}

const X0_STREAM_BIT: u64 = 1 << 63;

/// Brownian increments of path `path` on `grid`, drawn at `noise_steps`
/// resolution from the stream `(seed, path)`.
pub fn brownian_increments(seed: u64, path: u64, grid: &TimeGrid, noise_steps: usize) -> Vec<f64> {
    let n = grid.n_steps();
    let per = noise_steps / n;
    let sd = ((grid.t_end() - grid.t0()) / noise_steps as f64).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(path);
    (0..n)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..per {
                let z: f64 = StandardNormal.sample(&mut rng);
                s += z * sd;
            }
            s
        })
        .collect()
}

fn sample_initial(law: &InitialLaw, seed: u64, path: u64) -> Vector3<f64> {
    if law.is_deterministic() {
        return law.mean;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(path | X0_STREAM_BIT);
    let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
    law.mean + law.cov_sqrt() * z
}

struct Stepper<'a> {
    m: StateMatrices,
    spec: &'a AffineStrategySpec,
    sigma: Vec<f64>,
    dt: f64,
}

impl Stepper<'_> {
    fn jump(&self, state: &Vector3<f64>, mean: &Vector3<f64>) -> f64 {
        (self.spec.jump_dev * (state - mean))[0] + (self.spec.jump_mean * mean)[0] + self.spec.jump_const
    }

    /// One Euler–Maruyama step; returns the new state and `dZ`.
    fn step(&self, k: usize, state: &Vector3<f64>, mean: &Vector3<f64>, dw: f64) -> (Vector3<f64>, f64) {
        let s = self.spec;
        let dev = state - mean;
        let drift = (s.drift_dev[k] * dev)[0] + (s.drift_mean[k] * mean)[0] + s.drift_const[k];
        let dz = drift * self.dt + s.diffusion[k] * dw;
        let noise = Vector3::new(0.0, self.sigma[k] * dw, 0.0);
        let next = state + (self.m.h * state + self.m.h_bar * mean + self.m.g) * self.dt + noise + self.m.k * dz;
        (next, dz)
    }
}

fn check_finite(v: &Vector3<f64>, t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: "state", t })
    }
}

fn stepper<'a>(p: &ModelParams, spec: &'a AffineStrategySpec) -> Stepper<'a> {
    let g = &spec.grid;
    Stepper {
        m: StateMatrices::new(p),
        spec,
        sigma: (0..g.n_steps()).map(|k| p.sigma.at(g.node(k))).collect(),
        dt: g.step(),
    }
}

/// Mean system induced by an affine strategy.
pub fn solve_spec_mean(p: &ModelParams, spec: &AffineStrategySpec, law: &InitialLaw) -> Result<MeanPath> {
    spec.validate()?;
    let st = stepper(p, spec);
    let grid = spec.grid;
    let n = grid.n_steps();
    let pre = law.mean;
    let jump0 = st.jump(&pre, &pre);
    let mut state = pre + st.m.k * jump0;
    let mut states = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut zc = jump0;
    check_finite(&state, grid.t0())?;
    states.push(state);
    z.push(zc);
    for k in 0..n {
        let (next, dz) = st.step(k, &state, &state, 0.0);
        check_finite(&next, grid.node(k + 1))?;
        state = next;
        zc += dz;
        states.push(state);
        z.push(zc);
    }
    let block = if spec.terminal_block { state[0] } else { 0.0 };
    Ok(MeanPath { grid, pre_jump: pre, jump0, states, z, terminal_block: block, terminal: state + st.m.k * block })
}

/// Mean path of the optimal strategy.
pub fn solve_mean_path(coeffs: &CoefficientPaths, law: &InitialLaw, grid: &TimeGrid) -> Result<MeanPath> {
    let spec = AffineStrategySpec::optimal(coeffs, grid)?;
    solve_spec_mean(&coeffs.params, &spec, law)
}

fn simulate_with_mean(
    p: &ModelParams,
    spec: &AffineStrategySpec,
    mean: MeanPath,
    law: &InitialLaw,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    spec.validate()?;
    if mean.grid != spec.grid {
        return Err(Error::GridMismatch("mean path and strategy use different grids".into()));
    }
    if cfg.n_paths as u64 >= X0_STREAM_BIT {
        return Err(Error::SeedCollision { n_paths: cfg.n_paths });
    }
    let grid = spec.grid;
    let n = grid.n_steps();
    let noise_steps = cfg.noise_steps.unwrap_or(n);
    if noise_steps == 0 || noise_steps % n != 0 {
        return Err(Error::GridMismatch(format!("noise resolution {noise_steps} is not a multiple of {n} steps")));
    }
    let st = stepper(p, spec);
    let tol = 1e-9 * law.mean[0].abs().max(1.0);

    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| -> Result<PathRecord> {
            let dw = brownian_increments(cfg.seed, i as u64, &grid, noise_steps);
            let pre = sample_initial(law, cfg.seed, i as u64);
            let jump0 = st.jump(&pre, &mean.pre_jump);
            let mut state = pre + st.m.k * jump0;
            check_finite(&state, grid.t0())?;
            let mut rec = PathRecord {
                pre_jump: pre,
                jump0,
                x: Vec::with_capacity(n + 1),
                y: Vec::with_capacity(n + 1),
                c: Vec::with_capacity(n + 1),
                z: Vec::with_capacity(n + 1),
                terminal_block: 0.0,
                terminal: Vector3::zeros(),
            };
            let mut zc = jump0;
            let push = |rec: &mut PathRecord, s: &Vector3<f64>, z: f64| {
                rec.x.push(s[0]);
                rec.y.push(s[1]);
                rec.c.push(s[2]);
                rec.z.push(z);
            };
            push(&mut rec, &state, zc);
            for k in 0..n {
                let (next, dz) = st.step(k, &state, &mean.states[k], dw[k]);
                check_finite(&next, grid.node(k + 1))?;
                state = next;
                zc += dz;
                push(&mut rec, &state, zc);
            }
            if spec.terminal_block {
                rec.terminal_block = state[0];
            } else if state[0].abs() > tol {
                return Err(Error::LiquidationViolation { path: i, inventory: state[0] });
            }
            rec.terminal = state + st.m.k * rec.terminal_block;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PathEnsemble {
        params: p.clone(),
        grid,
        seed: cfg.seed,
        noise_steps,
        mean,
        paths,
        diffusion: Some(spec.diffusion.clone()),
        sigma: st.sigma.clone(),
        terminal_block: spec.terminal_block,
    })
}

/// Simulates an arbitrary affine strategy: first its mean system, then the
/// paths. Path `i` depends only on `(seed, i)`.
pub fn simulate_affine(p: &ModelParams, spec: &AffineStrategySpec, law: &InitialLaw, cfg: &SimConfig) -> Result<PathEnsemble> {
    let mean = solve_spec_mean(p, spec, law)?;
    simulate_with_mean(p, spec, mean, law, cfg)
}

/// Simulates the optimal strategy around a precomputed mean path.
pub fn simulate_optimal(coeffs: &CoefficientPaths, mean: MeanPath, law: &InitialLaw, cfg: &SimConfig) -> Result<PathEnsemble> {
    let spec = AffineStrategySpec::optimal(coeffs, &mean.grid)?;
    simulate_with_mean(&coeffs.params, &spec, mean, law, cfg)
}

/// Residuals of the two first-order conditions along an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FocResiduals {
    /// `I^B E[S] + I^D` per node.
    pub r_mean: Vec<f64>,
    /// `sup_t |I^A (S − E[S])|` per path.
    pub r_dev_sup: Vec<f64>,
    /// Root mean square over paths of `I^A (S − E[S])` per node.
    pub r_dev_rms: Vec<f64>,
}

impl FocResiduals {
    pub fn sup_mean(&self) -> f64 {
        self.r_mean.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_dev(&self) -> f64 {
        self.r_dev_sup.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    /// Average over paths of the per-path sup.
    pub fn mean_sup_dev(&self) -> f64 {
        self.r_dev_sup.iter().sum::<f64>() / self.r_dev_sup.len().max(1) as f64
    }
}

/// Evaluates both residuals at every node from `0+` to `T−`.
pub fn foc_residuals(ensemble: &PathEnsemble, coeffs: &CoefficientPaths) -> Result<FocResiduals> {
    let grid = ensemble.grid;
    let nodes = grid.n_nodes();
    let mut ia = Vec::with_capacity(nodes);
    let mut r_mean = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let fb = coeffs.feedback(grid.node(k))?;
        ia.push(fb.ia);
        r_mean.push((fb.ib * ensemble.mean.states[k])[0] + fb.id);
    }
    let mut r_dev_sup = Vec::with_capacity(ensemble.paths.len());
    let mut sq = vec![0.0; nodes];
    for path in &ensemble.paths {
        let mut sup: f64 = 0.0;
        for k in 0..nodes {
            let r = (ia[k] * (path.state(k) - ensemble.mean.states[k]))[0];
            sup = sup.max(r.abs());
            sq[k] += r * r;
        }
        r_dev_sup.push(sup);
    }
    let np = ensemble.paths.len().max(1) as f64;
    Ok(FocResiduals { r_mean, r_dev_sup, r_dev_rms: sq.into_iter().map(|s| (s / np).sqrt()).collect() })
}

/// Largest strategy increment between consecutive interior nodes.
pub fn max_interior_increment(ensemble: &PathEnsemble) -> f64 {
    ensemble
        .paths
        .iter()
        .flat_map(|p| p.z.windows(2).map(|w| (w[1] - w[0]).abs()))
        .fold(0.0, f64::max)
}

/// Residual sup-norms of the optimal strategy on a sequence of grids that
/// share one Brownian path per index (increments drawn at the finest
/// resolution).
#[derive(Debug, Clone, PartialEq)]
pub struct FocStudy {
    pub steps: Vec<usize>,
    /// `sup_t |I^B E[S] + I^D|` per grid.
    pub sup_mean: Vec<f64>,
    /// Mean over paths of `sup_t |I^A (S − E[S])|` per grid.
    pub mean_sup_dev: Vec<f64>,
}

impl FocStudy {
    /// `err(Δ) / err(Δ/2)` for consecutive grids.
    pub fn ratios(errors: &[f64]) -> Vec<f64> {
        errors.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Runs [`foc_residuals`] for each grid in `steps` (ascending, each dividing
/// the last). Coefficients are solved once on a refinement of the finest
/// grid with at least `coeff_steps` steps.
pub fn foc_refinement_study(
    p: &ModelParams,
    steps: &[usize],
    coeff_steps: usize,
    law: &InitialLaw,
    cfg: &SimConfig,
) -> Result<FocStudy> {
    let finest = *steps.iter().max().ok_or_else(|| Error::GridMismatch("no grids given".into()))?;
    if steps.iter().any(|s| finest % s != 0) {
        return Err(Error::GridMismatch(format!("grids {steps:?} are not nested")));
    }
    let fine = finest * coeff_steps.div_ceil(finest).max(1);
    let coeffs = CoefficientPaths::solve(p, &TimeGrid::horizon(p.horizon, fine)?)?;
    let mut study = FocStudy { steps: steps.to_vec(), sup_mean: Vec::new(), mean_sup_dev: Vec::new() };
    for &n in steps {
        let grid = TimeGrid::horizon(p.horizon, n)?;
        let mean = solve_mean_path(&coeffs, law, &grid)?;
        let cfg = SimConfig { noise_steps: Some(finest), ..*cfg };
        let ensemble = simulate_optimal(&coeffs, mean, law, &cfg)?;
        let r = foc_residuals(&ensemble, &coeffs)?;
        study.sup_mean.push(r.sup_mean());
        study.mean_sup_dev.push(r.mean_sup_dev());
    }
    Ok(study)
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// Sample mean of the inventory at node `k`.
    pub fn sample_mean_x(&self, k: usize) -> f64 {
        self.paths.iter().map(|p| p.x[k]).sum::<f64>() / self.paths.len() as f64
    }

    fn summary_row(&self, t: f64, xs: Vec<f64>, y_mean: f64, c: f64, z_mean: f64) -> String {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let mut sorted = xs;
        sorted.sort_by(f64::total_cmp);
        csv_row(&[t, mean, var.sqrt(), quantile(&sorted, 0.05), quantile(&sorted, 0.95), y_mean, c, z_mean])
    }

    /// `t,X_mean,X_sd,X_q05,X_q95,Y_mean,C,Z_mean`: a row at `0−`, one per
    /// node (node 0 after the initial block, the last at `T−`) and a row at
    /// `T` after the terminal block.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,X_mean,X_sd,X_q05,X_q95,Y_mean,C,Z_mean")?;
        let np = self.paths.len() as f64;
        let avg = |f: &dyn Fn(&PathRecord) -> f64| self.paths.iter().map(f).sum::<f64>() / np;
        let t0 = self.grid.t0();
        let pre: Vec<f64> = self.paths.iter().map(|p| p.pre_jump[0]).collect();
        writeln!(w, "{}", self.summary_row(t0, pre, avg(&|p| p.pre_jump[1]), self.mean.pre_jump[2], 0.0))?;
        for k in 0..self.grid.n_nodes() {
            let xs: Vec<f64> = self.paths.iter().map(|p| p.x[k]).collect();
            let row = self.summary_row(self.grid.node(k), xs, avg(&|p| p.y[k]), self.mean.states[k][2], avg(&|p| p.z[k]));
            writeln!(w, "{row}")?;
        }
        let xs: Vec<f64> = self.paths.iter().map(|p| p.terminal[0]).collect();
        let z_end = avg(&|p| p.z[p.z.len() - 1] + p.terminal_block);
        let row = self.summary_row(self.grid.t_end(), xs, avg(&|p| p.terminal[1]), self.mean.terminal[2], z_end);
        writeln!(w, "{row}")
    }

    /// `path,t,X,Y,C,Z` for every path and node, with the `0−` and
    /// post-block `T` rows included.
    pub fn write_paths_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path,t,X,Y,C,Z")?;
        for (i, p) in self.paths.iter().enumerate() {
            writeln!(w, "{i},{}", csv_row(&[self.grid.t0(), p.pre_jump[0], p.pre_jump[1], p.pre_jump[2], 0.0]))?;
            for k in 0..self.grid.n_nodes() {
                writeln!(w, "{i},{}", csv_row(&[self.grid.node(k), p.x[k], p.y[k], p.c[k], p.z[k]]))?;
            }
            let z_end = p.z[p.z.len() - 1] + p.terminal_block;
            writeln!(w, "{i},{}", csv_row(&[self.grid.t_end(), p.terminal[0], p.terminal[1], p.terminal[2], z_end]))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VolSchedule;

    fn solved(p: &ModelParams, n: usize) -> (CoefficientPaths, TimeGrid) {
        let g = TimeGrid::horizon(p.horizon, n).unwrap();
        (CoefficientPaths::solve(p, &g).unwrap(), g)
    }

    #[test]
    fn obizhaeva_wang_mean_path() {
        let p = ModelParams::obizhaeva_wang();
        let (c, g) = solved(&p, 10_000);
        let law = InitialLaw::from_params(&p);
        let m = solve_mean_path(&c, &law, &g).unwrap();
        let jump = 1.0 / 2.7;
        assert!((m.jump0 - jump).abs() < 1e-9);
        assert!((m.terminal_block - jump).abs() < 1e-9);
        let rate = (m.states[0][0] - m.states[10_000][0]) / 1.0;
        assert!((rate - 0.7 / 2.7).abs() < 1e-9);
        assert!((m.jump0 - c.b.values[0][0] / p.gamma2).abs() < 1e-12);
        assert_eq!(m.terminal[0], 0.0);
    }

    #[test]
    fn jump_consistency_and_first_order_conditions_at_start() {
        for (_, p) in ModelParams::figure_panels() {
            let (c, g) = solved(&p, 500);
            let law = InitialLaw::from_params(&p);
            let m = solve_mean_path(&c, &law, &g).unwrap();
            let k = StateMatrices::new(&p).k;
            assert!((m.states[0] - (m.pre_jump + k * m.jump0)).amax() < 1e-15);
            let fb = c.feedback(0.0).unwrap();
            assert!(((fb.ib * m.states[0])[0] + fb.id).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_volatility_paths_equal_the_mean_bitwise() {
        let p = ModelParams { sigma: VolSchedule::constant(0.0), ..ModelParams::figure1_left() };
        let (c, g) = solved(&p, 200);
        let law = InitialLaw::from_params(&p);
        let m = solve_mean_path(&c, &law, &g).unwrap();
        let e = simulate_optimal(&c, m.clone(), &law, &SimConfig::new(3, 9)).unwrap();
        for path in &e.paths {
            for k in 0..g.n_nodes() {
                assert_eq!(path.state(k), m.states[k]);
                assert_eq!(path.z[k], m.z[k]);
            }
        }
        let r = foc_residuals(&e, &c).unwrap();
        assert_eq!(r.sup_dev(), 0.0);
    }

    #[test]
    fn affine_optimal_spec_reproduces_optimal_simulation() {
        let p = ModelParams::figure1_left();
        let (c, g) = solved(&p, 100);
        let law = InitialLaw::from_params(&p);
        let cfg = SimConfig::new(20, 3);
        let a = simulate_optimal(&c, solve_mean_path(&c, &law, &g).unwrap(), &law, &cfg).unwrap();
        let b = simulate_affine(&p, &AffineStrategySpec::optimal(&c, &g).unwrap(), &law, &cfg).unwrap();
        assert_eq!(a.paths, b.paths);
    }

    #[test]
    fn paths_close_position_and_share_child_flow() {
        let p = ModelParams { x0_var: 0.04, ..ModelParams::figure1_left() };
        let (c, g) = solved(&p, 100);
        let law = InitialLaw::from_params(&p);
        let e = simulate_optimal(&c, solve_mean_path(&c, &law, &g).unwrap(), &law, &SimConfig::new(50, 1)).unwrap();
        for path in &e.paths {
            assert_eq!(path.terminal[0], 0.0);
            for k in 0..g.n_nodes() {
                assert_eq!(path.c[k], e.mean.states[k][2]);
            }
        }
        let x0: Vec<f64> = e.paths.iter().map(|p| p.pre_jump[0]).collect();
        assert!(x0.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn terminal_block_only_holds_inventory() {
        let p = ModelParams { alpha: 0.0, sigma: VolSchedule::constant(0.0), ..ModelParams::figure1_left() };
        let g = TimeGrid::horizon(1.0, 50).unwrap();
        let law = InitialLaw::from_params(&p);
        let e = simulate_affine(&p, &AffineStrategySpec::terminal_block_only(&g), &law, &SimConfig::new(2, 0)).unwrap();
        for path in &e.paths {
            assert!(path.x.iter().all(|&x| x == 1.0));
            assert!(path.y.iter().all(|&y| y == 0.0));
            assert_eq!(path.terminal_block, 1.0);
        }
        let e = simulate_affine(&p, &AffineStrategySpec::immediate_block(&g), &law, &SimConfig::new(2, 0)).unwrap();
        for path in &e.paths {
            assert_eq!(path.jump0, 1.0);
            assert!(path.x.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn missing_terminal_block_is_inadmissible() {
        let p = ModelParams::figure1_left();
        let g = TimeGrid::horizon(1.0, 50).unwrap();
        let spec = AffineStrategySpec::terminal_block_only(&g).with_terminal_block(false);
        let r = simulate_affine(&p, &spec, &InitialLaw::from_params(&p), &SimConfig::new(2, 0));
        assert!(matches!(r, Err(Error::LiquidationViolation { .. })));
    }

    #[test]
    fn brownian_refinement_is_consistent() {
        let fine = TimeGrid::horizon(1.0, 8).unwrap();
        let coarse = TimeGrid::horizon(1.0, 2).unwrap();
        let a = brownian_increments(5, 3, &fine, 8);
        let b = brownian_increments(5, 3, &coarse, 8);
        assert!((a[..4].iter().sum::<f64>() - b[0]).abs() < 1e-14);
        assert!((a[4..].iter().sum::<f64>() - b[1]).abs() < 1e-14);
        assert_ne!(brownian_increments(5, 4, &fine, 8), a);
    }

    #[test]
    fn ensemble_is_independent_of_worker_count() {
        let p = ModelParams::figure1_left();
        let (c, g) = solved(&p, 50);
        let law = InitialLaw::from_params(&p);
        let run = |workers| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
            pool.install(|| simulate_optimal(&c, solve_mean_path(&c, &law, &g).unwrap(), &law, &SimConfig::new(40, 11)).unwrap())
        };
        assert_eq!(run(1).paths, run(3).paths);
    }

    #[test]
    fn summary_csv_has_pre_and_post_block_rows() {
        let p = ModelParams::figure1_left();
        let (c, g) = solved(&p, 10);
        let law = InitialLaw::from_params(&p);
        let e = simulate_optimal(&c, solve_mean_path(&c, &law, &g).unwrap(), &law, &SimConfig::new(5, 1)).unwrap();
        let mut buf = Vec::new();
        e.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,X_mean,X_sd,X_q05,X_q95,Y_mean,C,Z_mean");
        assert_eq!(lines.len(), 1 + 1 + 11 + 1);
        assert!(lines[1].starts_with("0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0"));
        assert!(lines[13].starts_with("1.0000000000000000e0,0.0000000000000000e0"));
    }
}
