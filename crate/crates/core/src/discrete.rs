//! Discrete-time dynamic program on a uniform grid of `N` steps.
//!
//! At step `n` the trader sells `ξ_n`, then the state moves by
//! `S_{n+1} = 𝒜 S_n + 𝒜̄ E[S_n] + 𝓑 ξ_n + 𝓑̄ E[ξ_n] + 𝒞 + 𝒟 √Δ ε_n`. The
//! value is `tr(A_n Σ_n) + μ̄ᵀB_nμ̄ + D_nᵀμ̄ + F_n`; the recursion inverts
//! only the scalars `ã_n` and `a_n`. Liquidation is forced at `n = N`.

use std::io::Write;

use nalgebra::{Matrix3, RowVector3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::report::csv_row;
use crate::riccati::CoefficientPaths;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub params: ModelParams,
    pub n_steps: usize,
    pub delta: f64,
    pub a: Matrix3<f64>,
    pub a_bar: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub b_bar: Vector3<f64>,
    pub c: Vector3<f64>,
    pub l: Vector3<f64>,
    pub r: f64,
    pub q: Matrix3<f64>,
}

impl DiscreteModel {
    pub fn new(p: &ModelParams, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidParameter { name: "N", reason: format!("need at least 2 steps, got {n_steps}") });
        }
        let d = p.horizon / n_steps as f64;
        let (g1, g2, rho, al, k) = (p.gamma1, p.gamma2, p.rho, p.alpha, p.kappa());
        let e = p.x0_mean;
        let mut q = Matrix3::zeros();
        q[(0, 0)] = d * p.lambda;
        Ok(DiscreteModel {
            params: p.clone(),
            n_steps,
            delta: d,
            a: Matrix3::new(
                1.0, 0.0, 0.0, //
                0.0, 1.0 - d * rho, -d * g1 * k, //
                0.0, 0.0, 1.0 - k * d,
            ),
            a_bar: Matrix3::new(
                0.0, 0.0, 0.0, //
                -al * d * g1, 0.0, 0.0, //
                -al * d, 0.0, 0.0,
            ),
            b: Vector3::new(-1.0, (1.0 - d * rho) * g2, 0.0),
            b_bar: Vector3::new(0.0, al * d * g1, al * d),
            c: Vector3::new(0.0, d * al * g1 * e, d * al * e),
            l: Vector3::new(0.0, 1.0, 0.0),
            r: 0.5 * g2,
            q,
        })
    }

    pub fn noise(&self, n: usize) -> Vector3<f64> {
        Vector3::new(0.0, self.params.sigma.at(n as f64 * self.delta), 0.0)
    }

    /// Value matrices at `n = N` from forced liquidation `ξ_N = X_N`.
    pub fn terminal_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.r + self.delta * self.params.lambda, 0.5, 0.0, //
            0.5, 0.0, 0.0, //
            0.0, 0.0, 0.0,
        )
    }
}

/// Backward sequences indexed by `n = 0..=N`; the feedback quantities are
/// indexed by `n = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDPResult {
    pub model: DiscreteModel,
    pub a: Vec<Matrix3<f64>>,
    pub b: Vec<Matrix3<f64>>,
    pub d: Vec<Vector3<f64>>,
    pub f: Vec<f64>,
    pub a_tilde: Vec<f64>,
    pub a_n: Vec<f64>,
    pub ia: Vec<RowVector3<f64>>,
    pub ib: Vec<RowVector3<f64>>,
    pub id: Vec<f64>,
}

/// Residuals of the entry relations of `A_n`, `B_n` and `D_n`.
pub fn relation_residuals(p: &ModelParams, delta: f64, m: &Matrix3<f64>) -> [f64; 3] {
    let g2 = p.gamma2;
    [
        -m[(0, 0)] + g2 * m[(1, 0)] + p.lambda * delta,
        -m[(0, 1)] + g2 * m[(1, 1)] + 0.5,
        -m[(0, 2)] + g2 * m[(1, 2)],
    ]
}

impl DiscreteDPResult {
    pub fn n_steps(&self) -> usize {
        self.model.n_steps
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.model.delta
    }

    /// Largest relation residual over all steps, relative to the entries
    /// involved.
    pub fn max_relation_residual(&self) -> f64 {
        let p = &self.model.params;
        let mut worst: f64 = 0.0;
        for n in 0..=self.n_steps() {
            for m in [&self.a[n], &self.b[n]] {
                let scale = m.amax().max(1.0);
                for r in relation_residuals(p, self.model.delta, m) {
                    worst = worst.max(r.abs() / scale);
                }
            }
            let d = &self.d[n];
            worst = worst.max((-d[0] + p.gamma2 * d[1]).abs() / d.amax().max(1.0));
        }
        worst
    }

    /// `n,t,A11,A13,A33,B11,B13,B33,D1,D3,F`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,t,A11,A13,A33,B11,B13,B33,D1,D3,F")?;
        for n in 0..=self.n_steps() {
            let (a, b, d) = (&self.a[n], &self.b[n], &self.d[n]);
            let row = [self.time(n), a[(0, 0)], a[(0, 2)], a[(2, 2)], b[(0, 0)], b[(0, 2)], b[(2, 2)], d[0], d[2], self.f[n]];
            writeln!(w, "{n},{}", csv_row(&row))?;
        }
        Ok(())
    }
}

pub fn run_dp(p: &ModelParams, n_steps: usize) -> Result<DiscreteDPResult> {
    let m = DiscreteModel::new(p, n_steps)?;
    let n_total = n_steps;
    let bb = m.b + m.b_bar;
    let aa = m.a + m.a_bar;
    let mut a = vec![Matrix3::zeros(); n_total + 1];
    let mut b = vec![Matrix3::zeros(); n_total + 1];
    let mut d = vec![Vector3::zeros(); n_total + 1];
    let mut f = vec![0.0; n_total + 1];
    let mut a_tilde = vec![0.0; n_total];
    let mut a_n = vec![0.0; n_total];
    let mut ia = vec![RowVector3::zeros(); n_total];
    let mut ib = vec![RowVector3::zeros(); n_total];
    let mut id = vec![0.0; n_total];
    a[n_total] = m.terminal_matrix();
    b[n_total] = m.terminal_matrix();

    for n in (0..n_total).rev() {
        let (an, bn, dn) = (a[n + 1], b[n + 1], d[n + 1]);
        let at = m.r + (m.b.transpose() * an * m.b)[0];
        let a_ = m.r + (bb.transpose() * bn * bb)[0];
        if !(at > 0.0) {
            return Err(Error::SingularDenominator { n, which: "a_tilde", value: at });
        }
        if !(a_ > 0.0) {
            return Err(Error::SingularDenominator { n, which: "a", value: a_ });
        }
        let i_a = 0.5 * m.l.transpose() + m.b.transpose() * an * m.a;
        let i_b = 0.5 * m.l.transpose() + bb.transpose() * bn * aa;
        let i_d = (m.c.transpose() * bn * bb)[0] + 0.5 * dn.dot(&bb);
        let dv = m.noise(n);

        a[n] = m.q + m.a.transpose() * an * m.a - i_a.transpose() * i_a / at;
        b[n] = m.q + aa.transpose() * bn * aa - i_b.transpose() * i_b / a_;
        let d_row = -2.0 * i_d * i_b / a_ + (2.0 * m.c.transpose() * bn + dn.transpose()) * aa;
        d[n] = d_row.transpose();
        f[n] = -i_d * i_d / a_ + m.delta * (dv.transpose() * an * dv)[0] + (m.c.transpose() * bn * m.c)[0] + dn.dot(&m.c) + f[n + 1];

        let finite = a[n].iter().chain(b[n].iter()).chain(d[n].iter()).all(|v| v.is_finite()) && f[n].is_finite();
        if !finite {
            return Err(Error::NonFinite { what: "discrete coefficient", t: n as f64 * m.delta });
        }
        a_tilde[n] = at;
        a_n[n] = a_;
        ia[n] = i_a;
        ib[n] = i_b;
        id[n] = i_d;
    }
    Ok(DiscreteDPResult { model: m, a, b, d, f, a_tilde, a_n, ia, ib, id })
}

/// `ξ*_n = −(I^A_n/ã_n)(state − mean) − (I^B_n/a_n)·mean − I^D_n/a_n`.
pub fn discrete_control(result: &DiscreteDPResult, n: usize, state: &Vector3<f64>, mean: &Vector3<f64>) -> f64 {
    if n == result.n_steps() {
        return state[0];
    }
    -(result.ia[n] * (state - mean))[0] / result.a_tilde[n] - (result.ib[n] * mean)[0] / result.a_n[n] - result.id[n] / result.a_n[n]
}

/// Mean of the discrete controlled chain: states `E[S_n]` for `n = 0..=N`
/// (before trading at `n`) and trades `E[ξ_n]`, the last being the forced
/// liquidation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeanChain {
    pub states: Vec<Vector3<f64>>,
    pub trades: Vec<f64>,
}

pub fn discrete_mean_chain(result: &DiscreteDPResult, start: &Vector3<f64>) -> DiscreteMeanChain {
    let m = &result.model;
    let aa = m.a + m.a_bar;
    let bb = m.b + m.b_bar;
    let mut states = vec![*start];
    let mut trades = Vec::with_capacity(m.n_steps + 1);
    let mut s = *start;
    for n in 0..m.n_steps {
        let xi = discrete_control(result, n, &s, &s);
        trades.push(xi);
        s = aa * s + bb * xi + m.c;
        states.push(s);
    }
    trades.push(s[0]);
    DiscreteMeanChain { states, trades }
}

/// Sup-node errors of one discrete solution against continuous references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub err_a: f64,
    pub err_b: f64,
    pub err_d: f64,
    pub err_f: f64,
    /// `sup |I^A_n/Δ − I^A(nΔ)|`.
    pub err_ia: f64,
    /// `sup |ã_n/Δ − ã|`.
    pub err_a_tilde: f64,
    /// Sup of the discrete mean inventory against the continuous mean path.
    pub err_mean_inventory: f64,
    pub max_relation_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub results: Vec<DiscreteDPResult>,
}

impl ConvergenceReport {
    /// `log2(err(N)/err(2N))` for consecutive rows, per error column
    /// `[A, B, D, F]`.
    pub fn orders(&self) -> Vec<[f64; 4]> {
        self.rows
            .windows(2)
            .map(|w| {
                let ratio = (w[1].n_steps as f64 / w[0].n_steps as f64).log2();
                let o = |e0: f64, e1: f64| (e0 / e1).log2() / ratio;
                [o(w[0].err_a, w[1].err_a), o(w[0].err_b, w[1].err_b), o(w[0].err_d, w[1].err_d), o(w[0].err_f, w[1].err_f)]
            })
            .collect()
    }

    /// `N,errA,errB,errD,errF`.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,errA,errB,errD,errF")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.n_steps, csv_row(&[r.err_a, r.err_b, r.err_d, r.err_f]))?;
        }
        Ok(())
    }
}

/// Resolution of the continuous reference used by [`convergence_report`].
pub const REFERENCE_STEPS: usize = 10_000;

fn sup3(pairs: [(f64, f64); 3]) -> f64 {
    pairs.iter().fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn compare(res: DiscreteDPResult, reference: &CoefficientPaths) -> Result<(ConvergenceRow, DiscreteDPResult)> {
    let p = &res.model.params;
    let n_steps = res.n_steps();
    let (mut ea, mut eb, mut ed, mut ef, mut eia, mut eat) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for n in 0..=n_steps {
        let t = res.time(n).min(p.horizon);
        let s = reference.sample(t)?;
        let (a, b, d) = (&res.a[n], &res.b[n], &res.d[n]);
        ea = ea.max(sup3([(a[(0, 0)], s.a[0]), (a[(0, 2)], s.a[1]), (a[(2, 2)], s.a[2])]));
        eb = eb.max(sup3([(b[(0, 0)], s.b[0]), (b[(0, 2)], s.b[1]), (b[(2, 2)], s.b[2])]));
        ed = ed.max((d[0] - s.d[0]).abs().max((d[2] - s.d[1]).abs()));
        ef = ef.max((res.f[n] - s.f).abs());
        if n < n_steps {
            let fb = reference.feedback(t)?;
            let scaled = res.ia[n] / res.model.delta;
            eia = eia.max((scaled - fb.ia).amax());
            eat = eat.max((res.a_tilde[n] / res.model.delta - fb.a_tilde).abs());
        }
    }
    let start = Vector3::new(p.x0_mean, p.y0, p.c0);
    let chain = discrete_mean_chain(&res, &start);
    let law = crate::model::InitialLaw::deterministic(start);
    let mean = crate::simulate::solve_mean_path(reference, &law, reference.grid())?;
    let mut em: f64 = 0.0;
    for n in 1..=n_steps {
        let t = res.time(n).min(p.horizon);
        let k = reference.grid().node_index(t).ok_or_else(|| Error::GridMismatch(format!("{n_steps} steps do not divide the reference grid")))?;
        em = em.max((chain.states[n][0] - mean.states[k][0]).abs());
    }
    let row = ConvergenceRow {
        n_steps,
        err_a: ea,
        err_b: eb,
        err_d: ed,
        err_f: ef,
        err_ia: eia,
        err_a_tilde: eat,
        err_mean_inventory: em,
        max_relation_residual: res.max_relation_residual(),
    };
    Ok((row, res))
}

/// Runs the dynamic program for every `N` (in parallel) and compares each
/// against continuous coefficients solved at [`REFERENCE_STEPS`].
pub fn convergence_report(p: &ModelParams, n_list: &[usize]) -> Result<ConvergenceReport> {
    let grid = TimeGrid::horizon(p.horizon, REFERENCE_STEPS)?;
    let reference = CoefficientPaths::solve(p, &grid)?;
    convergence_report_with(&reference, n_list)
}

pub fn convergence_report_with(reference: &CoefficientPaths, n_list: &[usize]) -> Result<ConvergenceReport> {
    let pairs = n_list
        .par_iter()
        .map(|&n| compare(run_dp(&reference.params, n)?, reference))
        .collect::<Result<Vec<_>>>()?;
    let (rows, results) = pairs.into_iter().unzip();
    Ok(ConvergenceReport { rows, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VolSchedule;

    #[test]
    fn terminal_data_satisfies_relations() {
        let p = ModelParams::figure1_left();
        let m = DiscreteModel::new(&p, 10).unwrap();
        for r in relation_residuals(&p, m.delta, &m.terminal_matrix()) {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn model_tends_to_continuous_loadings() {
        let p = ModelParams::figure1_left();
        let m = DiscreteModel::new(&p, 1_000_000).unwrap();
        assert!((m.a - Matrix3::identity()).amax() < 1e-5);
        assert!((m.b - Vector3::new(-1.0, p.gamma2, 0.0)).amax() < 1e-5);
        assert!(DiscreteModel::new(&p, 1).is_err());
    }

    #[test]
    fn recursion_keeps_block_structure_without_child_flow() {
        let p = ModelParams { gamma1: 0.0, alpha: 0.0, lambda: 0.0, ..ModelParams::figure1_left() };
        let r = run_dp(&p, 20).unwrap();
        for n in 0..=20 {
            assert_eq!(r.a[n][(0, 2)], 0.0);
            assert_eq!(r.a[n][(2, 2)], 0.0);
        }
    }

    #[test]
    fn alpha_zero_gives_equal_sequences() {
        let p = ModelParams { alpha: 0.0, ..ModelParams::figure1_left() };
        let r = run_dp(&p, 50).unwrap();
        for n in 0..=50 {
            assert!((r.a[n] - r.b[n]).amax() < 1e-14);
            assert!(r.d[n].amax() < 1e-14);
        }
    }

    #[test]
    fn relations_hold_at_every_step() {
        for (_, p) in ModelParams::figure_panels() {
            let r = run_dp(&p, 200).unwrap();
            assert!(r.max_relation_residual() < 1e-12, "{}", r.max_relation_residual());
        }
        let r = run_dp(&ModelParams::obizhaeva_wang(), 2).unwrap();
        assert!(r.max_relation_residual() < 1e-14);
        assert!(r.f.iter().all(|f| f.is_finite()));
    }

    #[test]
    fn a_tilde_scales_with_step() {
        let p = ModelParams::figure1_left();
        let target = p.lambda + p.gamma2 * p.rho;
        let e1 = run_dp(&p, 100).unwrap().a_tilde.iter().map(|a| (a / 0.01 - target).abs()).fold(0.0, f64::max);
        let e2 = run_dp(&p, 200).unwrap().a_tilde.iter().map(|a| (a / 0.005 - target).abs()).fold(0.0, f64::max);
        assert!(e1 < 0.1 && e2 < 0.6 * e1, "{e1} {e2}");
    }

    #[test]
    fn control_special_cases() {
        let p = ModelParams::obizhaeva_wang();
        let r = run_dp(&p, 4000).unwrap();
        let s = Vector3::new(1.0, 0.0, 0.0);
        let xi = discrete_control(&r, 0, &s, &s);
        assert!((xi - 1.0 / 2.7).abs() < 1e-3, "{xi}");
        let expected = -(r.ib[0] * s)[0] / r.a_n[0] - r.id[0] / r.a_n[0];
        assert_eq!(xi, expected);

        let q = ModelParams { x0_mean: 0.0, ..ModelParams::figure1_left() };
        let r = run_dp(&q, 50).unwrap();
        assert!(r.id.iter().all(|&v| v == 0.0));
        let x = Vector3::new(0.3, 0.1, 0.0);
        let xi = discrete_control(&r, 7, &x, &Vector3::zeros());
        assert_eq!(xi, -(r.ia[7] * x)[0] / r.a_tilde[7]);
    }

    #[test]
    fn mean_chain_liquidates() {
        let p = ModelParams::figure2_right();
        let r = run_dp(&p, 100).unwrap();
        let chain = discrete_mean_chain(&r, &Vector3::new(1.0, 0.0, 0.0));
        let sold: f64 = chain.trades.iter().sum();
        assert!((sold - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_volatility_makes_constant_term_vanish_without_drift_input() {
        let p = ModelParams { sigma: VolSchedule::constant(0.0), alpha: 0.0, ..ModelParams::figure1_left() };
        let r = run_dp(&p, 30).unwrap();
        assert!(r.f.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn summary_csv_layout() {
        let rep = convergence_report(&ModelParams::figure1_left(), &[50, 100]).unwrap();
        let mut buf = Vec::new();
        rep.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,errA,errB,errD,errF\n50,"));
        assert_eq!(rep.orders().len(), 1);
        let mut buf = Vec::new();
        rep.results[0].write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 52);
    }
}
