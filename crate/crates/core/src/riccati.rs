//! Value-function coefficients.
//!
//! The value function is `V(t, μ) = Var(μ)(A_t) + μ̄ᵀ B_t μ̄ + D_tᵀ μ̄ + F_t`.
//! `A` and `B` are symmetric 3×3 matrices determined by three free entries
//! each, `D` by two, and `F` is scalar. All four systems are integrated
//! backward from their terminal data with fixed-step RK4.

use std::io::Write;

use nalgebra::{Matrix3, RowVector3, Vector3};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::ode::{hermite, integrate_backward, NodeSeries};
use crate::report::fmt_num;

/// Free entries `(A11, A13, A33)`.
pub type APath = NodeSeries<3>;
/// Free entries `(B11, B13, B33)`.
pub type BPath = NodeSeries<3>;
/// Free entries `(D1, D3)`.
pub type DPath = NodeSeries<2>;
pub type FPath = NodeSeries<1>;

/// `I^A` from the free entries of `A`.
pub fn ia_vector(p: &ModelParams, a: &[f64; 3]) -> RowVector3<f64> {
    RowVector3::new(
        -p.rho * a[0] - p.lambda,
        -p.rho * a[0] / p.gamma2 + p.rho,
        0.5 * p.gamma1 * p.kappa() - p.rho * a[1],
    )
}

/// `I^B` from the free entries of `B`.
pub fn ib_vector(p: &ModelParams, b: &[f64; 3]) -> RowVector3<f64> {
    let (g1, g2, al) = (p.gamma1, p.gamma2, p.alpha);
    let c = al * g1 - g2 * p.rho;
    RowVector3::new(
        c / g2 * b[0] + al * b[1] - p.lambda + 0.5 * al * g1,
        c / (g2 * g2) * b[0] + al * b[1] / g2 + p.rho - 0.5 * al * g1 / g2,
        0.5 * g1 * p.kappa() + c * b[1] / g2 + al * b[2],
    )
}

/// `I^D` from the free entries of `D`.
pub fn id_scalar(p: &ModelParams, d: &[f64; 2]) -> f64 {
    let c = p.alpha * p.gamma1 - p.gamma2 * p.rho;
    -0.5 * p.alpha * p.gamma1 * p.x0_mean + c * d[0] / (2.0 * p.gamma2) + 0.5 * p.alpha * d[1]
}

/// Time derivative of `(A11, A13, A33)`.
pub fn a_rhs(p: &ModelParams, a: &[f64; 3]) -> [f64; 3] {
    let ia = ia_vector(p, a);
    let at = p.a_tilde();
    let k = p.kappa();
    let r = p.gamma1 * k / p.gamma2;
    [
        -p.lambda + ia[0] * ia[0] / at,
        r * a[0] + k * a[1] + ia[0] * ia[2] / at,
        2.0 * k * a[2] + 2.0 * r * a[1] + ia[2] * ia[2] / at,
    ]
}

/// Time derivative of `(B11, B13, B33)`.
pub fn b_rhs(p: &ModelParams, b: &[f64; 3]) -> [f64; 3] {
    let ib = ib_vector(p, b);
    let a = p.a();
    let k = p.kappa();
    let (g1, g2, al) = (p.gamma1, p.gamma2, p.alpha);
    [
        2.0 * g1 * al / g2 * b[0] + 2.0 * al * b[1] - p.lambda + ib[0] * ib[0] / a,
        g1 * k / g2 * b[0] + al * b[2] + (k + g1 * al / g2) * b[1] + ib[0] * ib[2] / a,
        2.0 * k * b[2] + 2.0 * g1 * k / g2 * b[1] + ib[2] * ib[2] / a,
    ]
}

/// Time derivative of `(D1, D3)` given `B` at the same time.
pub fn d_rhs(p: &ModelParams, b: &[f64; 3], d: &[f64; 2]) -> [f64; 2] {
    let ib = ib_vector(p, b);
    let id = id_scalar(p, d);
    let a = p.a();
    let k = p.kappa();
    let (g1, g2, al, e) = (p.gamma1, p.gamma2, p.alpha, p.x0_mean);
    [
        -2.0 * g1 * al * e / g2 * b[0] - 2.0 * al * e * b[1] + g1 * al / g2 * d[0] + al * d[1]
            + 2.0 * ib[0] * id / a,
        -2.0 * al * e * b[2] - 2.0 * g1 * al * e / g2 * b[1] + g1 * k / g2 * d[0] + k * d[1]
            + 2.0 * ib[2] * id / a,
    ]
}

/// Drift of `−dF`, i.e. `F(t) = ∫_t^T f_driver ds`.
pub fn f_driver(p: &ModelParams, sigma: f64, a11: f64, d: &[f64; 2]) -> f64 {
    let g2 = p.gamma2;
    let e = p.x0_mean;
    let id = id_scalar(p, d);
    sigma * sigma * (2.0 * a11 - g2) / (2.0 * g2 * g2) + p.alpha * p.gamma1 * e * d[0] / g2 + p.alpha * e * d[1]
        - id * id / p.a()
}

pub fn solve_a(p: &ModelParams, grid: &TimeGrid) -> Result<APath> {
    integrate_backward(grid, [0.5 * p.gamma2, 0.0, 0.0], "A", |_, a| Ok(a_rhs(p, a)))
}

pub fn solve_b(p: &ModelParams, grid: &TimeGrid) -> Result<BPath> {
    integrate_backward(grid, [0.5 * p.gamma2, 0.0, 0.0], "B", |_, b| Ok(b_rhs(p, b)))
}

pub fn solve_d(p: &ModelParams, grid: &TimeGrid, b: &BPath) -> Result<DPath> {
    if b.grid != *grid {
        return Err(Error::GridMismatch("D must be solved on the grid of B".into()));
    }
    integrate_backward(grid, [0.0, 0.0], "D", |t, d| Ok(d_rhs(p, &b.eval(t)?, d)))
}

/// `F(t) = ∫_t^T driver ds` by composite Simpson, midpoints from Hermite
/// interpolation of `A` and `D`.
pub fn solve_f(p: &ModelParams, grid: &TimeGrid, a: &APath, d: &DPath) -> Result<FPath> {
    if a.grid != *grid || d.grid != *grid {
        return Err(Error::GridMismatch("F must be solved on the grid of A and D".into()));
    }
    let n = grid.n_steps();
    let h = grid.step();
    let node_driver: Vec<f64> =
        (0..=n).map(|k| f_driver(p, p.sigma.at(grid.node(k)), a.values[k][0], &d.values[k])).collect();
    let mut values = vec![[0.0]; n + 1];
    let mut derivs = vec![[0.0]; n + 1];
    derivs[n] = [-node_driver[n]];
    for k in (0..n).rev() {
        let tm = 0.5 * (grid.node(k) + grid.node(k + 1));
        let am = hermite(a.values[k][0], a.values[k + 1][0], a.derivs[k][0], a.derivs[k + 1][0], h, 0.5);
        let dm = [
            hermite(d.values[k][0], d.values[k + 1][0], d.derivs[k][0], d.derivs[k + 1][0], h, 0.5),
            hermite(d.values[k][1], d.values[k + 1][1], d.derivs[k][1], d.derivs[k + 1][1], h, 0.5),
        ];
        let mid = f_driver(p, p.sigma.at(tm), am, &dm);
        let right = f_driver(p, p.sigma.left_limit(grid.node(k + 1)), a.values[k + 1][0], &d.values[k + 1]);
        let incr = h / 6.0 * (node_driver[k] + 4.0 * mid + right);
        values[k] = [values[k + 1][0] + incr];
        derivs[k] = [-node_driver[k]];
        if !values[k][0].is_finite() {
            return Err(Error::NonFiniteCoefficient { system: "F", t: grid.node(k) });
        }
    }
    Ok(NodeSeries { grid: *grid, values, derivs })
}

/// Symmetric matrix from its free entries using `X11 = γ2 X21`,
/// `X12 = γ2 X22 + 1/2`, `X13 = γ2 X23`.
pub fn full_matrix(r: &[f64; 3], gamma2: f64) -> Matrix3<f64> {
    let x12 = r[0] / gamma2;
    let x22 = (x12 - 0.5) / gamma2;
    let x23 = r[1] / gamma2;
    Matrix3::new(
        r[0], x12, r[1], //
        x12, x22, x23, //
        r[1], x23, r[2],
    )
}

/// `D` with `D2 = D1 / γ2`.
pub fn full_vector(d: &[f64; 2], gamma2: f64) -> Vector3<f64> {
    Vector3::new(d[0], d[0] / gamma2, d[1])
}

/// All coefficient systems on a common grid.
#[derive(Debug, Clone)]
pub struct CoefficientPaths {
    pub params: ModelParams,
    pub a: APath,
    pub b: BPath,
    pub d: DPath,
    pub f: FPath,
}

/// Coefficient values and time derivatives at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSample {
    pub t: f64,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub d: [f64; 2],
    pub f: f64,
}

/// `I^A`, `I^B`, `I^D`, their time derivatives and the two denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackCoefficients {
    pub ia: RowVector3<f64>,
    pub ib: RowVector3<f64>,
    pub id: f64,
    pub ia_dot: RowVector3<f64>,
    pub ib_dot: RowVector3<f64>,
    pub id_dot: f64,
    pub a_tilde: f64,
    pub a: f64,
}

impl CoefficientPaths {
    pub fn solve(p: &ModelParams, grid: &TimeGrid) -> Result<Self> {
        let a = solve_a(p, grid)?;
        let b = solve_b(p, grid)?;
        let d = solve_d(p, grid, &b)?;
        let f = solve_f(p, grid, &a, &d)?;
        Ok(CoefficientPaths { params: p.clone(), a, b, d, f })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.a.grid
    }

    pub fn sample(&self, t: f64) -> Result<CoefficientSample> {
        Ok(CoefficientSample { t, a: self.a.eval(t)?, b: self.b.eval(t)?, d: self.d.eval(t)?, f: self.f.eval(t)?[0] })
    }

    pub fn a_matrix(&self, t: f64) -> Result<Matrix3<f64>> {
        Ok(full_matrix(&self.a.eval(t)?, self.params.gamma2))
    }

    pub fn b_matrix(&self, t: f64) -> Result<Matrix3<f64>> {
        Ok(full_matrix(&self.b.eval(t)?, self.params.gamma2))
    }

    pub fn d_vector(&self, t: f64) -> Result<Vector3<f64>> {
        Ok(full_vector(&self.d.eval(t)?, self.params.gamma2))
    }

    pub fn feedback(&self, t: f64) -> Result<FeedbackCoefficients> {
        Ok(feedback_from_sample(&self.params, &self.sample(t)?))
    }

    /// Whether `B11 > 0` at every node.
    pub fn b11_positive(&self) -> bool {
        self.b.values.iter().all(|v| v[0] > 0.0)
    }

    /// Writes `t,A11,A13,A33,B11,B13,B33,D1,D3,F`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,A11,A13,A33,B11,B13,B33,D1,D3,F")?;
        for (k, t) in self.grid().nodes().enumerate() {
            let (a, b, d, f) = (self.a.values[k], self.b.values[k], self.d.values[k], self.f.values[k][0]);
            let row = [t, a[0], a[1], a[2], b[0], b[1], b[2], d[0], d[1], f];
            let cells: Vec<String> = row.iter().map(|&v| fmt_num(v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Feedback coefficients at `t`; derivatives come from the ODE right-hand
/// sides at the (interpolated) coefficient values.
pub fn feedback_coeffs(coeffs: &CoefficientPaths, t: f64) -> Result<FeedbackCoefficients> {
    coeffs.feedback(t)
}

pub fn feedback_from_sample(p: &ModelParams, s: &CoefficientSample) -> FeedbackCoefficients {
    let (g2, al, rho) = (p.gamma2, p.alpha, p.rho);
    let c = al * p.gamma1 - g2 * rho;
    let ad = a_rhs(p, &s.a);
    let bd = b_rhs(p, &s.b);
    let dd = d_rhs(p, &s.b, &s.d);
    FeedbackCoefficients {
        ia: ia_vector(p, &s.a),
        ib: ib_vector(p, &s.b),
        id: id_scalar(p, &s.d),
        ia_dot: RowVector3::new(-rho * ad[0], -rho * ad[0] / g2, -rho * ad[1]),
        ib_dot: RowVector3::new(
            c / g2 * bd[0] + al * bd[1],
            c / (g2 * g2) * bd[0] + al * bd[1] / g2,
            c * bd[1] / g2 + al * bd[2],
        ),
        id_dot: c * dd[0] / (2.0 * g2) + 0.5 * al * dd[1],
        a_tilde: p.a_tilde(),
        a: p.a(),
    }
}

/// The shorthands that express the full-matrix systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullMatrixDrivers {
    pub ja: f64,
    pub ja_t: f64,
    pub ja_h: f64,
    pub jb: f64,
    pub jb_t: f64,
    pub jb_h: f64,
    pub jb_r: f64,
    pub jd: f64,
    pub jd_r: f64,
}

impl FullMatrixDrivers {
    pub fn new(p: &ModelParams, a: &Matrix3<f64>, b: &Matrix3<f64>, d: &Vector3<f64>) -> Self {
        let (g1, g2, rho, al) = (p.gamma1, p.gamma2, p.rho, p.alpha);
        let k = p.kappa();
        FullMatrixDrivers {
            ja: g1 * a[(0, 0)] + g2 * a[(0, 2)],
            ja_t: g1 * a[(0, 2)] + g2 * a[(2, 2)],
            ja_h: -rho * a[(0, 2)] + 0.5 * g1 * k,
            jb: g1 * b[(0, 0)] + g2 * b[(0, 2)],
            jb_t: g1 * b[(0, 2)] + g2 * b[(2, 2)],
            jb_h: -rho * b[(0, 2)] + 0.5 * g1 * k,
            jb_r: -rho * b[(0, 0)] + 0.5 * al * g1,
            jd: g1 * d[0] + g2 * d[2],
            jd_r: -rho * d[0] - al * g1 * p.x0_mean,
        }
    }
}

fn sym(m11: f64, m12: f64, m13: f64, m22: f64, m23: f64, m33: f64) -> Matrix3<f64> {
    Matrix3::new(m11, m12, m13, m12, m22, m23, m13, m23, m33)
}

/// `(dA/dt, dB/dt, dD/dt)` of the full-matrix systems.
pub fn full_matrix_rhs(
    p: &ModelParams,
    a: &Matrix3<f64>,
    b: &Matrix3<f64>,
    d: &Vector3<f64>,
) -> (Matrix3<f64>, Matrix3<f64>, Vector3<f64>) {
    let j = FullMatrixDrivers::new(p, a, b, d);
    let (g2, rho, al, lam) = (p.gamma2, p.rho, p.alpha, p.lambda);
    let k = p.kappa();
    let e = p.x0_mean;
    let g22 = g2 * g2;
    let mut q = Matrix3::zeros();
    q[(0, 0)] = lam;

    let a11 = a[(0, 0)];
    let lin_a = sym(
        0.0,
        -rho * a11 / g2,
        -k / g2 * j.ja,
        -rho * (2.0 * a11 - g2) / g22,
        -k / g22 * j.ja + j.ja_h / g2,
        -2.0 * k / g2 * j.ja_t,
    );
    let va = Vector3::new(-rho * a11 - lam, -rho * a11 / g2 + rho, 0.5 * p.gamma1 * k - rho * a[(0, 2)]);
    let minus_a_dot = lin_a - va * va.transpose() / p.a_tilde() + q;

    let b11 = b[(0, 0)];
    let lin_b = sym(
        -2.0 * al / g2 * j.jb,
        -al / g22 * j.jb + j.jb_r / g2,
        -k / g2 * j.jb - al / g2 * j.jb_t,
        -rho * (2.0 * b11 - g2) / g22,
        -k / g22 * j.jb + j.jb_h / g2,
        -2.0 * k / g2 * j.jb_t,
    );
    let vb = Vector3::new(
        al / g2 * j.jb + j.jb_r - lam,
        al / g22 * j.jb + j.jb_r / g2 + (rho * g2 - al * p.gamma1) / g2,
        j.jb_h + al / g2 * j.jb_t,
    );
    let minus_b_dot = lin_b - vb * vb.transpose() / p.a() + q;

    let lin_d = Vector3::new(
        2.0 * al * e / g2 * j.jb - al / g2 * j.jd,
        2.0 * al * e / g22 * j.jb + j.jd_r / g2,
        2.0 * al * e / g2 * j.jb_t - k / g2 * j.jd,
    );
    let minus_d_dot = lin_d - (al / g2 * j.jd + j.jd_r) / p.a() * vb;

    (-minus_a_dot, -minus_b_dot, -minus_d_dot)
}

/// Sup-norm discrepancies between the full-matrix integration and the
/// matrices reconstructed from the free entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CrosscheckReport {
    /// Entrywise sup over nodes of `|A_full − A_reduced|`.
    pub a_entry_sup: Matrix3<f64>,
    pub b_entry_sup: Matrix3<f64>,
    pub d_entry_sup: Vector3<f64>,
    /// Discrepancy at the terminal node.
    pub terminal: f64,
    /// Sup over nodes of the entry-relation residuals of the full integration.
    pub relation_sup: f64,
}

impl CrosscheckReport {
    pub fn sup(&self) -> f64 {
        self.a_entry_sup.amax().max(self.b_entry_sup.amax()).max(self.d_entry_sup.amax())
    }
}

fn relation_residual(m: &Matrix3<f64>, g2: f64) -> f64 {
    let r1 = (m[(0, 0)] - g2 * m[(1, 0)]).abs();
    let r2 = (m[(0, 1)] - g2 * m[(1, 1)] - 0.5).abs();
    let r3 = (m[(0, 2)] - g2 * m[(1, 2)]).abs();
    r1.max(r2).max(r3)
}

fn pack(a: &Matrix3<f64>, b: &Matrix3<f64>, d: &Vector3<f64>) -> [f64; 21] {
    let mut y = [0.0; 21];
    y[..9].copy_from_slice(a.as_slice());
    y[9..18].copy_from_slice(b.as_slice());
    y[18..].copy_from_slice(d.as_slice());
    y
}

fn unpack(y: &[f64; 21]) -> (Matrix3<f64>, Matrix3<f64>, Vector3<f64>) {
    (Matrix3::from_column_slice(&y[..9]), Matrix3::from_column_slice(&y[9..18]), Vector3::from_column_slice(&y[18..]))
}

/// Integrates the full 3×3 systems for `A`, `B` and the 3-vector system for
/// `D` independently and compares them with the reduced solution.
pub fn crosscheck_full_matrix(coeffs: &CoefficientPaths) -> Result<CrosscheckReport> {
    let p = &coeffs.params;
    let grid = coeffs.grid();
    let g2 = p.gamma2;
    let terminal = full_matrix(&[0.5 * g2, 0.0, 0.0], g2);
    let y_t = pack(&terminal, &terminal, &Vector3::zeros());
    let full = integrate_backward(grid, y_t, "full-matrix", |_, y| {
        let (a, b, d) = unpack(y);
        let (da, db, dd) = full_matrix_rhs(p, &a, &b, &d);
        Ok(pack(&da, &db, &dd))
    })?;

    let mut a_sup = Matrix3::zeros();
    let mut b_sup = Matrix3::zeros();
    let mut d_sup = Vector3::zeros();
    let mut relation_sup: f64 = 0.0;
    let mut terminal_gap = 0.0;
    let n = grid.n_steps();
    for k in 0..=n {
        let (a, b, d) = unpack(&full.values[k]);
        let ra = full_matrix(&coeffs.a.values[k], g2);
        let rb = full_matrix(&coeffs.b.values[k], g2);
        let rd = full_vector(&coeffs.d.values[k], g2);
        let (ea, eb, ed) = ((a - ra).abs(), (b - rb).abs(), (d - rd).abs());
        a_sup = a_sup.sup(&ea);
        b_sup = b_sup.sup(&eb);
        d_sup = d_sup.sup(&ed);
        relation_sup = relation_sup
            .max(relation_residual(&a, g2))
            .max(relation_residual(&b, g2))
            .max((d[0] - g2 * d[1]).abs());
        if k == n {
            terminal_gap = ea.amax().max(eb.amax()).max(ed.amax());
        }
    }
    Ok(CrosscheckReport { a_entry_sup: a_sup, b_entry_sup: b_sup, d_entry_sup: d_sup, terminal: terminal_gap, relation_sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VolSchedule;

    fn ow_closed_form(p: &ModelParams, t: f64) -> f64 {
        p.gamma2 / (2.0 + p.rho * (p.horizon - t))
    }

    #[test]
    fn risk_neutral_a11_matches_closed_form() {
        let p = ModelParams::obizhaeva_wang();
        let g = TimeGrid::horizon(1.0, 10_000).unwrap();
        let a = solve_a(&p, &g).unwrap();
        let err = g.nodes().enumerate().map(|(k, t)| (a.values[k][0] - ow_closed_form(&p, t)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err {err}");
        assert!((a.values[0][0] - 0.185_185_185_185).abs() < 1e-9);
    }

    #[test]
    fn terminal_values() {
        let p = ModelParams::figure1_left();
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 200).unwrap()).unwrap();
        assert_eq!(c.a.terminal(), [0.25, 0.0, 0.0]);
        assert_eq!(c.b.terminal(), [0.25, 0.0, 0.0]);
        assert_eq!(c.d.terminal(), [0.0, 0.0]);
        assert_eq!(c.f.terminal(), [0.0]);
    }

    #[test]
    fn no_child_impact_keeps_cross_terms_zero() {
        let p = ModelParams { lambda: 0.0, gamma1: 0.0, ..ModelParams::figure1_left() };
        let a = solve_a(&p, &TimeGrid::horizon(1.0, 500).unwrap()).unwrap();
        assert!(a.values.iter().all(|v| v[1] == 0.0 && v[2] == 0.0));
    }

    #[test]
    fn no_excitation_collapses_b_to_a_and_d_to_zero() {
        let p = ModelParams { alpha: 0.0, ..ModelParams::figure1_left() };
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 2000).unwrap()).unwrap();
        for k in 0..c.a.values.len() {
            for i in 0..3 {
                assert!((c.a.values[k][i] - c.b.values[k][i]).abs() < 1e-10);
            }
            assert!(c.d.values[k].iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn zero_mean_inventory_gives_zero_d() {
        let p = ModelParams { x0_mean: 0.0, ..ModelParams::figure1_left() };
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 500).unwrap()).unwrap();
        assert!(c.d.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn f_vanishes_without_noise_or_excitation() {
        let p = ModelParams { alpha: 0.0, sigma: VolSchedule::constant(0.0), ..ModelParams::figure1_left() };
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 500).unwrap()).unwrap();
        assert!(c.f.values.iter().all(|v| v[0].abs() < 1e-14));
    }

    #[test]
    fn f_matches_quadrature_of_closed_form() {
        let p = ModelParams { sigma: VolSchedule::constant(0.8), ..ModelParams::obizhaeva_wang() };
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 1000).unwrap()).unwrap();
        // independent Gauss-Legendre quadrature of σ²(2A11 − γ2)/(2γ2²)
        let nodes = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
        let weights = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
        let panels = 50;
        let mut integral = 0.0;
        for j in 0..panels {
            let (lo, hi) = (j as f64 / panels as f64, (j + 1) as f64 / panels as f64);
            for (x, w) in nodes.iter().zip(weights) {
                let s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
                let a11 = ow_closed_form(&p, s);
                integral += 0.5 * (hi - lo) * w * 0.64 * (2.0 * a11 - p.gamma2) / (2.0 * p.gamma2 * p.gamma2);
            }
        }
        let f0 = c.f.values[0][0];
        assert!(f0 < 0.0);
        assert!((f0 - integral).abs() < 1e-10, "{f0} vs {integral}");
    }

    #[test]
    fn feedback_identities_and_special_cases() {
        let p = ModelParams::figure1_left();
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 400).unwrap()).unwrap();
        let k = RowVector3::new(-1.0, p.gamma2, 0.0);
        for t in [0.0, 0.123, 0.5, 0.77, 1.0] {
            let fb = c.feedback(t).unwrap();
            assert!(((fb.ia * k.transpose())[0] - p.a_tilde()).abs() < 1e-13);
            assert!(((fb.ib * k.transpose())[0] - p.a()).abs() < 1e-13);
            assert!(((fb.ia_dot * k.transpose())[0]).abs() < 1e-12);
            assert!(((fb.ib_dot * k.transpose())[0]).abs() < 1e-12);
        }
        assert!(matches!(c.feedback(1.5), Err(Error::OutOfRange { .. })));

        let p = ModelParams { lambda: 0.0, ..ModelParams::figure2_left() };
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 400).unwrap()).unwrap();
        let fb = c.feedback(0.3).unwrap();
        let b = c.b.eval(0.3).unwrap();
        let expected =
            RowVector3::new(-p.rho * b[0], -p.rho * b[0] / p.gamma2 + p.rho, 0.5 * p.gamma1 * p.beta - p.rho * b[1]);
        assert!((fb.ib - expected).amax() < 1e-15);
        assert_eq!(fb.id, 0.0);
    }

    #[test]
    fn feedback_derivatives_match_finite_differences() {
        let p = ModelParams::figure1_left();
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 10_000).unwrap()).unwrap();
        let h = 1e-3;
        let t = 0.4;
        let (lo, mid, hi) = (c.feedback(t - h).unwrap(), c.feedback(t).unwrap(), c.feedback(t + h).unwrap());
        assert!(((hi.ia - lo.ia) / (2.0 * h) - mid.ia_dot).amax() < 1e-6);
        assert!(((hi.ib - lo.ib) / (2.0 * h) - mid.ib_dot).amax() < 1e-6);
        assert!(((hi.id - lo.id) / (2.0 * h) - mid.id_dot).abs() < 1e-6);
    }

    #[test]
    fn reconstruction_relations_hold() {
        let p = ModelParams::figure1_left();
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 100).unwrap()).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let a = c.a_matrix(t).unwrap();
            let b = c.b_matrix(t).unwrap();
            assert!(relation_residual(&a, p.gamma2) < 1e-15);
            assert!(relation_residual(&b, p.gamma2) < 1e-15);
            assert_eq!(a, a.transpose());
            let d = c.d_vector(t).unwrap();
            assert!((d[0] - p.gamma2 * d[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn full_matrix_integration_agrees_with_reduced() {
        for p in [ModelParams::figure1_left(), ModelParams::figure2_right()] {
            let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 2000).unwrap()).unwrap();
            let r = crosscheck_full_matrix(&c).unwrap();
            assert!(r.sup() < 1e-9, "sup {}", r.sup());
            assert_eq!(r.terminal, 0.0);
            assert!(r.relation_sup < 1e-9);
        }
    }

    #[test]
    fn b_system_is_fourth_order() {
        let p = ModelParams::figure1_left();
        let reference = solve_b(&p, &TimeGrid::horizon(1.0, 1000).unwrap()).unwrap().values[0];
        let err = |n| {
            let b = solve_b(&p, &TimeGrid::horizon(1.0, n).unwrap()).unwrap().values[0];
            (0..3).map(|i| (b[i] - reference[i]).abs()).fold(0.0, f64::max)
        };
        let ratio = err(10) / err(20);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn csv_has_header_and_one_row_per_node() {
        let p = ModelParams::figure1_left();
        let c = CoefficientPaths::solve(&p, &TimeGrid::horizon(1.0, 10).unwrap()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,A11,A13,A33,B11,B13,B33,D1,D3,F");
        assert_eq!(lines.len(), 12);
        assert!(lines[11].starts_with("1.0000000000000000e0,2.5000000000000000e-1"));
    }
}
