//! Existence certificates for the coupled Riccati system of `B`.
//!
//! Writing `P = [[B11, B13], [B13, B33]]`, the `B` system reads
//! `dP/dt = P N2 N0 N2ᵀ P + N1 P + P N1ᵀ − M`. `M` is indefinite in general,
//! so the system is shifted by `Λ̃ = Λ vvᵀ` with `v = (α, β − α)`. If the
//! shifted driver `M̃` is positive semidefinite and the shifted terminal value
//! is positive definite, the standard Riccati existence theory applies.

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::report::fmt_num;
use crate::riccati::solve_b;

/// Absolute tolerance on the smallest eigenvalue of `M̃`.
pub const TOL_PSD: f64 = 1e-10;

/// The `B` system in 2×2 matrix Riccati form.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRiccatiForm {
    pub n0: f64,
    pub n1: Matrix2<f64>,
    pub n2: Vector2<f64>,
    pub m: Matrix2<f64>,
    /// `P(T) = diag(γ2/2, 0)`.
    pub terminal: Matrix2<f64>,
}

impl MatrixRiccatiForm {
    pub fn new(p: &ModelParams) -> Self {
        let (g1, g2, rho, al, lam) = (p.gamma1, p.gamma2, p.rho, p.alpha, p.lambda);
        let k = p.kappa();
        let a = p.a();
        let c = g1 * al - g2 * rho;
        let n1 = Matrix2::new(
            g1 * al / g2 + c * (g1 * al - 2.0 * lam) / (2.0 * g2 * a),
            al + al * (g1 * al - 2.0 * lam) / (2.0 * a),
            g1 * k / g2 + c * g1 * k / (2.0 * g2 * a),
            k + g1 * al * k / (2.0 * a),
        );
        let m12 = g1 * k * (g1 * al - 2.0 * lam) / (4.0 * a);
        let m = -Matrix2::new(
            (g1 * g1 * al * al - 4.0 * lam * g2 * rho) / (4.0 * a),
            m12,
            m12,
            g1 * g1 * k * k / (4.0 * a),
        );
        MatrixRiccatiForm {
            n0: 1.0 / (g2 * g2 * a),
            n1,
            n2: Vector2::new(c, g2 * al),
            m,
            terminal: Matrix2::new(0.5 * g2, 0.0, 0.0, 0.0),
        }
    }

    /// `dP/dt`.
    pub fn rhs(&self, pm: &Matrix2<f64>) -> Matrix2<f64> {
        let nn = self.n2 * self.n2.transpose() * self.n0;
        pm * nn * pm + self.n1 * pm + pm * self.n1.transpose() - self.m
    }

    /// `M̃ = −Λ̃ N2 N0 N2ᵀ Λ̃ + N1 Λ̃ + Λ̃ N1ᵀ + M`.
    pub fn shifted_driver(&self, shift: &Matrix2<f64>) -> Matrix2<f64> {
        let nn = self.n2 * self.n2.transpose() * self.n0;
        -(shift * nn * shift) + self.n1 * shift + shift * self.n1.transpose() + self.m
    }
}

pub fn build_matrix_riccati(p: &ModelParams) -> MatrixRiccatiForm {
    MatrixRiccatiForm::new(p)
}

/// Branch of the shift selection that produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    Case1_1,
    Case1_2,
    Case2,
    RiskNeutralRemark,
    GridFallback,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseTag::Case1_1 => "Case1.1",
            CaseTag::Case1_2 => "Case1.2",
            CaseTag::Case2 => "Case2",
            CaseTag::RiskNeutralRemark => "RiskNeutralRemark",
            CaseTag::GridFallback => "GridFallback",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellposednessCertificate {
    pub case: CaseTag,
    /// Shift constant `Λ`.
    pub lambda: f64,
    pub lambda_tilde: Matrix2<f64>,
    pub m_tilde: Matrix2<f64>,
    /// Ascending.
    pub eigenvalues: [f64; 2],
    /// `f(Λ)` of the representation `M̃ = f vvᵀ + (terms in g and λ)`.
    pub f_val: f64,
    pub g_val: f64,
    pub det: f64,
    pub terminal_pd: bool,
    pub passed: bool,
}

impl WellposednessCertificate {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub const CSV_HEADER: &'static str = "case,lambda,mtilde11,mtilde12,mtilde22,eig1,eig2,det,passed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.case,
            fmt_num(self.lambda),
            fmt_num(self.m_tilde[(0, 0)]),
            fmt_num(self.m_tilde[(0, 1)]),
            fmt_num(self.m_tilde[(1, 1)]),
            fmt_num(self.eigenvalues[0]),
            fmt_num(self.eigenvalues[1]),
            fmt_num(self.det),
            self.passed
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())
    }
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let r = (0.5 * (m[(0, 0)] - m[(1, 1)])).hypot(m[(0, 1)]);
    [mean - r, mean + r]
}

struct Poly {
    /// `f(Λ) = −q Λ² + s Λ − c0`
    q: f64,
    s: f64,
    c0: f64,
}

impl Poly {
    fn at(&self, x: f64) -> f64 {
        -self.q * x * x + self.s * x - self.c0
    }
}

fn dispatch_quantity(p: &ModelParams) -> f64 {
    let terms = [p.gamma1 * p.alpha, p.gamma2 * p.rho, p.gamma2 * p.kappa()];
    let k = terms[0] - terms[1] + terms[2];
    let scale = terms.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if k.abs() <= 1e-12 * scale {
        0.0
    } else {
        k
    }
}

/// `f` of the shift representation. The constant term is `−γ1²/(4a)`, which
/// is what makes `M̃ = f vvᵀ − g (…) + λ(…)` an identity.
fn shift_f(p: &ModelParams) -> Poly {
    let (g1, g2, rho, al) = (p.gamma1, p.gamma2, p.rho, p.alpha);
    let k = p.kappa();
    let a = p.a();
    let d = g1 * al - g2 * rho + g2 * k;
    Poly {
        q: al * al * d * d / (g2 * g2 * a),
        s: 2.0 * (g1 * al / g2 + g1 * al * (g1 * al - g2 * rho) / (2.0 * g2 * a) + k + g1 * al * k / (2.0 * a)),
        c0: g1 * g1 / (4.0 * a),
    }
}

/// `f` of the risk-neutral representation `M̃ = f vvᵀ`. It parametrizes the
/// shift by `2Λ`: `f_rn(Λ) = 2 f(Λ/2)` at `λ = 0`.
fn risk_neutral_f(p: &ModelParams) -> Poly {
    let (g1, g2, rho, al) = (p.gamma1, p.gamma2, p.rho, p.alpha);
    let k = p.kappa();
    let c = g2 * rho - g1 * al;
    let d = g1 * al - g2 * rho + g2 * k;
    Poly {
        q: al * al * d * d / (2.0 * g2 * g2 * c),
        s: 2.0 * k + g1 * al / g2 + g1 * al * k / c,
        c0: g1 * g1 / (2.0 * c),
    }
}

fn g_slope(p: &ModelParams) -> f64 {
    let a = p.a();
    p.lambda * ((p.gamma1 * p.alpha - p.gamma2 * p.rho) / (p.gamma2 * a) + p.kappa() / a)
}

/// `(f(Λ), g(Λ))`; for `λ = 0` the risk-neutral `f`.
pub fn eval_fg(p: &ModelParams, lambda: f64) -> (f64, f64) {
    let f = if p.lambda == 0.0 { risk_neutral_f(p).at(lambda) } else { shift_f(p).at(lambda) };
    (f, g_slope(p) * lambda)
}

fn shift_matrix(p: &ModelParams, lambda: f64) -> Matrix2<f64> {
    let (al, k) = (p.alpha, p.kappa());
    Matrix2::new(lambda * al * al, lambda * al * k, lambda * al * k, lambda * k * k)
}

/// Assembles `M̃` entry by entry for the shift `Λ` and checks it.
pub fn certify_psd(p: &ModelParams, lambda: f64) -> WellposednessCertificate {
    certify_with_case(p, lambda, default_case(p))
}

fn default_case(p: &ModelParams) -> CaseTag {
    let k = dispatch_quantity(p);
    if p.lambda == 0.0 {
        CaseTag::RiskNeutralRemark
    } else if k > 0.0 {
        CaseTag::Case2
    } else if p.alpha * k == 0.0 {
        CaseTag::Case1_1
    } else {
        CaseTag::Case1_2
    }
}

fn certify_with_case(p: &ModelParams, lambda: f64, case: CaseTag) -> WellposednessCertificate {
    let (g1, g2, rho, al, lam) = (p.gamma1, p.gamma2, p.rho, p.alpha, p.lambda);
    let k = p.kappa();
    let a = p.a();
    let c = g1 * al - g2 * rho;
    let lt = shift_matrix(p, lambda);
    let (l1, l2, l3) = (lt[(0, 0)], lt[(0, 1)], lt[(1, 1)]);
    let n11 = g1 * al / g2 + c * (g1 * al - 2.0 * lam) / (2.0 * g2 * a);
    let n12 = al + al * (g1 * al - 2.0 * lam) / (2.0 * a);
    let n21 = g1 * k / g2 + c * g1 * k / (2.0 * g2 * a);
    let n22 = k + g1 * al * k / (2.0 * a);
    let u = l1 * c + l2 * g2 * al;
    let w = l2 * c + l3 * g2 * al;
    let den = g2 * g2 * a;
    let m11 = -u * u / den + 2.0 * l1 * n11 + 2.0 * l2 * n12 - (g1 * g1 * al * al - 4.0 * lam * g2 * rho) / (4.0 * a);
    let m12 = -u * w / den + l2 * n11 + l3 * n12 + l1 * n21 + l2 * n22 - g1 * k * (g1 * al - 2.0 * lam) / (4.0 * a);
    let m22 = -w * w / den + 2.0 * l2 * n21 + 2.0 * l3 * n22 - g1 * g1 * k * k / (4.0 * a);
    let m_tilde = Matrix2::new(m11, m12, m12, m22);
    let eigenvalues = sym2_eigenvalues(&m_tilde);
    let terminal = Matrix2::new(0.5 * g2, 0.0, 0.0, 0.0) + lt;
    // with α = β = 0 the child-flow coordinate is inert and only the
    // inventory block of the terminal value matters
    let terminal_pd = if p.is_degenerate() {
        terminal[(0, 0)] > 0.0
    } else {
        terminal[(0, 0)] > 0.0 && terminal.determinant() > 0.0
    };
    WellposednessCertificate {
        case,
        lambda,
        lambda_tilde: lt,
        m_tilde,
        eigenvalues,
        f_val: shift_f(p).at(lambda),
        g_val: g_slope(p) * lambda,
        det: m11 * m22 - m12 * m12,
        terminal_pd,
        passed: eigenvalues[0] >= -TOL_PSD && terminal_pd,
    }
}

/// Doubles `Λ` from `start` until the certificate passes.
fn grow_until_certified(p: &ModelParams, start: f64, case: CaseTag) -> Option<WellposednessCertificate> {
    let mut x = start.max(1e-6);
    while x <= 1e6 {
        let cert = certify_with_case(p, x, case);
        if cert.passed {
            return Some(cert);
        }
        x *= 2.0;
    }
    None
}

fn analytic_choice(p: &ModelParams) -> Option<WellposednessCertificate> {
    let k = dispatch_quantity(p);
    if p.is_degenerate() {
        let cert = certify_with_case(p, 0.0, default_case(p));
        return cert.passed.then_some(cert);
    }
    if p.lambda == 0.0 {
        let f = risk_neutral_f(p);
        let x = if p.alpha * k == 0.0 {
            if f.s <= 0.0 {
                return None;
            }
            2.0 * f.c0.max(1e-6) / f.s
        } else {
            f.s / (2.0 * f.q)
        };
        let cert = certify_with_case(p, 0.5 * x, CaseTag::RiskNeutralRemark);
        return cert.passed.then_some(cert);
    }
    let f = shift_f(p);
    let risk_offset = if p.gamma1 == 0.0 { 0.0 } else { p.lambda * p.gamma1 * p.gamma1 / (4.0 * p.gamma2 * p.rho * p.a()) };
    if !risk_offset.is_finite() {
        return None;
    }
    if k <= 0.0 {
        if p.alpha * k == 0.0 {
            if f.s <= 0.0 {
                return None;
            }
            let root = (f.c0 + risk_offset) / f.s;
            grow_until_certified(p, 2.0 * root, CaseTag::Case1_1)
        } else {
            let cert = certify_with_case(p, f.s / (2.0 * f.q), CaseTag::Case1_2);
            cert.passed.then_some(cert)
        }
    } else {
        let s2 = f.s - 2.0 * g_slope(p);
        if f.q == 0.0 {
            if s2 <= 0.0 {
                return None;
            }
            return grow_until_certified(p, 2.0 * f.c0 / s2, CaseTag::Case2);
        }
        let cert = certify_with_case(p, s2 / (2.0 * f.q), CaseTag::Case2);
        cert.passed.then_some(cert)
    }
}

/// Logarithmic scan of `Λ ∈ [1e-6, 1e6]`; the smallest passing value wins.
pub fn grid_search(p: &ModelParams) -> Result<WellposednessCertificate> {
    let n = 200;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..n {
        let x = 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64);
        let cert = certify_with_case(p, x, CaseTag::GridFallback);
        if cert.passed {
            return Ok(cert);
        }
        if cert.terminal_pd && cert.min_eigenvalue() > best.0 {
            best = (cert.min_eigenvalue(), x);
        }
    }
    Err(Error::NoPsdLambdaFound { best_min_eigenvalue: best.0, lambda: best.1 })
}

/// Picks `Λ` by the case analysis of the existence proof, falling back to a
/// grid search when the analytic choice does not certify.
pub fn select_lambda(p: &ModelParams) -> Result<WellposednessCertificate> {
    match analytic_choice(p) {
        Some(cert) => Ok(cert),
        None => grid_search(p),
    }
}

/// Empirical thresholds in `α` for certification and for a finite `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaThresholds {
    /// Largest `α` at which certification succeeds; `None` if it never fails
    /// in the bracket.
    pub certificate: Option<f64>,
    pub solver: Option<f64>,
}

fn bisect(lo: f64, hi: f64, ok: impl Fn(f64) -> bool, what: &str) -> Result<Option<f64>> {
    if !ok(lo) {
        return Err(Error::BoundsDoNotBracket(format!("{what} already fails at alpha = {lo}")));
    }
    if ok(hi) {
        return Ok(None);
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(Some(lo))
}

/// Bisects on `α ∈ [lo, hi]` with the other parameters fixed. Parameter sets
/// violating the standing assumption count as failures for both checks.
pub fn alpha_thresholds(base: &ModelParams, lo: f64, hi: f64, grid_steps: usize) -> Result<AlphaThresholds> {
    if !(hi > lo) {
        return Err(Error::BoundsDoNotBracket(format!("empty interval [{lo}, {hi}]")));
    }
    let grid = TimeGrid::horizon(base.horizon, grid_steps)?;
    let with = |alpha: f64| ModelParams { alpha, ..base.clone() }.validate();
    let certified = |alpha: f64| with(alpha).map(|p| select_lambda(&p).is_ok()).unwrap_or(false);
    let solvable = |alpha: f64| with(alpha).map(|p| solve_b(&p, &grid).is_ok()).unwrap_or(false);
    Ok(AlphaThresholds {
        certificate: bisect(lo, hi, certified, "certification")?,
        solver: bisect(lo, hi, solvable, "the B solver")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::b_rhs;

    fn fig2_left() -> ModelParams {
        ModelParams::figure2_left()
    }

    #[test]
    fn matrix_form_constants() {
        let p = fig2_left();
        let form = build_matrix_riccati(&p);
        assert!((form.n0 - 20.0).abs() < 1e-12);
        assert_eq!(form.n2, Vector2::new(p.gamma1 * p.alpha - p.gamma2 * p.rho, p.gamma2 * p.alpha));
        let p = ModelParams { alpha: 0.0, ..ModelParams::figure1_left() };
        let m = build_matrix_riccati(&p).m;
        let (lam, g1, g2, rho, beta) = (p.lambda, p.gamma1, p.gamma2, p.rho, p.beta);
        let expected = -Matrix2::new(-4.0 * lam * g2 * rho, -2.0 * lam * g1 * beta, -2.0 * lam * g1 * beta, g1 * g1 * beta * beta)
            / (4.0 * (g2 * rho + lam));
        assert!((m - expected).amax() < 1e-15);
    }

    #[test]
    fn matrix_form_reproduces_b_system() {
        for (_, p) in ModelParams::figure_panels() {
            let form = build_matrix_riccati(&p);
            for b in [[0.25, 0.0, 0.0], [0.19, -0.03, 0.012], [0.4, 0.1, -0.05]] {
                let pm = Matrix2::new(b[0], b[1], b[1], b[2]);
                let lhs = form.rhs(&pm);
                let rhs = b_rhs(&p, &b);
                assert!((lhs[(0, 0)] - rhs[0]).abs() < 1e-12);
                assert!((lhs[(0, 1)] - rhs[1]).abs() < 1e-12);
                assert!((lhs[(1, 1)] - rhs[2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entry_formulas_match_matrix_shift() {
        for (_, p) in ModelParams::figure_panels() {
            let form = build_matrix_riccati(&p);
            for x in [0.0, 0.01, 0.7, 5.0] {
                let cert = certify_psd(&p, x);
                let direct = form.shifted_driver(&shift_matrix(&p, x));
                assert!((cert.m_tilde - direct).amax() < 1e-12 * direct.amax().max(1.0));
            }
        }
    }

    #[test]
    fn representation_through_f_and_g() {
        let p = ModelParams::figure1_left();
        let (al, k, lam, a) = (p.alpha, p.kappa(), p.lambda, p.a());
        for x in [0.05, 1.0, 3.0] {
            let cert = certify_psd(&p, x);
            let (f, g) = (cert.f_val, cert.g_val);
            let rep = Matrix2::new(
                f * al * al - 2.0 * al * al * g + lam * p.gamma2 * p.rho / a,
                f * al * k - al * k * g + lam * p.gamma1 * k / (2.0 * a),
                f * al * k - al * k * g + lam * p.gamma1 * k / (2.0 * a),
                f * k * k,
            );
            assert!((rep - cert.m_tilde).amax() < 1e-12);
        }
    }

    #[test]
    fn risk_neutral_f_values() {
        let p = fig2_left();
        let (f, g) = eval_fg(&p, 1.0);
        assert!((f - 5.975).abs() < 1e-12);
        assert_eq!(g, 0.0);
        let (f0, _) = eval_fg(&p, 0.0);
        assert!((f0 + 0.01 / (2.0 * 0.2)).abs() < 1e-15);
        for (_, p) in ModelParams::figure_panels() {
            if p.lambda == 0.0 {
                for x in [0.1, 1.0, 4.0] {
                    assert!((eval_fg(&p, 2.0 * x).0 - 2.0 * shift_f(&p).at(x)).abs() < 1e-12);
                }
            }
        }
        let p = ModelParams::figure1_left();
        assert_eq!(eval_fg(&p, 0.0).1, 0.0);
    }

    #[test]
    fn rank_one_driver_without_excitation_or_risk() {
        let p = fig2_left();
        let cert = certify_psd(&p, 1.0);
        assert!(cert.passed);
        assert!(cert.det.abs() < 1e-12);
        assert_eq!(cert.m_tilde[(0, 0)], 0.0);
        assert_eq!(cert.m_tilde[(0, 1)], 0.0);
        assert!((cert.m_tilde[(1, 1)] - 9.0 * cert.f_val).abs() < 1e-12);
        assert!((cert.eigenvalues[1] - 53.8875).abs() < 1e-10);
        for x in [0.005, 1.0, 100.0] {
            assert!(certify_psd(&p, x).passed);
        }
        assert!(!certify_psd(&p, 0.0).passed);
        assert!(!certify_psd(&ModelParams::figure2_right(), 0.0).passed);
    }

    #[test]
    fn terminal_matrix_is_positive_definite_for_positive_shift() {
        let p = ModelParams::figure1_left();
        for x in [1e-4, 1.0, 50.0] {
            let cert = certify_psd(&p, x);
            assert!(cert.terminal_pd);
            let term = Matrix2::new(0.5 * p.gamma2, 0.0, 0.0, 0.0) + cert.lambda_tilde;
            let expected = x * p.kappa().powi(2) * 0.5 * p.gamma2;
            assert!((term.determinant() - expected).abs() < 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn panels_certify_through_expected_branches() {
        for (name, p) in ModelParams::figure_panels() {
            let cert = select_lambda(&p).unwrap();
            assert!(cert.passed, "{name}");
            assert!(cert.min_eigenvalue() >= -TOL_PSD);
            if p.lambda == 0.0 {
                assert_eq!(cert.case, CaseTag::RiskNeutralRemark, "{name}");
            }
            assert!(certify_psd(&p, cert.lambda).passed);
        }
        let cert = select_lambda(&ModelParams::figure1_left()).unwrap();
        assert_eq!(cert.case, CaseTag::Case1_1);
        assert!(grid_search(&ModelParams::figure1_left()).unwrap().passed);
    }

    #[test]
    fn risk_averse_without_excitation_uses_case_one_one() {
        let p = ModelParams { alpha: 0.0, beta: 0.3, ..ModelParams::figure1_left() };
        let cert = select_lambda(&p).unwrap();
        assert_eq!(cert.case, CaseTag::Case1_1);
        assert!(cert.passed);
    }

    #[test]
    fn degenerate_model_certifies() {
        let cert = select_lambda(&ModelParams::obizhaeva_wang()).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn alpha_bisection_on_figure_one_base() {
        let p = ModelParams::figure1_left();
        let th = alpha_thresholds(&p, 0.0, 1.09, 500).unwrap();
        if let (Some(c), Some(s)) = (th.certificate, th.solver) {
            assert!(c <= s);
        }
        let p = ModelParams { alpha: 0.3, ..p };
        assert!(matches!(alpha_thresholds(&p, 5.0, 6.0, 100), Err(Error::BoundsDoNotBracket(_))));
    }
}
