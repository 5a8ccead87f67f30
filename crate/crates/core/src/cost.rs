//! Monte-Carlo cost evaluation, the closed-form value function and the
//! complete-square decomposition `J = V + S_A + S_B`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::InitialLaw;
use crate::report::csv_row;
use crate::riccati::{full_matrix, full_vector, CoefficientPaths};
use crate::simulate::{simulate_affine, AffineStrategySpec, PathEnsemble, SimConfig};

/// Cost components of one path. Atoms at `0` are part of the bodies; the
/// terminal block is kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathCost {
    pub trading_body: f64,
    pub qv_body: f64,
    pub covariation: f64,
    pub risk: f64,
    pub terminal_trading: f64,
    pub terminal_qv: f64,
}

impl PathCost {
    /// `∫ Y_{s−} dZ_s`.
    pub fn trading(&self) -> f64 {
        self.trading_body + self.terminal_trading
    }

    /// `γ2/2 [Z]_T`.
    pub fn quadratic_variation(&self) -> f64 {
        self.qv_body + self.terminal_qv
    }

    pub fn total(&self) -> f64 {
        self.trading() + self.quadratic_variation() + self.covariation + self.risk
    }

    pub fn total_without_terminal_block(&self) -> f64 {
        self.trading_body + self.qv_body + self.covariation + self.risk
    }

    /// `Y_{T−} ΔZ_T + γ2/2 (ΔZ_T)²`.
    pub fn terminal_atom(&self) -> f64 {
        self.terminal_trading + self.terminal_qv
    }
}

/// Sum with pairwise reduction; the result depends only on the order of `v`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    if v.iter().all(|x| *x == v[0]) {
        return (v.first().copied().unwrap_or(f64::NAN), 0.0);
    }
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    pub paths: Vec<PathCost>,
}

impl CostLedger {
    pub fn totals(&self) -> Vec<f64> {
        self.paths.iter().map(PathCost::total).collect()
    }

    pub fn mean(&self) -> f64 {
        mean_and_se(&self.totals()).0
    }

    pub fn standard_error(&self) -> f64 {
        mean_and_se(&self.totals()).1
    }

    pub fn component_means(&self) -> [f64; 4] {
        let avg = |f: fn(&PathCost) -> f64| {
            let v: Vec<f64> = self.paths.iter().map(f).collect();
            pairwise_sum(&v) / v.len() as f64
        };
        [avg(PathCost::trading), avg(PathCost::quadratic_variation), avg(|c| c.covariation), avg(|c| c.risk)]
    }
}

/// Left-point sums for `∫Y dZ` and `∫σ d[Z,W]`, exact jump atoms, the
/// continuous part of `[Z]` from the diffusion loading and a trapezoid rule
/// for `λ∫X² ds` with `X(T−)` at the right end.
pub fn evaluate_cost(ensemble: &PathEnsemble) -> Result<CostLedger> {
    let zeta = ensemble.diffusion.as_ref().ok_or(Error::MissingDiffusionRecord)?;
    let p = &ensemble.params;
    let dt = ensemble.grid.step();
    let n = ensemble.grid.n_steps();
    let half_g2 = 0.5 * p.gamma2;
    let qv_cont: f64 = zeta.iter().map(|z| z * z * dt).sum();
    let cov: f64 = zeta.iter().zip(&ensemble.sigma).map(|(z, s)| s * z * dt).sum();
    let paths = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let mut trading = path.pre_jump[1] * path.jump0;
            for k in 0..n {
                trading += path.y[k] * (path.z[k + 1] - path.z[k]);
            }
            let mut risk = 0.5 * (path.x[0] * path.x[0] + path.x[n] * path.x[n]);
            for k in 1..n {
                risk += path.x[k] * path.x[k];
            }
            let b = path.terminal_block;
            PathCost {
                trading_body: trading,
                qv_body: half_g2 * (path.jump0 * path.jump0 + qv_cont),
                covariation: cov,
                risk: p.lambda * risk * dt,
                terminal_trading: path.y[n] * b,
                terminal_qv: half_g2 * b * b,
            }
        })
        .collect();
    Ok(CostLedger { paths })
}

/// `V = Var(μ)(A) + μ̄ᵀBμ̄ + Dᵀμ̄ + F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueReport {
    pub t: f64,
    pub variance_term: f64,
    pub mean_quadratic: f64,
    pub linear: f64,
    pub constant: f64,
}

impl ValueReport {
    pub fn total(&self) -> f64 {
        self.variance_term + self.mean_quadratic + self.linear + self.constant
    }
}

pub fn value_function(coeffs: &CoefficientPaths, law: &InitialLaw, t: f64) -> Result<ValueReport> {
    let s = coeffs.sample(t)?;
    let g2 = coeffs.params.gamma2;
    let a = full_matrix(&s.a, g2);
    let b = full_matrix(&s.b, g2);
    let d = full_vector(&s.d, g2);
    let m = law.mean;
    Ok(ValueReport {
        t,
        variance_term: law.variance_of(&a),
        mean_quadratic: m.dot(&(b * m)),
        linear: d.dot(&m),
        constant: s.f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareDecomposition {
    pub j_mean: f64,
    pub j_se: f64,
    pub s_a: f64,
    pub s_a_se: f64,
    pub s_b: f64,
    pub value: ValueReport,
    /// `J − S_A − S_B − V`.
    pub residual: f64,
    pub residual_se: f64,
}

impl SquareDecomposition {
    pub fn v(&self) -> f64 {
        self.value.total()
    }

    pub const CSV_HEADER: &'static str = "strategy_id,J_mean,J_se,S_A,S_B,V,residual,residual_se";

    pub fn csv_row(&self, id: &str) -> String {
        let nums = csv_row(&[self.j_mean, self.j_se, self.s_a, self.s_b, self.v(), self.residual, self.residual_se]);
        format!("{id},{nums}")
    }
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[(String, SquareDecomposition)]) -> std::io::Result<()> {
    writeln!(w, "{}", SquareDecomposition::CSV_HEADER)?;
    for (id, d) in rows {
        writeln!(w, "{}", d.csv_row(id))?;
    }
    Ok(())
}

/// Evaluates both square terms along a simulated ensemble (trapezoid in
/// time over `[0, T)`) and pairs them with the ledger and `V(0, law)`.
pub fn square_decomposition(
    ensemble: &PathEnsemble,
    ledger: &CostLedger,
    coeffs: &CoefficientPaths,
    law: &InitialLaw,
) -> Result<SquareDecomposition> {
    let grid = ensemble.grid;
    let n = grid.n_steps();
    let dt = grid.step();
    let w = |k: usize| if k == 0 || k == n { 0.5 * dt } else { dt };
    let mut ia = Vec::with_capacity(n + 1);
    let mut s_b = 0.0;
    let mut a_tilde = 0.0;
    for k in 0..=n {
        let fb = coeffs.feedback(grid.node(k))?;
        let r = (fb.ib * ensemble.mean.states[k])[0] + fb.id;
        s_b += w(k) * r * r / fb.a;
        ia.push(fb.ia);
        a_tilde = fb.a_tilde;
    }
    let s_a_paths: Vec<f64> = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let mut s = 0.0;
            for k in 0..=n {
                let r = (ia[k] * (path.state(k) - ensemble.mean.states[k]))[0];
                s += w(k) * r * r;
            }
            s / a_tilde
        })
        .collect();
    let value = value_function(coeffs, law, grid.t0())?;
    let totals = ledger.totals();
    let (j_mean, j_se) = mean_and_se(&totals);
    let (s_a, s_a_se) = mean_and_se(&s_a_paths);
    let diff: Vec<f64> = totals.iter().zip(&s_a_paths).map(|(j, s)| j - s).collect();
    let (d_mean, residual_se) = mean_and_se(&diff);
    Ok(SquareDecomposition {
        j_mean,
        j_se,
        s_a,
        s_a_se,
        s_b,
        value,
        residual: d_mean - s_b - value.total(),
        residual_se,
    })
}

/// Simulates `spec`, prices it and decomposes its cost.
pub fn verify_square_decomposition(
    coeffs: &CoefficientPaths,
    spec: &AffineStrategySpec,
    law: &InitialLaw,
    cfg: &SimConfig,
) -> Result<SquareDecomposition> {
    let ensemble = simulate_affine(&coeffs.params, spec, law, cfg)?;
    let ledger = evaluate_cost(&ensemble)?;
    square_decomposition(&ensemble, &ledger, coeffs, law)
}
