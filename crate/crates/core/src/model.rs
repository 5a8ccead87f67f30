//! Model parameters, the linear state dynamics and the initial law.
//!
//! The controlled state is `(X, Y, C)`: remaining inventory, transient price
//! impact and expected child-order flow. In matrix form
//!
//! ```text
//! dS = (H S + Hbar E[S] + G) ds + Dvec(s) dW + K dZ
//! ```
//!
//! with running cost `S' Q S`.

use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// Right-continuous, piecewise-constant, nonnegative volatility schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSchedule {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl VolSchedule {
    pub fn constant(sigma: f64) -> Self {
        VolSchedule { breakpoints: vec![0.0], values: vec![sigma] }
    }

    /// Builds a schedule from `(start_time, value)` pairs. The first segment
    /// must start at 0 and start times must increase strictly.
    pub fn piecewise(segments: &[(f64, f64)]) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidParameter { name: "sigma", reason: reason.to_string() };
        if segments.is_empty() {
            return Err(bad("empty schedule"));
        }
        if segments[0].0 != 0.0 {
            return Err(bad("first segment must start at t = 0"));
        }
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(bad("segment start times must increase"));
            }
        }
        for &(t, v) in segments {
            if !t.is_finite() || !v.is_finite() {
                return Err(bad("non-finite entry"));
            }
            if v < 0.0 {
                return Err(bad("volatility must be nonnegative"));
            }
        }
        Ok(VolSchedule {
            breakpoints: segments.iter().map(|s| s.0).collect(),
            values: segments.iter().map(|s| s.1).collect(),
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1)]
    }

    /// Value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b < t);
        self.values[idx.saturating_sub(1)]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints.iter().copied().zip(self.values.iter().copied())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for VolSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.values.len() == 1 {
            return write!(f, "{}", self.values[0]);
        }
        let parts: Vec<String> = self.segments().map(|(t, v)| format!("{t}:{v}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

impl std::str::FromStr for VolSchedule {
    type Err = Error;

    /// Accepts either a single number or `t0:v0, t1:v1, ...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::InvalidParameter { name: "sigma", reason };
        let s = s.trim();
        if !s.contains(':') {
            let v: f64 = s.parse().map_err(|_| bad(format!("cannot parse `{s}`")))?;
            return VolSchedule::piecewise(&[(0.0, v)]);
        }
        let mut segments = Vec::new();
        for part in s.split(',') {
            let (t, v) = part
                .split_once(':')
                .ok_or_else(|| bad(format!("expected `time:value`, got `{}`", part.trim())))?;
            let t: f64 = t.trim().parse().map_err(|_| bad(format!("cannot parse `{}`", t.trim())))?;
            let v: f64 = v.trim().parse().map_err(|_| bad(format!("cannot parse `{}`", v.trim())))?;
            segments.push((t, v));
        }
        VolSchedule::piecewise(&segments)
    }
}

/// Model constants, volatility schedule and initial-state law.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Price impact of child orders.
    pub gamma1: f64,
    /// Instantaneous and transient self-impact.
    pub gamma2: f64,
    /// Impact decay rate.
    pub rho: f64,
    /// Child-order excitation rate.
    pub alpha: f64,
    /// Child-order mean-reversion rate.
    pub beta: f64,
    /// Risk-aversion weight.
    pub lambda: f64,
    pub horizon: f64,
    pub sigma: VolSchedule,
    pub x0_mean: f64,
    pub x0_var: f64,
    pub y0: f64,
    pub c0: f64,
}

impl ModelParams {
    /// Denominator `a = γ2ρ − γ1α + λ` of the mean feedback.
    pub fn a(&self) -> f64 {
        self.gamma2 * self.rho - self.gamma1 * self.alpha + self.lambda
    }

    /// Denominator `ã = γ2ρ + λ` of the deviation feedback.
    pub fn a_tilde(&self) -> f64 {
        self.gamma2 * self.rho + self.lambda
    }

    /// Net decay rate `β − α` of the child-order flow.
    pub fn kappa(&self) -> f64 {
        self.beta - self.alpha
    }

    /// The Obizhaeva–Wang degenerate case `α = β = 0`.
    pub fn is_degenerate(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }

    /// Returns the parameters unchanged when every invariant holds.
    pub fn validate(self) -> Result<Self> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::NonpositiveHorizon(self.horizon));
        }
        if !(self.x0_var >= 0.0) {
            return Err(Error::NegativeVariance(self.x0_var));
        }
        let named = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("x0_mean", self.x0_mean),
            ("x0_var", self.x0_var),
            ("y0", self.y0),
            ("c0", self.c0),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { name, reason: format!("{v} is not finite") });
            }
        }
        for (name, v) in [("gamma1", self.gamma1), ("rho", self.rho), ("alpha", self.alpha), ("lambda", self.lambda)] {
            if v < 0.0 {
                return Err(Error::InvalidParameter { name, reason: format!("must be nonnegative, got {v}") });
            }
        }
        if !(self.gamma2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma2",
                reason: format!("must be positive, got {}", self.gamma2),
            });
        }
        if self.sigma.min_value() < 0.0 {
            return Err(Error::InvalidParameter { name: "sigma", reason: "must be nonnegative".into() });
        }
        if !(self.kappa() > 0.0) && !self.is_degenerate() {
            return Err(Error::StandingAssumptionViolated { condition: "beta - alpha > 0", value: self.kappa() });
        }
        if !(self.a() > 0.0) {
            return Err(Error::StandingAssumptionViolated {
                condition: "gamma2*rho - gamma1*alpha + lambda > 0",
                value: self.a(),
            });
        }
        if !(self.a_tilde() > 0.0) {
            return Err(Error::StandingAssumptionViolated {
                condition: "gamma2*rho + lambda > 0",
                value: self.a_tilde(),
            });
        }
        Ok(self)
    }

    fn base(lambda: f64, rho: f64, gamma1: f64, gamma2: f64, alpha: f64, beta: f64) -> Self {
        ModelParams {
            gamma1,
            gamma2,
            rho,
            alpha,
            beta,
            lambda,
            horizon: 1.0,
            sigma: VolSchedule::constant(0.8),
            x0_mean: 1.0,
            x0_var: 0.0,
            y0: 0.0,
            c0: 0.0,
        }
    }

    /// Risk-averse trader with moderate child-order excitation.
    pub fn figure1_left() -> Self {
        Self::base(1.5, 0.7, 0.1, 0.5, 0.5, 1.1)
    }

    /// As [`ModelParams::figure1_left`] but risk neutral.
    pub fn figure1_right() -> Self {
        Self::base(0.0, 0.7, 0.1, 0.5, 0.5, 1.1)
    }

    /// Risk neutral, slow impact decay, no child-order excitation.
    pub fn figure2_left() -> Self {
        Self::base(0.0, 0.4, 0.1, 0.5, 0.0, 3.0)
    }

    /// As [`ModelParams::figure2_left`] with strong excitation `α = 1.8`.
    pub fn figure2_right() -> Self {
        Self::base(0.0, 0.4, 0.1, 0.5, 1.8, 3.0)
    }

    /// Risk neutral with large self-impact `γ2 = 2`.
    pub fn figure3_left() -> Self {
        Self::base(0.0, 0.7, 0.1, 2.0, 0.5, 1.1)
    }

    /// Risk neutral with small self-impact `γ2 = 0.3`.
    pub fn figure3_right() -> Self {
        Self::base(0.0, 0.7, 0.1, 0.3, 0.5, 1.1)
    }

    /// Obizhaeva–Wang: no child orders, no noise, risk neutral.
    pub fn obizhaeva_wang() -> Self {
        ModelParams { sigma: VolSchedule::constant(0.0), ..Self::base(0.0, 0.7, 0.0, 0.5, 0.0, 0.0) }
    }

    /// The six panel parameter sets, labelled.
    pub fn figure_panels() -> [(&'static str, ModelParams); 6] {
        [
            ("fig1_left", Self::figure1_left()),
            ("fig1_right", Self::figure1_right()),
            ("fig2_left", Self::figure2_left()),
            ("fig2_right", Self::figure2_right()),
            ("fig3_left", Self::figure3_left()),
            ("fig3_right", Self::figure3_right()),
        ]
    }
}

/// Matrix form of the state dynamics and running cost.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrices {
    pub h: Matrix3<f64>,
    pub h_bar: Matrix3<f64>,
    pub g: Vector3<f64>,
    pub k: Vector3<f64>,
    pub q: Matrix3<f64>,
    sigma: VolSchedule,
}

impl StateMatrices {
    pub fn new(p: &ModelParams) -> Self {
        let kappa = p.kappa();
        let h = Matrix3::new(
            0.0, 0.0, 0.0, //
            0.0, -p.rho, -p.gamma1 * kappa, //
            0.0, 0.0, -kappa,
        );
        let h_bar = Matrix3::new(
            0.0, 0.0, 0.0, //
            -p.alpha * p.gamma1, 0.0, 0.0, //
            -p.alpha, 0.0, 0.0,
        );
        let g = Vector3::new(0.0, p.alpha * p.gamma1 * p.x0_mean, p.alpha * p.x0_mean);
        let k = Vector3::new(-1.0, p.gamma2, 0.0);
        let mut q = Matrix3::zeros();
        q[(0, 0)] = p.lambda;
        StateMatrices { h, h_bar, g, k, q, sigma: p.sigma.clone() }
    }

    /// Noise loading `(0, σ(t), 0)`.
    pub fn dvec(&self, t: f64) -> Vector3<f64> {
        Vector3::new(0.0, self.sigma.at(t), 0.0)
    }
}

/// Law of the initial state: mean vector and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl InitialLaw {
    /// Deterministic `Y`, `C`; inventory with the configured mean and variance.
    pub fn from_params(p: &ModelParams) -> Self {
        let mut cov = Matrix3::zeros();
        cov[(0, 0)] = p.x0_var;
        InitialLaw { mean: Vector3::new(p.x0_mean, p.y0, p.c0), cov }
    }

    pub fn deterministic(mean: Vector3<f64>) -> Self {
        InitialLaw { mean, cov: Matrix3::zeros() }
    }

    pub fn validate(self) -> Result<Self> {
        let asym = (self.cov - self.cov.transpose()).amax();
        if asym > 0.0 {
            return Err(Error::InvalidParameter { name: "cov", reason: "covariance must be symmetric".into() });
        }
        let scale = self.cov.amax().max(1.0);
        let min_eig = SymmetricEigen::new(self.cov).eigenvalues.min();
        if min_eig < -1e-12 * scale {
            return Err(Error::NegativeVariance(min_eig));
        }
        Ok(self)
    }

    pub fn is_deterministic(&self) -> bool {
        self.cov.iter().all(|&v| v == 0.0)
    }

    /// `Var(μ)(A) = tr(A Σ)`.
    pub fn variance_of(&self, a: &Matrix3<f64>) -> f64 {
        (a * self.cov).trace()
    }

    /// A square root `S` with `S Sᵀ = Σ`, used to draw Gaussian initial states.
    pub fn cov_sqrt(&self) -> Matrix3<f64> {
        let eig = SymmetricEigen::new(self.cov);
        let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        eig.eigenvectors * Matrix3::from_diagonal(&d)
    }
}
