//! Fixed-step RK4 and cubic Hermite interpolation on uniform grids.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Values above this magnitude are treated as a finite-time blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e100;

/// Node values and time derivatives of an `N`-dimensional trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSeries<const N: usize> {
    pub grid: TimeGrid,
    pub values: Vec<[f64; N]>,
    pub derivs: Vec<[f64; N]>,
}

impl<const N: usize> NodeSeries<N> {
    /// Cubic Hermite interpolant; exact node values at nodes.
    pub fn eval(&self, t: f64) -> Result<[f64; N]> {
        let (k, s) = self.grid.locate(t)?;
        if s == 0.0 {
            return Ok(self.values[k]);
        }
        if s == 1.0 {
            return Ok(self.values[k + 1]);
        }
        let h = self.grid.step();
        let mut out = [0.0; N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = hermite(self.values[k][i], self.values[k + 1][i], self.derivs[k][i], self.derivs[k + 1][i], h, s);
        }
        Ok(out)
    }

    pub fn terminal(&self) -> [f64; N] {
        *self.values.last().expect("non-empty series")
    }

    pub fn initial(&self) -> [f64; N] {
        self.values[0]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }
}

/// Cubic Hermite interpolation on `[x_k, x_k + h]` at local coordinate `s`.
pub fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, x: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * x[i];
    }
    out
}

/// Integrates `dy/dt = f(t, y)` backward from `terminal` at the grid end to
/// the grid start with classical RK4. The derivative returned for each node is
/// `f` evaluated at the node value.
pub fn integrate_backward<const N: usize, F>(
    grid: &TimeGrid,
    terminal: [f64; N],
    system: &'static str,
    f: F,
) -> Result<NodeSeries<N>>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let n = grid.n_steps();
    let h = -grid.step();
    let mut values = vec![[0.0; N]; n + 1];
    let mut derivs = vec![[0.0; N]; n + 1];
    values[n] = terminal;
    derivs[n] = f(grid.node(n), &terminal)?;
    for k in (0..n).rev() {
        let t = grid.node(k + 1);
        let y = values[k + 1];
        let k1 = derivs[k + 1];
        let k2 = f(t + 0.5 * h, &axpy(&y, 0.5 * h, &k1))?;
        let k3 = f(t + 0.5 * h, &axpy(&y, 0.5 * h, &k2))?;
        let k4 = f(grid.node(k), &axpy(&y, h, &k3))?;
        let mut next = y;
        for i in 0..N {
            next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_k = grid.node(k);
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD) {
            return Err(Error::NonFiniteCoefficient { system, t: t_k });
        }
        let d = f(t_k, &next)?;
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { system, t: t_k });
        }
        values[k] = next;
        derivs[k] = d;
    }
    Ok(NodeSeries { grid: *grid, values, derivs })
}
