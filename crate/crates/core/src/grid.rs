use crate::error::{Error, Result};

/// Uniform partition `t0 = s_0 < ... < s_n = t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::GridMismatch(format!("need at least 2 steps, got {n_steps}")));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::GridMismatch(format!("empty interval [{t0}, {t_end}]")));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    /// Grid on `[0, horizon]`.
    pub fn horizon(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::new(0.0, horizon, n_steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.node(k))
    }

    /// Interval index `k` and local coordinate `s ∈ [0, 1]` with
    /// `t = node(k) + s·step`. Times within `1e-9` steps of a node snap to it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let h = self.step();
        let tol = 1e-9 * h;
        if !(t >= self.t0 - tol && t <= self.t_end + tol) {
            return Err(Error::OutOfRange { t, start: self.t0, end: self.t_end });
        }
        let x = ((t - self.t0) / h).clamp(0.0, self.n_steps as f64);
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 {
            let k = nearest as usize;
            return Ok(if k == self.n_steps { (k - 1, 1.0) } else { (k, 0.0) });
        }
        let k = (x.floor() as usize).min(self.n_steps - 1);
        Ok((k, x - k as f64))
    }

    /// Index of the node at `t`, if `t` is a node.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        match self.locate(t) {
            Ok((k, s)) if s == 0.0 => Some(k),
            Ok((k, s)) if s == 1.0 => Some(k + 1),
            _ => None,
        }
    }

    /// Whether every node of `other` is a node of `self`.
    pub fn refines(&self, other: &TimeGrid) -> bool {
        self.t0 == other.t0 && self.t_end == other.t_end && self.n_steps.is_multiple_of(other.n_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_end_exactly() {
        let g = TimeGrid::horizon(1.0, 3).unwrap();
        let v: Vec<f64> = g.nodes().collect();
        assert_eq!(v.len(), 4);
        assert_eq!(v[3], 1.0);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn locate_snaps_to_nodes() {
        let g = TimeGrid::horizon(1.0, 10).unwrap();
        assert_eq!(g.locate(0.3).unwrap(), (3, 0.0));
        assert_eq!(g.locate(1.0).unwrap(), (9, 1.0));
        let (k, s) = g.locate(0.35).unwrap();
        assert_eq!(k, 3);
        assert!((s - 0.5).abs() < 1e-12);
        assert!(matches!(g.locate(1.1), Err(Error::OutOfRange { .. })));
        assert_eq!(g.node_index(1.0), Some(10));
        assert_eq!(g.node_index(0.35), None);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::horizon(1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
    }
}
