//! Uniform time and space grids.

use alloc::format;

use crate::error::{Error, Result};

/// Uniform grid `t_k = k * dt`, `k = 0..=n_steps`, on `[0, n_steps * dt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid with step `dt` whose horizon is `horizon` rounded to a whole
    /// number of steps.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let steps = libm::round(horizon / dt);
        if steps < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is shorter than one step {dt}"
            )));
        }
        Self::from_steps(dt, steps as usize)
    }

    pub fn from_steps(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid time grid: dt = {dt}, steps = {n_steps}"
            )));
        }
        Ok(Self { dt, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |k| self.time(k))
    }

    /// Index of the last node with `t_k <= t`, clamped to the grid.
    pub fn node_at_or_before(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        // small slack so that t = k * dt maps to k despite rounding
        let k = libm::floor(t / self.dt + 1e-9) as usize;
        k.min(self.n_steps)
    }
}

/// Uniform space grid `x_i = lo + i * dx`, `i = 0..n_nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    lo: f64,
    dx: f64,
    n_nodes: usize,
}

impl SpaceGrid {
    /// Grid from `lo` to (approximately) `hi`; the upper end is adjusted to a
    /// whole number of cells.
    pub fn new(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!("invalid space interval [{lo}, {hi}]")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidArgument(format!("space step must be positive, got {dx}")));
        }
        let cells = libm::round((hi - lo) / dx) as usize;
        if cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "space grid [{lo}, {hi}] with dx = {dx} has fewer than 3 nodes"
            )));
        }
        Ok(Self {
            lo,
            dx,
            n_nodes: cells + 1,
        })
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.x(self.n_nodes - 1)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |i| self.x(i))
    }

    /// Piecewise-linear interpolation of nodal `values` at `x`; outside the
    /// grid the boundary cell is extended linearly.
    #[inline]
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n_nodes);
        let s = (x - self.lo) / self.dx;
        let last_cell = self.n_nodes - 2;
        let cell = if s <= 0.0 {
            0
        } else {
            (libm::floor(s) as usize).min(last_cell)
        };
        let w = s - cell as f64;
        values[cell] + w * (values[cell + 1] - values[cell])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_rounds_horizon() {
        let g = TimeGrid::new(6.0, 1e-3).unwrap();
        assert_eq!(g.n_steps(), 6000);
        assert_eq!(g.n_nodes(), 6001);
        assert!((g.horizon() - 6.0).abs() < 1e-12);
        assert_eq!(g.node_at_or_before(g.time(1234)), 1234);
        assert_eq!(g.node_at_or_before(100.0), 6000);
    }

    #[test]
    fn time_grid_rejects_bad_input() {
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.01, 0.1).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_affine_data() {
        let g = SpaceGrid::new(-1.0, 1.0, 0.25).unwrap();
        let vals: alloc::vec::Vec<f64> = g.points().map(|x| 3.0 * x - 1.0).collect();
        for &x in &[-2.0, -1.0, -0.3, 0.0, 0.61, 1.0, 1.7] {
            assert!((g.interpolate(&vals, x) - (3.0 * x - 1.0)).abs() < 1e-12);
        }
    }
}
