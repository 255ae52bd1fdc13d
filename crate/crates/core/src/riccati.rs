//! Finite-horizon Riccati oracle for the decoupling coefficients.
//!
//! With the ansatz `Y_t = p_t X_t + q_t m_t` in the equilibrium FBSDE,
//! matching the `X` and `m` coefficients gives, with `g = b3^2 / (2C)`,
//!
//! ```text
//! dp/dt = (r - 2 b1) p + g p^2 - 2A
//! dq/dt = (r - 2 b1 - b2) q - b4 - b2 p + g (2 p q + q^2)
//! ```
//!
//! integrated backward from `(p, q)(T) = (0, 0)` with classical RK4. The rest
//! points are exactly `(2 a1, a2)` for the `(a1, a2)` pairs of the master
//! root system; [`check_stationarity`] asserts this before every integration.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::master::{solve_a1_a2, QuadraticValue};
use crate::model::LQModel;

/// Magnitude beyond which the integration is declared to have blown up.
pub const BLOW_UP_LIMIT: f64 = 1e8;
/// Relative tolerance of the rest-point self-check.
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiPath {
    grid: TimeGrid,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl RiccatiPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `(p, q)` at node `k`.
    pub fn at_node(&self, k: usize) -> (f64, f64) {
        (self.p[k], self.q[k])
    }

    /// `(p, q)` at time `t`, linearly interpolated between nodes.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let k = self.grid.node_at_or_before(t);
        if k >= self.grid.n_steps() {
            return self.at_node(self.grid.n_steps());
        }
        let w = ((t - self.grid.time(k)) / self.grid.dt()).clamp(0.0, 1.0);
        (
            self.p[k] + w * (self.p[k + 1] - self.p[k]),
            self.q[k] + w * (self.q[k + 1] - self.q[k]),
        )
    }

    /// `(p(0), q(0))`.
    pub fn initial(&self) -> (f64, f64) {
        self.at_node(0)
    }
}

/// Forward-time vector field `(dp/dt, dq/dt)`.
pub fn riccati_field(model: &LQModel, p: f64, q: f64) -> (f64, f64) {
    let g = model.control_gain();
    let dp = (model.r - 2.0 * model.b1) * p + g * p * p - 2.0 * model.state_cost;
    let dq = (model.r - 2.0 * model.b1 - model.b2) * q - model.b4 - model.b2 * p + g * (2.0 * p * q + q * q);
    (dp, dq)
}

/// Checks that the field vanishes at `(2 a1, a2)` for every real root pair.
/// Returns the largest scaled field magnitude found.
pub fn check_stationarity(model: &LQModel) -> Result<f64> {
    let mut worst = 0.0f64;
    for (a1, a2) in solve_a1_a2(model)? {
        let (p, q) = (2.0 * a1, a2);
        let (dp, dq) = riccati_field(model, p, q);
        let scale = 1.0 + p.abs().max(q.abs());
        worst = worst.max(dp.abs().max(dq.abs()) / (scale * scale));
    }
    if worst > STATIONARITY_TOL {
        return Err(Error::StationarityMismatch { gap: worst });
    }
    Ok(worst)
}

/// Integrates the Riccati pair backward from zero terminal data on
/// `[0, horizon]` with step `dt <= horizon / 10`.
pub fn riccati_backward(model: &LQModel, horizon: f64, dt: f64) -> Result<RiccatiPath> {
    if !(dt > 0.0 && horizon > 0.0 && dt <= horizon / 10.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "Riccati step must satisfy 0 < dt <= T/10, got dt = {dt}, T = {horizon}"
        )));
    }
    check_stationarity(model)?;
    let grid = TimeGrid::new(horizon, dt)?;
    let n = grid.n_steps();
    let h = -grid.dt();
    let mut p = alloc::vec![0.0; n + 1];
    let mut q = alloc::vec![0.0; n + 1];
    let field = |p: f64, q: f64| riccati_field(model, p, q);
    for k in (0..n).rev() {
        let (p0, q0) = (p[k + 1], q[k + 1]);
        let (k1p, k1q) = field(p0, q0);
        let (k2p, k2q) = field(p0 + 0.5 * h * k1p, q0 + 0.5 * h * k1q);
        let (k3p, k3q) = field(p0 + 0.5 * h * k2p, q0 + 0.5 * h * k2q);
        let (k4p, k4q) = field(p0 + h * k3p, q0 + h * k3q);
        let pn = p0 + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        let qn = q0 + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        if !(pn.abs() <= BLOW_UP_LIMIT && qn.abs() <= BLOW_UP_LIMIT) {
            return Err(Error::BlowUp { time: grid.time(k) });
        }
        p[k] = pn;
        q[k] = qn;
    }
    Ok(RiccatiPath { grid, p, q })
}

/// Whether `p(0)` and `q(0)` match `2 a1` and `a2` within `tol`.
pub fn stationary_match(path: &RiccatiPath, u: &QuadraticValue, tol: f64) -> bool {
    let (p0, q0) = path.initial();
    (p0 - 2.0 * u.a1).abs() <= tol && (q0 - u.a2).abs() <= tol
}
