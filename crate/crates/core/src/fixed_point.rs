//! Mean-flow fixed point: alternate a backward finite-difference solve for
//! the decoupling field `u(t, x)` against a frozen mean flow with a forward
//! particle update of the flow, with damping.
//!
//! The field solves
//!
//! ```text
//! u_t + dH/dy(x, m_t, u) u_x + u_xx / 2 + dH/dx(x, m_t, u) - r u = 0,   u(T, .) = terminal
//! ```
//!
//! Each backward step treats diffusion implicitly and advection (upwind) and
//! the source explicitly, with `u_xx = 0` imposed at both ends of the space
//! grid. The scheme is exact on fields that are affine in `x`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::admissibility::check_structural;
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::math::sqrt;
use crate::model::LQModel;
use crate::riccati::riccati_backward;
use crate::sim::{run_particles, InitialLaw, MeanFlow, PopulationRun, SimOptions};

/// `u(t_k, x_i)` on a time grid times a space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingField {
    time: TimeGrid,
    space: SpaceGrid,
    /// Row-major: `u[k * n_x + i]`.
    u: Vec<f64>,
}

impl DecouplingField {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn space_grid(&self) -> &SpaceGrid {
        &self.space
    }

    /// Nodal values at time node `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.space.n_nodes();
        &self.u[k * n..(k + 1) * n]
    }

    /// `u(t_k, x)`, linear in `x` between nodes.
    #[inline]
    pub fn at_node(&self, k: usize, x: f64) -> f64 {
        self.space.interpolate(self.row(k), x)
    }

    /// `u(0, x)`, the estimate of the equilibrium adjoint at time zero.
    pub fn initial(&self, x: f64) -> f64 {
        self.at_node(0, x)
    }
}

/// Solves the decoupling PDE backward on the flow's time grid.
pub fn backward_field_solve<F: Fn(f64) -> f64>(
    model: &LQModel,
    flow: &MeanFlow,
    space: &SpaceGrid,
    terminal: F,
) -> Result<DecouplingField> {
    let time = *flow.grid();
    let n = space.n_nodes();
    let steps = time.n_steps();
    let dt = time.dt();
    let dx = space.dx();
    let g = model.control_gain();
    let xs: Vec<f64> = space.points().collect();
    let mut u = vec![0.0; n * (steps + 1)];

    let last = &mut u[steps * n..];
    for (ui, &x) in last.iter_mut().zip(&xs) {
        *ui = terminal(x);
    }
    if let Some(i) = last.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "terminal condition is not finite at x = {}",
            xs[i]
        )));
    }

    // Implicit diffusion on interior rows 1..n-1; rows 1 and n-2 reduce to
    // identities because u_xx = 0 there once the ghost ends are eliminated.
    let lambda = 0.5 * dt / (dx * dx);
    let mut rhs = vec![0.0; n];
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];

    for k in (0..steps).rev() {
        let m = flow.at_node(k + 1);
        let (done, todo) = u.split_at_mut((k + 1) * n);
        let next = &todo[..n];
        let cur = &mut done[k * n..];
        for i in 1..n - 1 {
            let ui = next[i];
            let v = model.b1 * xs[i] + model.b2 * m - g * ui;
            let courant = dt * v.abs() / dx;
            if courant > 1.0 {
                return Err(Error::StepTooLarge { step: k, courant });
            }
            let ux = if v > 0.0 {
                (next[i + 1] - ui) / dx
            } else {
                (ui - next[i - 1]) / dx
            };
            let source = model.hamiltonian_dx(xs[i], m, ui) - model.r * ui;
            rhs[i] = ui + dt * (v * ux + source);
        }

        // Thomas algorithm on rows 1..=n-2.
        let (lo, hi) = (1, n - 2);
        c_prime[lo] = 0.0;
        d_prime[lo] = rhs[lo];
        for i in lo + 1..=hi {
            let (a, b, c) = if i == hi {
                (0.0, 1.0, 0.0)
            } else {
                (-lambda, 1.0 + 2.0 * lambda, -lambda)
            };
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (rhs[i] - a * d_prime[i - 1]) / denom;
        }
        cur[hi] = d_prime[hi];
        for i in (lo..hi).rev() {
            cur[i] = d_prime[i] - c_prime[i] * cur[i + 1];
        }
        cur[0] = 2.0 * cur[1] - cur[2];
        cur[n - 1] = 2.0 * cur[n - 2] - cur[n - 3];
        if cur[..n].iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k });
        }
    }
    Ok(DecouplingField { time, space: *space, u })
}

/// Simulates the population with drift `dH/dy(x, m_k, u(t_k, x))` and
/// returns the whole run.
pub fn forward_population(
    model: &LQModel,
    field: &DecouplingField,
    law0: &InitialLaw,
    n: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<PopulationRun> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("population needs N >= 2, got {n}")));
    }
    let initial = law0.sample(n, seed);
    run_particles(field.time, initial, seed, opts, |k, x, m| {
        model.hamiltonian_dy(x, m, field.at_node(k, x))
    })
}

/// The empirical mean flow of [`forward_population`].
pub fn forward_flow_update(
    model: &LQModel,
    field: &DecouplingField,
    law0: &InitialLaw,
    n: usize,
    seed: u64,
) -> Result<MeanFlow> {
    Ok(forward_population(model, field, law0, n, seed, &SimOptions::default())?.mean_flow)
}

/// Terminal data for the truncated backward solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalCondition {
    Zero,
    /// `p x + q m_T` with `(p, q)` from a long-horizon Riccati solve when the
    /// model passes the structural check; zero otherwise.
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    pub horizon: f64,
    pub dt: f64,
    pub space: SpaceGrid,
    pub n_particles: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub terminal: TerminalCondition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `sup_t |Phi(m) - m|` at the last iteration, where `Phi` is one
    /// backward solve followed by one forward update.
    pub flow_delta: f64,
    pub converged: bool,
    /// `Phi(m)` at the last iteration.
    pub final_flow: MeanFlow,
    /// The field that generated `final_flow`.
    pub final_field: DecouplingField,
    /// `flow_delta` per iteration.
    pub history: Vec<f64>,
    /// `(p, q)` of the terminal condition actually used.
    pub terminal_coeffs: (f64, f64),
}

const STATIONARY_RICCATI_DT: f64 = 1e-3;

/// `(p, q)` of the stationary terminal field, or `(0, 0)`.
pub fn terminal_coefficients(model: &LQModel, kind: TerminalCondition) -> (f64, f64) {
    if kind == TerminalCondition::Zero || !check_structural(model).passed {
        return (0.0, 0.0);
    }
    let horizon = (40.0 / model.r).max(20.0);
    match riccati_backward(model, horizon, STATIONARY_RICCATI_DT) {
        Ok(path) => path.initial(),
        Err(_) => (0.0, 0.0),
    }
}

/// Space grid `mean +- 6 sd` of the stationary closed-loop law started from
/// `law0`, widened to contain `[-3, 3]`.
pub fn default_space_grid(law0: &InitialLaw, cx: f64, dx: f64) -> Result<SpaceGrid> {
    let m0 = law0.mean();
    let var0 = (law0.second_moment() - m0 * m0).max(0.0);
    let stationary = if cx < 0.0 { 0.5 / -cx } else { 1.0 };
    let sd = sqrt(var0 + stationary);
    let lo = (m0.min(0.0) - 6.0 * sd).min(-3.0);
    let hi = (m0.max(0.0) + 6.0 * sd).max(3.0);
    SpaceGrid::new(lo, hi, dx)
}

/// Damped Picard iteration `m <- (1 - theta) m + theta Phi(m)` from the
/// constant flow `mean(law0)`, stopping when `sup |Phi(m) - m| <= tol`.
/// Every forward update reuses `config.seed`, so `Phi` is a deterministic map.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn solve_mfg(model: &LQModel, law0: &InitialLaw, config: &FixedPointConfig) -> Result<FixedPointReport> {
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {}",
            config.damping
        )));
    }
    if !(config.tol > 0.0) || config.max_iter == 0 {
        return Err(Error::InvalidArgument(format!(
            "need tol > 0 and max_iter >= 1, got {} and {}",
            config.tol, config.max_iter
        )));
    }
    let grid = TimeGrid::new(config.horizon, config.dt)?;
    let (p, q) = terminal_coefficients(model, config.terminal);
    let mut flow = MeanFlow::constant(grid, law0.mean());
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let m_t = flow.at_node(grid.n_steps());
        let field = backward_field_solve(model, &flow, &config.space, |x| p * x + q * m_t)?;
        let next = forward_flow_update(model, &field, law0, config.n_particles, config.seed)?;
        let delta = next.sup_distance(&flow)?;
        history.push(delta);
        let converged = delta <= config.tol;
        if converged || iterations >= config.max_iter {
            return Ok(FixedPointReport {
                iterations,
                flow_delta: delta,
                converged,
                final_flow: next,
                final_field: field,
                history,
                terminal_coeffs: (p, q),
            });
        }
        flow = flow.blend(&next, config.damping)?;
    }
}
