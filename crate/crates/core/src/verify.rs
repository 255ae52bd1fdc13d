//! Claim checks against a computed equilibrium: Nash optimality under
//! common random numbers, directional (Gateaux) slopes, the population /
//! representative flow identity, the `Y = dU/dx` representation, weak
//! uniqueness in law and an empirical Lipschitz scan of the value map.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::master::{classify, QuadraticValue, Stability};
use crate::math::{exp, sqrt};
use crate::model::LQModel;
use crate::riccati::riccati_backward;
use crate::rng::{Domain, NoiseSource};
use crate::sim::{
    estimate_cost, euler_step, run_particles, simulate_representative, CostEstimate, EquilibriumFeedback, InitialLaw,
    MeanFlow, Policy, SimOptions, TrajectoryBatch,
};
use crate::stats::{ks_critical_1pct, ks_two_sample, MeanEstimate};

/// Monte Carlo settings shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

/// An admissible deviation from the equilibrium control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `a* + eps`.
    Offset(f64),
    /// `a* + amplitude e^{-rate t}`, `rate >= 0`.
    DecayingOffset { amplitude: f64, rate: f64 },
    /// `factor a*`.
    GainScale(f64),
}

impl Perturbation {
    pub fn label(&self) -> String {
        match self {
            Self::Offset(e) => format!("offset({e})"),
            Self::DecayingOffset { amplitude, rate } => format!("decaying({amplitude},{rate})"),
            Self::GainScale(f) => format!("gain({f})"),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Offset(e) => e.is_finite(),
            Self::DecayingOffset { amplitude, rate } => amplitude.is_finite() && rate >= 0.0 && rate.is_finite(),
            Self::GainScale(f) => f.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "perturbation {} is out of scope",
                self.label()
            )))
        }
    }
}

struct Perturbed<'a> {
    base: &'a EquilibriumFeedback,
    kind: Perturbation,
}

impl Policy for Perturbed<'_> {
    #[inline]
    fn control(&self, t: f64, x: f64, m: f64) -> f64 {
        let a = self.base.control(t, x, m);
        match self.kind {
            Perturbation::Offset(e) => a + e,
            Perturbation::DecayingOffset { amplitude, rate } => a + amplitude * exp(-rate * t),
            Perturbation::GainScale(f) => f * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub label: String,
    pub cost: CostEstimate,
    /// Mean of the per-path paired differences `J(perturbed) - J(base)`.
    pub delta: MeanEstimate,
    pub delta_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub base_cost: CostEstimate,
    pub perturbed: Vec<PerturbationResult>,
    /// Every paired lower bound is at least `-3` standard errors (an exact
    /// zero difference passes).
    pub all_non_negative: bool,
}

fn require_admissible(model: &LQModel, u: &QuadraticValue) -> Result<()> {
    match classify(model, u) {
        Stability::Stable => Ok(()),
        s => Err(Error::InvalidArgument(format!(
            "value ({}, {}, {}, {}) is not admissible: {s:?}",
            u.a1, u.a2, u.a3, u.a4
        ))),
    }
}

/// `m0 e^{(cx + cm) t}`, the population mean under the equilibrium feedback.
pub fn equilibrium_mean_flow(model: &LQModel, u: &QuadraticValue, m0: f64, grid: TimeGrid) -> Result<MeanFlow> {
    let rate = model.closed_loop_coeffs(u).mean_rate();
    MeanFlow::from_fn(grid, |t| m0 * exp(rate * t))
}

fn paired(a: &TrajectoryBatch, b: &TrajectoryBatch) -> MeanEstimate {
    let diffs: Vec<f64> = a
        .discounted_costs
        .iter()
        .zip(&b.discounted_costs)
        .map(|(p, q)| p - q)
        .collect();
    MeanEstimate::from_samples(&diffs)
}

/// Costs of the equilibrium control and of each perturbation for a player
/// starting at `x0` in a population with initial mean `m0`, all paths under
/// the same Brownian streams.
pub fn verify_nash(
    model: &LQModel,
    u: &QuadraticValue,
    x0: f64,
    m0: f64,
    perturbations: &[Perturbation],
    mc: &McConfig,
) -> Result<NashReport> {
    require_admissible(model, u)?;
    for p in perturbations {
        p.validate()?;
    }
    let grid = TimeGrid::new(mc.horizon, mc.dt)?;
    let flow = equilibrium_mean_flow(model, u, m0, grid)?;
    let starts = alloc::vec![x0; mc.n_paths];
    let opts = SimOptions::default();
    let base = EquilibriumFeedback::new(model, u);
    let base_batch = simulate_representative(model, &base, &starts, &flow, mc.seed, &opts)?;
    let base_cost = estimate_cost(model, &base_batch)?;
    let mut perturbed = Vec::with_capacity(perturbations.len());
    let mut all_non_negative = true;
    for &kind in perturbations {
        let policy = Perturbed { base: &base, kind };
        let batch = simulate_representative(model, &policy, &starts, &flow, mc.seed, &opts)?;
        let delta = paired(&batch, &base_batch);
        let (lo, hi) = delta.ci95();
        all_non_negative &= lo >= -3.0 * delta.std_error;
        perturbed.push(PerturbationResult {
            label: kind.label(),
            cost: estimate_cost(model, &batch)?,
            delta,
            delta_ci: (lo, hi),
        });
    }
    Ok(NashReport {
        base_cost,
        perturbed,
        all_non_negative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateauxPoint {
    pub eps: f64,
    pub delta: MeanEstimate,
    /// `delta / eps`.
    pub slope: f64,
}

/// Finite-difference directional derivatives of the cost at the equilibrium
/// control in the deterministic direction `gamma(t)`.
pub fn gateaux_slope<G: Fn(f64) -> f64>(
    model: &LQModel,
    u: &QuadraticValue,
    x0: f64,
    m0: f64,
    gamma: G,
    epsilons: &[f64],
    mc: &McConfig,
) -> Result<Vec<GateauxPoint>> {
    require_admissible(model, u)?;
    if epsilons.iter().any(|e| !(e.is_finite() && *e != 0.0)) {
        return Err(Error::InvalidArgument("epsilons must be finite and nonzero".into()));
    }
    let grid = TimeGrid::new(mc.horizon, mc.dt)?;
    let flow = equilibrium_mean_flow(model, u, m0, grid)?;
    let starts = alloc::vec![x0; mc.n_paths];
    let opts = SimOptions::default();
    let base = EquilibriumFeedback::new(model, u);
    let base_batch = simulate_representative(model, &base, &starts, &flow, mc.seed, &opts)?;
    epsilons
        .iter()
        .map(|&eps| {
            let policy = |t: f64, x: f64, m: f64| base.control(t, x, m) + eps * gamma(t);
            let batch = simulate_representative(model, &policy, &starts, &flow, mc.seed, &opts)?;
            let delta = paired(&batch, &base_batch);
            Ok(GateauxPoint {
                eps,
                delta,
                slope: delta.mean / eps,
            })
        })
        .collect()
}

/// Simulates the population under the equilibrium feedback, then replays
/// every particle as a representative player from its own initial state,
/// against the population mean flow shifted by `flow_shift`, with its own
/// noise stream. Returns the largest state difference over particles and
/// nodes. `n = 1` is allowed: the single particle is its own mean.
pub fn flow_consistency(
    model: &LQModel,
    u: &QuadraticValue,
    law0: &InitialLaw,
    n: usize,
    seed: u64,
    grid: TimeGrid,
    flow_shift: f64,
) -> Result<f64> {
    let policy = EquilibriumFeedback::new(model, u);
    let initial = law0.sample(n, seed);
    let opts = SimOptions {
        keep_paths: true,
        ..SimOptions::default()
    };
    let run = run_particles(grid, initial, seed, &opts, |k, x, m| {
        model.drift(x, m, policy.control(grid.time(k), x, m))
    })?;
    let flow = if flow_shift == 0.0 {
        run.mean_flow.clone()
    } else {
        run.mean_flow.shifted(flow_shift)
    };
    let rep_opts = SimOptions {
        record_every: 1,
        ..SimOptions::default()
    };
    let batch = simulate_representative(model, &policy, &run.initial, &flow, seed, &rep_opts)?;
    let paths = run.paths.as_ref().expect("paths were requested");
    let recorded = batch.recorded.as_ref().expect("states were requested");
    let mut worst = 0.0f64;
    for (i, states) in recorded.states.iter().enumerate() {
        for (k, &x) in states.iter().enumerate() {
            worst = worst.max((x - paths[k][i]).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationReport {
    pub max_gap: f64,
    /// Only nodes with `t <= window_end = T - 2` are compared.
    pub window_end: f64,
    pub points: usize,
}

/// Compares `dU/dx(X_t, m_t)` with `p_t X_t + q_t m_t` from the Riccati
/// oracle on the same grid along recorded equilibrium paths.
pub fn y_representation_check(
    model: &LQModel,
    u: &QuadraticValue,
    paths: &TrajectoryBatch,
    flow: &MeanFlow,
) -> Result<RepresentationReport> {
    require_admissible(model, u)?;
    if *flow.grid() != paths.grid {
        return Err(Error::InvalidArgument(
            "paths and mean flow have different horizons".into(),
        ));
    }
    let recorded = paths
        .recorded
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("paths carry no recorded states".into()))?;
    let grid = paths.grid;
    let window_end = grid.horizon() - 2.0;
    if window_end < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "horizon {} is shorter than the excluded boundary layer of 2",
            grid.horizon()
        )));
    }
    let riccati = riccati_backward(model, grid.horizon(), grid.dt())?;
    if riccati.grid() != &grid {
        return Err(Error::InvalidArgument(
            "Riccati grid does not match the path grid".into(),
        ));
    }
    let mut max_gap = 0.0f64;
    let mut points = 0;
    for states in &recorded.states {
        for (j, &x) in states.iter().enumerate() {
            let k = recorded.node(j);
            if grid.time(k) > window_end + 1e-12 {
                break;
            }
            let m = flow.at_node(k);
            let (p, q) = riccati.at_node(k);
            max_gap = max_gap.max((u.dx(x, m) - (p * x + q * m)).abs());
            points += 1;
        }
    }
    Ok(RepresentationReport {
        max_gap,
        window_end,
        points,
    })
}

/// Where a value-map estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSource {
    /// The closed-form `dU/dx` of the selected quadratic root.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessConfig {
    pub n_particles: usize,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub estimate_a: MeanEstimate,
    pub estimate_b: MeanEstimate,
    /// `(A - B) / sqrt(se_A^2 + se_B^2)`; zero when both estimates coincide.
    pub overlap_z: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub field_source: FieldSource,
}

/// `Y_0` for a player at `x` facing the population started from `initial`:
/// the population is simulated under the equilibrium feedback, then
/// `E[e^{-rT} Y_T + int_0^T e^{-rt} dH/dx(X, m, Y) dt]` with
/// `Y = dU/dx(X, m)` is averaged over representative paths from `x`.
fn value_estimate(
    model: &LQModel,
    u: &QuadraticValue,
    x: f64,
    initial: Vec<f64>,
    seed: u64,
    cfg: &UniquenessConfig,
) -> Result<(MeanEstimate, Vec<f64>)> {
    let grid = TimeGrid::new(cfg.horizon, cfg.dt)?;
    let policy = EquilibriumFeedback::new(model, u);
    let run = run_particles(grid, initial, seed, &SimOptions::default(), |k, x, m| {
        model.drift(x, m, policy.control(grid.time(k), x, m))
    })?;
    let flow = &run.mean_flow;
    let dt = grid.dt();
    let vol = sqrt(dt);
    let steps = grid.n_steps();
    let discount: Vec<f64> = (0..=steps).map(|k| exp(-model.r * grid.time(k))).collect();
    // representative noise lives in a different index range from the particles
    let offset = run.terminal.len() as u64;
    let source = NoiseSource::new(seed, Domain::Brownian);
    let mut samples = Vec::with_capacity(cfg.n_paths);
    for i in 0..cfg.n_paths {
        let mut noise = source.normals(offset + i as u64);
        let mut xt = x;
        let mut acc = 0.0;
        for (k, &disc) in discount.iter().enumerate().take(steps) {
            let m = flow.at_node(k);
            let y = u.dx(xt, m);
            acc += disc * model.hamiltonian_dx(xt, m, y);
            let a = model.alpha_hat(xt, y);
            xt = euler_step(xt, model.drift(xt, m, a), dt, vol, noise.next().unwrap_or(0.0));
            if !xt.is_finite() {
                return Err(Error::Diverged { step: k + 1 });
            }
        }
        let y_t = u.dx(xt, flow.at_node(steps));
        samples.push(discount[steps] * y_t + dt * acc);
    }
    Ok((MeanEstimate::from_samples(&samples), run.terminal))
}

/// Estimates `V(x, mu) = Y_0` from two initial ensembles with the same law
/// but different pathwise arrangement: particle `i` of ensemble A starts at
/// `F^{-1}(u_i)` and of ensemble B at `F^{-1}(1 - u_i)`, with
/// `u_i = (i + 1/2) / N`, plus `shift_b` (0 for the equal-law test).
/// Each ensemble and its estimate use their own seed.
#[allow(clippy::too_many_arguments)]
pub fn weak_uniqueness_check(
    model: &LQModel,
    u: &QuadraticValue,
    x: f64,
    law: &InitialLaw,
    seeds: (u64, u64),
    cfg: &UniquenessConfig,
    shift_b: f64,
) -> Result<UniquenessReport> {
    require_admissible(model, u)?;
    let n = cfg.n_particles;
    if n < 2 || cfg.n_paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 particles and 2 paths, got {n} and {}",
            cfg.n_paths
        )));
    }
    if let InitialLaw::Gaussian { sd, .. } = law {
        if *sd == 0.0 {
            return Err(Error::InvalidArgument("degenerate Gaussian: use a Dirac law".into()));
        }
    }
    let grid_u = |i: usize| (i as f64 + 0.5) / n as f64;
    let xi_a: Vec<f64> = (0..n).map(|i| law.quantile(grid_u(i))).collect();
    let xi_b: Vec<f64> = (0..n).map(|i| law.quantile(1.0 - grid_u(i)) + shift_b).collect();
    let (est_a, term_a) = value_estimate(model, u, x, xi_a, seeds.0, cfg)?;
    let (est_b, term_b) = value_estimate(model, u, x, xi_b, seeds.1, cfg)?;
    let diff = est_a.mean - est_b.mean;
    let se = sqrt(est_a.std_error * est_a.std_error + est_b.std_error * est_b.std_error);
    let overlap_z = if diff == 0.0 { 0.0 } else { diff / se };
    Ok(UniquenessReport {
        estimate_a: est_a,
        estimate_b: est_b,
        overlap_z,
        ks_statistic: ks_two_sample(&term_a, &term_b),
        ks_critical: ks_critical_1pct(term_a.len(), term_b.len()),
        field_source: FieldSource::Analytic,
    })
}

/// One probe: `((x, m), (x', m'))`, the measures being mean-shifted copies.
pub type Probe = ((f64, f64), (f64, f64));

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub argmax: Option<Probe>,
    pub used: usize,
    /// Probes with coincident endpoints, skipped.
    pub skipped: usize,
}

/// `max |V(x, m) - V(x', m')| / (|x - x'| + |m - m'|)` over the probes; for
/// mean-shifted copies of one law `W2 = |m - m'|`.
pub fn lipschitz_scan<V: Fn(f64, f64) -> f64>(value: V, probes: &[Probe]) -> Result<LipschitzReport> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probes".into()));
    }
    let mut max_ratio = 0.0f64;
    let mut argmax = None;
    let mut used = 0;
    let mut skipped = 0;
    for &probe in probes {
        let ((x, m), (xp, mp)) = probe;
        let dist = (x - xp).abs() + (m - mp).abs();
        if dist == 0.0 {
            skipped += 1;
            continue;
        }
        let ratio = (value(x, m) - value(xp, mp)).abs() / dist;
        if !ratio.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite ratio at probe {probe:?}")));
        }
        used += 1;
        if ratio > max_ratio || argmax.is_none() {
            max_ratio = ratio;
            argmax = Some(probe);
        }
    }
    if used == 0 {
        return Err(Error::InsufficientData("every probe pair is coincident".into()));
    }
    Ok(LipschitzReport {
        max_ratio,
        argmax,
        used,
        skipped,
    })
}

/// Probe pairs from a `n x n` grid on `[lo, hi]^2`, each point paired with
/// its neighbour at offset `(step, step / 2)` and `(step / 2, -step)`.
pub fn grid_probes(lo: f64, hi: f64, n: usize, step: f64) -> Vec<Probe> {
    let pts = crate::master::square_grid(lo, hi, n);
    let mut out = Vec::with_capacity(2 * pts.len());
    for (x, m) in pts {
        out.push(((x, m), (x + step, m + 0.5 * step)));
        out.push(((x, m), (x + 0.5 * step, m - step)));
    }
    out
}
