//! Seeded Euler–Maruyama simulation of the population and of a
//! representative player, discounted cost estimation, and the empirical
//! one-dimensional W2 distance.
//!
//! Both simulators use the same update
//!
//! ```text
//! X_{k+1} = X_k + b(X_k, m_k, a_k) dt + sqrt(dt) G_k,   a_k = policy(t_k, X_k, m_k)
//! ```
//!
//! where `G_k` for particle or path `i` is `normal(i, k)` of the Brownian
//! stream keyed by the seed. The population uses its own empirical mean as
//! `m_k`; the representative reads `m_k` from a frozen [`MeanFlow`]. Running
//! the representative from a particle's initial state against the
//! population's own mean flow therefore reproduces that particle bit for bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::master::QuadraticValue;
use crate::math::{exp, sqrt, CompensatedSum};
use crate::model::LQModel;
use crate::rng::{Domain, NoiseSource};
use crate::stats::{mean_var, quantile_sorted, sorted_copy, MeanEstimate, Z95};

/// Law of the initial population state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Dirac(f64),
    Gaussian {
        mean: f64,
        sd: f64,
    },
    /// Particle `i` starts at `samples[i % len]`.
    Empirical(Vec<f64>),
}

impl InitialLaw {
    pub fn dirac(x0: f64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Dirac location must be finite, got {x0}"
            )));
        }
        Ok(Self::Dirac(x0))
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid Gaussian law N({mean}, {sd}^2)"
            )));
        }
        Ok(Self::Gaussian { mean, sd })
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "empirical law needs at least one finite sample".into(),
            ));
        }
        Ok(Self::Empirical(samples))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Dirac(x) => *x,
            Self::Gaussian { mean, .. } => *mean,
            Self::Empirical(s) => mean_var(s).0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Dirac(x) => x * x,
            Self::Gaussian { mean, sd } => mean * mean + sd * sd,
            Self::Empirical(s) => s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64,
        }
    }

    /// Generalized inverse CDF at `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Dirac(x) => *x,
            Self::Gaussian { mean, sd } => mean + sd * crate::math::normal_quantile(u),
            Self::Empirical(s) => {
                let sorted = sorted_copy(s);
                let i = libm::floor(u * sorted.len() as f64) as usize;
                sorted[i.min(sorted.len() - 1)]
            }
        }
    }

    /// `n` initial states; Gaussian draws come from the initial-law stream
    /// of `seed`, one index per particle.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        match self {
            Self::Dirac(x) => vec![*x; n],
            Self::Gaussian { mean, sd } => {
                let src = NoiseSource::new(seed, Domain::InitialLaw);
                (0..n).map(|i| mean + sd * src.normal(i as u64, 0)).collect()
            }
            Self::Empirical(s) => (0..n).map(|i| s[i % s.len()]).collect(),
        }
    }
}

/// `N >= 2` equally weighted finite particles.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    particles: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<f64>) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an ensemble needs at least 2 particles, got {}",
                particles.len()
            )));
        }
        if let Some(i) = particles.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("particle {i} is not finite")));
        }
        Ok(Self { particles })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.particles
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.particles
    }

    pub fn mean(&self) -> f64 {
        mean_var(&self.particles).0
    }

    /// Unbiased sample variance.
    pub fn var(&self) -> f64 {
        mean_var(&self.particles).1
    }

    pub fn second_moment(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for &v in &self.particles {
            s.add(v * v);
        }
        s.value() / self.particles.len() as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&sorted_copy(&self.particles), p)
    }
}

/// Population mean `m(t_k)` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFlow {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl MeanFlow {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "mean flow has {} values for {} grid nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("mean flow is not finite at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, m: f64) -> Self {
        Self {
            grid,
            values: vec![m; grid.n_nodes()],
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: TimeGrid, f: F) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at_node(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Linear interpolation in time, constant beyond the horizon.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.grid.node_at_or_before(t);
        if k >= self.grid.n_steps() {
            return self.values[self.grid.n_steps()];
        }
        let w = ((t - self.grid.time(k)) / self.grid.dt()).clamp(0.0, 1.0);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    /// `max_k |m_k - other_k|` over a common grid.
    pub fn sup_distance(&self, other: &MeanFlow) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("mean flows live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }

    /// `(1 - theta) self + theta other`.
    pub fn blend(&self, other: &MeanFlow, theta: f64) -> Result<MeanFlow> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("mean flows live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        MeanFlow::new(self.grid, values)
    }

    pub fn shifted(&self, delta: f64) -> MeanFlow {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }
}

/// A control rule `a = policy(t, x, m)`.
pub trait Policy {
    fn control(&self, t: f64, x: f64, m: f64) -> f64;
}

impl<F: Fn(f64, f64, f64) -> f64> Policy for F {
    #[inline]
    fn control(&self, t: f64, x: f64, m: f64) -> f64 {
        self(t, x, m)
    }
}

/// The equilibrium feedback `alpha_hat(x, dU/dx(x, m))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumFeedback {
    model: LQModel,
    value: QuadraticValue,
}

impl EquilibriumFeedback {
    pub fn new(model: &LQModel, value: &QuadraticValue) -> Self {
        Self {
            model: *model,
            value: *value,
        }
    }
}

impl Policy for EquilibriumFeedback {
    #[inline]
    fn control(&self, _t: f64, x: f64, m: f64) -> f64 {
        self.model.alpha_hat(x, self.value.dx(x, m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Multiplier of the Brownian increments; 0 gives the deterministic
    /// ODE limit.
    pub noise_scale: f64,
    /// Population: summary statistics every this many steps (0 = none).
    /// Representative: keep every this many states per path (0 = none).
    pub record_every: usize,
    /// Population only: keep every particle at every node.
    pub keep_paths: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            noise_scale: 1.0,
            record_every: 0,
            keep_paths: false,
        }
    }
}

/// Summary of the population at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    pub q05: f64,
    pub q95: f64,
}

impl Snapshot {
    fn of(t: f64, particles: &[f64]) -> Self {
        let (mean, var) = mean_var(particles);
        let sorted = sorted_copy(particles);
        Self {
            t,
            mean,
            var,
            q05: quantile_sorted(&sorted, 0.05),
            q95: quantile_sorted(&sorted, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRun {
    pub mean_flow: MeanFlow,
    pub snapshots: Vec<Snapshot>,
    pub initial: Vec<f64>,
    pub terminal: Vec<f64>,
    /// `paths[k][i]`: particle `i` at node `k`, when requested.
    pub paths: Option<Vec<Vec<f64>>>,
}

impl PopulationRun {
    pub fn terminal_ensemble(&self) -> Result<ParticleEnsemble> {
        ParticleEnsemble::new(self.terminal.clone())
    }
}

#[inline(always)]
pub(crate) fn euler_step(x: f64, drift: f64, dt: f64, vol: f64, z: f64) -> f64 {
    x + drift * dt + vol * z
}

fn compensated_mean(values: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    for &v in values {
        s.add(v);
    }
    s.value() / values.len() as f64
}

/// Synchronous particle scheme shared by the population simulator and the
/// fixed-point forward update. `drift(k, x, m)` gives the drift at node `k`.
pub(crate) fn run_particles<D>(
    grid: TimeGrid,
    initial: Vec<f64>,
    seed: u64,
    opts: &SimOptions,
    mut drift: D,
) -> Result<PopulationRun>
where
    D: FnMut(usize, f64, f64) -> f64,
{
    let n = initial.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no particles".into()));
    }
    let source = NoiseSource::new(seed, Domain::Brownian);
    let dt = grid.dt();
    let vol = opts.noise_scale * sqrt(dt);
    let steps = grid.n_steps();
    let mut x = initial.clone();
    let mut spare = vec![0.0; n];
    let mut means = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let mut paths = opts.keep_paths.then(|| Vec::with_capacity(steps + 1));

    for k in 0..=steps {
        let m = compensated_mean(&x);
        means.push(m);
        if opts.record_every > 0 && (k % opts.record_every == 0 || k == steps) {
            snapshots.push(Snapshot::of(grid.time(k), &x));
        }
        if let Some(p) = paths.as_mut() {
            p.push(x.clone());
        }
        if k == steps {
            break;
        }
        let fresh = k % 2 == 0;
        for (i, xi) in x.iter_mut().enumerate() {
            let z = if fresh {
                let (a, b) = source.normal_pair(i as u64, (k / 2) as u64);
                spare[i] = b;
                a
            } else {
                spare[i]
            };
            let next = euler_step(*xi, drift(k, *xi, m), dt, vol, z);
            if !next.is_finite() {
                return Err(Error::Diverged { step: k + 1 });
            }
            *xi = next;
        }
    }
    Ok(PopulationRun {
        mean_flow: MeanFlow::new(grid, means).map_err(|_| Error::Diverged { step: steps })?,
        snapshots,
        initial,
        terminal: x,
        paths,
    })
}

/// Simulates `n >= 2` particles under `policy`, coupled through their
/// empirical mean.
#[allow(clippy::too_many_arguments)]
pub fn simulate_population<P: Policy>(
    model: &LQModel,
    policy: &P,
    law0: &InitialLaw,
    n: usize,
    grid: TimeGrid,
    seed: u64,
    opts: &SimOptions,
) -> Result<PopulationRun> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("population needs N >= 2, got {n}")));
    }
    let initial = law0.sample(n, seed);
    run_particles(grid, initial, seed, opts, |k, x, m| {
        model.drift(x, m, policy.control(grid.time(k), x, m))
    })
}

/// States and controls of recorded representative paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedPaths {
    /// Node stride between stored states.
    pub stride: usize,
    /// `states[i][j]`: path `i` at node `j * stride`.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl RecordedPaths {
    pub fn node(&self, j: usize) -> usize {
        j * self.stride
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub grid: TimeGrid,
    pub seed: u64,
    /// Per-path `dt * sum_k e^{-r t_k} f(X_k, m_k, a_k)` over `k < n_steps`.
    pub discounted_costs: Vec<f64>,
    pub terminal_states: Vec<f64>,
    pub terminal_controls: Vec<f64>,
    pub terminal_mean: f64,
    pub recorded: Option<RecordedPaths>,
}

impl TrajectoryBatch {
    pub fn n_paths(&self) -> usize {
        self.discounted_costs.len()
    }
}

/// Simulates one representative path per entry of `starts` against the
/// frozen `flow`; path `i` uses Brownian index `i`.
pub fn simulate_representative<P: Policy>(
    model: &LQModel,
    policy: &P,
    starts: &[f64],
    flow: &MeanFlow,
    seed: u64,
    opts: &SimOptions,
) -> Result<TrajectoryBatch> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no representative paths requested".into()));
    }
    let grid = *flow.grid();
    let dt = grid.dt();
    let vol = opts.noise_scale * sqrt(dt);
    let steps = grid.n_steps();
    let discount: Vec<f64> = (0..steps).map(|k| exp(-model.r * grid.time(k))).collect();
    let times: Vec<f64> = grid.times().collect();
    let source = NoiseSource::new(seed, Domain::Brownian);
    let stride = opts.record_every;

    let mut costs = Vec::with_capacity(starts.len());
    let mut terminal_states = Vec::with_capacity(starts.len());
    let mut terminal_controls = Vec::with_capacity(starts.len());
    let mut rec_states = Vec::new();
    let mut rec_controls = Vec::new();

    for (i, &x0) in starts.iter().enumerate() {
        let mut noise = source.normals(i as u64);
        let mut x = x0;
        let mut acc = 0.0;
        let mut states = Vec::new();
        let mut controls = Vec::new();
        for k in 0..steps {
            let m = flow.at_node(k);
            let a = policy.control(times[k], x, m);
            if stride > 0 && k % stride == 0 {
                states.push(x);
                controls.push(a);
            }
            acc += discount[k] * model.cost_rate(x, m, a);
            let z = noise.next().unwrap_or(0.0);
            x = euler_step(x, model.drift(x, m, a), dt, vol, z);
            if !x.is_finite() {
                return Err(Error::Diverged { step: k + 1 });
            }
        }
        let m_t = flow.at_node(steps);
        let a_t = policy.control(times[steps], x, m_t);
        if stride > 0 && steps.is_multiple_of(stride) {
            states.push(x);
            controls.push(a_t);
        }
        costs.push(dt * acc);
        terminal_states.push(x);
        terminal_controls.push(a_t);
        if stride > 0 {
            rec_states.push(states);
            rec_controls.push(controls);
        }
    }
    Ok(TrajectoryBatch {
        grid,
        seed,
        discounted_costs: costs,
        terminal_states,
        terminal_controls,
        terminal_mean: flow.at_node(steps),
        recorded: (stride > 0).then_some(RecordedPaths {
            stride,
            states: rec_states,
            controls: rec_controls,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    /// Estimate of the truncated tail `int_T^inf e^{-rt} f dt`, reported
    /// separately and never added to `mean`.
    pub tail_bound: f64,
    pub n_paths: usize,
}

/// Monte Carlo estimate of the discounted cost of a batch.
///
/// The tail term assumes the cost-rate envelope `A x^2 + |b4| |x m| + C a^2`
/// stays at its empirical level at the horizon: `e^{-rT} E[envelope_T] / r`.
pub fn estimate_cost(model: &LQModel, batch: &TrajectoryBatch) -> Result<CostEstimate> {
    let n = batch.n_paths();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "a standard error needs at least 2 paths, got {n}"
        )));
    }
    let est = MeanEstimate::from_samples(&batch.discounted_costs);
    let m_t = batch.terminal_mean;
    let mut env = CompensatedSum::new();
    for (x, a) in batch.terminal_states.iter().zip(&batch.terminal_controls) {
        env.add(model.state_cost.abs() * x * x + model.b4.abs() * (x * m_t).abs() + model.control_cost.abs() * a * a);
    }
    let envelope = env.value() / n as f64;
    let tail_bound = exp(-model.r * batch.grid.horizon()) * envelope / model.r;
    Ok(CostEstimate {
        mean: est.mean,
        std_error: est.std_error,
        ci95: (est.mean - Z95 * est.std_error, est.mean + Z95 * est.std_error),
        tail_bound,
        n_paths: n,
    })
}

/// `max(6 / r, 10 / |cx|)`: a horizon after which the discounted tail is
/// negligible and the closed loop has relaxed.
pub fn default_horizon(model: &LQModel, cx: f64) -> f64 {
    let relax = if cx != 0.0 { 10.0 / cx.abs() } else { 0.0 };
    (6.0 / model.r).max(relax)
}

/// Empirical W2 distance between two equally sized samples, via the sorted
/// (quantile) coupling.
pub fn w2_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "W2 needs equal nonzero sample sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sa = sorted_copy(a);
    let sb = sorted_copy(b);
    let mut s = CompensatedSum::new();
    for (x, y) in sa.iter().zip(&sb) {
        s.add((x - y) * (x - y));
    }
    Ok(sqrt(s.value() / a.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::equilibrium_value;
    use crate::model::{coupled_model, example_model, Coefficients};
    use proptest::prelude::*;

    fn u1() -> QuadraticValue {
        QuadraticValue::new(0.5, 0.0, 0.0, 0.25)
    }

    #[test]
    fn population_symmetric_mean_stays_near_zero() {
        let m = example_model();
        let fb = EquilibriumFeedback::new(&m, &u1());
        let grid = TimeGrid::new(5.0, 1e-3).unwrap();
        let run = simulate_population(
            &m,
            &fb,
            &InitialLaw::Dirac(0.0),
            10_000,
            grid,
            1,
            &SimOptions::default(),
        )
        .unwrap();
        let bound = 3.0 / 100.0;
        assert!(run.mean_flow.values().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn population_mean_decays_and_variance_relaxes() {
        let m = example_model();
        let fb = EquilibriumFeedback::new(&m, &u1());
        let grid = TimeGrid::new(5.0, 1e-3).unwrap();
        let opts = SimOptions {
            record_every: 1000,
            ..SimOptions::default()
        };
        let run = simulate_population(&m, &fb, &InitialLaw::Dirac(1.0), 10_000, grid, 2, &opts).unwrap();
        for k in 0..=3000 {
            let t = grid.time(k);
            assert!((run.mean_flow.at_node(k) - exp(-2.0 * t)).abs() < 0.02, "t = {t}");
        }
        let var = run.terminal_ensemble().unwrap().var();
        assert!((var - 0.25).abs() < 0.02, "{var}");
        assert_eq!(run.snapshots.len(), 6);
        assert!((run.snapshots[5].var - var).abs() < 1e-12);
    }

    #[test]
    fn population_rejects_single_particle() {
        let m = example_model();
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let fb = EquilibriumFeedback::new(&m, &u1());
        assert!(simulate_population(&m, &fb, &InitialLaw::Dirac(0.0), 1, grid, 0, &SimOptions::default()).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let m = example_model();
        let fb = EquilibriumFeedback::new(&m, &u1());
        // drift factor 1 - 2 dt = -5 per step overflows after ~440 steps
        let grid = TimeGrid::new(3000.0, 3.0).unwrap();
        match simulate_population(&m, &fb, &InitialLaw::Dirac(1.0), 4, grid, 0, &SimOptions::default()) {
            Err(Error::Diverged { step }) => assert!(step > 100 && step < 1000, "{step}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn representative_ode_limit() {
        let m = example_model();
        let fb = EquilibriumFeedback::new(&m, &u1());
        let grid = TimeGrid::new(3.0, 1e-3).unwrap();
        let flow = MeanFlow::constant(grid, 0.0);
        let opts = SimOptions {
            noise_scale: 0.0,
            record_every: 1,
            keep_paths: false,
        };
        let batch = simulate_representative(&m, &fb, &[1.0, 0.0], &flow, 5, &opts).unwrap();
        let rec = batch.recorded.as_ref().unwrap();
        for (j, x) in rec.states[0].iter().enumerate() {
            let t = grid.time(rec.node(j));
            assert!((x - exp(-2.0 * t)).abs() < 1e-3);
        }
        assert!(rec.states[1].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn representative_coupled_paths_stay_finite() {
        let m = coupled_model();
        let u = equilibrium_value(&m).unwrap();
        let fb = EquilibriumFeedback::new(&m, &u);
        let grid = TimeGrid::new(10.0, 1e-3).unwrap();
        let cl = m.closed_loop_coeffs(&u);
        let flow = MeanFlow::from_fn(grid, |t| exp(cl.mean_rate() * t)).unwrap();
        let batch = simulate_representative(&m, &fb, &[1.0; 1000], &flow, 3, &SimOptions::default()).unwrap();
        assert!(batch.terminal_states.iter().all(|x| x.is_finite()));
        assert!(batch.discounted_costs.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn representative_reproduces_population_particles() {
        let m = coupled_model();
        let u = equilibrium_value(&m).unwrap();
        let fb = EquilibriumFeedback::new(&m, &u);
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let law = InitialLaw::gaussian(0.5, 1.0).unwrap();
        let opts = SimOptions {
            keep_paths: true,
            ..SimOptions::default()
        };
        let run = simulate_population(&m, &fb, &law, 50, grid, 11, &opts).unwrap();
        let batch = simulate_representative(&m, &fb, &run.initial, &run.mean_flow, 11, &SimOptions::default()).unwrap();
        assert_eq!(batch.terminal_states, run.terminal);
    }

    #[test]
    fn zero_cost_model_costs_nothing() {
        let zero = LQModel::new_unchecked(Coefficients {
            r: 1.0,
            b1: -1.0,
            b2: 0.0,
            b3: 1.0,
            b4: 0.0,
            state_cost: 0.0,
            control_cost: 0.0,
        });
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let flow = MeanFlow::constant(grid, 0.0);
        let pol = |_t: f64, x: f64, _m: f64| -x;
        let batch = simulate_representative(&zero, &pol, &[1.0; 10], &flow, 0, &SimOptions::default()).unwrap();
        let est = estimate_cost(&zero, &batch).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.tail_bound, 0.0);
    }

    #[test]
    fn estimate_cost_needs_two_paths() {
        let m = example_model();
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let flow = MeanFlow::constant(grid, 0.0);
        let fb = EquilibriumFeedback::new(&m, &u1());
        let batch = simulate_representative(&m, &fb, &[0.0], &flow, 0, &SimOptions::default()).unwrap();
        assert!(matches!(estimate_cost(&m, &batch), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn cost_matches_ou_value_at_origin() {
        // J(x) = x^2/2 + 1/4 under the equilibrium feedback
        let m = example_model();
        let fb = EquilibriumFeedback::new(&m, &u1());
        let grid = TimeGrid::new(6.0, 1e-3).unwrap();
        let flow = MeanFlow::constant(grid, 0.0);
        let batch = simulate_representative(&m, &fb, &[0.0; 20_000], &flow, 9, &SimOptions::default()).unwrap();
        let est = estimate_cost(&m, &batch).unwrap();
        assert!((est.mean - 0.25).abs() < 4.0 * est.std_error + 2e-3, "{est:?}");
        assert!(est.tail_bound > 0.0 && est.tail_bound < 1e-5);
        assert!((est.ci95.1 - est.ci95.0 - 2.0 * 1.96 * est.std_error).abs() < 1e-15);
    }

    #[test]
    fn batches_are_reproducible() {
        let m = coupled_model();
        let u = equilibrium_value(&m).unwrap();
        let fb = EquilibriumFeedback::new(&m, &u);
        let grid = TimeGrid::new(2.0, 1e-2).unwrap();
        let flow = MeanFlow::constant(grid, 0.3);
        let a = simulate_representative(&m, &fb, &[0.2; 64], &flow, 77, &SimOptions::default()).unwrap();
        let b = simulate_representative(&m, &fb, &[0.2; 64], &flow, 77, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
        // a sub-batch reproduces the leading paths of a larger one
        let c = simulate_representative(&m, &fb, &[0.2; 16], &flow, 77, &SimOptions::default()).unwrap();
        assert_eq!(&a.discounted_costs[..16], &c.discounted_costs[..]);
    }

    #[test]
    fn discount_quadrature_is_left_endpoint() {
        let m = example_model();
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let flow = MeanFlow::constant(grid, 0.0);
        let pol = |_t: f64, _x: f64, _m: f64| 0.0;
        let opts = SimOptions {
            noise_scale: 0.0,
            ..SimOptions::default()
        };
        let batch = simulate_representative(&m, &pol, &[1.0], &flow, 0, &opts).unwrap();
        // x stays 1 (b1 = 0, no control), f = A x^2 = 2
        let want: f64 = (0..4).map(|k| 0.25 * exp(-2.0 * 0.25 * k as f64) * 2.0).sum();
        assert!((batch.discounted_costs[0] - want).abs() < 1e-15);
    }

    #[test]
    fn initial_laws() {
        assert!(InitialLaw::gaussian(0.0, -1.0).is_err());
        assert!(InitialLaw::empirical(vec![]).is_err());
        let g = InitialLaw::gaussian(1.0, 0.5).unwrap();
        assert_eq!(g.second_moment(), 1.25);
        let s = g.sample(50_000, 4);
        let (mean, var) = mean_var(&s);
        assert!((mean - 1.0).abs() < 0.01 && (var - 0.25).abs() < 0.01);
        let e = InitialLaw::empirical(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.sample(4, 0), vec![3.0, 1.0, 2.0, 3.0]);
        assert_eq!(e.quantile(0.1), 1.0);
        assert_eq!(e.quantile(0.99), 3.0);
        assert_eq!(InitialLaw::Dirac(2.0).quantile(0.3), 2.0);
    }

    #[test]
    fn mean_flow_helpers() {
        let grid = TimeGrid::new(1.0, 0.5).unwrap();
        let f = MeanFlow::new(grid, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(f.at(0.25), 0.5);
        assert_eq!(f.at(7.0), 3.0);
        let g = MeanFlow::constant(grid, 1.0);
        assert_eq!(f.sup_distance(&g).unwrap(), 2.0);
        assert_eq!(f.blend(&g, 0.5).unwrap().values(), &[0.5, 1.0, 2.0]);
        assert!(MeanFlow::new(grid, vec![0.0]).is_err());
        let other = MeanFlow::constant(TimeGrid::new(1.0, 0.25).unwrap(), 0.0);
        assert!(f.sup_distance(&other).is_err());
    }

    #[test]
    fn w2_examples() {
        assert_eq!(w2_empirical(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(w2_empirical(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(w2_empirical(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(w2_empirical(&[0.0], &[1.0, 2.0]).is_err());
    }

    /// Minimum over all couplings (permutations) of the mean squared distance.
    fn w2_brute(a: &[f64], b: &[f64]) -> f64 {
        fn permute(b: &mut Vec<f64>, k: usize, a: &[f64], best: &mut f64) {
            if k == b.len() {
                let c: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                *best = best.min(c);
                return;
            }
            for i in k..b.len() {
                b.swap(k, i);
                permute(b, k + 1, a, best);
                b.swap(k, i);
            }
        }
        let mut best = f64::INFINITY;
        permute(&mut b.to_vec(), 0, a, &mut best);
        sqrt(best / a.len() as f64)
    }

    proptest! {
        #[test]
        fn w2_is_optimal_over_couplings(
            a in proptest::collection::vec(-5.0f64..5.0, 1..6),
            seed in any::<u64>(),
        ) {
            let src = NoiseSource::new(seed, Domain::Monotonicity);
            let b: Vec<f64> = (0..a.len()).map(|i| 3.0 * src.normal(i as u64, 0)).collect();
            let got = w2_empirical(&a, &b).unwrap();
            prop_assert!((got - w2_brute(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn w2_metric_axioms(
            a in proptest::collection::vec(-5.0f64..5.0, 8),
            b in proptest::collection::vec(-5.0f64..5.0, 8),
            c in proptest::collection::vec(-5.0f64..5.0, 8),
        ) {
            let ab = w2_empirical(&a, &b).unwrap();
            prop_assert_eq!(ab, w2_empirical(&b, &a).unwrap());
            prop_assert_eq!(w2_empirical(&a, &a).unwrap(), 0.0);
            if sorted_copy(&a) != sorted_copy(&b) {
                prop_assert!(ab > 0.0);
            }
            let ac = w2_empirical(&a, &c).unwrap();
            let cb = w2_empirical(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn w2_of_shifted_copies_is_the_shift(
            a in proptest::collection::vec(-5.0f64..5.0, 1..20), d in -3.0f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().map(|v| v + d).collect();
            prop_assert!((w2_empirical(&a, &b).unwrap() - d.abs()).abs() < 1e-12);
        }
    }
}
