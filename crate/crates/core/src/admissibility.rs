//! Hypothesis checks for a model: the structural conditions that guarantee
//! unique `L^2_r` solutions of the equilibrium FBSDEs, and a randomized probe
//! of the monotonicity inequality those conditions imply.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::LQModel;
use crate::rng::{Domain, NoiseSource};

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// Dissipativity constant of the drift in the state, `-b1`.
    pub lambda: f64,
    /// Lipschitz constant of the drift in the measure, `|b2|`.
    pub ell_measure: f64,
    /// `2A - |b2|/2 - |b4| - r/2`.
    pub gap_structural: f64,
    /// `b3^2/(2C) - |b2|/2 - r/2`.
    pub gap_control: f64,
    /// A `k > 0` with `|b2| <= k` and `-b1 >= k - r/2`, if one exists.
    pub k_witness: Option<f64>,
    pub passed: bool,
    pub messages: Vec<String>,
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn check_structural(model: &LQModel) -> AdmissibilityReport {
    let half_r = 0.5 * model.r;
    let lambda = 0.0 - model.b1;
    let ell_measure = model.b2.abs();
    let gap_structural = 2.0 * model.state_cost - 0.5 * model.b2.abs() - model.b4.abs() - half_r;
    let gap_control = model.control_gain() - 0.5 * model.b2.abs() - half_r;

    // k ranges over (0, -b1 + r/2] intersected with [|b2|, inf)
    let k_max = lambda + half_r;
    let k_witness = if ell_measure > 0.0 {
        (ell_measure <= k_max).then_some(ell_measure)
    } else {
        (k_max > 0.0).then(|| k_max.min(half_r).min(1.0))
    };

    let mut messages = Vec::new();
    if !(lambda > ell_measure - half_r) {
        messages.push(format!(
            "drift dissipativity: lambda = {lambda} is not above |b2| - r/2 = {}",
            ell_measure - half_r
        ));
    }
    if !(gap_structural > 0.0) {
        messages.push(format!(
            "state convexity gap 2A - |b2|/2 - |b4| - r/2 = {gap_structural} <= 0"
        ));
    }
    if !(gap_control > 0.0) {
        messages.push(format!("control gap b3^2/(2C) - |b2|/2 - r/2 = {gap_control} <= 0"));
    }
    if k_witness.is_none() {
        messages.push(format!(
            "no k > 0 with |b2| = {ell_measure} <= k <= -b1 + r/2 = {k_max}"
        ));
    }
    AdmissibilityReport {
        lambda,
        ell_measure,
        gap_structural,
        gap_control,
        k_witness,
        passed: messages.is_empty(),
        messages,
    }
}

/// Samples per batch; the empirical means inside the mean-field terms need a
/// batch of this size to be meaningful.
pub const MONOTONICITY_BATCH: usize = 256;
/// Absolute tolerance on the worst slack.
pub const MONOTONICITY_TOL: f64 = 1e-3;
/// `(state, adjoint)` scales cycled over batches; unequal pairs expose
/// violations that only show when one difference dominates the other.
const BATCH_SCALES: [(f64, f64); 9] = [
    (1.0, 1.0),
    (0.1, 1.0),
    (1.0, 0.1),
    (0.5, 2.0),
    (2.0, 0.5),
    (0.5, 0.5),
    (2.0, 2.0),
    (0.1, 3.0),
    (3.0, 0.1),
];

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Target modulus, `r / 2`.
    pub kappa: f64,
    /// Largest `LHS + kappa E[dX^2 + dY^2]` over all batches.
    pub worst_slack: f64,
    pub n_batches: usize,
    pub n_samples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Empirical `E[-r dX dY - dX (F - F') + dY (B - B')] + (r/2) E[dX^2 + dY^2]`
/// for the forward drift `B = b1 x + b2 m + b3 alpha_hat(x, y)` and backward
/// driver `F = b1 y + b4 m + 2 A x - r y`, with `m` the sample mean of the
/// corresponding state array.
pub fn monotonicity_slack(model: &LQModel, x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
    let n = x.len();
    if n == 0 || xp.len() != n || y.len() != n || yp.len() != n {
        return Err(Error::InvalidArgument(format!(
            "monotonicity samples need equal nonzero lengths, got {}, {}, {}, {}",
            x.len(),
            xp.len(),
            y.len(),
            yp.len()
        )));
    }
    let nf = n as f64;
    let m = x.iter().sum::<f64>() / nf;
    let mp = xp.iter().sum::<f64>() / nf;
    let r = model.r;
    let kappa = 0.5 * r;
    let forward = |x: f64, y: f64, m: f64| model.drift(x, m, model.alpha_hat(x, y));
    let backward = |x: f64, y: f64, m: f64| model.hamiltonian_dx(x, m, y) - r * y;
    let mut acc = 0.0;
    for i in 0..n {
        let dx = x[i] - xp[i];
        let dy = y[i] - yp[i];
        let df = backward(x[i], y[i], m) - backward(xp[i], yp[i], mp);
        let db = forward(x[i], y[i], m) - forward(xp[i], yp[i], mp);
        acc += -r * dx * dy - dx * df + dy * db + kappa * (dx * dx + dy * dy);
    }
    Ok(acc / nf)
}

/// Probes the monotonicity inequality with `n_batches` batches of
/// [`MONOTONICITY_BATCH`] Gaussian quadruples `(x, x', y, y')`, cycling the
/// state and adjoint scales independently. Batch `b` draws from its own
/// counter-based substream.
pub fn check_monotonicity_sampled(model: &LQModel, n_batches: usize, seed: u64) -> Result<MonotonicityReport> {
    if n_batches == 0 {
        return Err(Error::InvalidArgument(
            "monotonicity check needs at least one batch".into(),
        ));
    }
    let source = NoiseSource::new(seed, Domain::Monotonicity);
    let mut buf = [
        Vec::with_capacity(MONOTONICITY_BATCH),
        Vec::with_capacity(MONOTONICITY_BATCH),
        Vec::with_capacity(MONOTONICITY_BATCH),
        Vec::with_capacity(MONOTONICITY_BATCH),
    ];
    let mut worst = f64::NEG_INFINITY;
    for b in 0..n_batches {
        let (sx, sy) = BATCH_SCALES[b % BATCH_SCALES.len()];
        let scales = [sx, sx, sy, sy];
        let mut stream = source.normals(b as u64);
        for v in buf.iter_mut() {
            v.clear();
        }
        for _ in 0..MONOTONICITY_BATCH {
            for (v, s) in buf.iter_mut().zip(scales) {
                v.push(s * stream.next().unwrap_or(0.0));
            }
        }
        let slack = monotonicity_slack(model, &buf[0], &buf[1], &buf[2], &buf[3])?;
        if slack > worst || slack.is_nan() {
            worst = slack;
        }
    }
    Ok(MonotonicityReport {
        kappa: 0.5 * model.r,
        worst_slack: worst,
        n_batches,
        n_samples: n_batches * MONOTONICITY_BATCH,
        tolerance: MONOTONICITY_TOL,
        passed: worst <= MONOTONICITY_TOL,
    })
}
