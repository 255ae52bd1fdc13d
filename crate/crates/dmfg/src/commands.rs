use std::fmt::Write as _;
use std::path::Path;

use dmfg_core::admissibility::{check_monotonicity_sampled, check_structural, MONOTONICITY_BATCH};
use dmfg_core::fixed_point::{default_space_grid, solve_mfg, FixedPointConfig};
use dmfg_core::master::{classify, equilibrium_value, select_admissible, solve_root_system, Stability};
use dmfg_core::sim::{estimate_cost, simulate_population, simulate_representative, EquilibriumFeedback, SimOptions};
use dmfg_core::verify::{
    equilibrium_mean_flow, flow_consistency, gateaux_slope, grid_probes, lipschitz_scan, verify_nash,
    weak_uniqueness_check, y_representation_check, McConfig, Perturbation, UniquenessConfig,
};
use dmfg_core::{Error, LQModel, QuadraticValue, SpaceGrid, TimeGrid};

use crate::config::RunConfig;
use crate::csv::{format_f64, write_atomic, Cell, Table};
use crate::exit;

/// Failure of a command, already mapped to its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidModel(_)
            | Error::InvalidArgument(_)
            | Error::GridMismatch(_)
            | Error::InsufficientData(_) => exit::USAGE,
            Error::NoRealRoot { .. }
            | Error::DegenerateA3 { .. }
            | Error::NoAdmissibleRoot(_)
            | Error::AmbiguousRoot { .. } => exit::ROOT_SELECTION,
            Error::Diverged { .. }
            | Error::StepTooLarge { .. }
            | Error::BlowUp { .. }
            | Error::StationarityMismatch { .. } => exit::DIVERGENCE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(exit::IO, format!("i/o error: {e}"))
    }
}

pub type Outcome = Result<i32, Failure>;

fn model_of(cfg: &RunConfig) -> Result<LQModel, Failure> {
    cfg.model().map_err(|e| Failure::new(exit::USAGE, e.to_string()))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Monotonicity probe size in samples.
const MONOTONICITY_SAMPLES: usize = 10_000;

pub fn check(cfg: &RunConfig, out: &mut String) -> Outcome {
    let model = model_of(cfg)?;
    let rep = check_structural(&model);
    let batches = MONOTONICITY_SAMPLES.div_ceil(MONOTONICITY_BATCH);
    let mono = check_monotonicity_sampled(&model, batches, cfg.sim.seed)?;
    let _ = writeln!(out, "structural: {}", if rep.passed { "PASS" } else { "FAIL" });
    let _ = writeln!(out, "  lambda = {}", rep.lambda);
    let _ = writeln!(out, "  ell_measure = {}", rep.ell_measure);
    let _ = writeln!(out, "  gap_structural = {}", rep.gap_structural);
    let _ = writeln!(out, "  gap_control = {}", rep.gap_control);
    match rep.k_witness {
        Some(k) => {
            let _ = writeln!(out, "  k = {k}");
        }
        None => {
            let _ = writeln!(out, "  k = none");
        }
    }
    for m in &rep.messages {
        let _ = writeln!(out, "  - {m}");
    }
    let _ = writeln!(out, "monotonicity: {}", if mono.passed { "PASS" } else { "FAIL" });
    let _ = writeln!(out, "  kappa = {}", mono.kappa);
    let _ = writeln!(
        out,
        "  worst_slack = {} (tolerance {})",
        mono.worst_slack, mono.tolerance
    );
    let _ = writeln!(out, "  samples = {} in {} batches", mono.n_samples, mono.n_batches);
    Ok(if rep.passed && mono.passed {
        exit::OK
    } else {
        exit::CHECK_FAILED
    })
}

pub fn solve(cfg: &RunConfig, dir: &Path, out: &mut String) -> Outcome {
    let model = model_of(cfg)?;
    let roots = solve_root_system(&model)?;
    ensure_dir(dir)?;
    let mut table = Table::new(&["a1", "a2", "a3", "a4", "cx", "cm", "admissible"]);
    for u in &roots {
        let cl = model.closed_loop_coeffs(u);
        let ok = classify(&model, u) == Stability::Stable;
        table.row(&[
            u.a1.into(),
            u.a2.into(),
            u.a3.into(),
            u.a4.into(),
            cl.cx.into(),
            cl.cm.into(),
            ok.into(),
        ]);
    }
    table.write_to(&dir.join("roots.csv"))?;
    let _ = writeln!(out, "{} candidate root(s) written to roots.csv", roots.len());
    if roots.is_empty() {
        return Err(Failure::new(exit::ROOT_SELECTION, "no real (a1, a2) root pair"));
    }
    let u = select_admissible(&model, &roots)?;
    let mut sel = Table::new(&["a1", "a2", "a3", "a4"]);
    sel.row(&[u.a1.into(), u.a2.into(), u.a3.into(), u.a4.into()]);
    sel.write_to(&dir.join("selected.csv"))?;
    let _ = writeln!(
        out,
        "selected U(x, m) = {} x^2 + {} x m + {} m^2 + {}",
        format_f64(u.a1),
        format_f64(u.a2),
        format_f64(u.a3),
        format_f64(u.a4)
    );
    Ok(exit::OK)
}

pub fn simulate(cfg: &RunConfig, dir: &Path, out: &mut String) -> Outcome {
    let model = model_of(cfg)?;
    let u = equilibrium_value(&model)?;
    let law = cfg.law0.to_law()?;
    let grid = TimeGrid::new(cfg.sim.horizon, cfg.sim.dt)?;
    let fb = EquilibriumFeedback::new(&model, &u);
    let opts = SimOptions {
        record_every: cfg.sim.record_every,
        ..SimOptions::default()
    };
    ensure_dir(dir)?;
    let run = simulate_population(&model, &fb, &law, cfg.sim.n_particles, grid, cfg.sim.seed, &opts)?;
    let mut flow = Table::new(&["t", "mean", "var", "q05", "q95"]);
    for s in &run.snapshots {
        flow.row(&[s.t.into(), s.mean.into(), s.var.into(), s.q05.into(), s.q95.into()]);
    }
    flow.write_to(&dir.join("flow.csv"))?;
    let starts = vec![cfg.sim.x0; cfg.sim.n_paths];
    let batch = simulate_representative(
        &model,
        &fb,
        &starts,
        &run.mean_flow,
        cfg.sim.seed,
        &SimOptions::default(),
    )?;
    let est = estimate_cost(&model, &batch)?;
    let mut cost = Table::new(&["mean", "stderr", "ci_lo", "ci_hi", "tail_bound"]);
    cost.row(&[
        est.mean.into(),
        est.std_error.into(),
        est.ci95.0.into(),
        est.ci95.1.into(),
        est.tail_bound.into(),
    ]);
    cost.write_to(&dir.join("cost.csv"))?;
    let _ = writeln!(
        out,
        "cost from x0 = {}: {} +- {} (tail bound {})",
        cfg.sim.x0, est.mean, est.std_error, est.tail_bound
    );
    Ok(exit::OK)
}

pub const CHECKS: [&str; 6] = [
    "nash",
    "gateaux",
    "consistency",
    "representation",
    "uniqueness",
    "lipschitz",
];

/// Particle count cap for the flow-consistency check, which stores every path.
const CONSISTENCY_MAX_PARTICLES: usize = 200;
/// Paths recorded for the representation check.
const REPRESENTATION_PATHS: usize = 100;

struct CheckLine {
    name: &'static str,
    passed: bool,
    detail: String,
}

pub fn parse_checks(list: Option<&str>) -> Result<Vec<&'static str>, Failure> {
    let Some(list) = list else { return Ok(CHECKS.to_vec()) };
    let mut chosen = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match CHECKS.iter().find(|c| **c == item) {
            Some(c) if !chosen.contains(c) => chosen.push(*c),
            Some(_) => {}
            None => {
                return Err(Failure::new(
                    exit::USAGE,
                    format!("unknown check '{item}' (expected one of {})", CHECKS.join(", ")),
                ))
            }
        }
    }
    if chosen.is_empty() {
        return Err(Failure::new(exit::USAGE, "no checks selected"));
    }
    Ok(chosen)
}

pub fn verify(cfg: &RunConfig, dir: &Path, checks: &[&'static str], out: &mut String) -> Outcome {
    let model = model_of(cfg)?;
    let u = equilibrium_value(&model)?;
    let law = cfg.law0.to_law()?;
    let m0 = law.mean();
    let mc = McConfig {
        n_paths: cfg.sim.n_paths,
        horizon: cfg.sim.horizon,
        dt: cfg.sim.dt,
        seed: cfg.sim.seed,
    };
    ensure_dir(dir)?;
    let mut lines = Vec::new();
    for &name in checks {
        let line = match name {
            "nash" => check_nash(&model, &u, cfg, m0, &mc, dir)?,
            "gateaux" => check_gateaux(&model, &u, cfg, m0, &mc, dir)?,
            "consistency" => check_consistency(&model, &u, cfg, dir)?,
            "representation" => check_representation(&model, &u, cfg, m0, dir)?,
            "uniqueness" => check_uniqueness(&model, &u, cfg, dir)?,
            "lipschitz" => check_lipschitz(&u, dir)?,
            _ => unreachable!("check names are validated"),
        };
        lines.push(line);
    }
    let mut summary = String::new();
    for l in &lines {
        let _ = writeln!(
            summary,
            "{} {}: {}",
            if l.passed { "PASS" } else { "FAIL" },
            l.name,
            l.detail
        );
    }
    write_atomic(&dir.join("summary.txt"), summary.as_bytes())?;
    out.push_str(&summary);
    Ok(if lines.iter().all(|l| l.passed) {
        exit::OK
    } else {
        exit::CHECK_FAILED
    })
}

fn check_nash(
    model: &LQModel,
    u: &QuadraticValue,
    cfg: &RunConfig,
    m0: f64,
    mc: &McConfig,
    dir: &Path,
) -> Result<CheckLine, Failure> {
    let perts: Vec<Perturbation> = cfg.verify.offsets.iter().map(|&e| Perturbation::Offset(e)).collect();
    let rep = verify_nash(model, u, cfg.sim.x0, m0, &perts, mc)?;
    let mut t = Table::new(&[
        "label",
        "cost_mean",
        "cost_stderr",
        "delta_mean",
        "delta_stderr",
        "delta_ci_lo",
        "delta_ci_hi",
    ]);
    t.row(&[
        "base".into(),
        rep.base_cost.mean.into(),
        rep.base_cost.std_error.into(),
        0.0.into(),
        0.0.into(),
        0.0.into(),
        0.0.into(),
    ]);
    let mut worst_margin = f64::INFINITY;
    for p in &rep.perturbed {
        t.row(&[
            p.label.as_str().into(),
            p.cost.mean.into(),
            p.cost.std_error.into(),
            p.delta.mean.into(),
            p.delta.std_error.into(),
            p.delta_ci.0.into(),
            p.delta_ci.1.into(),
        ]);
        worst_margin = worst_margin.min(p.delta_ci.0 + 3.0 * p.delta.std_error);
    }
    t.write_to(&dir.join("nash.csv"))?;
    Ok(CheckLine {
        name: "nash",
        passed: rep.all_non_negative,
        detail: format!(
            "{} perturbation(s), min (ci_lo + 3 se) = {}",
            rep.perturbed.len(),
            if rep.perturbed.is_empty() { 0.0 } else { worst_margin }
        ),
    })
}

fn check_gateaux(
    model: &LQModel,
    u: &QuadraticValue,
    cfg: &RunConfig,
    m0: f64,
    mc: &McConfig,
    dir: &Path,
) -> Result<CheckLine, Failure> {
    let eps = [1.0, 0.5, 0.25];
    let pts = gateaux_slope(model, u, cfg.sim.x0, m0, |_| 1.0, &eps, mc)?;
    let mut t = Table::new(&["eps", "delta_mean", "delta_stderr", "slope"]);
    for p in &pts {
        t.row(&[
            p.eps.into(),
            p.delta.mean.into(),
            p.delta.std_error.into(),
            p.slope.into(),
        ]);
    }
    t.write_to(&dir.join("gateaux.csv"))?;
    let ratios: Vec<f64> = pts.windows(2).map(|w| w[0].slope / w[1].slope).collect();
    let passed = pts.iter().all(|p| p.slope > 0.0) && ratios.iter().all(|r| (1.8..=2.2).contains(r));
    Ok(CheckLine {
        name: "gateaux",
        passed,
        detail: format!("slope ratios {ratios:?} (want within [1.8, 2.2])"),
    })
}

fn check_consistency(model: &LQModel, u: &QuadraticValue, cfg: &RunConfig, dir: &Path) -> Result<CheckLine, Failure> {
    let law = cfg.law0.to_law()?;
    let grid = TimeGrid::new(cfg.sim.horizon, cfg.sim.dt)?;
    let n = cfg.sim.n_particles.clamp(1, CONSISTENCY_MAX_PARTICLES);
    let dev = flow_consistency(model, u, &law, n, cfg.sim.seed, grid, 0.0)?;
    let tol = 1e-9;
    let mut t = Table::new(&["n_particles", "steps", "max_deviation", "tolerance"]);
    t.row(&[n.into(), grid.n_steps().into(), dev.into(), tol.into()]);
    t.write_to(&dir.join("consistency.csv"))?;
    Ok(CheckLine {
        name: "consistency",
        passed: dev <= tol,
        detail: format!("max deviation {dev} (tolerance {tol})"),
    })
}

fn check_representation(
    model: &LQModel,
    u: &QuadraticValue,
    cfg: &RunConfig,
    m0: f64,
    dir: &Path,
) -> Result<CheckLine, Failure> {
    let grid = TimeGrid::new(cfg.sim.horizon, cfg.sim.dt)?;
    let flow = equilibrium_mean_flow(model, u, m0, grid)?;
    let fb = EquilibriumFeedback::new(model, u);
    let opts = SimOptions {
        record_every: cfg.sim.record_every,
        ..SimOptions::default()
    };
    let starts = vec![cfg.sim.x0; REPRESENTATION_PATHS];
    let batch = simulate_representative(model, &fb, &starts, &flow, cfg.sim.seed, &opts)?;
    let rep = y_representation_check(model, u, &batch, &flow)?;
    let tol = 1e-3;
    let mut t = Table::new(&["max_gap", "window_end", "points", "tolerance"]);
    t.row(&[rep.max_gap.into(), rep.window_end.into(), rep.points.into(), tol.into()]);
    t.write_to(&dir.join("representation.csv"))?;
    Ok(CheckLine {
        name: "representation",
        passed: rep.max_gap <= tol,
        detail: format!("max gap {} on [0, {}] (tolerance {tol})", rep.max_gap, rep.window_end),
    })
}

fn check_uniqueness(model: &LQModel, u: &QuadraticValue, cfg: &RunConfig, dir: &Path) -> Result<CheckLine, Failure> {
    let law = cfg.law0.to_law()?;
    let ucfg = UniquenessConfig {
        n_particles: cfg.sim.n_particles,
        n_paths: cfg.sim.n_paths,
        horizon: cfg.sim.horizon,
        dt: cfg.sim.dt,
    };
    let seeds = (cfg.sim.seed, cfg.sim.seed.wrapping_add(1));
    let rep = weak_uniqueness_check(model, u, cfg.sim.x0, &law, seeds, &ucfg, 0.0)?;
    let mut t = Table::new(&[
        "estimate_a",
        "stderr_a",
        "estimate_b",
        "stderr_b",
        "overlap_z",
        "ks_statistic",
        "ks_critical",
        "field_source",
    ]);
    t.row(&[
        rep.estimate_a.mean.into(),
        rep.estimate_a.std_error.into(),
        rep.estimate_b.mean.into(),
        rep.estimate_b.std_error.into(),
        rep.overlap_z.into(),
        rep.ks_statistic.into(),
        rep.ks_critical.into(),
        "analytic".into(),
    ]);
    t.write_to(&dir.join("uniqueness.csv"))?;
    Ok(CheckLine {
        name: "uniqueness",
        passed: rep.overlap_z.abs() <= 3.0 && rep.ks_statistic < rep.ks_critical,
        detail: format!(
            "|z| = {} (limit 3), KS = {} (critical {})",
            rep.overlap_z.abs(),
            rep.ks_statistic,
            rep.ks_critical
        ),
    })
}

fn check_lipschitz(u: &QuadraticValue, dir: &Path) -> Result<CheckLine, Failure> {
    let probes = grid_probes(-3.0, 3.0, 13, 0.1);
    let rep = lipschitz_scan(|x, m| u.dx(x, m), &probes)?;
    let bound = (2.0 * u.a1).abs().max(u.a2.abs());
    let mut t = Table::new(&["max_ratio", "gradient_bound", "probes_used", "probes_skipped"]);
    t.row(&[rep.max_ratio.into(), bound.into(), rep.used.into(), rep.skipped.into()]);
    t.write_to(&dir.join("lipschitz.csv"))?;
    Ok(CheckLine {
        name: "lipschitz",
        passed: rep.max_ratio.is_finite() && rep.max_ratio <= bound + 1e-9,
        detail: format!("max ratio {} (gradient bound {bound})", rep.max_ratio),
    })
}

pub fn fixed_point(cfg: &RunConfig, dir: &Path, out: &mut String) -> Outcome {
    let model = model_of(cfg)?;
    let law = cfg.law0.to_law()?;
    let fp = &cfg.fixed_point;
    let space = match (fp.x_lo, fp.x_hi) {
        (Some(lo), Some(hi)) => SpaceGrid::new(lo, hi, fp.dx)?,
        (lo, hi) => {
            // the closed-loop rate of the selected root if there is one,
            // else a unit-rate fallback
            let cx = equilibrium_value(&model)
                .map(|u| model.closed_loop_coeffs(&u).cx)
                .unwrap_or(-1.0);
            let auto = default_space_grid(&law, cx, fp.dx)?;
            SpaceGrid::new(lo.unwrap_or(auto.lo()), hi.unwrap_or(auto.hi()), fp.dx)?
        }
    };
    let config = FixedPointConfig {
        horizon: cfg.sim.horizon,
        dt: cfg.sim.dt,
        space,
        n_particles: cfg.sim.n_particles,
        damping: fp.damping,
        tol: fp.tol,
        max_iter: fp.max_iter,
        seed: cfg.sim.seed,
        terminal: fp.terminal,
    };
    let rep = solve_mfg(&model, &law, &config)?;
    ensure_dir(dir)?;
    let mut hist = Table::new(&["iter", "sup_delta"]);
    for (i, d) in rep.history.iter().enumerate() {
        hist.row(&[(i + 1).into(), (*d).into()]);
    }
    hist.write_to(&dir.join("flow_iterations.csv"))?;
    let grid = *rep.final_flow.grid();
    let mut flow = Table::new(&["t", "m"]);
    for k in 0..grid.n_nodes() {
        flow.row(&[grid.time(k).into(), rep.final_flow.at_node(k).into()]);
    }
    flow.write_to(&dir.join("final_flow.csv"))?;
    let field = &rep.final_field;
    let xs: Vec<f64> = field.space_grid().points().collect();
    let mut ft = Table::new(&["t", "x", "u"]);
    let stride = cfg.output.field_stride;
    let mut nodes: Vec<usize> = (0..grid.n_nodes()).step_by(stride).collect();
    if nodes.last() != Some(&grid.n_steps()) {
        nodes.push(grid.n_steps());
    }
    for k in nodes {
        for (x, v) in xs.iter().zip(field.row(k)) {
            ft.row(&[Cell::Num(grid.time(k)), Cell::Num(*x), Cell::Num(*v)]);
        }
    }
    ft.write_to(&dir.join("field.csv"))?;
    let _ = writeln!(
        out,
        "{} after {} iteration(s): sup delta {} (tol {})",
        if rep.converged { "converged" } else { "not converged" },
        rep.iterations,
        rep.flow_delta,
        fp.tol
    );
    Ok(if rep.converged { exit::OK } else { exit::NOT_CONVERGED })
}
