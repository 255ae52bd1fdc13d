use std::fs;
use std::path::{Path, PathBuf};

use dmfg::exit;

const EXAMPLE: &str = "\
model.r = 2
model.b1 = 0
model.b2 = 0
model.b3 = 2
model.b4 = 0
model.A = 2
model.C = 1
";

const COUPLED: &str = "\
model.r = 1
model.b1 = -0.1
model.b2 = 0.5
model.b3 = 2
model.b4 = 0.5
model.A = 2
model.C = 1
";

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new(text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.cfg"), text).unwrap();
        Self { dir }
    }

    fn cfg(&self) -> PathBuf {
        self.dir.path().join("run.cfg")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> i32 {
        let cfg = self.cfg();
        let out = self.out();
        let mut args = vec![
            "dmfg",
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        dmfg::run(args)
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap()
    }
}

fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn check_example_passes() {
    assert_eq!(Case::new(EXAMPLE).run("check", &[]), exit::OK);
}

#[test]
fn check_rejects_invalid_configs() {
    let zero_b3 = EXAMPLE.replace("model.b3 = 2", "model.b3 = 0");
    assert_eq!(Case::new(&zero_b3).run("check", &[]), exit::USAGE);
    let typo = format!("{EXAMPLE}model.b5 = 1\n");
    assert_eq!(Case::new(&typo).run("check", &[]), exit::USAGE);
    let c = Case::new(EXAMPLE);
    assert_eq!(
        dmfg::run([
            "dmfg",
            "check",
            "--config",
            c.dir.path().join("missing.cfg").to_str().unwrap()
        ]),
        exit::USAGE
    );
    assert_eq!(dmfg::run(["dmfg", "frobnicate"]), exit::USAGE);
}

#[test]
fn check_reports_failing_hypotheses() {
    let weak = EXAMPLE.replace("model.b3 = 2", "model.b3 = 0.1");
    assert_eq!(Case::new(&weak).run("check", &[]), exit::CHECK_FAILED);
}

#[test]
fn solve_is_independent_of_check() {
    let weak = EXAMPLE.replace("model.b3 = 2", "model.b3 = 0.1");
    let c = Case::new(&weak);
    assert_eq!(c.run("check", &[]), exit::CHECK_FAILED);
    assert_eq!(c.run("solve", &[]), exit::OK);
}

#[test]
fn solve_example_writes_four_roots() {
    let c = Case::new(EXAMPLE);
    assert_eq!(c.run("solve", &[]), exit::OK);
    let roots = rows(&c.read("roots.csv"));
    assert_eq!(roots.len(), 4);
    assert_eq!(roots.iter().filter(|r| r[6] == 1.0).count(), 1);
    let sel = rows(&c.read("selected.csv"));
    assert_eq!(sel, vec![vec![0.5, 0.0, 0.0, 0.25]]);
}

#[test]
fn solve_coupled_selects_unique_root() {
    let c = Case::new(COUPLED);
    assert_eq!(c.run("solve", &[]), exit::OK);
    let sel = rows(&c.read("selected.csv"));
    assert_eq!(sel.len(), 1);
    let (a1, a2, a3) = (sel[0][0], sel[0][1], sel[0][2]);
    assert!(a1 > 0.0 && a2.is_finite() && a3.is_finite());
}

#[test]
fn solve_without_real_roots_exits_3() {
    let text = "model.r = 1\nmodel.b1 = 0\nmodel.b2 = 2\nmodel.b3 = 1\nmodel.b4 = -5\nmodel.A = 1\nmodel.C = 0.5\n";
    let c = Case::new(text);
    assert_eq!(c.run("solve", &[]), exit::ROOT_SELECTION);
    assert_eq!(c.read("roots.csv").lines().count(), 1);
}

#[test]
fn solve_without_stable_root_exits_3() {
    // four real candidates, every one fails cx + cm < r/2 or cx < r/2
    let text = "model.r = 2\nmodel.b1 = 0\nmodel.b2 = 2\nmodel.b3 = 2\nmodel.b4 = -3.875\nmodel.A = 2\nmodel.C = 1\n";
    let c = Case::new(text);
    assert_eq!(c.run("solve", &[]), exit::ROOT_SELECTION);
    let roots = rows(&c.read("roots.csv"));
    assert_eq!(roots.len(), 4);
    assert!(roots.iter().all(|r| r[6] == 0.0));
    assert!(!c.out().join("selected.csv").exists());
}

#[test]
fn simulate_example_flow_and_cost() {
    let text = format!("{EXAMPLE}law0.kind = dirac\nlaw0.x0 = 1\nsim.n_particles = 10000\nsim.n_paths = 10000\nsim.record_every = 100\n");
    let c = Case::new(&text);
    assert_eq!(c.run("simulate", &[]), exit::OK);
    let flow = rows(&c.read("flow.csv"));
    assert_eq!(flow.len(), 61);
    for r in flow.iter().filter(|r| r[0] <= 3.0) {
        assert!((r[1] - (-2.0 * r[0]).exp()).abs() < 0.02, "{r:?}");
    }
    let cost = rows(&c.read("cost.csv"));
    assert_eq!(cost[0].len(), 5);
    assert!((0.24..=0.26).contains(&cost[0][0]), "{cost:?}");
}

#[test]
fn simulate_divergence_exits_4() {
    let text = format!("{EXAMPLE}law0.x0 = 1\nsim.T = 3000\nsim.dt = 1.5\nsim.n_particles = 10\nsim.n_paths = 10\n");
    assert_eq!(Case::new(&text).run("simulate", &[]), exit::DIVERGENCE);
}

#[test]
fn outputs_are_deterministic_and_seeded() {
    let text = format!("{EXAMPLE}law0.kind = gaussian\nlaw0.mean = 1\nlaw0.sd = 0.5\nsim.T = 2\nsim.n_particles = 500\nsim.n_paths = 500\n");
    let a = Case::new(&text);
    let b = Case::new(&text);
    assert_eq!(a.run("simulate", &[]), exit::OK);
    assert_eq!(b.run("simulate", &[]), exit::OK);
    for f in ["flow.csv", "cost.csv"] {
        assert_eq!(a.read(f), b.read(f));
    }
    assert_eq!(b.run("simulate", &["--seed", "99"]), exit::OK);
    assert_ne!(a.read("cost.csv"), b.read("cost.csv"));
}

#[test]
fn verify_nash_offsets() {
    let text = format!("{EXAMPLE}sim.n_paths = 4000\nsim.dt = 2e-3\nverify.offsets = 0.25, 0.5, 1.0\n");
    let c = Case::new(&text);
    assert_eq!(c.run("verify", &["--checks", "nash"]), exit::OK);
    let nash = rows(&c.read("nash.csv"));
    assert_eq!(nash.len(), 4);
    for (r, eps) in nash[1..].iter().zip([0.25, 0.5, 1.0]) {
        assert!(r[3] > 0.0 && r[5] > 0.0);
        assert!((r[3] - 0.5 * eps * eps).abs() < 0.1 * 0.5 * eps * eps, "{r:?}");
    }
    assert!(c.read("summary.txt").starts_with("PASS nash"));
}

#[test]
fn verify_all_checks_pass_on_example() {
    let text = format!("{EXAMPLE}law0.kind = gaussian\nlaw0.mean = 1\nlaw0.sd = 0.5\nsim.n_paths = 2000\nsim.n_particles = 2000\nsim.dt = 2e-3\n");
    let c = Case::new(&text);
    assert_eq!(c.run("verify", &[]), exit::OK);
    let summary = c.read("summary.txt");
    assert_eq!(summary.lines().count(), 6);
    assert!(summary.lines().all(|l| l.starts_with("PASS ")), "{summary}");
    for name in dmfg::commands::CHECKS {
        assert!(c.out().join(format!("{name}.csv")).exists());
    }
}

#[test]
fn verify_rejects_bad_check_lists() {
    let c = Case::new(EXAMPLE);
    assert_eq!(c.run("verify", &["--checks", ""]), exit::USAGE);
    assert_eq!(c.run("verify", &["--checks", "nash,bogus"]), exit::USAGE);
}

fn field_gap_at_zero(out: &Path) -> f64 {
    let field = rows(&fs::read_to_string(out.join("field.csv")).unwrap());
    field
        .iter()
        .filter(|r| r[0] == 0.0 && r[1].abs() <= 3.0 + 1e-9)
        .map(|r| (r[2] - r[1]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn fixed_point_example_converges() {
    let text = format!(
        "{EXAMPLE}law0.x0 = 1\nsim.T = 3\nsim.n_particles = 4000\nfixed_point.x_lo = -6\nfixed_point.x_hi = 6\n"
    );
    let c = Case::new(&text);
    assert_eq!(c.run("fixed-point", &[]), exit::OK);
    assert!(field_gap_at_zero(&c.out()) < 1e-2);
    let flow = rows(&c.read("final_flow.csv"));
    assert_eq!(flow.len(), 3001);
    for r in &flow {
        assert!((r[1] - (-2.0 * r[0]).exp()).abs() < 0.03);
    }
    assert!(!c.read("flow_iterations.csv").is_empty());
}

#[test]
fn fixed_point_symmetric_start() {
    let text = format!("{EXAMPLE}sim.T = 2\nsim.n_particles = 2000\nfixed_point.tol = 0.1\n");
    let c = Case::new(&text);
    assert_eq!(c.run("fixed-point", &[]), exit::OK);
    assert_eq!(c.read("flow_iterations.csv").lines().count(), 2);
}

#[test]
fn fixed_point_iteration_budget_exits_5_with_artifacts() {
    let text = format!(
        "{COUPLED}law0.x0 = 1\nsim.T = 2\nsim.n_particles = 500\nfixed_point.max_iter = 1\nfixed_point.damping = 1\n"
    );
    let c = Case::new(&text);
    assert_eq!(c.run("fixed-point", &[]), exit::NOT_CONVERGED);
    for f in ["flow_iterations.csv", "final_flow.csv", "field.csv"] {
        assert!(c.out().join(f).exists(), "{f}");
    }
}
