//! Quadratic solutions of the linear-quadratic elliptic master equation.
//!
//! Substituting `U(x, mu) = a1 x^2 + a2 x m + a3 m^2 + a4` (with `m` the mean
//! of `mu`) into the master equation and matching coefficients gives
//!
//! ```text
//! r a1 = 2 b1 a1 + A - (b3^2/C) a1^2
//! r a2 = 2 b2 a1 + b1 a2 + b4 - (b3^2/C) a1 a2 + a2 K
//! r a3 = b2 a2 - (b3^2/(4C)) a2^2 + 2 a3 K
//! r a4 = a1
//! ```
//!
//! with `K = b1 + b2 - (b3^2/C) a1 - (b3^2/(2C)) a2`. The system is solved
//! front to back: two quadratics, then two linear equations. At most one
//! solution keeps the closed-loop state in `L^2_r`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{quadratic_roots, QuadraticRoots};
use crate::model::LQModel;

/// `U(x, mu) = a1 x^2 + a2 x m + a3 m^2 + a4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticValue {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

/// Value and derivatives of a [`QuadraticValue`] at `(x, m)`.
///
/// The measure derivative `dU/dmu(x, mu, x~) = a2 x + 2 a3 m` does not depend
/// on `x~`; [`Jet::dmu_at`] evaluates it as a function anyway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
    pub dmu: f64,
    pub dxtilde_dmu: f64,
}

impl Jet {
    pub fn dmu_at(&self, _x_tilde: f64) -> f64 {
        self.dmu
    }
}

impl QuadraticValue {
    pub const fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Self {
        Self { a1, a2, a3, a4 }
    }

    #[inline]
    pub fn value(&self, x: f64, m: f64) -> f64 {
        self.a1 * x * x + self.a2 * x * m + self.a3 * m * m + self.a4
    }

    /// `dU/dx = 2 a1 x + a2 m`, the decoupling field of the adjoint.
    #[inline]
    pub fn dx(&self, x: f64, m: f64) -> f64 {
        2.0 * self.a1 * x + self.a2 * m
    }

    pub fn jet(&self, x: f64, m: f64) -> Jet {
        Jet {
            value: self.value(x, m),
            dx: self.dx(x, m),
            dxx: 2.0 * self.a1,
            dmu: self.a2 * x + 2.0 * self.a3 * m,
            dxtilde_dmu: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a1, self.a2, self.a3, self.a4]
    }
}

/// Free function form of [`QuadraticValue::jet`].
pub fn eval_jet(u: &QuadraticValue, x: f64, m: f64) -> Jet {
    u.jet(x, m)
}

/// Residuals `lhs - rhs` of the four coefficient equations.
pub fn root_system_residual(model: &LQModel, u: &QuadraticValue) -> [f64; 4] {
    let (r, b1, b2, b4) = (model.r, model.b1, model.b2, model.b4);
    let s = model.b3 * model.b3 / model.control_cost;
    let k = b1 + b2 - s * u.a1 - 0.5 * s * u.a2;
    [
        r * u.a1 - (2.0 * b1 * u.a1 + model.state_cost - s * u.a1 * u.a1),
        r * u.a2 - (2.0 * b2 * u.a1 + b1 * u.a2 + b4 - s * u.a1 * u.a2 + u.a2 * k),
        r * u.a3 - (b2 * u.a2 - 0.25 * s * u.a2 * u.a2 + 2.0 * u.a3 * k),
        r * u.a4 - u.a1,
    ]
}

fn push_roots(out: &mut Vec<f64>, roots: QuadraticRoots) {
    match roots {
        QuadraticRoots::None { .. } => {}
        QuadraticRoots::Double(z) => out.push(z),
        QuadraticRoots::Two(z1, z2) => {
            out.push(z1);
            out.push(z2);
        }
    }
}

/// Real roots of the `a1` quadratic, descending.
pub fn solve_a1(model: &LQModel) -> Result<Vec<f64>> {
    let s = model.b3 * model.b3 / model.control_cost;
    let roots = quadratic_roots(s, model.r - 2.0 * model.b1, -model.state_cost);
    if let QuadraticRoots::None { discriminant } = roots {
        return Err(Error::NoRealRoot { discriminant });
    }
    let mut out = Vec::with_capacity(2);
    push_roots(&mut out, roots);
    Ok(out)
}

/// Real roots of the `a2` quadratic for a given `a1`, descending. Complex
/// roots are dropped.
pub fn solve_a2(model: &LQModel, a1: f64) -> Vec<f64> {
    let s = model.b3 * model.b3 / model.control_cost;
    let lead = 0.5 * s;
    let linear = model.r - 2.0 * model.b1 - model.b2 + 2.0 * s * a1;
    let constant = -(2.0 * model.b2 * a1 + model.b4);
    let mut out = Vec::with_capacity(2);
    push_roots(&mut out, quadratic_roots(lead, linear, constant));
    out
}

/// All real `(a1, a2)` pairs, ordered by `a1` then `a2`, both descending.
pub fn solve_a1_a2(model: &LQModel) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::with_capacity(4);
    for a1 in solve_a1(model)? {
        for a2 in solve_a2(model, a1) {
            pairs.push((a1, a2));
        }
    }
    Ok(pairs)
}

/// Whether `2 b2 a1 + b4 > 0`, a sufficient condition for two distinct real
/// `a2` roots. Informational only.
pub fn a2_distinct_roots_hint(model: &LQModel, a1: f64) -> bool {
    2.0 * model.b2 * a1 + model.b4 > 0.0
}

/// Every real solution of the coefficient system, ordered by `a1` then `a2`,
/// both descending.
pub fn solve_root_system(model: &LQModel) -> Result<Vec<QuadraticValue>> {
    let s = model.b3 * model.b3 / model.control_cost;
    let mut out = Vec::with_capacity(4);
    for (a1, a2) in solve_a1_a2(model)? {
        let k = model.b1 + model.b2 - s * a1 - 0.5 * s * a2;
        let coeff = model.r - 2.0 * k;
        if coeff == 0.0 {
            return Err(Error::DegenerateA3 { a1, a2 });
        }
        let a3 = (model.b2 * a2 - 0.25 * s * a2 * a2) / coeff;
        out.push(QuadraticValue::new(a1, a2, a3, a1 / model.r));
    }
    Ok(out)
}

/// Tolerance below which a closed-loop rate counts as sitting on the
/// `r / 2` stability boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Whether the closed-loop second moment grows slower than `e^{r t}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// A rate equals `r / 2` to within [`BOUNDARY_TOL`].
    Boundary,
}

/// Classifies a candidate: stable iff `cx < r/2` and `cx + cm < r/2`.
pub fn classify(model: &LQModel, u: &QuadraticValue) -> Stability {
    let cl = model.closed_loop_coeffs(u);
    let half = 0.5 * model.r;
    let rates = [cl.cx, cl.mean_rate()];
    if rates.iter().any(|&g| (g - half).abs() <= BOUNDARY_TOL) {
        return Stability::Boundary;
    }
    if rates.iter().all(|&g| g < half) {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// The unique candidate whose closed-loop dynamics stay in `L^2_r`.
pub fn select_admissible(model: &LQModel, candidates: &[QuadraticValue]) -> Result<QuadraticValue> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    let mut chosen = Vec::new();
    let mut notes = Vec::new();
    for u in candidates {
        let cl = model.closed_loop_coeffs(u);
        match classify(model, u) {
            Stability::Stable => chosen.push(*u),
            Stability::Unstable => notes.push(format!(
                "({}, {}, {}, {}) unstable: cx = {}, cx + cm = {}",
                u.a1,
                u.a2,
                u.a3,
                u.a4,
                cl.cx,
                cl.mean_rate()
            )),
            Stability::Boundary => notes.push(format!(
                "({}, {}, {}, {}) BoundaryStability: a closed-loop rate equals r/2 = {}",
                u.a1,
                u.a2,
                u.a3,
                u.a4,
                0.5 * model.r
            )),
        }
    }
    match chosen.len() {
        1 => Ok(chosen[0]),
        0 => Err(Error::NoAdmissibleRoot(notes.join("; "))),
        count => Err(Error::AmbiguousRoot { count }),
    }
}

/// Convenience: solve the root system and select the admissible root.
pub fn equilibrium_value(model: &LQModel) -> Result<QuadraticValue> {
    let roots = solve_root_system(model)?;
    select_admissible(model, &roots)
}

/// Maximum absolute residual over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub max_abs_residual: f64,
    pub argmax: (f64, f64),
    pub points: usize,
    pub grid: String,
}

fn describe(grid: &[(f64, f64)]) -> String {
    let (mut xlo, mut xhi, mut mlo, mut mhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, m) in grid {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        mlo = mlo.min(m);
        mhi = mhi.max(m);
    }
    format!("{} points, x in [{xlo}, {xhi}], m in [{mlo}, {mhi}]", grid.len())
}

fn max_residual<F: Fn(f64, f64) -> f64>(grid: &[(f64, f64)], residual: F) -> Result<ResidualReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("residual grid is empty".into()));
    }
    let mut worst = -1.0;
    let mut argmax = grid[0];
    for &(x, m) in grid {
        let r = residual(x, m).abs();
        // NaN residuals must surface, not disappear in the max
        if r > worst || r.is_nan() {
            worst = r;
            argmax = (x, m);
            if r.is_nan() {
                break;
            }
        }
    }
    Ok(ResidualReport {
        max_abs_residual: worst,
        argmax,
        points: grid.len(),
        grid: describe(grid),
    })
}

/// Pointwise residual of the master equation for a quadratic `U`.
///
/// The expectation over an independent copy `x~` of the population state is
/// exact: `dU/dmu` is constant in `x~` and `dH/dy` is affine in it, so the
/// expectation is the integrand evaluated at `x~ = m`.
pub fn master_equation_residual(model: &LQModel, u: &QuadraticValue, x: f64, m: f64) -> f64 {
    let jet = u.jet(x, m);
    let population_drift = model.hamiltonian_dy(m, m, u.dx(m, m));
    let rhs =
        model.hamiltonian(x, m, jet.dx) + 0.5 * jet.dxx + 0.5 * jet.dxtilde_dmu + jet.dmu_at(m) * population_drift;
    model.r * jet.value - rhs
}

pub fn master_residual(model: &LQModel, u: &QuadraticValue, grid: &[(f64, f64)]) -> Result<ResidualReport> {
    max_residual(grid, |x, m| master_equation_residual(model, u, x, m))
}

/// Pointwise residual of the x-differentiated master equation for
/// `V = dU/dx = 2 a1 x + a2 m`.
pub fn derivative_equation_residual(model: &LQModel, u: &QuadraticValue, x: f64, m: f64) -> f64 {
    let v = u.dx(x, m);
    let v_x = 2.0 * u.a1;
    let v_xx = 0.0;
    let v_mu = u.a2;
    let v_xtilde_mu = 0.0;
    let population_drift = model.hamiltonian_dy(m, m, u.dx(m, m));
    let rhs = model.hamiltonian_dx(x, m, v)
        + model.hamiltonian_dy(x, m, v) * v_x
        + 0.5 * v_xx
        + 0.5 * v_xtilde_mu
        + v_mu * population_drift;
    model.r * v - rhs
}

pub fn pa_master_residual(model: &LQModel, u: &QuadraticValue, grid: &[(f64, f64)]) -> Result<ResidualReport> {
    max_residual(grid, |x, m| derivative_equation_residual(model, u, x, m))
}

/// `n x n` tensor grid over `[lo, hi]^2`.
pub fn square_grid(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push((lo + i as f64 * step, lo + j as f64 * step));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coupled_model, example_model, Coefficients};
    use proptest::prelude::*;

    fn example_roots() -> [QuadraticValue; 4] {
        [
            QuadraticValue::new(0.5, 0.0, 0.0, 0.25),
            QuadraticValue::new(0.5, -3.0, 1.5, 0.25),
            QuadraticValue::new(-1.0, 0.0, 0.0, -0.5),
            QuadraticValue::new(-1.0, 3.0, -1.5, -0.5),
        ]
    }

    fn close(a: &QuadraticValue, b: &QuadraticValue, tol: f64) -> bool {
        a.as_array().iter().zip(b.as_array()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn example_has_four_roots_in_order() {
        let roots = solve_root_system(&example_model()).unwrap();
        assert_eq!(roots.len(), 4);
        for want in example_roots() {
            assert_eq!(
                roots.iter().filter(|got| close(got, &want, 1e-12)).count(),
                1,
                "{want:?}"
            );
        }
    }

    #[test]
    fn zero_coupling_has_a2_zero_branch() {
        let m = LQModel::new(Coefficients {
            r: 1.5,
            b1: 0.3,
            b2: 0.0,
            b3: 1.2,
            b4: 0.0,
            state_cost: 0.7,
            control_cost: 2.0,
        })
        .unwrap();
        let roots = solve_root_system(&m).unwrap();
        for a1 in solve_a1(&m).unwrap() {
            assert!(roots.iter().any(|u| u.a1 == a1 && u.a2 == 0.0));
        }
    }

    #[test]
    fn coupled_roots_back_substitute() {
        let m = coupled_model();
        let roots = solve_root_system(&m).unwrap();
        assert_eq!(roots.len(), 4);
        for u in &roots {
            for r in root_system_residual(&m, u) {
                assert!(r.abs() < 1e-10, "{u:?}: {r}");
            }
        }
    }

    #[test]
    fn selection_picks_u1() {
        let m = example_model();
        let roots = solve_root_system(&m).unwrap();
        let u = select_admissible(&m, &roots).unwrap();
        assert!(close(&u, &example_roots()[0], 1e-12));
        assert_eq!(classify(&m, &example_roots()[2]), Stability::Unstable);
        assert_eq!(classify(&m, &example_roots()[1]), Stability::Unstable);
    }

    #[test]
    fn selection_errors() {
        let m = example_model();
        let roots = example_roots();
        assert!(matches!(
            select_admissible(&m, &roots[2..]),
            Err(Error::NoAdmissibleRoot(_))
        ));
        assert!(matches!(
            select_admissible(&m, &[roots[0], roots[0]]),
            Err(Error::AmbiguousRoot { count: 2 })
        ));
        assert!(matches!(select_admissible(&m, &[]), Err(Error::InvalidArgument(_))));
        // cx = r/2 exactly: b1 - 4 a1 = 1 with a1 = -1/4
        let boundary = QuadraticValue::new(-0.25, 0.0, 0.0, 0.0);
        assert_eq!(classify(&m, &boundary), Stability::Boundary);
        match select_admissible(&m, &[boundary]) {
            Err(Error::NoAdmissibleRoot(msg)) => assert!(msg.contains("BoundaryStability")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_a3_is_reported() {
        // Built backwards from (a1, a2) = (1, -2) with b3 = C = r = 1: the a3
        // coefficient r - 2 (b1 + b2 - s a1 - s a2 / 2) is exactly zero.
        let m = LQModel::new(Coefficients {
            r: 1.0,
            b1: 0.0,
            b2: 0.5,
            b3: 1.0,
            b4: -4.0,
            state_cost: 2.0,
            control_cost: 1.0,
        })
        .unwrap();
        assert!(solve_a1_a2(&m).unwrap().contains(&(1.0, -2.0)));
        assert_eq!(solve_root_system(&m), Err(Error::DegenerateA3 { a1: 1.0, a2: -2.0 }));
    }

    #[test]
    fn jet_examples() {
        let [u1, u2, ..] = example_roots();
        let j = eval_jet(&u1, 1.0, 7.0);
        assert_eq!(
            (j.value, j.dx, j.dxx, j.dmu_at(3.0), j.dxtilde_dmu),
            (0.75, 1.0, 1.0, 0.0, 0.0)
        );
        let u = QuadraticValue::new(0.3, -0.2, 0.9, 1.7);
        let j = eval_jet(&u, 0.0, 0.0);
        assert_eq!((j.value, j.dx, j.dxx, j.dmu, j.dxtilde_dmu), (1.7, 0.0, 0.6, 0.0, 0.0));
        let j = eval_jet(&u2, 1.0, 1.0);
        assert_eq!(
            (j.value, j.dx, j.dxx, j.dmu, j.dxtilde_dmu),
            (-0.75, -2.0, 1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn master_residual_examples() {
        let m = example_model();
        let grid = square_grid(-3.0, 3.0, 61);
        for u in example_roots() {
            assert!(master_residual(&m, &u, &grid).unwrap().max_abs_residual < 1e-10);
        }
        let mut bumped = example_roots()[0];
        bumped.a4 += 0.1;
        let rep = master_residual(&m, &bumped, &grid).unwrap();
        assert!((rep.max_abs_residual - 0.2).abs() < 1e-12);
        assert!(master_residual(&m, &bumped, &[]).is_err());
    }

    #[test]
    fn derivative_residual_examples() {
        let m = example_model();
        let grid = square_grid(-3.0, 3.0, 61);
        let u1 = example_roots()[0];
        assert!(pa_master_residual(&m, &u1, &grid).unwrap().max_abs_residual < 1e-10);
        let b = coupled_model();
        for u in solve_root_system(&b).unwrap() {
            let rep = pa_master_residual(&b, &u, &[(0.0, 0.0)]).unwrap();
            assert!(rep.max_abs_residual < 1e-10);
        }
        let mut bumped = u1;
        bumped.a1 += 0.01;
        assert!(pa_master_residual(&m, &bumped, &grid).unwrap().max_abs_residual > 1e-3);
    }

    #[test]
    fn a4_linkage_is_exact() {
        for m in [example_model(), coupled_model()] {
            for u in solve_root_system(&m).unwrap() {
                assert_eq!(u.a4, u.a1 / m.r);
            }
        }
    }

    #[test]
    fn distinct_root_hint() {
        let b = coupled_model();
        let a1 = solve_a1(&b).unwrap()[0];
        assert!(a2_distinct_roots_hint(&b, a1));
        assert!(!a2_distinct_roots_hint(&example_model(), 0.5));
    }

    fn arb_model() -> impl Strategy<Value = LQModel> {
        (
            0.2f64..3.0,
            -1.0f64..0.5,
            -1.0f64..1.0,
            prop_oneof![-3.0f64..-0.5, 0.5f64..3.0],
            -1.0f64..1.0,
            0.2f64..3.0,
            0.2f64..3.0,
        )
            .prop_map(|(r, b1, b2, b3, b4, a, c)| {
                LQModel::new(Coefficients {
                    r,
                    b1,
                    b2,
                    b3,
                    b4,
                    state_cost: a,
                    control_cost: c,
                })
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn roots_back_substitute(m in arb_model()) {
            if let Ok(roots) = solve_root_system(&m) {
                for u in &roots {
                    let scale = 1.0 + u.as_array().iter().fold(0.0f64, |s, v| s.max(v.abs()));
                    for r in root_system_residual(&m, u) {
                        prop_assert!(r.abs() < 1e-10 * scale * scale, "{:?} {}", u, r);
                    }
                }
            }
        }

        #[test]
        fn residual_vanishes_iff_root(m in arb_model(), d in -0.5f64..0.5, which in 0usize..4) {
            let roots = solve_root_system(&m).unwrap();
            prop_assume!(!roots.is_empty());
            let grid = square_grid(-2.0, 2.0, 9);
            for u in &roots {
                prop_assert!(master_residual(&m, u, &grid).unwrap().max_abs_residual < 1e-8);
            }
            if d.abs() > 1e-3 {
                let mut arr = roots[0].as_array();
                arr[which] += d;
                let bumped = QuadraticValue::new(arr[0], arr[1], arr[2], arr[3]);
                let sys = root_system_residual(&m, &bumped);
                let violates = sys.iter().any(|r| r.abs() > 1e-8);
                let res = master_residual(&m, &bumped, &grid).unwrap().max_abs_residual;
                prop_assert_eq!(violates, res > 1e-8);
            }
        }

        #[test]
        fn jet_matches_finite_differences(
            a1 in -2.0f64..2.0, a2 in -2.0f64..2.0, a3 in -2.0f64..2.0, a4 in -2.0f64..2.0,
            x in -3.0f64..3.0, m in -3.0f64..3.0,
        ) {
            let u = QuadraticValue::new(a1, a2, a3, a4);
            let h = 1e-5;
            let j = u.jet(x, m);
            let fd1 = (u.value(x + h, m) - u.value(x - h, m)) / (2.0 * h);
            prop_assert!((fd1 - j.dx).abs() < 1e-8);
            let h2 = 1e-3;
            let fd2 = (u.value(x + h2, m) - 2.0 * u.value(x, m) + u.value(x - h2, m)) / (h2 * h2);
            prop_assert!((fd2 - j.dxx).abs() < 1e-5);
            // measure derivative: shift every particle by h moves the mean by h
            let fdm = (u.value(x, m + h) - u.value(x, m - h)) / (2.0 * h);
            prop_assert!((fdm - j.dmu).abs() < 1e-8);
        }

        #[test]
        fn structural_models_select_exactly_one(m in arb_model()) {
            let rep = crate::admissibility::check_structural(&m);
            if rep.passed {
                let roots = solve_root_system(&m).unwrap();
                prop_assert!(select_admissible(&m, &roots).is_ok());
            }
        }
    }
}
