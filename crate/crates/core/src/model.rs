//! The linear-quadratic model: drift `b1 x + b2 m + b3 a`, running cost
//! `b4 x m + A x^2 + C a^2`, discount rate `r`, unit diffusion.
//!
//! The population enters only through its mean `m`, so every function here
//! takes the mean in place of the measure.

use alloc::format;

use crate::error::{Error, Result};
use crate::master::QuadraticValue;

/// Raw coefficient tuple, unchecked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    /// Discount rate.
    pub r: f64,
    /// Drift coefficient of the own state.
    pub b1: f64,
    /// Drift coefficient of the population mean.
    pub b2: f64,
    /// Drift coefficient of the control.
    pub b3: f64,
    /// Cost coupling between own state and population mean.
    pub b4: f64,
    /// State cost weight `A`.
    pub state_cost: f64,
    /// Control cost weight `C`.
    pub control_cost: f64,
}

/// A validated model: `r > 0`, `A > 0`, `C > 0`, `b3 != 0`, all finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LQModel {
    pub(crate) r: f64,
    pub(crate) b1: f64,
    pub(crate) b2: f64,
    pub(crate) b3: f64,
    pub(crate) b4: f64,
    pub(crate) state_cost: f64,
    pub(crate) control_cost: f64,
}

/// Convexity and Lipschitz moduli of the separable cost part `A x^2 + C a^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralConstants {
    /// x-convexity modulus.
    pub iota: f64,
    /// a-convexity modulus.
    pub eta: f64,
    /// a-Lipschitz constant of the control gradient of the cost.
    pub zeta: f64,
    /// x-Lipschitz constant of the control gradient of the cost.
    pub ell_x: f64,
}

/// Linear closed-loop drift `cx * x + cm * m` under a quadratic value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoop {
    pub cx: f64,
    pub cm: f64,
}

impl ClosedLoop {
    /// Growth rate of the population mean, `dm/dt = (cx + cm) m`.
    pub fn mean_rate(&self) -> f64 {
        self.cx + self.cm
    }
}

impl LQModel {
    pub fn new(c: Coefficients) -> Result<Self> {
        let all = [c.r, c.b1, c.b2, c.b3, c.b4, c.state_cost, c.control_cost];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite coefficient in {c:?}")));
        }
        if c.r <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "discount rate r must be positive, got {}",
                c.r
            )));
        }
        if c.state_cost <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "state cost A must be positive, got {}",
                c.state_cost
            )));
        }
        if c.control_cost <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "control cost C must be positive, got {}",
                c.control_cost
            )));
        }
        if c.b3 == 0.0 {
            return Err(Error::InvalidModel(
                "b3 must be nonzero: the control has no effect".into(),
            ));
        }
        Ok(Self::new_unchecked(c))
    }

    /// Builds a model without validation. Only the pointwise evaluation
    /// functions are meaningful for such a model (e.g. a zero-cost probe).
    pub const fn new_unchecked(c: Coefficients) -> Self {
        Self {
            r: c.r,
            b1: c.b1,
            b2: c.b2,
            b3: c.b3,
            b4: c.b4,
            state_cost: c.state_cost,
            control_cost: c.control_cost,
        }
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients {
            r: self.r,
            b1: self.b1,
            b2: self.b2,
            b3: self.b3,
            b4: self.b4,
            state_cost: self.state_cost,
            control_cost: self.control_cost,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn b1(&self) -> f64 {
        self.b1
    }
    pub fn b2(&self) -> f64 {
        self.b2
    }
    pub fn b3(&self) -> f64 {
        self.b3
    }
    pub fn b4(&self) -> f64 {
        self.b4
    }
    pub fn state_cost(&self) -> f64 {
        self.state_cost
    }
    pub fn control_cost(&self) -> f64 {
        self.control_cost
    }

    /// `b3^2 / (2C)`: the gain from the adjoint to the drift under the
    /// optimal control.
    #[inline]
    pub fn control_gain(&self) -> f64 {
        self.b3 * self.b3 / (2.0 * self.control_cost)
    }

    pub fn structural_constants(&self) -> StructuralConstants {
        StructuralConstants {
            iota: self.state_cost,
            eta: self.control_cost,
            zeta: 2.0 * self.control_cost,
            ell_x: 0.0,
        }
    }

    /// Minimizer of the Hamiltonian in the control, `-b3 y / (2C)`.
    #[inline]
    pub fn alpha_hat(&self, _x: f64, y: f64) -> f64 {
        -self.b3 * y / (2.0 * self.control_cost)
    }

    #[inline]
    pub fn drift(&self, x: f64, m: f64, a: f64) -> f64 {
        self.b1 * x + self.b2 * m + self.b3 * a
    }

    #[inline]
    pub fn cost_rate(&self, x: f64, m: f64, a: f64) -> f64 {
        self.b4 * x * m + self.state_cost * x * x + self.control_cost * a * a
    }

    /// Generalized Hamiltonian `b(x, m, a) y + f(x, m, a) - r x y`.
    #[inline]
    pub fn generalized_hamiltonian(&self, x: f64, m: f64, a: f64, y: f64) -> f64 {
        self.drift(x, m, a) * y + self.cost_rate(x, m, a) - self.r * x * y
    }

    /// Minimized Hamiltonian without the discount term:
    /// `(b1 x + b2 m) y + b4 x m + A x^2 - b3^2 y^2 / (4C)`.
    #[inline]
    pub fn hamiltonian(&self, x: f64, m: f64, y: f64) -> f64 {
        (self.b1 * x + self.b2 * m) * y + self.b4 * x * m + self.state_cost * x * x
            - self.b3 * self.b3 / (4.0 * self.control_cost) * y * y
    }

    /// `dH/dx = b1 y + b4 m + 2 A x`.
    #[inline]
    pub fn hamiltonian_dx(&self, x: f64, m: f64, y: f64) -> f64 {
        self.b1 * y + self.b4 * m + 2.0 * self.state_cost * x
    }

    /// `dH/dy = b1 x + b2 m - b3^2 y / (2C)`, the optimally controlled drift.
    #[inline]
    pub fn hamiltonian_dy(&self, x: f64, m: f64, y: f64) -> f64 {
        self.b1 * x + self.b2 * m - self.control_gain() * y
    }

    /// Coefficients of the drift `b(x, m, alpha_hat(x, dU/dx(x, m)))`.
    pub fn closed_loop_coeffs(&self, u: &QuadraticValue) -> ClosedLoop {
        let g = self.control_gain();
        ClosedLoop {
            cx: self.b1 - 2.0 * g * u.a1,
            cm: self.b2 - g * u.a2,
        }
    }
}

/// The model of the worked example: `r = 2, b1 = b2 = b4 = 0, b3 = 2, A = 2, C = 1`.
pub fn example_model() -> LQModel {
    LQModel::new_unchecked(Coefficients {
        r: 2.0,
        b1: 0.0,
        b2: 0.0,
        b3: 2.0,
        b4: 0.0,
        state_cost: 2.0,
        control_cost: 1.0,
    })
}

/// A model with mean coupling in both drift and cost:
/// `r = 1, b1 = -0.1, b2 = 0.5, b3 = 2, b4 = 0.5, A = 2, C = 1`.
pub fn coupled_model() -> LQModel {
    LQModel::new_unchecked(Coefficients {
        r: 1.0,
        b1: -0.1,
        b2: 0.5,
        b3: 2.0,
        b4: 0.5,
        state_cost: 2.0,
        control_cost: 1.0,
    })
}
