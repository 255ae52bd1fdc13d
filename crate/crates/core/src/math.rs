//! Small numeric helpers: libm wrappers, compensated summation, stable
//! quadratic roots and the standard normal quantile.

pub use libm::{erfc, exp, fabs, log, sqrt};

/// Neumaier compensated accumulator. Summation order is the caller's, so
/// results are reproducible for a fixed iteration order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, carry: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Discriminants in `[-DISCRIMINANT_CLAMP, 0)` are treated as a double root.
pub const DISCRIMINANT_CLAMP: f64 = 1e-12;

/// Real roots of `a z^2 + b z + c = 0` with `a != 0`, in descending order.
///
/// Uses `q = -(b + sign(b) sqrt(disc)) / 2` and returns `q / a`, `c / q` so the
/// smaller-magnitude root does not suffer cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraticRoots {
    None { discriminant: f64 },
    Double(f64),
    Two(f64, f64),
}

pub fn quadratic_roots(a: f64, b: f64, c: f64) -> QuadraticRoots {
    debug_assert!(a != 0.0);
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc >= -DISCRIMINANT_CLAMP {
            disc = 0.0;
        } else {
            return QuadraticRoots::None { discriminant: disc };
        }
    }
    if disc == 0.0 {
        return QuadraticRoots::Double(-b / (2.0 * a));
    }
    let sign = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * sqrt(disc));
    let z1 = q / a;
    // q == 0 only when b == 0 and disc == 0, handled above.
    let z2 = c / q;
    if z1 >= z2 {
        QuadraticRoots::Two(z1, z2)
    } else {
        QuadraticRoots::Two(z2, z1)
    }
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
///
/// Relative accuracy is about 1e-16 over the open unit interval. Returns
/// `-inf`/`+inf` at 0 and 1 and NaN outside `[0, 1]`.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-log(tail));
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Standard normal CDF via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_reference_values() {
        // Reference values from an independent double-precision implementation.
        let cases = [
            (0.5, 0.0),
            (0.975, 1.959963984540054),
            (0.1, -1.2815515655446004),
            (0.3, -0.5244005127080409),
            (0.6, 0.2533471031357997),
            (1e-10, -6.361340902404056),
            (1e-300, -37.0470962993612),
            (0.999999, 4.753424308817087),
            (0.02425, -1.972961051311885),
        ];
        for (p, z) in cases {
            let got = normal_quantile(p);
            assert!((got - z).abs() <= 1e-14 * (1.0 + z.abs()), "p={p}: {got} vs {z}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn quadratic_roots_stable_and_ordered() {
        // 4z^2 + 2z - 2 = 0 -> {1/2, -1}
        assert_eq!(quadratic_roots(4.0, 2.0, -2.0), QuadraticRoots::Two(0.5, -1.0));
        // widely separated roots: z^2 - 1e8 z + 1 = 0
        match quadratic_roots(1.0, -1e8, 1.0) {
            QuadraticRoots::Two(big, small) => {
                assert!((big - 1e8).abs() < 1e-6);
                assert!((small - 1e-8).abs() < 1e-22);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(quadratic_roots(1.0, 2.0, 1.0), QuadraticRoots::Double(-1.0));
        assert!(matches!(quadratic_roots(1.0, 0.0, 1.0), QuadraticRoots::None { .. }));
        // tiny negative discriminant is clamped
        assert!(matches!(
            quadratic_roots(1.0, 2.0, 1.0 + 1e-13),
            QuadraticRoots::Double(_)
        ));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }
}
