//! Forward-mode dual numbers for directional derivatives of closed-form
//! per-observation expressions.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::stats;

/// Scalar arithmetic shared by `f64` and [`Dual`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// Standard-normal hazard `phi(x)/Phi(x)`.
    fn hazard(self) -> Self;
    /// `ln Phi(x)`.
    fn ln_cdf(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn hazard(self) -> Self {
        stats::norm_hazard(self)
    }
    fn ln_cdf(self) -> Self {
        stats::norm_ln_cdf(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        Dual::new(self.v * inv, (self.d - self.v * inv * o.d) * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn ln(self) -> Self {
        Dual::new(self.v.ln(), self.d / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, 0.5 * self.d / s)
    }
    fn hazard(self) -> Self {
        Dual::new(stats::norm_hazard(self.v), stats::norm_hazard_derivative(self.v) * self.d)
    }
    fn ln_cdf(self) -> Self {
        Dual::new(stats::norm_ln_cdf(self.v), stats::norm_hazard(self.v) * self.d)
    }
}
