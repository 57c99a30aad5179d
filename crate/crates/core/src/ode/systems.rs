use super::{Jet, OdeSystem};
use crate::error::{Error, Result};

/// Fitzhugh-Nagumo neuron model. States `(V, R)`, parameters `(a, b, c)`.
///
/// `V' = c (V - V^3/3 + R)`, `R' = (a - V - b R) / c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitzhughNagumo;

impl OdeSystem for FitzhughNagumo {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        3
    }
    fn name(&self) -> &str {
        "fitzhugh-nagumo"
    }
    fn check_params(&self, p: &[f64]) -> Result<()> {
        if p[2] == 0.0 {
            return Err(Error::SingularParameter("Fitzhugh-Nagumo needs c != 0".into()));
        }
        Ok(())
    }
    fn rhs(&self, _t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) {
        let (v, r) = (x[0], x[1]);
        let (a, b, c) = (p[0], p[1], p[2]);
        dx[0] = c * (v - v * v * v / 3.0 + r);
        dx[1] = (a - v - b * r) / c;
    }
    fn jet(&self, _t: f64, x: &[f64], p: &[f64], j: &mut Jet) {
        let (v, r) = (x[0], x[1]);
        let (a, b, c) = (p[0], p[1], p[2]);
        const V: usize = 0;
        const R: usize = 1;
        const A: usize = 2;
        const B: usize = 3;
        const C: usize = 4;
        let u = v - v * v * v / 3.0 + r;
        let w = a - v - b * r;
        let (c2, c3) = (c * c, c * c * c);

        j.set_f(0, c * u);
        j.set1(0, V, c * (1.0 - v * v));
        j.set1(0, R, c);
        j.set1(0, C, u);
        j.set2(0, V, V, -2.0 * c * v);
        j.set2(0, V, C, 1.0 - v * v);
        j.set2(0, R, C, 1.0);
        j.set3(0, V, V, V, -2.0 * c);
        j.set3(0, V, V, C, -2.0 * v);

        j.set_f(1, w / c);
        j.set1(1, V, -1.0 / c);
        j.set1(1, R, -b / c);
        j.set1(1, A, 1.0 / c);
        j.set1(1, B, -r / c);
        j.set1(1, C, -w / c2);
        j.set2(1, V, C, 1.0 / c2);
        j.set2(1, R, B, -1.0 / c);
        j.set2(1, R, C, b / c2);
        j.set2(1, A, C, -1.0 / c2);
        j.set2(1, B, C, r / c2);
        j.set2(1, C, C, 2.0 * w / c3);
        j.set3(1, V, C, C, -2.0 / c3);
        j.set3(1, R, B, C, 1.0 / c2);
        j.set3(1, R, C, C, -2.0 * b / c3);
        j.set3(1, A, C, C, 2.0 / c3);
        j.set3(1, B, C, C, -2.0 * r / c3);
        j.set3(1, C, C, C, -6.0 * w / (c2 * c2));
    }
}

/// Lotka-Volterra predator-prey model. States `(x, y)`, parameters
/// `(alpha, beta, gamma, delta)`.
///
/// `x' = x (alpha - beta y)`, `y' = -y (gamma - delta x)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LotkaVolterra;

impl OdeSystem for LotkaVolterra {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn name(&self) -> &str {
        "lotka-volterra"
    }
    fn rhs(&self, _t: f64, s: &[f64], p: &[f64], dx: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        dx[0] = x * (p[0] - p[1] * y);
        dx[1] = -y * (p[2] - p[3] * x);
    }
    fn jet(&self, _t: f64, s: &[f64], p: &[f64], j: &mut Jet) {
        let (x, y) = (s[0], s[1]);
        let (al, be, ga, de) = (p[0], p[1], p[2], p[3]);
        const X: usize = 0;
        const Y: usize = 1;
        const AL: usize = 2;
        const BE: usize = 3;
        const GA: usize = 4;
        const DE: usize = 5;

        j.set_f(0, x * (al - be * y));
        j.set1(0, X, al - be * y);
        j.set1(0, Y, -be * x);
        j.set1(0, AL, x);
        j.set1(0, BE, -x * y);
        j.set2(0, X, Y, -be);
        j.set2(0, X, AL, 1.0);
        j.set2(0, X, BE, -y);
        j.set2(0, Y, BE, -x);
        j.set3(0, X, Y, BE, -1.0);

        j.set_f(1, -y * (ga - de * x));
        j.set1(1, X, de * y);
        j.set1(1, Y, -(ga - de * x));
        j.set1(1, GA, -y);
        j.set1(1, DE, x * y);
        j.set2(1, X, Y, de);
        j.set2(1, Y, GA, -1.0);
        j.set2(1, X, DE, y);
        j.set2(1, Y, DE, x);
        j.set3(1, X, Y, DE, 1.0);
    }
}

/// `x' = 0`, handy as a sanity check.
#[derive(Debug, Clone, Copy)]
pub struct ZeroSystem {
    pub states: usize,
    pub params: usize,
}

impl OdeSystem for ZeroSystem {
    fn state_dim(&self) -> usize {
        self.states
    }
    fn param_dim(&self) -> usize {
        self.params
    }
    fn name(&self) -> &str {
        "zero"
    }
    fn rhs(&self, _t: f64, _x: &[f64], _p: &[f64], dx: &mut [f64]) {
        dx.iter_mut().for_each(|v| *v = 0.0);
    }
    fn jet(&self, _t: f64, _x: &[f64], _p: &[f64], _j: &mut Jet) {}
}
