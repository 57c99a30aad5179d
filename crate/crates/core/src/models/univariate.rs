use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Need, PointEval, TemperedModel};
use crate::error::{Error, Result};
use crate::kernels::KernelProposal;
use crate::metric::MetricBundle;
use crate::stats::LN_SQRT_2PI;

/// Observations from `N(mu, sigma^2)` with independent normal priors on
/// `(mu, sigma)`. Coordinates are `(mu, sigma)`; support is `sigma > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateGaussianModel {
    pub data: Vec<f64>,
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
    sum: f64,
    sum_sq: f64,
}

impl UnivariateGaussianModel {
    pub fn new(data: Vec<f64>, u1: f64, v1: f64, u2: f64, v2: f64) -> Result<Self> {
        if !(v1 > 0.0 && v2 > 0.0) {
            return Err(Error::Config("prior SDs v1, v2 must be positive".into()));
        }
        if data.iter().any(|x| !x.is_finite()) || ![u1, u2].iter().all(|u| u.is_finite()) {
            return Err(Error::Config("data and prior means must be finite".into()));
        }
        let sum = data.iter().sum();
        let sum_sq = data.iter().map(|x| x * x).sum();
        Ok(Self { data, u1, v1, u2, v2, sum, sum_sq })
    }

    pub fn n_obs(&self) -> f64 {
        self.data.len() as f64
    }

    /// `sum_s (x_s - mu)^2`.
    fn ssq(&self, mu: f64) -> f64 {
        let s = self.n_obs();
        self.sum_sq - 2.0 * mu * self.sum + s * mu * mu
    }

    fn log_prior(&self, mu: f64, sigma: f64) -> f64 {
        let z1 = (mu - self.u1) / self.v1;
        let z2 = (sigma - self.u2) / self.v2;
        -0.5 * (z1 * z1 + z2 * z2) - 2.0 * LN_SQRT_2PI - self.v1.ln() - self.v2.ln()
    }

    fn log_lik(&self, mu: f64, sigma: f64) -> f64 {
        let s = self.n_obs();
        -s * (LN_SQRT_2PI + sigma.ln()) - self.ssq(mu) / (2.0 * sigma * sigma)
    }
}

impl TemperedModel for UnivariateGaussianModel {
    fn dim(&self) -> usize {
        2
    }

    fn in_support(&self, xi: &DVector<f64>) -> bool {
        xi.len() == 2 && xi[1] > 0.0 && xi.iter().all(|v| v.is_finite())
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n1 = Normal::new(self.u1, self.v1).expect("validated");
        let n2 = Normal::new(self.u2, self.v2).expect("validated");
        DVector::from_vec(vec![n1.sample(rng), n2.sample(rng)])
    }

    fn evaluate(&self, xi: &DVector<f64>, need: Need) -> Result<Option<PointEval>> {
        if xi.len() != 2 {
            return Err(Error::Shape(format!("univariate model has 2 parameters, got {}", xi.len())));
        }
        if !self.in_support(xi) {
            return Ok(None);
        }
        let (mu, sigma) = (xi[0], xi[1]);
        let mut e = PointEval::value(self.log_prior(mu, sigma), self.log_lik(mu, sigma));
        if need >= Need::Gradient {
            let s = self.n_obs();
            let resid = self.sum - s * mu;
            e.grad_prior = Some(DVector::from_vec(vec![
                -(mu - self.u1) / (self.v1 * self.v1),
                -(sigma - self.u2) / (self.v2 * self.v2),
            ]));
            e.grad_lik = Some(DVector::from_vec(vec![
                resid / (sigma * sigma),
                -s / sigma + self.ssq(mu) / (sigma * sigma * sigma),
            ]));
        }
        if need >= Need::Metric {
            let s = self.n_obs();
            let s2 = sigma * sigma;
            let s3 = s2 * sigma;
            let prior_g = DMatrix::from_diagonal(&DVector::from_vec(vec![
                1.0 / (self.v1 * self.v1),
                1.0 / (self.v2 * self.v2),
            ]));
            e.prior_info = Some(MetricBundle::constant(prior_g));
            let g = DMatrix::from_diagonal(&DVector::from_vec(vec![s / s2, 2.0 * s / s2]));
            let dg = vec![
                DMatrix::zeros(2, 2),
                DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0 * s / s3, -4.0 * s / s3])),
            ];
            e.lik_info = Some(MetricBundle::new(g, Some(dg)));
        }
        Ok(Some(e))
    }
}

/// Tempered log density `log pi(xi) + phi sum_s log N(x_s; xi1, xi2^2)`;
/// `-inf` outside the support.
pub fn uni_log_gamma(model: &UnivariateGaussianModel, xi: &DVector<f64>, phi: f64) -> f64 {
    if !model.in_support(xi) {
        return f64::NEG_INFINITY;
    }
    let prior = model.log_prior(xi[0], xi[1]);
    if phi == 0.0 {
        prior
    } else {
        prior + phi * model.log_lik(xi[0], xi[1])
    }
}

/// Closed-form tempered metric with its `sigma` derivative.
pub fn uni_metric(model: &UnivariateGaussianModel, xi: &DVector<f64>, phi: f64) -> Result<MetricBundle> {
    if !model.in_support(xi) {
        return Err(Error::OutOfSupport);
    }
    let s = model.n_obs();
    let sg = xi[1];
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![
        1.0 / (model.v1 * model.v1) + s * phi / (sg * sg),
        1.0 / (model.v2 * model.v2) + 2.0 * s * phi / (sg * sg),
    ]));
    let d = -2.0 * s * phi / (sg * sg * sg);
    let dg = vec![DMatrix::zeros(2, 2), DMatrix::from_diagonal(&DVector::from_vec(vec![d, 2.0 * d]))];
    Ok(MetricBundle::new(g, Some(dg)))
}

/// Closed-form mMALA proposal for the univariate model.
///
/// This is the Christoffel-contraction drift; it coincides with
/// [`crate::kernels::DriftForm::Christoffel`].
pub fn uni_drift_cov(model: &UnivariateGaussianModel, xi: &DVector<f64>, phi: f64, eps: f64) -> Result<KernelProposal> {
    if !model.in_support(xi) {
        return Err(Error::OutOfSupport);
    }
    if !(eps > 0.0) {
        return Err(Error::Config("step size must be positive".into()));
    }
    let (m, sg) = (xi[0], xi[1]);
    let (u1, v1, u2, v2) = (model.u1, model.v1, model.u2, model.v2);
    let s = model.n_obs();
    let (v1s, v2s, sg2) = (v1 * v1, v2 * v2, sg * sg);
    let c1 = sg2 + v1s * s * phi;
    let c2 = sg2 + 2.0 * v2s * s * phi;
    let resid = model.sum - s * m;
    let h = 0.5 * eps * eps;
    let mu_mu = h * (v1s * sg2 / c1) * (-(m - u1) / v1s + phi * resid / sg2);
    let mu_sigma = h
        * (v2s * sg2 / c2)
        * (-(sg - u2) / v2s - s * phi / sg
            + phi * model.ssq(m) / (sg2 * sg)
            + 2.0 * s * phi / sg * (v2s / c2 - v1s / (2.0 * c1)));
    let mean = DVector::from_vec(vec![m + mu_mu, sg + mu_sigma]);
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![eps * eps * v1s * sg2 / c1, eps * eps * v2s * sg2 / c2]));
    KernelProposal::gaussian(mean, cov)
}
