use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Need, PointEval, TemperedModel};
use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::metric::{likelihood_information, prior_hessian, MetricBundle, NoiseKind, NoiseModel, PriorSpec};
use crate::ode::{integrate, integrate_with_sensitivities, OdeSystem, SensitivityState, Tolerances};
use crate::stats::LN_SQRT_2PI;

/// Bayesian parameter inference for an ODE observed with noise at fixed times.
#[derive(Clone)]
pub struct OdeModel {
    system: Arc<dyn OdeSystem>,
    x0: Vec<f64>,
    t0: f64,
    times: Vec<f64>,
    /// `data[t][d]`.
    data: Vec<Vec<f64>>,
    noise: NoiseModel,
    prior: PriorSpec,
    positive: bool,
    tol: Tolerances,
}

impl std::fmt::Debug for OdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeModel")
            .field("system", &self.system.name())
            .field("x0", &self.x0)
            .field("times", &self.times.len())
            .field("noise", &self.noise)
            .field("positive", &self.positive)
            .finish()
    }
}

pub struct OdeModelBuilder {
    system: Arc<dyn OdeSystem>,
    x0: Vec<f64>,
    t0: f64,
    times: Vec<f64>,
    data: Vec<Vec<f64>>,
    noise: Option<NoiseModel>,
    prior: Option<PriorSpec>,
    positive: bool,
    tol: Tolerances,
}

impl OdeModelBuilder {
    pub fn noise(mut self, noise: NoiseModel) -> Self {
        self.noise = Some(noise);
        self
    }
    pub fn prior(mut self, prior: PriorSpec) -> Self {
        self.prior = Some(prior);
        self
    }
    /// Restrict the support to strictly positive parameters.
    pub fn positive(mut self, on: bool) -> Self {
        self.positive = on;
        self
    }
    pub fn tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }
    pub fn initial_time(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn build(self) -> Result<OdeModel> {
        let noise = self.noise.ok_or_else(|| Error::Config("noise model missing".into()))?;
        let prior = self.prior.ok_or_else(|| Error::Config("prior missing".into()))?;
        let sys = &self.system;
        if self.x0.len() != sys.state_dim() || noise.species() != sys.state_dim() {
            return Err(Error::Shape("initial state and noise must match the system's state dimension".into()));
        }
        if prior.dim() != sys.param_dim() {
            return Err(Error::Shape("prior dimension must match the system's parameters".into()));
        }
        if self.times.is_empty() || self.times.windows(2).any(|w| !(w[0] < w[1])) || self.times[0] < self.t0 {
            return Err(Error::Config("observation times must be increasing and not before t0".into()));
        }
        if self.data.len() != self.times.len() || self.data.iter().any(|r| r.len() != sys.state_dim()) {
            return Err(Error::Shape("data must have one row per time and one column per species".into()));
        }
        if noise.kind == NoiseKind::LogNormal && self.data.iter().flatten().any(|y| *y <= 0.0) {
            return Err(Error::Config("log-normal noise needs positive observations".into()));
        }
        Ok(OdeModel {
            system: self.system,
            x0: self.x0,
            t0: self.t0,
            times: self.times,
            data: self.data,
            noise,
            prior,
            positive: self.positive,
            tol: self.tol,
        })
    }
}

impl OdeModel {
    pub fn builder(system: Arc<dyn OdeSystem>, x0: Vec<f64>, times: Vec<f64>, data: Vec<Vec<f64>>) -> OdeModelBuilder {
        OdeModelBuilder {
            system,
            x0,
            t0: 0.0,
            times,
            data,
            noise: None,
            prior: None,
            positive: false,
            tol: Tolerances::default(),
        }
    }

    pub fn system(&self) -> &dyn OdeSystem {
        self.system.as_ref()
    }
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }
    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }
    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Sensitivity order needed for a given evaluation level.
    fn order_for(&self, need: Need) -> usize {
        let extra = usize::from(!self.noise.is_homoscedastic_untruncated());
        match need {
            Need::Value => 0,
            Need::Gradient => 1,
            Need::Metric => 1 + extra,
            Need::MetricDerivative => 2 + extra,
        }
    }

    /// Sensitivities at the observation times.
    pub fn sensitivities(&self, xi: &DVector<f64>, order: usize) -> Result<SensitivityState> {
        integrate_with_sensitivities(self.system(), &self.x0, xi.as_slice(), self.t0, &self.times, order, &self.tol)
    }

    /// State trajectory at the observation times.
    pub fn trajectory(&self, xi: &DVector<f64>) -> Result<Vec<Vec<f64>>> {
        Ok(integrate(self.system(), &self.x0, xi.as_slice(), self.t0, &self.times, &self.tol)?.states)
    }

    fn obs_term<T: Scalar>(&self, x: T, y: f64, d: usize) -> T {
        let sigma = self.noise.sigma[d];
        match self.noise.kind {
            NoiseKind::LogNormal => {
                let r = T::cst(y.ln()) - x.ln();
                T::cst(-LN_SQRT_2PI - sigma.ln() - y.ln()) - r * r / T::cst(2.0 * sigma * sigma)
            }
            NoiseKind::Normal => {
                let h = self.noise.hetero_sigma[d];
                let k = T::cst(sigma * sigma) + T::cst(h * h) * x * x;
                let r = T::cst(y) - x;
                let mut v = T::cst(-LN_SQRT_2PI) - T::cst(0.5) * k.ln() - r * r / (T::cst(2.0) * k);
                let a = self.noise.lower_bound;
                if a.is_finite() {
                    v = v - ((x - T::cst(a)) / k.sqrt()).ln_cdf();
                }
                v
            }
        }
    }

    fn log_lik_states(&self, states: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for (row, ys) in states.iter().zip(&self.data) {
            for (d, (&x, &y)) in row.iter().zip(ys).enumerate() {
                if self.noise.kind == NoiseKind::LogNormal && x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                acc += self.obs_term(x, y, d);
            }
        }
        acc
    }

    fn log_lik_and_grad(&self, sens: &SensitivityState) -> (f64, DVector<f64>) {
        let dim = sens.param_dim();
        let mut grad = DVector::zeros(dim);
        let mut acc = 0.0;
        for t in 0..sens.n_times() {
            for d in 0..sens.state_dim() {
                let x = sens.x(t, d);
                if self.noise.kind == NoiseKind::LogNormal && x <= 0.0 {
                    return (f64::NEG_INFINITY, grad);
                }
                let v = self.obs_term(Dual::new(x, 1.0), self.data[t][d], d);
                acc += v.v;
                for i in 0..dim {
                    grad[i] += v.d * sens.s(t, i, d);
                }
            }
        }
        (acc, grad)
    }
}

impl TemperedModel for OdeModel {
    fn dim(&self) -> usize {
        self.system.param_dim()
    }

    fn in_support(&self, xi: &DVector<f64>) -> bool {
        xi.len() == self.dim()
            && xi.iter().all(|v| v.is_finite())
            && (!self.positive || xi.iter().all(|v| *v > 0.0))
            && self.prior.log_density(xi) > f64::NEG_INFINITY
    }

    /// Draws from the prior restricted to the support by rejection.
    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        loop {
            let xi = self.prior.sample(rng);
            if self.in_support(&xi) {
                return xi;
            }
        }
    }

    fn evaluate(&self, xi: &DVector<f64>, need: Need) -> Result<Option<PointEval>> {
        if xi.len() != self.dim() {
            return Err(Error::Shape(format!("model has {} parameters, got {}", self.dim(), xi.len())));
        }
        if !self.in_support(xi) {
            return Ok(None);
        }
        let log_prior = self.prior.log_density(xi);
        let order = self.order_for(need);
        if order == 0 {
            let states = self.trajectory(xi)?;
            return Ok(Some(PointEval::value(log_prior, self.log_lik_states(&states))));
        }
        let sens = self.sensitivities(xi, order)?;
        let (log_lik, grad_lik) = self.log_lik_and_grad(&sens);
        let mut e = PointEval::value(log_prior, log_lik);
        e.grad_prior = Some(self.prior.grad_log_density(xi));
        e.grad_lik = Some(grad_lik);
        if need >= Need::Metric {
            let with_dg = need == Need::MetricDerivative;
            let (li, dli) = likelihood_information(&sens, &self.noise, with_dg)?;
            let (h, dh) = prior_hessian(&self.prior, xi)?;
            e.lik_info = Some(MetricBundle::new(li, dli));
            e.prior_info = Some(MetricBundle::new(h, with_dg.then_some(dh)));
        }
        Ok(Some(e))
    }
}

/// Noisy observations of a simulated trajectory, `data[t][d]`.
///
/// Truncated normal noise is drawn by rejection, so the bound must not sit
/// far above the trajectory.
pub fn simulate_observations<R: Rng + ?Sized>(
    system: &dyn OdeSystem,
    x0: &[f64],
    t0: f64,
    times: &[f64],
    truth: &[f64],
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let traj = integrate(system, x0, truth, t0, times, &Tolerances::default())?;
    let mut out = traj.states.clone();
    for row in out.iter_mut() {
        for (d, x) in row.iter_mut().enumerate() {
            *x = match noise.kind {
                NoiseKind::LogNormal => {
                    let z: f64 = StandardNormal.sample(rng);
                    *x * (noise.sigma[d] * z).exp()
                }
                NoiseKind::Normal => {
                    let sd = noise.variance(d, *x).sqrt();
                    let mut tries = 0;
                    loop {
                        let z: f64 = StandardNormal.sample(rng);
                        let y = *x + sd * z;
                        if y > noise.lower_bound {
                            break y;
                        }
                        tries += 1;
                        if tries > 100_000 {
                            return Err(Error::Degenerate("truncation bound rejects almost every draw".into()));
                        }
                    }
                }
            };
        }
    }
    Ok(out)
}
