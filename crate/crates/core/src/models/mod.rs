//! Target densities: tempered models and general sequences of distributions.

mod ode_model;
mod path;
mod univariate;

pub use ode_model::{simulate_observations, OdeModel, OdeModelBuilder};
pub use path::GaussianPathSequence;
pub use univariate::{uni_drift_cov, uni_log_gamma, uni_metric, UnivariateGaussianModel};

use nalgebra::DVector;
use rand::Rng;

pub use crate::metric::MetricBundle;
use crate::error::{Error, Result};
use crate::population::TemperingSchedule;

/// How much of a point evaluation a kernel requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Need {
    Value,
    Gradient,
    Metric,
    MetricDerivative,
}

/// Tempering-independent pieces of a model evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    pub log_prior: f64,
    pub log_lik: f64,
    pub grad_prior: Option<DVector<f64>>,
    pub grad_lik: Option<DVector<f64>>,
    pub prior_info: Option<MetricBundle>,
    pub lik_info: Option<MetricBundle>,
}

impl PointEval {
    pub fn value(log_prior: f64, log_lik: f64) -> Self {
        Self { log_prior, log_lik, grad_prior: None, grad_lik: None, prior_info: None, lik_info: None }
    }

    /// `log prior + phi log likelihood`; the likelihood is ignored at `phi = 0`.
    pub fn log_gamma(&self, phi: f64) -> f64 {
        if phi == 0.0 {
            self.log_prior
        } else {
            self.log_prior + phi * self.log_lik
        }
    }

    pub fn grad(&self, phi: f64) -> Result<DVector<f64>> {
        match (&self.grad_prior, &self.grad_lik) {
            (Some(p), Some(l)) => Ok(p + l * phi),
            _ => Err(Error::Capability("gradient was not evaluated".into())),
        }
    }

    pub fn metric(&self, phi: f64) -> Result<MetricBundle> {
        let (p, l) = match (&self.prior_info, &self.lik_info) {
            (Some(p), Some(l)) => (p, l),
            _ => return Err(Error::Capability("metric was not evaluated".into())),
        };
        let g = &p.g + &l.g * phi;
        let dg = match (&p.dg, &l.dg) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(a, b)| a + b * phi).collect()),
            _ => None,
        };
        Ok(MetricBundle { g, dg })
    }
}

/// A prior times a likelihood raised to a tempering exponent.
pub trait TemperedModel: Send + Sync {
    fn dim(&self) -> usize;
    fn in_support(&self, xi: &DVector<f64>) -> bool;
    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64>;
    /// `None` outside the support.
    fn evaluate(&self, xi: &DVector<f64>, need: Need) -> Result<Option<PointEval>>;

    fn log_gamma(&self, xi: &DVector<f64>, phi: f64) -> Result<f64> {
        Ok(self.evaluate(xi, Need::Value)?.map_or(f64::NEG_INFINITY, |e| e.log_gamma(phi)))
    }

    fn grad_log_gamma(&self, xi: &DVector<f64>, phi: f64) -> Result<DVector<f64>> {
        self.evaluate(xi, Need::Gradient)?.ok_or(Error::OutOfSupport)?.grad(phi)
    }

    fn metric_bundle(&self, xi: &DVector<f64>, phi: f64) -> Result<MetricBundle> {
        self.evaluate(xi, Need::MetricDerivative)?.ok_or(Error::OutOfSupport)?.metric(phi)
    }
}

/// Gradient of the log density and the metric at one point of one distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub grad: DVector<f64>,
    pub metric: MetricBundle,
}

/// The sequence of distributions `pi_1, ..., pi_p` an SMC sampler moves through.
///
/// `State` caches whatever an evaluation at a point produced, independent of
/// the distribution index, so that weights and proposals for any `a` can be
/// formed without re-evaluating.
pub trait TargetSequence: Sync {
    type State: Clone + Send + Sync;

    /// Number of distributions `p`.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn dim(&self) -> usize;
    /// A scalar label for distribution `a` (1-based), e.g. the tempering exponent.
    fn phi(&self, a: usize) -> f64;
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64>;
    /// `None` outside the support.
    fn evaluate(&self, xi: &DVector<f64>, need: Need) -> Result<Option<Self::State>>;
    fn log_density(&self, state: &Self::State, a: usize) -> f64;
    fn geometry(&self, state: &Self::State, a: usize) -> Result<Geometry>;
    /// Transition density of the uniform random-walk MH kernel targeting
    /// distribution `a`, when available in closed form.
    fn uniform_kernel_density(&self, _from: &DVector<f64>, _to: &DVector<f64>, _width: f64, _a: usize) -> Option<f64> {
        None
    }
}

/// A tempered model paired with its schedule.
#[derive(Debug, Clone)]
pub struct Tempered<M> {
    pub model: M,
    pub schedule: TemperingSchedule,
}

impl<M: TemperedModel> Tempered<M> {
    pub fn new(model: M, schedule: TemperingSchedule) -> Self {
        Self { model, schedule }
    }
}

impl<M: TemperedModel> TargetSequence for Tempered<M> {
    type State = PointEval;

    fn len(&self) -> usize {
        self.schedule.len()
    }
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn phi(&self, a: usize) -> f64 {
        self.schedule.phi(a)
    }
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.model.sample_prior(rng)
    }
    fn evaluate(&self, xi: &DVector<f64>, need: Need) -> Result<Option<PointEval>> {
        self.model.evaluate(xi, need)
    }
    fn log_density(&self, state: &PointEval, a: usize) -> f64 {
        state.log_gamma(self.schedule.phi(a))
    }
    fn geometry(&self, state: &PointEval, a: usize) -> Result<Geometry> {
        let phi = self.schedule.phi(a);
        Ok(Geometry { grad: state.grad(phi)?, metric: state.metric(phi)? })
    }
}
