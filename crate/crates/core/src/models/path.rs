use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Geometry, Need, TargetSequence};
use crate::error::{Error, Result};
use crate::geodesic::GaussianPoint;
use crate::kernels::rw_uniform_kernel_density;
use crate::metric::MetricBundle;
use crate::stats::LN_SQRT_2PI;

/// A sequence of univariate Gaussian targets `N(mu_a, var_a)` on the real line,
/// e.g. points sampled along a path on the Gaussian manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPathSequence {
    path: Vec<GaussianPoint>,
}

impl GaussianPathSequence {
    pub fn new(path: Vec<GaussianPoint>) -> Result<Self> {
        if path.len() < 2 {
            return Err(Error::Config("a path sequence needs at least two distributions".into()));
        }
        if path.iter().any(|p| !(p.var > 0.0)) {
            return Err(Error::Domain("every path point needs a positive variance".into()));
        }
        Ok(Self { path })
    }

    pub fn point(&self, a: usize) -> GaussianPoint {
        self.path[a - 1]
    }

    pub fn path(&self) -> &[GaussianPoint] {
        &self.path
    }
}

impl TargetSequence for GaussianPathSequence {
    /// The particle position itself.
    type State = f64;

    fn len(&self) -> usize {
        self.path.len()
    }
    fn dim(&self) -> usize {
        1
    }
    fn phi(&self, a: usize) -> f64 {
        (a - 1) as f64 / (self.path.len() - 1) as f64
    }
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let p = self.path[0];
        DVector::from_element(1, Normal::new(p.mu, p.sd()).expect("positive variance").sample(rng))
    }
    fn evaluate(&self, xi: &DVector<f64>, _need: Need) -> Result<Option<f64>> {
        if xi.len() != 1 {
            return Err(Error::Shape("path targets are one-dimensional".into()));
        }
        Ok(xi[0].is_finite().then_some(xi[0]))
    }
    fn log_density(&self, x: &f64, a: usize) -> f64 {
        let p = self.point(a);
        let z = (x - p.mu) / p.sd();
        -0.5 * z * z - LN_SQRT_2PI - 0.5 * p.var.ln()
    }
    fn geometry(&self, x: &f64, a: usize) -> Result<Geometry> {
        let p = self.point(a);
        Ok(Geometry {
            grad: DVector::from_element(1, -(x - p.mu) / p.var),
            metric: MetricBundle::constant(DMatrix::from_element(1, 1, 1.0 / p.var)),
        })
    }
    fn uniform_kernel_density(&self, from: &DVector<f64>, to: &DVector<f64>, width: f64, a: usize) -> Option<f64> {
        let p = self.point(a);
        rw_uniform_kernel_density(from[0], to[0], p.mu, p.sd(), width).ok()
    }
}
