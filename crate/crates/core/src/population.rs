//! Particles, populations, tempering schedules and weight arithmetic.

use std::ops::Deref;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the parameter manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint(DVector<f64>);

impl ParameterPoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Shape("parameter point must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("parameter coordinates must be finite".into()));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for ParameterPoint {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: ParameterPoint,
    /// Normalized log-weight; `-inf` marks a zero-weight particle.
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub particles: Vec<Particle>,
    /// 1-based index of the distribution this population targets.
    pub temper_index: usize,
    pub ess: f64,
    pub acceptance_rate: f64,
}

impl Population {
    /// Uniformly weighted population.
    pub fn uniform(positions: Vec<ParameterPoint>, temper_index: usize) -> Self {
        let n = positions.len();
        let lw = -(n as f64).ln();
        Self {
            particles: positions
                .into_iter()
                .map(|position| Particle { position, log_weight: lw })
                .collect(),
            temper_index,
            ess: n as f64,
            acceptance_rate: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, |p| p.position.len())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight.exp()).collect()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }

    /// Renormalize the log-weights in place and refresh the ESS.
    pub fn normalize(&mut self) -> Result<()> {
        let (w, _) = normalize_weights(&self.log_weights()).map_err(|_| {
            Error::DegeneratePopulation { population: self.temper_index }
        })?;
        for (p, wi) in self.particles.iter_mut().zip(&w) {
            p.log_weight = wi.ln();
        }
        self.ess = ess(&w)?;
        Ok(())
    }
}

/// Fixed tempering exponents `phi_1 = 0 < phi_2 < ... < phi_p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    phis: Vec<f64>,
    phi2_anchor: f64,
}

impl TemperingSchedule {
    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    /// Exponent of the `a`-th distribution, 1-based.
    pub fn phi(&self, a: usize) -> f64 {
        self.phis[a - 1]
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }

    pub fn phi2_anchor(&self) -> f64 {
        self.phi2_anchor
    }

    /// Schedule with every exponent equal, used for stationarity checks.
    pub fn constant(p: usize, phi: f64) -> Self {
        Self { phis: vec![phi; p], phi2_anchor: phi }
    }

    /// Explicit exponents; they must lie in [0, 1] and be non-decreasing.
    pub fn from_phis(phis: Vec<f64>) -> Result<Self> {
        if phis.is_empty() {
            return Err(Error::Config("empty tempering schedule".into()));
        }
        if phis.iter().any(|p| !(0.0..=1.0).contains(p)) || phis.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!("invalid tempering exponents {phis:?}")));
        }
        let phi2_anchor = phis.get(1).copied().unwrap_or(phis[0]);
        Ok(Self { phis, phi2_anchor })
    }
}

/// Geometric schedule `phi_a = phi2^(1 - (a-2)/(p-2))` for `a >= 2`, `phi_1 = 0`.
pub fn geometric_schedule(p: usize, phi2: f64) -> Result<TemperingSchedule> {
    if p < 3 {
        return Err(Error::Config(format!("schedule needs at least 3 distributions, got {p}")));
    }
    if !(phi2 > 0.0 && phi2 < 1.0) {
        return Err(Error::Config(format!("phi2 must lie in (0, 1), got {phi2}")));
    }
    let mut phis = Vec::with_capacity(p);
    phis.push(0.0);
    for a in 2..=p {
        let exponent = 1.0 - (a - 2) as f64 / (p - 2) as f64;
        phis.push(phi2.powf(exponent));
    }
    phis[p - 1] = 1.0;
    Ok(TemperingSchedule { phis, phi2_anchor: phi2 })
}

/// Effective sample size `1 / sum w^2` of normalized weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 <= 0.0 || !s2.is_finite() {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    Ok(1.0 / s2)
}

/// Max-shifted softmax. Returns the normalized weights and `ln sum exp(lw)`.
pub fn normalize_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate("no finite log-weight".into()));
    }
    let mut w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    Ok((w, max + total.ln()))
}

/// Resampling scheme used when the ESS drops below threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplingScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// Ancestor indices drawn i.i.d. from the weights.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cdf = cumulative(weights);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
            search(&cdf, u)
        })
        .collect()
}

/// Ancestor indices from one uniform offset on a regular grid.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cdf = cumulative(weights);
    let total = cdf[cdf.len() - 1];
    let u0: f64 = rng.random();
    (0..n)
        .map(|k| search(&cdf, (k as f64 + u0) / n as f64 * total))
        .collect()
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn search(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Resample with replacement in proportion to the weights; output weights are `1/N`.
pub fn multinomial_resample<R: Rng + ?Sized>(pop: &Population, rng: &mut R) -> Result<Population> {
    resample(pop, ResamplingScheme::Multinomial, rng)
}

pub fn resample<R: Rng + ?Sized>(
    pop: &Population,
    scheme: ResamplingScheme,
    rng: &mut R,
) -> Result<Population> {
    let (w, _) = normalize_weights(&pop.log_weights())
        .map_err(|_| Error::DegeneratePopulation { population: pop.temper_index })?;
    let n = pop.len();
    let idx = match scheme {
        ResamplingScheme::Multinomial => multinomial_indices(&w, n, rng),
        ResamplingScheme::Systematic => systematic_indices(&w, n, rng),
    };
    let positions = idx.iter().map(|&i| pop.particles[i].position.clone()).collect();
    let mut out = Population::uniform(positions, pop.temper_index);
    out.acceptance_rate = pop.acceptance_rate;
    Ok(out)
}
