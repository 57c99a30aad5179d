//! Default settings of the bundled experiments and their synthetic data.

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::geodesic::GaussianPoint;
use crate::kernels::{DriftForm, KernelChoice};
use crate::metric::{NoiseModel, PriorSpec};
use crate::models::{simulate_observations, OdeModel, Tempered, UnivariateGaussianModel};
use crate::ode::{FitzhughNagumo, LotkaVolterra, OdeSystem};
use crate::population::geometric_schedule;

pub const UNI_TRUE_MEAN: f64 = 50.0;
pub const UNI_TRUE_SD: f64 = 10.0;
pub const UNI_N_OBS: usize = 60;
pub const UNI_PRIOR: (f64, f64, f64, f64) = (50.0, 20.0, 10.0, 2.5);
pub const UNI_PHI2: f64 = 5e-4;

/// Seeds of the synthetic data sets, separate from the sampler seeds.
pub const UNI_DATA_SEED: u64 = 1;
pub const FN_DATA_SEED: u64 = 3;
pub const LV_DATA_SEED: u64 = 3;

pub const FN_TRUTH: [f64; 3] = [0.2, 0.2, 3.0];
pub const FN_X0: [f64; 2] = [-1.0, 1.0];
pub const FN_SIGMA2: f64 = 0.05;
pub const FN_PRIOR_SD: [f64; 3] = [0.3, 0.3, 1.5];
pub const FN_UNIFORM_LOWER: [f64; 3] = [0.0, 0.0, 0.0];
pub const FN_UNIFORM_UPPER: [f64; 3] = [1.0, 1.0, 7.0];
pub const FN_HORIZON: f64 = 10.0;
pub const FN_N_OBS: usize = 25;
pub const FN_PHI2: f64 = 5e-4;
pub const FN_EPS: f64 = 0.6;

pub const LV_TRUTH: [f64; 4] = [8.0, 0.5, 0.2, 0.01];
pub const LV_X0: [f64; 2] = [15.0, 30.0];
pub const LV_SIGMA2: f64 = 0.4;
pub const LV_PRIOR_SD: [f64; 4] = [2.0, 0.1, 0.05, 0.004];
pub const LV_HORIZON: f64 = 10.0;
pub const LV_N_OBS: usize = 20;
/// Prior draws have log-likelihoods of order -1e5, so the first tempering
/// step is taken much smaller than in the other examples.
pub const LV_PHI2: f64 = 1e-6;
pub const LV_EPS: f64 = 0.5;

pub const UNI_EPS: f64 = 0.4;

/// Drift form used by the bundled experiments. The univariate closed form
/// coincides with the Christoffel contraction.
pub const EXPERIMENT_DRIFT: DriftForm = DriftForm::Christoffel;

pub fn mmala(eps: f64) -> KernelChoice {
    KernelChoice::MmalaEuler { eps, drift: EXPERIMENT_DRIFT }
}

pub fn uni_data(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(UNI_TRUE_MEAN, UNI_TRUE_SD).unwrap_or_else(|_| unreachable!());
    (0..UNI_N_OBS).map(|_| nd.sample(&mut rng)).collect()
}

pub fn uni_model(data: Vec<f64>) -> Result<UnivariateGaussianModel> {
    let (u1, v1, u2, v2) = UNI_PRIOR;
    UnivariateGaussianModel::new(data, u1, v1, u2, v2)
}

pub fn uni_sequence(data: Vec<f64>, p: usize) -> Result<Tempered<UnivariateGaussianModel>> {
    Ok(Tempered::new(uni_model(data)?, geometric_schedule(p, UNI_PHI2)?))
}

/// 6 x 4 starting grid around the simulated mode, `mu` in [30, 70], `sigma` in [5, 17].
pub fn uni_drift_grid() -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(24);
    for i in 0..6 {
        for j in 0..4 {
            out.push(DVector::from_vec(vec![30.0 + 8.0 * i as f64, 5.0 + 4.0 * j as f64]));
        }
    }
    out
}

/// Evenly spaced observation times in `(0, horizon]`.
pub fn observation_times(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 * horizon / n as f64).collect()
}

/// Which prior an ODE experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    Normal,
    Uniform,
}

fn normal_noise(sigma2: f64, species: usize) -> Result<NoiseModel> {
    NoiseModel::normal(vec![sigma2.sqrt(); species])
}

pub fn fn_data(seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = observation_times(FN_HORIZON, FN_N_OBS);
    simulate_observations(&FitzhughNagumo, &FN_X0, 0.0, &times, &FN_TRUTH, &normal_noise(FN_SIGMA2, 2)?, &mut rng)
}

pub fn fn_model(data: Vec<Vec<f64>>, prior: PriorKind) -> Result<OdeModel> {
    let prior = match prior {
        PriorKind::Normal => PriorSpec::mvn_diagonal(DVector::from_row_slice(&FN_TRUTH), &FN_PRIOR_SD)?,
        PriorKind::Uniform => PriorSpec::uniform(
            DVector::from_row_slice(&FN_UNIFORM_LOWER),
            DVector::from_row_slice(&FN_UNIFORM_UPPER),
        )?,
    };
    let system: Arc<dyn OdeSystem> = Arc::new(FitzhughNagumo);
    OdeModel::builder(system, FN_X0.to_vec(), observation_times(FN_HORIZON, FN_N_OBS), data)
        .noise(normal_noise(FN_SIGMA2, 2)?)
        .prior(prior)
        .positive(true)
        .build()
}

pub fn lv_data(seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = observation_times(LV_HORIZON, LV_N_OBS);
    simulate_observations(&LotkaVolterra, &LV_X0, 0.0, &times, &LV_TRUTH, &normal_noise(LV_SIGMA2, 2)?, &mut rng)
}

/// The uniform variant spans the truth +- 4 prior SDs, clipped at zero.
pub fn lv_model(data: Vec<Vec<f64>>, prior: PriorKind) -> Result<OdeModel> {
    let mean = DVector::from_row_slice(&LV_TRUTH);
    let prior = match prior {
        PriorKind::Normal => PriorSpec::mvn_diagonal(mean, &LV_PRIOR_SD)?,
        PriorKind::Uniform => {
            let sd = DVector::from_row_slice(&LV_PRIOR_SD);
            PriorSpec::uniform((&mean - &sd * 4.0).map(|v| v.max(0.0)), &mean + &sd * 4.0)?
        }
    };
    let system: Arc<dyn OdeSystem> = Arc::new(LotkaVolterra);
    OdeModel::builder(system, LV_X0.to_vec(), observation_times(LV_HORIZON, LV_N_OBS), data)
        .noise(normal_noise(LV_SIGMA2, 2)?)
        .prior(prior)
        .positive(true)
        .build()
}

/// 3 x 3 x 3 starting grid around the simulated FitzHugh-Nagumo parameters,
/// inside the support of both priors.
pub fn fn_drift_grid() -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(27);
    for a in [0.05, 0.2, 0.35] {
        for b in [0.05, 0.2, 0.35] {
            for c in [2.0, 3.0, 4.0] {
                out.push(DVector::from_vec(vec![a, b, c]));
            }
        }
    }
    out
}

pub fn fn_sequence(data: Vec<Vec<f64>>, prior: PriorKind, p: usize) -> Result<Tempered<OdeModel>> {
    Ok(Tempered::new(fn_model(data, prior)?, geometric_schedule(p, FN_PHI2)?))
}

pub fn lv_sequence(data: Vec<Vec<f64>>, prior: PriorKind, p: usize) -> Result<Tempered<OdeModel>> {
    Ok(Tempered::new(lv_model(data, prior)?, geometric_schedule(p, LV_PHI2)?))
}

/// Width of the uniform random-walk proposal in the path experiment.
pub const PATH_KERNEL_WIDTH: f64 = 2.0;
pub const PATH_POPULATIONS: usize = 25;

/// Endpoints of the path experiment.
pub fn geodesic_endpoints() -> (GaussianPoint, GaussianPoint) {
    (GaussianPoint { mu: 0.0, var: 1.0 }, GaussianPoint { mu: 5.0, var: 3.0 })
}
