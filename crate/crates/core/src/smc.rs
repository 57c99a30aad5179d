//! The SMC sampler: tempering loop, kernel moves, weighting, resampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{propose_in_sequence, AdaptiveMvn, KernelChoice};
use crate::models::TargetSequence;
use crate::population::{
    ess, multinomial_indices, normalize_weights, systematic_indices, ParameterPoint, Particle, Population,
    ResamplingScheme,
};
use crate::rng::RngStreams;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `gamma_a / gamma_{a-1}` at the pre-move position.
    #[default]
    Simple,
    /// `gamma_a(new) / sum_n W^n K_a(new^n | prev^n)` after the move.
    FullKernel,
    /// `gamma_a(new^n) / sum_m W^m K_a(new^n | prev^m)`: every old particle
    /// contributes to each new one. Quadratic in N.
    FullKernelMixture,
}

impl WeightMode {
    pub fn is_full_kernel(self) -> bool {
        matches!(self, WeightMode::FullKernel | WeightMode::FullKernelMixture)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub n_particles: usize,
    /// Resample when ESS < `ess_fraction * N`. Zero disables resampling.
    pub ess_fraction: f64,
    pub kernel: KernelChoice,
    #[serde(default = "one")]
    pub mcmc_steps: usize,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    #[serde(default)]
    pub seed: u64,
    /// Keep every population's particles, not only the last.
    #[serde(default)]
    pub keep_history: bool,
}

fn one() -> usize {
    1
}

impl SmcConfig {
    pub fn new(n_particles: usize, ess_fraction: f64, kernel: KernelChoice, seed: u64) -> Self {
        Self {
            n_particles,
            ess_fraction,
            kernel,
            mcmc_steps: 1,
            weight_mode: WeightMode::Simple,
            resampling: ResamplingScheme::Multinomial,
            seed,
            keep_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config("need at least two particles".into()));
        }
        if !(0.0..=1.0).contains(&self.ess_fraction) {
            return Err(Error::Config(format!("ESS fraction must lie in [0, 1], got {}", self.ess_fraction)));
        }
        if self.mcmc_steps == 0 {
            return Err(Error::Config("need at least one MCMC step per population".into()));
        }
        self.kernel.validate()?;
        if self.weight_mode.is_full_kernel() {
            if !matches!(self.kernel, KernelChoice::RwUniform { .. }) {
                return Err(Error::Config("full-kernel weights need the uniform random-walk kernel".into()));
            }
            if self.mcmc_steps != 1 {
                return Err(Error::Config("full-kernel weights need exactly one MCMC step".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationDiagnostics {
    pub population: usize,
    pub phi: f64,
    /// ESS after weighting and normalisation.
    pub ess: f64,
    pub acceptance_rate: f64,
    pub resampled: bool,
    pub jitter_events: usize,
    /// Moves that failed to evaluate (integration errors, singular metrics).
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub population: usize,
    pub positions: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

/// Weighted moments of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Row-major `D x D` correlation matrix.
    pub correlation: Vec<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcResult {
    pub final_population: Population,
    pub diagnostics: Vec<PopulationDiagnostics>,
    pub summary: Summary,
    pub history: Vec<Snapshot>,
    pub seed: u64,
}

impl SmcResult {
    pub fn positions(&self) -> Vec<DVector<f64>> {
        self.final_population.particles.iter().map(|p| p.position.coords().clone()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.final_population.weights()
    }
}

/// `log gamma_a(xi) - log gamma_{a-1}(xi)` from a cached evaluation; `-inf` outside the support.
pub fn incremental_weight_simple<S: TargetSequence>(seq: &S, state: Option<&S::State>, a: usize) -> f64 {
    let Some(state) = state else { return f64::NEG_INFINITY };
    let prev = seq.log_density(state, a - 1);
    let cur = seq.log_density(state, a);
    if prev == f64::NEG_INFINITY || cur == f64::NEG_INFINITY || cur.is_nan() || prev.is_nan() {
        f64::NEG_INFINITY
    } else {
        cur - prev
    }
}

/// `ln sum_n W^n K_a(new^n | prev^n)`, pairing the n-th new particle with the n-th old one.
pub fn full_kernel_log_denominator<S: TargetSequence>(
    seq: &S,
    prev: &[DVector<f64>],
    weights: &[f64],
    new: &[DVector<f64>],
    width: f64,
    a: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for ((x0, x1), w) in prev.iter().zip(new).zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let k = seq
            .uniform_kernel_density(x0, x1, width, a)
            .ok_or_else(|| Error::Capability("sequence has no closed-form kernel density".into()))?;
        total += w * k;
    }
    Ok(if total > 0.0 { total.ln() } else { f64::NEG_INFINITY })
}

/// `ln sum_m W^m K_a(new | prev^m)` for a single new position.
pub fn mixture_log_denominator<S: TargetSequence>(
    seq: &S,
    prev: &[DVector<f64>],
    weights: &[f64],
    new: &DVector<f64>,
    width: f64,
    a: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (x0, w) in prev.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let k = seq
            .uniform_kernel_density(x0, new, width, a)
            .ok_or_else(|| Error::Capability("sequence has no closed-form kernel density".into()))?;
        total += w * k;
    }
    Ok(if total > 0.0 { total.ln() } else { f64::NEG_INFINITY })
}

/// Full-kernel incremental log weight of particle `n`.
pub fn incremental_weight_full<S: TargetSequence>(
    seq: &S,
    prev: &[DVector<f64>],
    weights: &[f64],
    new: &[DVector<f64>],
    new_state: Option<&S::State>,
    width: f64,
    a: usize,
) -> Result<f64> {
    let den = full_kernel_log_denominator(seq, prev, weights, new, width, a)?;
    let num = new_state.map_or(f64::NEG_INFINITY, |s| seq.log_density(s, a));
    Ok(if den == f64::NEG_INFINITY || num == f64::NEG_INFINITY { f64::NEG_INFINITY } else { num - den })
}

/// Weighted mean, SD and correlations.
pub fn weighted_summary(positions: &[DVector<f64>], weights: &[f64]) -> Summary {
    let d = positions.first().map_or(0, |p| p.len());
    let mut mean = DVector::zeros(d);
    for (x, w) in positions.iter().zip(weights) {
        if *w > 0.0 {
            mean += x * *w;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (x, w) in positions.iter().zip(weights) {
        if *w > 0.0 {
            let r = x - &mean;
            cov += &r * r.transpose() * *w;
        }
    }
    let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let mut correlation = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let c = if i == j {
                1.0
            } else if sd[i] > 0.0 && sd[j] > 0.0 {
                cov[(i, j)] / (sd[i] * sd[j])
            } else {
                0.0
            };
            correlation.push(c);
        }
    }
    let ess = ess(weights).unwrap_or(0.0);
    Summary { mean: mean.iter().copied().collect(), sd, correlation, ess }
}

pub fn summarize(result: &SmcResult) -> Summary {
    weighted_summary(&result.positions(), &result.weights())
}

struct Slot<St> {
    xi: DVector<f64>,
    state: Option<St>,
    log_w: f64,
}

impl<St: Clone> Clone for Slot<St> {
    fn clone(&self) -> Self {
        Self { xi: self.xi.clone(), state: self.state.clone(), log_w: self.log_w }
    }
}

#[derive(Default)]
struct MoveStats {
    accepted: usize,
    jitter: usize,
    failures: usize,
}

/// One cached MH step targeting distribution `a`.
#[allow(clippy::too_many_arguments)]
fn mh_move<S: TargetSequence, R: Rng + ?Sized>(
    seq: &S,
    kernel: &KernelChoice,
    a: usize,
    xi: &mut DVector<f64>,
    state: &mut S::State,
    adaptive: Option<&AdaptiveMvn>,
    rng: &mut R,
    stats: &mut MoveStats,
) {
    let lp_x = seq.log_density(state, a);
    if !lp_x.is_finite() {
        return;
    }
    let fwd = match propose_in_sequence(kernel, seq, xi, state, a, adaptive) {
        Ok(p) => p,
        Err(_) => {
            stats.failures += 1;
            return;
        }
    };
    if fwd.jitter() > 0.0 {
        stats.jitter += 1;
    }
    let y = fwd.sample(rng);
    let u: f64 = rng.random();
    let st_y = match seq.evaluate(&y, kernel.need()) {
        Ok(Some(s)) => s,
        Ok(None) => return,
        Err(_) => {
            stats.failures += 1;
            return;
        }
    };
    let lp_y = seq.log_density(&st_y, a);
    if lp_y == f64::NEG_INFINITY || lp_y.is_nan() {
        return;
    }
    let log_ratio = if fwd.is_symmetric() {
        0.0
    } else {
        let rev = match propose_in_sequence(kernel, seq, &y, &st_y, a, adaptive) {
            Ok(p) => p,
            Err(_) => {
                stats.failures += 1;
                return;
            }
        };
        if rev.jitter() > 0.0 {
            stats.jitter += 1;
        }
        rev.log_density(xi) - fwd.log_density(&y)
    };
    let log_alpha = lp_y - lp_x + log_ratio;
    if u.ln() < log_alpha {
        *xi = y;
        *state = st_y;
        stats.accepted += 1;
    }
}

fn normalized<S>(slots: &[Slot<S>], population: usize) -> Result<(Vec<f64>, f64)> {
    let lw: Vec<f64> = slots.iter().map(|s| s.log_w).collect();
    let (w, _) = normalize_weights(&lw).map_err(|_| Error::DegeneratePopulation { population })?;
    let e = ess(&w).map_err(|_| Error::DegeneratePopulation { population })?;
    Ok((w, e))
}

fn set_normalized<S>(slots: &mut [Slot<S>], w: &[f64]) {
    for (s, w) in slots.iter_mut().zip(w) {
        s.log_w = w.ln();
    }
}

/// Run the sampler over every distribution of `seq`.
pub fn run<S: TargetSequence>(config: &SmcConfig, seq: &S) -> Result<SmcResult> {
    config.validate()?;
    let p = seq.len();
    if p == 0 {
        return Err(Error::Config("empty sequence of distributions".into()));
    }
    let n = config.n_particles;
    let streams = RngStreams::new(config.seed);
    let need = config.kernel.need();
    let log_uniform = -(n as f64).ln();

    let init: Vec<(Slot<S::State>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.particle(0, i);
            let xi = seq.sample_initial(&mut rng);
            match seq.evaluate(&xi, need) {
                Ok(Some(st)) => (Slot { xi, state: Some(st), log_w: log_uniform }, false),
                Ok(None) => (Slot { xi, state: None, log_w: f64::NEG_INFINITY }, false),
                Err(_) => (Slot { xi, state: None, log_w: f64::NEG_INFINITY }, true),
            }
        })
        .collect();
    let failures = init.iter().filter(|(_, f)| *f).count();
    let mut slots: Vec<Slot<S::State>> = init.into_iter().map(|(s, _)| s).collect();
    let (w, mut cur_ess) = normalized(&slots, 1)?;
    set_normalized(&mut slots, &w);

    let mut diagnostics = vec![PopulationDiagnostics {
        population: 1,
        phi: seq.phi(1),
        ess: cur_ess,
        acceptance_rate: 0.0,
        resampled: false,
        jitter_events: 0,
        failures,
    }];
    let mut history = Vec::new();
    if config.keep_history {
        history.push(snapshot(&slots, &w, 1));
    }
    let mut last_adaptive: Option<AdaptiveMvn> = None;

    for a in 2..=p {
        let resampled = cur_ess < config.ess_fraction * n as f64;
        if resampled {
            let w: Vec<f64> = slots.iter().map(|s| s.log_w.exp()).collect();
            let mut rng = streams.population(a);
            let idx = match config.resampling {
                ResamplingScheme::Multinomial => multinomial_indices(&w, n, &mut rng),
                ResamplingScheme::Systematic => systematic_indices(&w, n, &mut rng),
            };
            slots = idx
                .into_iter()
                .map(|j| {
                    let mut s = slots[j].clone();
                    s.log_w = log_uniform;
                    s
                })
                .collect();
        }

        let prev_positions: Vec<DVector<f64>> = match config.weight_mode {
            WeightMode::FullKernel | WeightMode::FullKernelMixture => slots.iter().map(|s| s.xi.clone()).collect(),
            WeightMode::Simple => Vec::new(),
        };
        let prev_weights: Vec<f64> = slots.iter().map(|s| s.log_w.exp()).collect();

        if config.weight_mode == WeightMode::Simple {
            for s in &mut slots {
                let inc = incremental_weight_simple(seq, s.state.as_ref(), a);
                s.log_w = if inc == f64::NEG_INFINITY { f64::NEG_INFINITY } else { s.log_w + inc };
            }
        }

        let adaptive = if matches!(config.kernel, KernelChoice::AdaptiveMvn) {
            let positions: Vec<DVector<f64>> = slots.iter().map(|s| s.xi.clone()).collect();
            let (w, _) = normalized(&slots, a)?;
            match AdaptiveMvn::from_population(&positions, &w) {
                Ok(am) => {
                    last_adaptive = Some(am.clone());
                    Some(am)
                }
                Err(Error::Degenerate(_)) if last_adaptive.is_some() => last_adaptive.clone(),
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let stats: Vec<MoveStats> = slots
            .par_iter_mut()
            .enumerate()
            .map(|(i, s)| {
                let mut st = MoveStats::default();
                if s.log_w == f64::NEG_INFINITY {
                    return st;
                }
                let Some(state) = s.state.as_mut() else { return st };
                let mut rng = streams.particle(a - 1, i);
                for _ in 0..config.mcmc_steps {
                    mh_move(seq, &config.kernel, a, &mut s.xi, state, adaptive.as_ref(), &mut rng, &mut st);
                }
                st
            })
            .collect();

        if config.weight_mode.is_full_kernel() {
            let KernelChoice::RwUniform { width } = config.kernel else {
                return Err(Error::Internal("full-kernel weights without a uniform kernel".into()));
            };
            let new_positions: Vec<DVector<f64>> = slots.iter().map(|s| s.xi.clone()).collect();
            let dens: Vec<f64> = if config.weight_mode == WeightMode::FullKernel {
                let den = full_kernel_log_denominator(seq, &prev_positions, &prev_weights, &new_positions, width, a)?;
                vec![den; n]
            } else {
                new_positions
                    .par_iter()
                    .map(|x| mixture_log_denominator(seq, &prev_positions, &prev_weights, x, width, a))
                    .collect::<Result<Vec<f64>>>()?
            };
            for (s, den) in slots.iter_mut().zip(dens) {
                let num = s.state.as_ref().map_or(f64::NEG_INFINITY, |st| seq.log_density(st, a));
                s.log_w = if den == f64::NEG_INFINITY || num == f64::NEG_INFINITY || s.log_w == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    s.log_w + num - den
                };
            }
        }

        let (w, e) = normalized(&slots, a)?;
        set_normalized(&mut slots, &w);
        cur_ess = e;
        let accepted: usize = stats.iter().map(|s| s.accepted).sum();
        diagnostics.push(PopulationDiagnostics {
            population: a,
            phi: seq.phi(a),
            ess: e,
            acceptance_rate: accepted as f64 / (n * config.mcmc_steps) as f64,
            resampled,
            jitter_events: stats.iter().map(|s| s.jitter).sum(),
            failures: stats.iter().map(|s| s.failures).sum(),
        });
        if config.keep_history {
            history.push(snapshot(&slots, &w, a));
        }
    }

    let positions: Vec<DVector<f64>> = slots.iter().map(|s| s.xi.clone()).collect();
    let weights: Vec<f64> = slots.iter().map(|s| s.log_w.exp()).collect();
    let summary = weighted_summary(&positions, &weights);
    let last = diagnostics.last().cloned().unwrap_or_else(|| unreachable!());
    let particles = slots
        .into_iter()
        .map(|s| Ok(Particle { position: ParameterPoint::new(s.xi)?, log_weight: s.log_w }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SmcResult {
        final_population: Population { particles, temper_index: p, ess: last.ess, acceptance_rate: last.acceptance_rate },
        diagnostics,
        summary,
        history,
        seed: config.seed,
    })
}

fn snapshot<S>(slots: &[Slot<S>], w: &[f64], population: usize) -> Snapshot {
    Snapshot { population, positions: slots.iter().map(|s| s.xi.clone()).collect(), weights: w.to_vec() }
}

/// Paths of particles moved by the deterministic part of a gradient kernel only.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTrace {
    /// `paths[i][a - 1]` is particle `i` after targeting distribution `a`.
    pub paths: Vec<Vec<DVector<f64>>>,
    /// Population at which a path stopped (singular metric, support exit), if any.
    pub truncated: Vec<Option<usize>>,
}

impl DriftTrace {
    pub fn endpoints(&self) -> Vec<DVector<f64>> {
        self.paths.iter().map(|p| p.last().cloned().unwrap_or_default()).collect()
    }
}

/// Move each start point to its proposal mean for `a = 2..p`, with no noise,
/// no MH correction and no resampling.
pub fn drift_only_run<S: TargetSequence>(kernel: &KernelChoice, seq: &S, starts: &[DVector<f64>]) -> Result<DriftTrace> {
    if !matches!(
        kernel,
        KernelChoice::MmalaEuler { .. } | KernelChoice::MmalaSimplified { .. } | KernelChoice::MmalaOzaki { .. }
    ) {
        return Err(Error::Config("drift-only runs need an mMALA kernel".into()));
    }
    kernel.validate()?;
    let need = kernel.need();
    let p = seq.len();
    let out: Vec<(Vec<DVector<f64>>, Option<usize>)> = starts
        .par_iter()
        .map(|x0| {
            let mut path = vec![x0.clone()];
            let mut xi = x0.clone();
            for a in 2..=p {
                let step = seq
                    .evaluate(&xi, need)
                    .ok()
                    .flatten()
                    .and_then(|st| propose_in_sequence(kernel, seq, &xi, &st, a, None).ok());
                match step {
                    Some(crate::kernels::Proposal::Gaussian(g)) if g.mean.iter().all(|v| v.is_finite()) => {
                        xi = g.mean;
                        path.push(xi.clone());
                    }
                    _ => return (path, Some(a)),
                }
            }
            (path, None)
        })
        .collect();
    let (paths, truncated) = out.into_iter().unzip();
    Ok(DriftTrace { paths, truncated })
}
