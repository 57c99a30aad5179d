//! MCMC transition kernels for the SMC moves and the Metropolis-Hastings step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::regularize;
use crate::models::{Geometry, Need, TargetSequence, TemperedModel};
use crate::stats::{upper_band_over_density, LN_SQRT_2PI};

/// A Gaussian proposal `N(mean, cov)`.
#[derive(Debug, Clone)]
pub struct KernelProposal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
    /// Jitter added to the metric or covariance while building the proposal.
    pub jitter: f64,
}

impl KernelProposal {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_jitter(mean, cov, 0.0)
    }

    fn with_jitter(mean: DVector<f64>, cov: DMatrix<f64>, jitter: f64) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Shape("proposal covariance must be D x D".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("proposal mean is not finite".into()));
        }
        let reg = regularize(&cov)?;
        let chol_l = reg.chol.l();
        let d = mean.len() as f64;
        let log_norm = -d * LN_SQRT_2PI - chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { mean, cov: reg.matrix, chol_l, log_norm, jitter: jitter + reg.jitter })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, at: &DVector<f64>) -> f64 {
        let r = at - &self.mean;
        match self.chol_l.solve_lower_triangular(&r) {
            Some(z) => self.log_norm - 0.5 * z.norm_squared(),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| StandardNormal.sample(rng)));
        &self.mean + &self.chol_l * z
    }
}

/// Any proposal a kernel can produce.
#[derive(Debug, Clone)]
pub enum Proposal {
    Gaussian(KernelProposal),
    /// Componentwise uniform on `[center - width/2, center + width/2]`.
    UniformBox { center: DVector<f64>, width: f64 },
}

impl Proposal {
    pub fn log_density(&self, at: &DVector<f64>) -> f64 {
        match self {
            Self::Gaussian(p) => p.log_density(at),
            Self::UniformBox { center, width } => {
                if at.iter().zip(center.iter()).all(|(x, c)| (x - c).abs() <= 0.5 * width) {
                    -(center.len() as f64) * width.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Self::Gaussian(p) => p.sample(rng),
            Self::UniformBox { center, width } => rw_uniform_propose(center, *width, rng),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, Self::UniformBox { .. })
    }

    pub fn jitter(&self) -> f64 {
        match self {
            Self::Gaussian(p) => p.jitter,
            Self::UniformBox { .. } => 0.0,
        }
    }
}

/// Bookkeeping for one Metropolis-Hastings step.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveRecord {
    pub proposed: DVector<f64>,
    pub accepted: bool,
    pub log_alpha: f64,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

/// Componentwise uniform draw in `[xi - d/2, xi + d/2]`.
pub fn rw_uniform_propose<R: Rng + ?Sized>(xi: &DVector<f64>, width: f64, rng: &mut R) -> DVector<f64> {
    xi.map(|x| x + width * (rng.random::<f64>() - 0.5))
}

/// Transition density of the MH kernel with a uniform proposal of width `d`
/// targeting `N(mu, sigma^2)`.
///
/// For `new != prev` this is the accepted-move density. For `new == prev` it
/// is the mass of the rejection atom, so that the continuous part over
/// `[prev - d/2, prev + d/2]` plus the returned atom integrates to one.
pub fn rw_uniform_kernel_density(prev: f64, new: f64, mu: f64, sigma: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) || !(sigma > 0.0) {
        return Err(Error::Config("kernel density needs d > 0 and sigma > 0".into()));
    }
    if new == prev {
        return Ok(uniform_rejection_mass(prev, mu, sigma, d));
    }
    if (new - prev).abs() > 0.5 * d {
        return Ok(0.0);
    }
    let zn = (new - mu) / sigma;
    let zp = (prev - mu) / sigma;
    Ok((0.5 * (zp * zp - zn * zn)).min(0.0).exp() / d)
}

fn uniform_rejection_mass(prev: f64, mu: f64, sigma: f64, d: f64) -> f64 {
    let r0 = (prev - mu).abs() / sigma;
    let s = 0.5 * d / sigma;
    // Uphill proposals beyond the current distance on the far side.
    let mut m = s - upper_band_over_density(r0, r0 + s);
    // Proposals overshooting past the mirror point on the near side.
    if s > 2.0 * r0 {
        m += (s - 2.0 * r0) - upper_band_over_density(r0, s - r0);
    }
    (sigma / d * m).clamp(0.0, 1.0)
}

/// `2.38^2 / D`.
pub fn adaptive_scale(dim: usize) -> f64 {
    2.38 * 2.38 / dim as f64
}

/// Random-walk MVN proposal scaled from the weighted population covariance.
#[derive(Debug, Clone)]
pub struct AdaptiveMvn {
    pub cov: DMatrix<f64>,
    pub jitter: f64,
}

impl AdaptiveMvn {
    /// Build from positions and normalised weights.
    pub fn from_population(positions: &[DVector<f64>], weights: &[f64]) -> Result<Self> {
        let n = positions.len();
        if n < 2 || weights.len() != n {
            return Err(Error::Degenerate("adaptive MVN needs at least two weighted particles".into()));
        }
        let d = positions[0].len();
        let mut mean = DVector::zeros(d);
        for (x, w) in positions.iter().zip(weights) {
            mean += x * *w;
        }
        let mut cov = DMatrix::zeros(d, d);
        for (x, w) in positions.iter().zip(weights) {
            let r = x - &mean;
            cov += &r * r.transpose() * *w;
        }
        let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
        if sum_sq < 1.0 {
            cov /= 1.0 - sum_sq;
        }
        if cov.iter().all(|v| *v == 0.0) {
            return Err(Error::Degenerate("all particles coincide; sample covariance is zero".into()));
        }
        Self::from_sample_covariance(&cov)
    }

    pub fn from_sample_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let scaled = cov * adaptive_scale(cov.nrows());
        let reg = regularize(&scaled)?;
        Ok(Self { cov: reg.matrix, jitter: reg.jitter })
    }

    pub fn proposal(&self, center: &DVector<f64>) -> Result<KernelProposal> {
        KernelProposal::with_jitter(center.clone(), self.cov.clone(), self.jitter)
    }
}

/// Coefficients of the metric-derivative drift terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftForm {
    /// `-eps^2 g^ik d_j g_kl g^lj + eps^2/2 g^ij g^kl d_j g_kl`.
    #[default]
    Printed,
    /// `-eps^2/2 g^jk Gamma^i_jk`, i.e. half of both coefficients above.
    Christoffel,
}

impl DriftForm {
    fn coefficients(self) -> (f64, f64) {
        match self {
            Self::Printed => (1.0, 0.5),
            Self::Christoffel => (0.5, 0.25),
        }
    }
}

/// Drift per unit `eps^2` and the inverse metric used for it.
#[derive(Debug, Clone)]
pub struct Drift {
    pub b: DVector<f64>,
    pub ginv: DMatrix<f64>,
    pub jitter: f64,
}

/// `b = 1/2 G^-1 grad + curvature terms`, so that the Euler mean is `xi + eps^2 b`.
/// `form = None` drops the metric-derivative terms (simplified mMALA).
pub fn mmala_drift(geo: &Geometry, form: Option<DriftForm>) -> Result<Drift> {
    let reg = regularize(&geo.metric.g)?;
    let ginv = symmetric(reg.inverse());
    let mut b = &ginv * &geo.grad * 0.5;
    if let Some(form) = form {
        let dg = geo
            .metric
            .dg
            .as_ref()
            .ok_or_else(|| Error::Capability("mMALA drift needs metric derivatives".into()))?;
        let (k1, k2) = form.coefficients();
        let d = b.len();
        for (j, dgj) in dg.iter().enumerate() {
            let a = &ginv * dgj;
            let gdg = &a * &ginv;
            let tr = a.trace();
            for i in 0..d {
                b[i] += -k1 * gdg[(i, j)] + k2 * ginv[(i, j)] * tr;
            }
        }
    }
    Ok(Drift { b, ginv, jitter: reg.jitter })
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("step size must be nonnegative and finite, got {eps}")))
    }
}

/// Euler-discretised mMALA proposal `N(xi + eps^2 b, eps^2 G^-1)`.
pub fn mmala_euler_from_geometry(xi: &DVector<f64>, geo: &Geometry, eps: f64, form: DriftForm) -> Result<KernelProposal> {
    check_eps(eps)?;
    let dr = mmala_drift(geo, Some(form))?;
    let e2 = eps * eps;
    KernelProposal::with_jitter(xi + &dr.b * e2, dr.ginv * e2, dr.jitter)
}

/// Simplified mMALA: the Euler proposal without metric-derivative terms.
pub fn mmala_simplified_from_geometry(xi: &DVector<f64>, geo: &Geometry, eps: f64) -> Result<KernelProposal> {
    check_eps(eps)?;
    let dr = mmala_drift(geo, None)?;
    let e2 = eps * eps;
    KernelProposal::with_jitter(xi + &dr.b * e2, dr.ginv * e2, dr.jitter)
}

/// `phi_1(A) = A^-1 (exp(A) - I)`, defined for singular `A` as well, read off
/// the top-right block of `exp([[A, I], [0, 0]])`.
pub fn phi1(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(a);
    m.view_mut((0, d), (d, d)).fill_with_identity();
    m.exp().view((0, d), (d, d)).into_owned()
}

/// Central-difference Jacobian of `b` with step `1e-6 max(|xi_j|, 1)`.
pub fn drift_jacobian(xi: &DVector<f64>, b_at: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>) -> Result<DMatrix<f64>> {
    let d = xi.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-6 * xi[j].abs().max(1.0);
        let mut p = xi.clone();
        let mut m = xi.clone();
        p[j] += h;
        m[j] -= h;
        let col = (b_at(&p)? - b_at(&m)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Ozaki-discretised proposal from a drift, its Jacobian and the inverse metric.
///
/// Mean `xi + eps^2 phi_1(eps^2 J) b`, covariance `eps^2 G^-1 phi_1(2 eps^2 J)`
/// (symmetrised).
pub fn ozaki_from_parts(xi: &DVector<f64>, drift: &Drift, jac: &DMatrix<f64>, eps: f64) -> Result<KernelProposal> {
    check_eps(eps)?;
    let e2 = eps * eps;
    let mean = xi + phi1(&(jac * e2)) * &drift.b * e2;
    let cov = symmetric(&drift.ginv * phi1(&(jac * (2.0 * e2))) * e2);
    KernelProposal::with_jitter(mean, cov, drift.jitter)
}

/// Ozaki proposal where the drift at nearby points is supplied by `geometry_at`.
pub fn mmala_ozaki_from_geometry(
    xi: &DVector<f64>,
    geo: &Geometry,
    eps: f64,
    form: DriftForm,
    geometry_at: &dyn Fn(&DVector<f64>) -> Result<Geometry>,
) -> Result<KernelProposal> {
    let drift = mmala_drift(geo, Some(form))?;
    let b_at = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(mmala_drift(&geometry_at(x)?, Some(form))?.b) };
    let jac = drift_jacobian(xi, &b_at)?;
    ozaki_from_parts(xi, &drift, &jac, eps)
}

fn model_geometry<M: TemperedModel>(model: &M, xi: &DVector<f64>, phi: f64, need: Need) -> Result<Geometry> {
    let e = model.evaluate(xi, need)?.ok_or(Error::OutOfSupport)?;
    let metric = e.metric(phi)?;
    Ok(Geometry { grad: e.grad(phi)?, metric })
}

/// Euler mMALA proposal for a tempered model at exponent `phi`.
pub fn mmala_euler_proposal<M: TemperedModel>(model: &M, xi: &DVector<f64>, phi: f64, eps: f64, form: DriftForm) -> Result<KernelProposal> {
    mmala_euler_from_geometry(xi, &model_geometry(model, xi, phi, Need::MetricDerivative)?, eps, form)
}

pub fn mmala_simplified_proposal<M: TemperedModel>(model: &M, xi: &DVector<f64>, phi: f64, eps: f64) -> Result<KernelProposal> {
    mmala_simplified_from_geometry(xi, &model_geometry(model, xi, phi, Need::Metric)?, eps)
}

pub fn mmala_ozaki_proposal<M: TemperedModel>(model: &M, xi: &DVector<f64>, phi: f64, eps: f64, form: DriftForm) -> Result<KernelProposal> {
    let geo = model_geometry(model, xi, phi, Need::MetricDerivative)?;
    let at = |x: &DVector<f64>| model_geometry(model, x, phi, Need::MetricDerivative);
    mmala_ozaki_from_geometry(xi, &geo, eps, form, &at)
}

/// Kernel selection as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelChoice {
    RwUniform {
        width: f64,
    },
    AdaptiveMvn,
    MmalaEuler {
        eps: f64,
        #[serde(default)]
        drift: DriftForm,
    },
    MmalaSimplified {
        eps: f64,
    },
    MmalaOzaki {
        eps: f64,
        #[serde(default)]
        drift: DriftForm,
    },
}

impl KernelChoice {
    /// Evaluation level the kernel needs at every visited point.
    pub fn need(&self) -> Need {
        match self {
            Self::RwUniform { .. } | Self::AdaptiveMvn => Need::Value,
            Self::MmalaSimplified { .. } => Need::Metric,
            Self::MmalaEuler { .. } | Self::MmalaOzaki { .. } => Need::MetricDerivative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::RwUniform { width } if !(width > 0.0 && width.is_finite()) => {
                Err(Error::Config(format!("uniform width must be positive, got {width}")))
            }
            Self::MmalaEuler { eps, .. } | Self::MmalaSimplified { eps } | Self::MmalaOzaki { eps, .. } => check_eps(eps),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::RwUniform { .. } => "rw-uniform",
            Self::AdaptiveMvn => "adaptive-mvn",
            Self::MmalaEuler { .. } => "mmala-euler",
            Self::MmalaSimplified { .. } => "mmala-simplified",
            Self::MmalaOzaki { .. } => "mmala-ozaki",
        }
    }
}

/// Proposal from `xi` for distribution `a` of a sequence.
pub fn propose_in_sequence<S: TargetSequence>(
    choice: &KernelChoice,
    seq: &S,
    xi: &DVector<f64>,
    state: &S::State,
    a: usize,
    adaptive: Option<&AdaptiveMvn>,
) -> Result<Proposal> {
    match *choice {
        KernelChoice::RwUniform { width } => Ok(Proposal::UniformBox { center: xi.clone(), width }),
        KernelChoice::AdaptiveMvn => {
            let am = adaptive.ok_or_else(|| Error::Internal("adaptive MVN used before it was built".into()))?;
            Ok(Proposal::Gaussian(am.proposal(xi)?))
        }
        KernelChoice::MmalaSimplified { eps } => {
            Ok(Proposal::Gaussian(mmala_simplified_from_geometry(xi, &seq.geometry(state, a)?, eps)?))
        }
        KernelChoice::MmalaEuler { eps, drift } => {
            Ok(Proposal::Gaussian(mmala_euler_from_geometry(xi, &seq.geometry(state, a)?, eps, drift)?))
        }
        KernelChoice::MmalaOzaki { eps, drift } => {
            let at = |x: &DVector<f64>| -> Result<Geometry> {
                let st = seq.evaluate(x, Need::MetricDerivative)?.ok_or(Error::OutOfSupport)?;
                seq.geometry(&st, a)
            };
            Ok(Proposal::Gaussian(mmala_ozaki_from_geometry(xi, &seq.geometry(state, a)?, eps, drift, &at)?))
        }
    }
}

/// One Metropolis-Hastings step with possibly asymmetric proposals.
///
/// Proposals outside the support (`log_target = -inf`) are rejected with
/// `alpha = 0`, as are points from which no reverse proposal can be built.
pub fn mh_step<R: Rng + ?Sized>(
    log_target: impl Fn(&DVector<f64>) -> f64,
    current: &DVector<f64>,
    proposal_fn: impl Fn(&DVector<f64>) -> Result<Proposal>,
    rng: &mut R,
) -> Result<MoveRecord> {
    let lp_x = log_target(current);
    if !lp_x.is_finite() {
        return Err(Error::Internal("MH step started from a point with non-finite log density".into()));
    }
    let fwd = proposal_fn(current)?;
    let y = fwd.sample(rng);
    let lq_f = fwd.log_density(&y);
    if !lq_f.is_finite() {
        return Err(Error::Internal("forward proposal density is not finite at its own draw".into()));
    }
    let u: f64 = rng.random();
    let lp_y = log_target(&y);
    let (log_alpha, lq_r) = if lp_y == f64::NEG_INFINITY || lp_y.is_nan() {
        (f64::NEG_INFINITY, f64::NAN)
    } else {
        match proposal_fn(&y) {
            Ok(rev) => {
                let lq_r = rev.log_density(current);
                ((lp_y - lp_x + lq_r - lq_f).min(0.0), lq_r)
            }
            Err(_) => (f64::NEG_INFINITY, f64::NAN),
        }
    };
    let accepted = u.ln() < log_alpha;
    Ok(MoveRecord { proposed: y, accepted, log_alpha, log_q_forward: lq_f, log_q_reverse: lq_r })
}
