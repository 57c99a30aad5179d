//! Fisher metrics for ODE likelihoods, prior Hessian terms, and the
//! regularisation applied before every Cholesky factorisation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::ode::SensitivityState;
use crate::stats::{norm_interval_mass, norm_pdf};

/// A metric together with its coordinate derivatives `dg[k] = d_k g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBundle {
    pub g: DMatrix<f64>,
    pub dg: Option<Vec<DMatrix<f64>>>,
}

impl MetricBundle {
    pub fn new(g: DMatrix<f64>, dg: Option<Vec<DMatrix<f64>>>) -> Self {
        Self { g, dg }
    }

    pub fn constant(g: DMatrix<f64>) -> Self {
        let d = g.nrows();
        Self { g, dg: Some(vec![DMatrix::zeros(d, d); d]) }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn has_dg(&self) -> bool {
        self.dg.is_some()
    }
}

/// Observation noise on the log or linear scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Normal,
    LogNormal,
}

/// Per-species observation noise.
///
/// The variance at each time point is `sigma_d^2 + hetero_sigma_d^2 X^2`;
/// observations may additionally be truncated below at `lower_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: Vec<f64>,
    pub hetero_sigma: Vec<f64>,
    pub lower_bound: f64,
}

impl NoiseModel {
    pub fn normal(sigma: Vec<f64>) -> Result<Self> {
        let n = sigma.len();
        Self::validated(NoiseKind::Normal, sigma, vec![0.0; n], f64::NEG_INFINITY)
    }

    pub fn lognormal(sigma: Vec<f64>) -> Result<Self> {
        let n = sigma.len();
        Self::validated(NoiseKind::LogNormal, sigma, vec![0.0; n], f64::NEG_INFINITY)
    }

    /// Normal noise with a signal-dependent component and optional lower truncation.
    pub fn extended(sigma: Vec<f64>, hetero_sigma: Vec<f64>, lower_bound: f64) -> Result<Self> {
        Self::validated(NoiseKind::Normal, sigma, hetero_sigma, lower_bound)
    }

    fn validated(kind: NoiseKind, sigma: Vec<f64>, hetero_sigma: Vec<f64>, lower_bound: f64) -> Result<Self> {
        if sigma.is_empty() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("noise SDs must be positive and finite".into()));
        }
        if hetero_sigma.len() != sigma.len() || hetero_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("heteroscedastic scales must be nonnegative, one per species".into()));
        }
        if lower_bound.is_nan() || lower_bound == f64::INFINITY {
            return Err(Error::Config("lower bound must be finite or -inf".into()));
        }
        if kind == NoiseKind::LogNormal && (lower_bound.is_finite() || hetero_sigma.iter().any(|s| *s > 0.0)) {
            return Err(Error::Config("log-normal noise supports neither truncation nor heteroscedasticity".into()));
        }
        Ok(Self { kind, sigma, hetero_sigma, lower_bound })
    }

    pub fn species(&self) -> usize {
        self.sigma.len()
    }

    /// True when the plain normal-noise formulas apply.
    pub fn is_homoscedastic_untruncated(&self) -> bool {
        self.lower_bound == f64::NEG_INFINITY && self.hetero_sigma.iter().all(|s| *s == 0.0)
    }

    /// Observation variance for species `d` at state value `x`.
    pub fn variance(&self, d: usize, x: f64) -> f64 {
        let h = self.hetero_sigma[d];
        self.sigma[d] * self.sigma[d] + h * h * x * x
    }
}

/// Prior families with closed-form Hessian terms.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Uniform { lower: DVector<f64>, upper: DVector<f64> },
    Mvn { mean: DVector<f64>, cov: DMatrix<f64>, precision: DMatrix<f64>, chol_l: DMatrix<f64> },
    CwLogNormal { mu: DVector<f64>, sigma: DVector<f64> },
}

impl PriorSpec {
    pub fn uniform(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Shape("uniform bounds must share a nonzero length".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Config("uniform prior needs finite bounds with lower < upper".into()));
        }
        Ok(Self::Uniform { lower, upper })
    }

    pub fn mvn(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() || mean.is_empty() {
            return Err(Error::Shape("MVN prior covariance must be D x D".into()));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::Config("MVN prior covariance must be symmetric".into()));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Config("MVN prior covariance must be positive definite".into()))?;
        let precision = chol.inverse();
        let chol_l = chol.l();
        Ok(Self::Mvn { mean, cov, precision, chol_l })
    }

    pub fn mvn_diagonal(mean: DVector<f64>, sd: &[f64]) -> Result<Self> {
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(sd.len(), sd.iter().map(|s| s * s)));
        Self::mvn(mean, cov)
    }

    pub fn cw_lognormal(mu: DVector<f64>, sigma: DVector<f64>) -> Result<Self> {
        if mu.len() != sigma.len() || mu.is_empty() {
            return Err(Error::Shape("log-normal prior parameters must share a nonzero length".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("log-normal prior scales must be positive".into()));
        }
        Ok(Self::CwLogNormal { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform { lower, .. } => lower.len(),
            Self::Mvn { mean, .. } => mean.len(),
            Self::CwLogNormal { mu, .. } => mu.len(),
        }
    }

    /// Log density up to an additive constant; `-inf` outside the support.
    pub fn log_density(&self, xi: &DVector<f64>) -> f64 {
        match self {
            Self::Uniform { lower, upper } => {
                let inside = xi.iter().zip(lower.iter().zip(upper.iter())).all(|(x, (l, u))| x >= l && x <= u);
                if inside {
                    -lower.iter().zip(upper.iter()).map(|(l, u)| (u - l).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Mvn { mean, precision, .. } => {
                let r = xi - mean;
                -0.5 * r.dot(&(precision * &r))
            }
            Self::CwLogNormal { mu, sigma } => {
                let mut acc = 0.0;
                for i in 0..xi.len() {
                    if xi[i] <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let z = (xi[i].ln() - mu[i]) / sigma[i];
                    acc += -0.5 * z * z - xi[i].ln() - sigma[i].ln();
                }
                acc
            }
        }
    }

    /// Gradient of [`PriorSpec::log_density`] on the interior of its support.
    pub fn grad_log_density(&self, xi: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Uniform { lower, .. } => DVector::zeros(lower.len()),
            Self::Mvn { mean, precision, .. } => -(precision * (xi - mean)),
            Self::CwLogNormal { mu, sigma } => DVector::from_iterator(
                xi.len(),
                (0..xi.len()).map(|i| -((xi[i].ln() - mu[i]) / (sigma[i] * sigma[i]) + 1.0) / xi[i]),
            ),
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        use rand_distr::{Distribution, StandardNormal};
        match self {
            Self::Uniform { lower, upper } => DVector::from_iterator(
                lower.len(),
                lower.iter().zip(upper.iter()).map(|(l, u)| l + (u - l) * rng.random::<f64>()),
            ),
            Self::Mvn { mean, chol_l, .. } => {
                let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(rng)));
                mean + chol_l * z
            }
            Self::CwLogNormal { mu, sigma } => DVector::from_iterator(
                mu.len(),
                (0..mu.len()).map(|i| {
                    let z: f64 = StandardNormal.sample(rng);
                    (mu[i] + sigma[i] * z).exp()
                }),
            ),
        }
    }
}

/// Prior Hessian term `h_ij` and its derivatives `dh[k] = d_k h`.
///
/// The log-normal entry is the closed form `(1 - ln xi + mu) / (xi sigma)^2`.
pub fn prior_hessian(prior: &PriorSpec, xi: &DVector<f64>) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let d = prior.dim();
    if xi.len() != d {
        return Err(Error::Shape(format!("prior has dimension {d}, point has {}", xi.len())));
    }
    let zeros = || vec![DMatrix::zeros(d, d); d];
    match prior {
        PriorSpec::Uniform { lower, upper } => {
            for i in 0..d {
                if xi[i] < lower[i] || xi[i] > upper[i] {
                    return Err(Error::OutOfSupport);
                }
                if xi[i] == lower[i] || xi[i] == upper[i] {
                    return Err(Error::PriorBoundary);
                }
            }
            Ok((DMatrix::zeros(d, d), zeros()))
        }
        PriorSpec::Mvn { precision, .. } => Ok((precision.clone(), zeros())),
        PriorSpec::CwLogNormal { mu, sigma } => {
            let mut h = DMatrix::zeros(d, d);
            let mut dh = zeros();
            for i in 0..d {
                let x = xi[i];
                if x <= 0.0 {
                    return Err(Error::OutOfSupport);
                }
                let s2 = sigma[i] * sigma[i];
                h[(i, i)] = (1.0 - x.ln() + mu[i]) / (x * x * s2);
                dh[i][(i, i)] = -(3.0 - 2.0 * x.ln() + 2.0 * mu[i]) / (x * x * x * s2);
            }
            Ok((h, dh))
        }
    }
}

/// Untempered likelihood information `sum_d S_i^T Sigma_d^-1 S_j` and, when
/// `with_dg`, its derivatives.
///
/// Dispatches to the extended form when the noise is heteroscedastic or
/// truncated, and to log-space sensitivities for log-normal noise.
pub fn likelihood_information(
    sens: &SensitivityState,
    noise: &NoiseModel,
    with_dg: bool,
) -> Result<(DMatrix<f64>, Option<Vec<DMatrix<f64>>>)> {
    if sens.state_dim() != noise.species() {
        return Err(Error::Shape(format!(
            "sensitivities cover {} species, noise model {}",
            sens.state_dim(),
            noise.species()
        )));
    }
    if with_dg && sens.order() < 2 {
        return Err(Error::Capability("metric derivatives need second-order sensitivities".into()));
    }
    match noise.kind {
        NoiseKind::LogNormal => plain_information(&sens.log_transform()?, noise, with_dg),
        NoiseKind::Normal if noise.is_homoscedastic_untruncated() => plain_information(sens, noise, with_dg),
        NoiseKind::Normal => extended_information(sens, noise, with_dg),
    }
}

fn plain_information(
    sens: &SensitivityState,
    noise: &NoiseModel,
    with_dg: bool,
) -> Result<(DMatrix<f64>, Option<Vec<DMatrix<f64>>>)> {
    let d = sens.param_dim();
    let mut g = DMatrix::zeros(d, d);
    let mut dg = if with_dg { Some(vec![DMatrix::zeros(d, d); d]) } else { None };
    for t in 0..sens.n_times() {
        for l in 0..sens.state_dim() {
            let w = 1.0 / (noise.sigma[l] * noise.sigma[l]);
            for i in 0..d {
                for j in 0..=i {
                    g[(i, j)] += w * sens.s(t, i, l) * sens.s(t, j, l);
                }
            }
            if let Some(dg) = dg.as_mut() {
                for (k, dgk) in dg.iter_mut().enumerate() {
                    for i in 0..d {
                        for j in 0..=i {
                            dgk[(i, j)] += w
                                * (sens.ds(t, k, i, l) * sens.s(t, j, l) + sens.s(t, i, l) * sens.ds(t, k, j, l));
                        }
                    }
                }
            }
        }
    }
    fill_upper(&mut g);
    if let Some(dg) = dg.as_mut() {
        dg.iter_mut().for_each(fill_upper);
    }
    Ok((g, dg))
}

fn fill_upper(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Hazard arguments below this make `Phi(alpha)` underflow.
const ALPHA_UNDERFLOW: f64 = -37.5;

/// Per-observation truncation quantities for one species.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationTerms {
    /// Observation variances `K`.
    pub k: Vec<f64>,
    /// Standardised distance of the mean above the bound, `(X - a) / sqrt(K)`.
    pub alpha: Vec<f64>,
    /// Hazard `phi(alpha) / Phi(alpha)`.
    pub lambda: Vec<f64>,
    /// Second moment of the residual, `K (1 - alpha lambda)`.
    pub j: Vec<f64>,
}

/// Truncation terms for species `d` of the states `x[t]`.
pub fn truncation_terms(x: &[f64], noise: &NoiseModel, d: usize) -> Result<TruncationTerms> {
    let n = x.len();
    let mut out = TruncationTerms { k: vec![0.0; n], alpha: vec![0.0; n], lambda: vec![0.0; n], j: vec![0.0; n] };
    for (t, &xt) in x.iter().enumerate() {
        let k = noise.variance(d, xt);
        let (alpha, lambda) = if noise.lower_bound.is_finite() {
            let a = (xt - noise.lower_bound) / k.sqrt();
            if a < ALPHA_UNDERFLOW {
                return Err(Error::TruncationUnderflow { time_index: t });
            }
            (a, a.hazard())
        } else {
            (f64::INFINITY, 0.0)
        };
        let al = if lambda == 0.0 { 0.0 } else { alpha * lambda };
        out.k[t] = k;
        out.alpha[t] = alpha;
        out.lambda[t] = lambda;
        out.j[t] = k * (1.0 - al);
    }
    Ok(out)
}

/// One observation's contribution to the extended metric, generic so that a
/// dual-number pass yields its parameter derivative.
///
/// `s[i]` is `d_i X`, `ds[i * D + j]` is `d_i d_j X`.
fn extended_term<T: Scalar>(x: T, s: &[T], ds: &[T], sigma2: f64, h2: f64, bound: f64, out: &mut [T]) {
    let dim = s.len();
    let k = T::cst(sigma2) + T::cst(h2) * x * x;
    let w = T::cst(1.0) / k;
    let dk: Vec<T> = s.iter().map(|&si| T::cst(2.0 * h2) * x * si).collect();
    let dw: Vec<T> = dk.iter().map(|&dki| -dki * w * w).collect();
    let (m, jt) = if bound.is_finite() {
        let sk = k.sqrt();
        let alpha = (x - T::cst(bound)) / sk;
        let lambda = alpha.hazard();
        (lambda * sk, k * (T::cst(1.0) - alpha * lambda))
    } else {
        (T::cst(0.0), k)
    };
    for i in 0..dim {
        for j in 0..=i {
            let dij = ds[i * dim + j];
            let ddk = T::cst(2.0 * h2) * (s[i] * s[j] + x * dij);
            let ddw = -ddk * w * w + T::cst(2.0) * dk[i] * dk[j] * w * w * w;
            let l = w * dij + dw[i] * s[j] + dw[j] * s[i];
            let v = s[i] * s[j] * w - l * m + T::cst(0.5) * ddw * jt;
            out[i * dim + j] = out[i * dim + j] + v;
        }
    }
}

fn extended_information(
    sens: &SensitivityState,
    noise: &NoiseModel,
    with_dg: bool,
) -> Result<(DMatrix<f64>, Option<Vec<DMatrix<f64>>>)> {
    let d = sens.param_dim();
    if sens.order() < 2 {
        return Err(Error::Capability("the extended metric needs second-order sensitivities".into()));
    }
    if with_dg && sens.order() < 3 {
        return Err(Error::Capability("extended metric derivatives need third-order sensitivities".into()));
    }
    let mut acc = vec![0.0; d * d];
    let mut dacc = vec![vec![Dual::new(0.0, 0.0); d * d]; if with_dg { d } else { 0 }];
    let mut s = vec![0.0; d];
    let mut ds = vec![0.0; d * d];
    for l in 0..sens.state_dim() {
        let xs: Vec<f64> = (0..sens.n_times()).map(|t| sens.x(t, l)).collect();
        // Validates the truncation depth for every time point.
        truncation_terms(&xs, noise, l)?;
        let sigma2 = noise.sigma[l] * noise.sigma[l];
        let h2 = noise.hetero_sigma[l] * noise.hetero_sigma[l];
        for t in 0..sens.n_times() {
            for i in 0..d {
                s[i] = sens.s(t, i, l);
                for j in 0..d {
                    ds[i * d + j] = sens.ds(t, i, j, l);
                }
            }
            extended_term(xs[t], &s, &ds, sigma2, h2, noise.lower_bound, &mut acc);
            for (k, out) in dacc.iter_mut().enumerate() {
                let x = Dual::new(xs[t], sens.s(t, k, l));
                let sd: Vec<Dual> = (0..d).map(|i| Dual::new(s[i], sens.ds(t, k, i, l))).collect();
                let dsd: Vec<Dual> = (0..d * d)
                    .map(|ij| Dual::new(ds[ij], sens.dds(t, k, ij / d, ij % d, l)))
                    .collect();
                extended_term(x, &sd, &dsd, sigma2, h2, noise.lower_bound, out);
            }
        }
    }
    let mut g = DMatrix::from_fn(d, d, |i, j| if j <= i { acc[i * d + j] } else { 0.0 });
    fill_upper(&mut g);
    let dg = with_dg.then(|| {
        dacc.iter()
            .map(|out| {
                let mut m = DMatrix::from_fn(d, d, |i, j| if j <= i { out[i * d + j].d } else { 0.0 });
                fill_upper(&mut m);
                m
            })
            .collect()
    });
    Ok((g, dg))
}

/// Tempered Fisher metric `phi * G(xi) + h(xi)` with derivatives.
pub fn fisher_metric(
    phi: f64,
    sens: &SensitivityState,
    noise: &NoiseModel,
    prior: &PriorSpec,
    xi: &DVector<f64>,
) -> Result<MetricBundle> {
    if !noise.is_homoscedastic_untruncated() {
        return Err(Error::Config(
            "heteroscedastic or truncated noise needs fisher_metric_extended".into(),
        ));
    }
    assemble(phi, sens, noise, prior, xi)
}

/// Metric for heteroscedastic and truncated normal noise. Falls back to the
/// plain form when neither feature is active.
pub fn fisher_metric_extended(
    phi: f64,
    sens: &SensitivityState,
    noise: &NoiseModel,
    prior: &PriorSpec,
    xi: &DVector<f64>,
) -> Result<MetricBundle> {
    if noise.kind != NoiseKind::Normal {
        return Err(Error::Config("the extended metric applies to normal noise only".into()));
    }
    if sens.param_dim() != prior.dim() {
        return Err(Error::Shape("prior and sensitivity dimensions differ".into()));
    }
    let (li, dli) = extended_information(sens, noise, sens.order() >= 3)?;
    combine(phi, li, dli, prior, xi)
}

fn assemble(
    phi: f64,
    sens: &SensitivityState,
    noise: &NoiseModel,
    prior: &PriorSpec,
    xi: &DVector<f64>,
) -> Result<MetricBundle> {
    if sens.param_dim() != prior.dim() {
        return Err(Error::Shape("prior and sensitivity dimensions differ".into()));
    }
    let (li, dli) = likelihood_information(sens, noise, sens.order() >= 2)?;
    combine(phi, li, dli, prior, xi)
}

fn combine(
    phi: f64,
    li: DMatrix<f64>,
    dli: Option<Vec<DMatrix<f64>>>,
    prior: &PriorSpec,
    xi: &DVector<f64>,
) -> Result<MetricBundle> {
    let (h, dh) = prior_hessian(prior, xi)?;
    let g = li * phi + h;
    let dg = dli.map(|dli| dli.into_iter().zip(dh).map(|(a, b)| a * phi + b).collect());
    Ok(MetricBundle { g, dg })
}

/// Mean and variance of `N(mu, sigma^2)` truncated to `(a, b)`.
pub fn truncated_normal_moments(mu: f64, sigma: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) || !(a < b) {
        return Err(Error::Config("truncated normal needs sigma > 0 and a < b".into()));
    }
    let (al, be) = ((a - mu) / sigma, (b - mu) / sigma);
    let z = norm_interval_mass(al, be);
    if !(z >= 1e-300) {
        return Err(Error::DegenerateTruncation { mass: z });
    }
    let pa = norm_pdf(al);
    let pb = norm_pdf(be);
    let xpa = if al.is_finite() { al * pa } else { 0.0 };
    let xpb = if be.is_finite() { be * pb } else { 0.0 };
    let r = (pa - pb) / z;
    let mean = mu + sigma * r;
    let var = sigma * sigma * (1.0 + (xpa - xpb) / z - r * r);
    Ok((mean, var))
}

/// A positive-definite matrix produced by [`regularize`].
#[derive(Debug, Clone)]
pub struct Regularized {
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Regularized {
    /// True when jitter had to be added.
    pub fn singular(&self) -> bool {
        self.jitter > 0.0
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];
const JITTER_FLOOR: f64 = 1e-12;
/// Smallest accepted ratio between the smallest and largest squared Cholesky pivots.
const PIVOT_RATIO: f64 = 1e-15;

/// Add the smallest jitter from the ladder that makes `g` numerically positive definite.
pub fn regularize(g: &DMatrix<f64>) -> Result<Regularized> {
    let d = g.nrows();
    if d == 0 || g.ncols() != d {
        return Err(Error::Shape("regularize needs a nonempty square matrix".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMetric { jitter: 0.0 });
    }
    let sym = (g + g.transpose()) * 0.5;
    let scale = sym.trace().abs() / d as f64;
    let mut last = 0.0;
    for c in JITTER_LADDER {
        let jitter = if c == 0.0 { 0.0 } else { (c * scale).max(JITTER_FLOOR) };
        last = jitter;
        let mut m = sym.clone();
        for i in 0..d {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m.clone()) {
            let l = chol.l_dirty();
            let pivots = (0..d).map(|i| l[(i, i)] * l[(i, i)]);
            let (lo, hi) = pivots.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p), hi.max(p)));
            if lo > 0.0 && lo >= PIVOT_RATIO * hi {
                return Ok(Regularized { matrix: m, chol, jitter });
            }
        }
    }
    Err(Error::SingularMetric { jitter: last })
}
