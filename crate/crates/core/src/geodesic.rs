//! Geodesics on the manifold of univariate Gaussians, comparison paths and
//! Christoffel symbols.
//!
//! Points use the chart `(mu, var)`. In it the Fisher line element is
//! `ds^2 = dmu^2 / var + dvar^2 / (2 var^2)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{regularize, MetricBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPoint {
    pub mu: f64,
    pub var: f64,
}

impl GaussianPoint {
    pub fn new(mu: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) || !mu.is_finite() || !var.is_finite() {
            return Err(Error::Domain(format!("Gaussian point needs finite mu and var > 0, got ({mu}, {var})")));
        }
        Ok(Self { mu, var })
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Canonical coordinates `(Delta, delta) = (1/var, mu/var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalPoint {
    pub big_delta: f64,
    pub delta: f64,
}

/// Element `(d, P)` of the positive affine group in one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineGroupElement {
    pub d: f64,
    pub p: f64,
}

impl AffineGroupElement {
    pub fn new(d: f64, p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::Domain("affine group element needs P > 0".into()));
        }
        Ok(Self { d, p })
    }

    pub fn identity() -> Self {
        Self { d: 0.0, p: 1.0 }
    }

    /// The element mapping `N(0, 1)` to `target`.
    pub fn from_origin_to(target: GaussianPoint) -> Self {
        Self { d: target.mu, p: target.sd() }
    }
}

pub fn to_canonical(p: GaussianPoint) -> Result<CanonicalPoint> {
    if !(p.var > 0.0) {
        return Err(Error::Domain("variance must be positive".into()));
    }
    Ok(CanonicalPoint { big_delta: 1.0 / p.var, delta: p.mu / p.var })
}

pub fn from_canonical(c: CanonicalPoint) -> Result<GaussianPoint> {
    if !(c.big_delta > 0.0) {
        return Err(Error::Domain("Delta must be positive".into()));
    }
    Ok(GaussianPoint { mu: c.delta / c.big_delta, var: 1.0 / c.big_delta })
}

/// `(mu, var) -> (P mu + d, P^2 var)`.
pub fn group_act(g: AffineGroupElement, x: GaussianPoint) -> GaussianPoint {
    GaussianPoint { mu: g.p * x.mu + g.d, var: g.p * g.p * x.var }
}

/// The same action expressed in canonical coordinates.
pub fn group_act_canonical(g: AffineGroupElement, c: CanonicalPoint) -> Result<CanonicalPoint> {
    to_canonical(group_act(g, from_canonical(c)?))
}

pub fn group_inverse(g: AffineGroupElement) -> AffineGroupElement {
    AffineGroupElement { d: -g.d / g.p, p: 1.0 / g.p }
}

/// Tolerance for rounding in the arccosh argument.
const ACOSH_SLACK: f64 = 1e-12;

/// Shape parameters `(R, G)` of the geodesic from the origin that reaches
/// `(Delta', delta')` at `t = 1`.
pub fn solve_rg(big_delta: f64, delta: f64) -> Result<(f64, f64)> {
    if !(big_delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain("target must have Delta > 0".into()));
    }
    if big_delta == 1.0 && delta == 0.0 {
        return Err(Error::Domain("target coincides with the origin".into()));
    }
    let (dd, d2) = (big_delta, delta * delta);
    let common = d2 * d2 + 4.0 * d2 * dd * dd + 4.0 * d2 * dd + 4.0 * dd.powi(4);
    let q = common - 8.0 * dd.powi(3) + 4.0 * dd * dd;
    let r = ((d2 - 2.0 * dd * dd + 2.0 * dd) / q.sqrt()).clamp(-1.0, 1.0);
    let mut arg = (common + 4.0 * dd * dd) / (8.0 * dd.powi(3));
    if arg < 1.0 {
        if arg < 1.0 - ACOSH_SLACK {
            return Err(Error::Domain(format!("arccosh argument {arg} below 1")));
        }
        arg = 1.0;
    }
    Ok((r, arg.acosh()))
}

/// Point at time `t` on the geodesic through `N(0, 1)` with shape `(R, G)`.
///
/// `sign` selects the branch of `delta`; it is the sign of the target's `delta'`.
pub fn geodesic_through_origin(r: f64, g: f64, sign: f64, t: f64) -> CanonicalPoint {
    through_origin_stable(r, 1.0 - r, 1.0 + r, g, sign * (0.5 * (1.0 - r * r)).max(0.0).sqrt(), t)
}

/// `sqrt((1 - R^2) / 2)` for the target `(Delta', delta')`, without the
/// cancellation in `1 - R^2` when `delta'` is small.
pub fn delta_prefactor(big_delta: f64, delta: f64) -> f64 {
    let (dd, d2) = (big_delta, delta * delta);
    let q = d2 * d2 + 4.0 * d2 * dd * dd + 4.0 * d2 * dd + 4.0 * dd.powi(4) - 8.0 * dd.powi(3) + 4.0 * dd * dd;
    2.0 * delta.abs() * dd / q.sqrt()
}

/// `(1 - R, 1 + R)` for the target, each formed without cancellation.
fn one_minus_plus_r(r: f64, big_delta: f64, delta: f64) -> (f64, f64) {
    let (dd, d2) = (big_delta, delta * delta);
    let q = d2 * d2 + 4.0 * d2 * dd * dd + 4.0 * d2 * dd + 4.0 * dd.powi(4) - 8.0 * dd.powi(3) + 4.0 * dd * dd;
    let one_minus_r2 = 8.0 * d2 * dd * dd / q;
    if r < 0.0 {
        (1.0 - r, one_minus_r2 / (1.0 - r))
    } else {
        (one_minus_r2 / (1.0 + r), 1.0 + r)
    }
}

/// The same curve written as sums of exponentials, so that nothing cancels
/// in `Delta` when `R` is close to +-1 or `tG` is large.
fn through_origin_stable(r: f64, omr: f64, opr: f64, g: f64, pref: f64, t: f64) -> CanonicalPoint {
    let (ep, em) = ((t * g).exp(), (-t * g).exp());
    let big_delta = 0.25 * omr * omr * ep + 0.25 * opr * opr * em + 0.5 * omr * opr;
    let delta = pref * (0.5 * omr * ep - 0.5 * opr * em + r);
    CanonicalPoint { big_delta, delta }
}

/// A geodesic between two points as a callable curve on `t in [0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Geodesic {
    to_start: AffineGroupElement,
    r: f64,
    g: f64,
    /// Signed `sqrt((1 - R^2) / 2)`.
    pref: f64,
    omr: f64,
    opr: f64,
    start: GaussianPoint,
    end: GaussianPoint,
    constant: bool,
}

impl Geodesic {
    pub fn between(p1: GaussianPoint, p2: GaussianPoint) -> Result<Self> {
        GaussianPoint::new(p1.mu, p1.var)?;
        GaussianPoint::new(p2.mu, p2.var)?;
        let to_start = AffineGroupElement::from_origin_to(p1);
        let local = to_canonical(group_act(group_inverse(to_start), p2))?;
        let constant = p1 == p2 || (local.big_delta == 1.0 && local.delta == 0.0);
        let (r, g) = if constant { (0.0, 0.0) } else { solve_rg(local.big_delta, local.delta)? };
        let sign = if local.delta < 0.0 { -1.0 } else { 1.0 };
        let pref = if constant { 0.0 } else { sign * delta_prefactor(local.big_delta, local.delta) };
        let (omr, opr) = if constant { (1.0, 1.0) } else { one_minus_plus_r(r, local.big_delta, local.delta) };
        Ok(Self { to_start, r, g, pref, omr, opr, start: p1, end: p2, constant })
    }

    pub fn at(&self, t: f64) -> GaussianPoint {
        if self.constant {
            return self.start;
        }
        if t == 0.0 {
            return self.start;
        }
        if t == 1.0 {
            return self.end;
        }
        let c = through_origin_stable(self.r, self.omr, self.opr, self.g, self.pref, t);
        let local = GaussianPoint { mu: c.delta / c.big_delta, var: 1.0 / c.big_delta };
        group_act(self.to_start, local)
    }

    /// Unclamped evaluation, without snapping the endpoints.
    pub fn at_raw(&self, t: f64) -> GaussianPoint {
        if self.constant {
            return self.start;
        }
        let c = through_origin_stable(self.r, self.omr, self.opr, self.g, self.pref, t);
        group_act(self.to_start, GaussianPoint { mu: c.delta / c.big_delta, var: 1.0 / c.big_delta })
    }
}

fn grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Config("a path needs at least two points".into()));
    }
    Ok((0..n).map(|k| k as f64 / (n - 1) as f64).collect())
}

/// `n` points at uniform `t` along the geodesic from `p1` to `p2`.
pub fn geodesic_between(p1: GaussianPoint, p2: GaussianPoint, n: usize) -> Result<Vec<GaussianPoint>> {
    let geo = Geodesic::between(p1, p2)?;
    Ok(grid(n)?.into_iter().map(|t| geo.at(t)).collect())
}

/// Linear interpolation in `(mu, var)`.
pub fn straight_line_path(p1: GaussianPoint, p2: GaussianPoint, n: usize) -> Result<Vec<GaussianPoint>> {
    Ok(grid(n)?
        .into_iter()
        .map(|t| GaussianPoint { mu: p1.mu + t * (p2.mu - p1.mu), var: p1.var + t * (p2.var - p1.var) })
        .collect())
}

/// `mu` moves during the first half of the path, `var` during the second.
pub fn two_stage_path(p1: GaussianPoint, p2: GaussianPoint, n: usize) -> Result<Vec<GaussianPoint>> {
    Ok(grid(n)?
        .into_iter()
        .map(|t| {
            if t <= 0.5 {
                GaussianPoint { mu: p1.mu + 2.0 * t * (p2.mu - p1.mu), var: p1.var }
            } else {
                GaussianPoint { mu: p2.mu, var: p1.var + (2.0 * t - 1.0) * (p2.var - p1.var) }
            }
        })
        .collect())
}

/// Fisher line element between two points along a chart-linear segment,
/// integrated with 5-point Gauss-Legendre.
fn segment_length(a: GaussianPoint, b: GaussianPoint) -> f64 {
    const X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let (dm, dv) = (b.mu - a.mu, b.var - a.var);
    X.iter()
        .zip(W)
        .map(|(x, w)| {
            let s = 0.5 * (x + 1.0);
            let v = a.var + s * dv;
            w * 0.5 * (dm * dm / v + dv * dv / (2.0 * v * v)).sqrt()
        })
        .sum()
}

/// Fisher length of the piecewise chart-linear path through `points`.
pub fn path_length(points: &[GaussianPoint]) -> f64 {
    points.windows(2).map(|w| segment_length(w[0], w[1])).sum()
}

/// Fisher length of a parametric curve on `[0, 1]`, refined with `n` segments.
pub fn curve_length(curve: impl Fn(f64) -> GaussianPoint, n: usize) -> f64 {
    let pts: Vec<GaussianPoint> = (0..=n).map(|k| curve(k as f64 / n as f64)).collect();
    path_length(&pts)
}

/// Closed-form Fisher distance between two univariate Gaussians.
pub fn fisher_distance(a: GaussianPoint, b: GaussianPoint) -> f64 {
    let (sa, sb) = (a.sd(), b.sd());
    let dm = a.mu - b.mu;
    let arg = 1.0 + (0.5 * dm * dm + (sa - sb).powi(2)) / (2.0 * sa * sb);
    std::f64::consts::SQRT_2 * arg.acosh()
}

/// `KL(p + dxi || p)` and `ds^2 / 2` for a displacement `dxi = (dmu, dvar)`.
pub fn kl_vs_metric_check(p: GaussianPoint, dxi: (f64, f64)) -> Result<(f64, f64)> {
    let q = GaussianPoint::new(p.mu + dxi.0, p.var + dxi.1)?;
    let ratio = q.var / p.var;
    let kl = 0.5 * (ratio - 1.0 - ratio.ln() + dxi.0 * dxi.0 / p.var);
    let half_ds2 = 0.5 * (dxi.0 * dxi.0 / p.var + dxi.1 * dxi.1 / (2.0 * p.var * p.var));
    Ok((kl, half_ds2))
}

/// Levi-Civita symbols `gamma[k][(i, j)] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)`.
pub fn christoffel(metric: &MetricBundle) -> Result<Vec<DMatrix<f64>>> {
    let dg = metric
        .dg
        .as_ref()
        .ok_or_else(|| Error::Capability("Christoffel symbols need metric derivatives".into()))?;
    let reg = regularize(&metric.g)?;
    if reg.singular() {
        return Err(Error::SingularMetric { jitter: reg.jitter });
    }
    let ginv = reg.inverse();
    let d = metric.dim();
    let mut gamma = vec![DMatrix::zeros(d, d); d];
    for (k, gk) in gamma.iter_mut().enumerate() {
        for i in 0..d {
            for j in 0..=i {
                let mut v = 0.0;
                for l in 0..d {
                    v += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gk[(i, j)] = 0.5 * v;
                gk[(j, i)] = 0.5 * v;
            }
        }
    }
    Ok(gamma)
}

/// Fisher metric of `N(mu, var)` in the `(mu, var)` chart.
pub fn gaussian_metric(p: GaussianPoint) -> MetricBundle {
    let v = p.var;
    let g = DMatrix::from_row_slice(2, 2, &[1.0 / v, 0.0, 0.0, 0.5 / (v * v)]);
    let dg = vec![DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[-1.0 / (v * v), 0.0, 0.0, -1.0 / (v * v * v)])];
    MetricBundle::new(g, Some(dg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(mu: f64, var: f64) -> GaussianPoint {
        GaussianPoint::new(mu, var).unwrap()
    }

    #[test]
    fn canonical_examples() {
        let c = to_canonical(pt(0.0, 1.0)).unwrap();
        assert_eq!((c.big_delta, c.delta), (1.0, 0.0));
        let c = to_canonical(pt(5.0, 3.0)).unwrap();
        assert!((c.big_delta - 1.0 / 3.0).abs() < 1e-15 && (c.delta - 5.0 / 3.0).abs() < 1e-15);
        assert!(to_canonical(GaussianPoint { mu: 0.0, var: 0.0 }).is_err());
    }

    #[test]
    fn pure_variance_targets() {
        for s in [0.3, -0.7] {
            let (r, g) = solve_rg(f64::exp(s), 0.0).unwrap();
            assert!((r.abs() - 1.0).abs() < 1e-12);
            assert!((g - s.abs()).abs() < 1e-12);
            let c = geodesic_through_origin(r, g, 1.0, 1.0);
            assert!((c.big_delta - s.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_and_constant_path() {
        let path = geodesic_between(pt(0.0, 1.0), pt(5.0, 3.0), 25).unwrap();
        assert_eq!(path[0], pt(0.0, 1.0));
        assert_eq!(path[24], pt(5.0, 3.0));
        let geo = Geodesic::between(pt(0.0, 1.0), pt(5.0, 3.0)).unwrap();
        let raw = geo.at_raw(1.0);
        assert!((raw.mu - 5.0).abs() < 1e-10 && (raw.var - 3.0).abs() < 1e-10);
        let c = geodesic_between(pt(1.0, 2.0), pt(1.0, 2.0), 5).unwrap();
        assert!(c.iter().all(|p| *p == pt(1.0, 2.0)));
    }

    #[test]
    fn christoffel_sigma_chart() {
        let s: f64 = 1.7;
        let g = DMatrix::from_row_slice(2, 2, &[1.0 / (s * s), 0.0, 0.0, 2.0 / (s * s)]);
        let d = -2.0 / (s * s * s);
        let dg = vec![DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[d, 0.0, 0.0, 2.0 * d])];
        let gam = christoffel(&MetricBundle::new(g, Some(dg))).unwrap();
        assert!((gam[0][(0, 1)] + 1.0 / s).abs() < 1e-12);
        assert!((gam[1][(0, 0)] - 0.5 / s).abs() < 1e-12);
        assert!((gam[1][(1, 1)] + 1.0 / s).abs() < 1e-12);
        assert_eq!(gam[0][(0, 1)], gam[0][(1, 0)]);
        let flat = christoffel(&MetricBundle::constant(DMatrix::identity(3, 3))).unwrap();
        assert!(flat.iter().all(|m| m.amax() == 0.0));
    }

    #[test]
    fn kl_relation() {
        let (kl, q) = kl_vs_metric_check(pt(0.0, 1.0), (0.0, 0.0)).unwrap();
        assert_eq!((kl, q), (0.0, 0.0));
        let (kl, _) = kl_vs_metric_check(pt(0.0, 1.0), (1e-3, 0.0)).unwrap();
        assert!((kl / 0.5e-6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn two_stage_and_straight_midpoints() {
        let s = straight_line_path(pt(0.0, 1.0), pt(5.0, 3.0), 3).unwrap();
        assert_eq!(s[1], pt(2.5, 2.0));
        let t = two_stage_path(pt(0.0, 1.0), pt(5.0, 3.0), 3).unwrap();
        assert_eq!(t[1], pt(5.0, 1.0));
    }
}
