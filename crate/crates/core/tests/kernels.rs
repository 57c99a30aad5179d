use geosmc::kernels::{
    mh_step, mmala_euler_from_geometry, mmala_euler_proposal, mmala_ozaki_from_geometry, mmala_ozaki_proposal,
    mmala_simplified_from_geometry, mmala_simplified_proposal, rw_uniform_kernel_density, rw_uniform_propose,
    AdaptiveMvn, DriftForm, KernelProposal, Proposal,
};
use geosmc::metric::MetricBundle;
use geosmc::models::{uni_drift_cov, uni_log_gamma, Geometry, TemperedModel, UnivariateGaussianModel};
use geosmc::presets::{fn_data, fn_model, uni_data, uni_model, PriorKind};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn uniform_proposal_moments_and_support() {
    let mut r = rng(1);
    let x = v(&[0.0]);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let y = rw_uniform_propose(&x, 2.0, &mut r)[0];
        assert!((-1.0..=1.0).contains(&y));
        s += y;
        s2 += y * y;
    }
    let mean = s / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!(mean.abs() < 4.0 * (1.0 / 3.0 / n as f64).sqrt());
    assert!((var - 1.0 / 3.0).abs() < 0.02 / 3.0);
    assert_eq!(rw_uniform_propose(&v(&[1.5, -2.0]), 0.0, &mut r), v(&[1.5, -2.0]));
}

#[test]
fn uniform_kernel_density_examples() {
    let k = rw_uniform_kernel_density(0.0, 0.5, 0.0, 1.0, 2.0).unwrap();
    assert!((k - 0.4412).abs() < 5e-5);
    assert_eq!(rw_uniform_kernel_density(3.0, 2.0, 0.0, 1.0, 2.0).unwrap(), 0.5);
    assert_eq!(rw_uniform_kernel_density(0.0, 1.2, 0.0, 1.0, 2.0).unwrap(), 0.0);
}

#[test]
fn uniform_kernel_density_has_unit_mass() {
    for (prev, mu, sigma, d) in [
        (0.0, 0.0, 1.0, 2.0),
        (0.3, 0.0, 1.0, 2.0),
        (3.0, 0.0, 1.0, 2.0),
        (-0.4, 1.0, 0.5, 5.0),
        (2.0, 2.1, 3.0, 0.7),
        (10.0, 0.0, 1.0, 1.0),
    ] {
        let atom = rw_uniform_kernel_density(prev, prev, mu, sigma, d).unwrap();
        let f = |y: f64| if y == prev { 0.0 } else { rw_uniform_kernel_density(prev, y, mu, sigma, d).unwrap() };
        // Split at the points where the acceptance probability has kinks.
        let mut cuts = vec![prev - d / 2.0, prev, prev + d / 2.0, 2.0 * mu - prev];
        cuts.retain(|c| *c >= prev - d / 2.0 && *c <= prev + d / 2.0);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let cont: f64 = cuts.windows(2).map(|w| simpson(f, w[0] + 1e-15, w[1] - 1e-15, 20_000)).sum();
        assert!((cont + atom - 1.0).abs() < 1e-6, "mass {} at {:?}", cont + atom, (prev, mu, sigma, d));
    }
}

#[test]
fn gaussian_proposal_density_integrates_to_one() {
    let p = KernelProposal::gaussian(v(&[0.7]), DMatrix::from_element(1, 1, 0.09)).unwrap();
    let mass = simpson(|x| p.log_density(&v(&[x])).exp(), -5.0, 6.0, 20_000);
    assert!((mass - 1.0).abs() < 1e-6);
}

#[test]
fn adaptive_mvn_scaling() {
    let am = AdaptiveMvn::from_sample_covariance(&DMatrix::identity(4, 4)).unwrap();
    assert!((am.cov.clone() - DMatrix::identity(4, 4) * 1.41610).amax() < 1e-5);
    let pts = vec![v(&[0.0, 0.0]), v(&[2.0, 0.0]), v(&[0.0, 2.0]), v(&[2.0, 2.0])];
    let am = AdaptiveMvn::from_population(&pts, &[0.25; 4]).unwrap();
    // Unbiased sample covariance of the four corners is (4/3) I.
    assert!((am.cov[(0, 0)] - 2.38 * 2.38 / 2.0 * 4.0 / 3.0).abs() < 1e-12);
    assert!(am.cov[(0, 1)].abs() < 1e-12);
    assert!(AdaptiveMvn::from_population(&[v(&[1.0])], &[1.0]).is_err());
}

fn std_normal_geo(x: &DVector<f64>) -> Geometry {
    Geometry { grad: -x, metric: MetricBundle::constant(DMatrix::identity(1, 1)) }
}

#[test]
fn constant_metric_drifts() {
    let x = v(&[0.8]);
    let e = mmala_euler_from_geometry(&x, &std_normal_geo(&x), 0.3, DriftForm::Printed).unwrap();
    let s = mmala_simplified_from_geometry(&x, &std_normal_geo(&x), 0.3).unwrap();
    assert!((e.mean[0] - 0.8 * (1.0 - 0.045)).abs() < 1e-15);
    assert_eq!(e.mean, s.mean);
    assert!((e.cov[(0, 0)] - 0.09).abs() < 1e-15);

    let flat = Geometry { grad: v(&[0.0, 0.0]), metric: MetricBundle::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])) };
    let e = mmala_euler_from_geometry(&v(&[1.0, -1.0]), &flat, 0.5, DriftForm::Printed).unwrap();
    assert_eq!(e.mean, v(&[1.0, -1.0]));
    let want = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]).try_inverse().unwrap() * 0.25;
    assert!((e.cov - want).amax() < 1e-14);
}

fn uni() -> UnivariateGaussianModel {
    uni_model(uni_data(5)).unwrap()
}

#[test]
fn euler_christoffel_matches_univariate_closed_form() {
    let m = uni();
    for (mu, sigma, phi, eps) in [(45.0, 8.0, 0.3, 0.4), (60.0, 14.0, 1.0, 0.7), (50.0, 10.0, 1e-3, 0.1), (20.0, 3.0, 0.05, 0.4)] {
        let xi = v(&[mu, sigma]);
        let a = mmala_euler_proposal(&m, &xi, phi, eps, DriftForm::Christoffel).unwrap();
        let b = uni_drift_cov(&m, &xi, phi, eps).unwrap();
        assert!((&a.mean - &b.mean).amax() < 1e-10, "{:?} vs {:?}", a.mean, b.mean);
        assert!((&a.cov - &b.cov).amax() < 1e-10);
    }
}

/// `-g^ik d_j g_kl g^lj + 1/2 g^ij g^kl d_j g_kl`, written with explicit index loops.
fn curvature_terms(g: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> DVector<f64> {
    let gi = g.clone().try_inverse().unwrap();
    let d = g.nrows();
    let mut out = DVector::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    out[i] += -gi[(i, k)] * dg[j][(k, l)] * gi[(l, j)] + 0.5 * gi[(i, j)] * gi[(k, l)] * dg[j][(k, l)];
                }
            }
        }
    }
    out
}

#[test]
fn printed_and_simplified_differ_by_curvature_terms() {
    let m = fn_model(fn_data(2).unwrap(), PriorKind::Normal).unwrap();
    let eps = 0.6;
    for (xi, phi) in [(v(&[0.25, 0.3, 2.5]), 0.2), (v(&[0.15, 0.22, 3.3]), 0.9)] {
        let e = mmala_euler_proposal(&m, &xi, phi, eps, DriftForm::Printed).unwrap();
        let s = mmala_simplified_proposal(&m, &xi, phi, eps).unwrap();
        let c = mmala_euler_proposal(&m, &xi, phi, eps, DriftForm::Christoffel).unwrap();
        let mb = m.metric_bundle(&xi, phi).unwrap();
        let terms = curvature_terms(&mb.g, mb.dg.as_ref().unwrap()) * (eps * eps);
        // The difference of two means of size ~xi loses digits to cancellation.
        let scale = xi.amax();
        assert!(((&e.mean - &s.mean) - &terms).amax() < 1e-8 * scale);
        assert!(((&c.mean - &s.mean) - &terms * 0.5).amax() < 1e-8 * scale);
        // Same metric, but integrated with a different augmented system.
        assert!((&e.cov - &s.cov).amax() < 1e-6 * e.cov.amax());
    }
}

#[test]
fn ozaki_reproduces_ornstein_uhlenbeck_transition() {
    for (x, eps) in [(1.3, 0.7), (-0.4, 0.2), (2.0, 1.5)] {
        let xi = v(&[x]);
        let p = mmala_ozaki_from_geometry(&xi, &std_normal_geo(&xi), eps, DriftForm::Printed, &|y| Ok(std_normal_geo(y))).unwrap();
        assert!((p.mean[0] - x * (-eps * eps / 2.0).exp()).abs() < 1e-10);
        assert!((p.cov[(0, 0)] - (1.0 - (-eps * eps).exp())).abs() < 1e-10);
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn ozaki_approaches_euler_at_fourth_order() {
    let m = uni();
    let xi = v(&[42.0, 13.0]);
    let phi = 0.4;
    let eps = [0.2, 0.1, 0.05, 0.025];
    let (mut dm, mut dc) = (vec![], vec![]);
    for e in eps {
        let o = mmala_ozaki_proposal(&m, &xi, phi, e, DriftForm::Christoffel).unwrap();
        let u = mmala_euler_proposal(&m, &xi, phi, e, DriftForm::Christoffel).unwrap();
        dm.push((&o.mean - &u.mean).norm());
        dc.push((&o.cov - &u.cov).norm());
    }
    let (sm, sc) = (slope(&eps, &dm), slope(&eps, &dc));
    assert!((sm - 4.0).abs() <= 0.8, "mean slope {sm}");
    assert!((sc - 4.0).abs() <= 0.8, "covariance slope {sc}");
}

fn batch_se(xs: &[f64]) -> f64 {
    let b = 100;
    let len = xs.len() / b;
    let means: Vec<f64> = (0..b).map(|k| xs[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Runs `n` MH steps and returns per-coordinate traces.
fn chain(
    log_target: impl Fn(&DVector<f64>) -> f64,
    start: DVector<f64>,
    proposal: impl Fn(&DVector<f64>) -> geosmc::Result<Proposal>,
    n: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let mut x = start;
    let mut out = vec![Vec::with_capacity(n); x.len()];
    for _ in 0..n {
        let rec = mh_step(&log_target, &x, &proposal, &mut r).unwrap();
        assert!(rec.log_alpha <= 0.0);
        if rec.accepted {
            x = rec.proposed;
        }
        for (c, t) in out.iter_mut().enumerate() {
            t.push(x[c]);
        }
    }
    out
}

fn assert_moments(trace: &[f64], mean: f64, second: f64, label: &str) {
    let m = trace.iter().sum::<f64>() / trace.len() as f64;
    let sq: Vec<f64> = trace.iter().map(|x| x * x).collect();
    let m2 = sq.iter().sum::<f64>() / sq.len() as f64;
    let (se1, se2) = (batch_se(trace), batch_se(&sq));
    assert!((m - mean).abs() < 4.0 * se1, "{label}: mean {m} vs {mean} (se {se1})");
    assert!((m2 - second).abs() < 4.0 * se2, "{label}: second moment {m2} vs {second} (se {se2})");
}

#[test]
fn every_kernel_leaves_a_gaussian_invariant() {
    let lt = |x: &DVector<f64>| -0.5 * x[0] * x[0];
    let n = 100_000;
    let start = v(&[0.5]);
    let am = AdaptiveMvn::from_sample_covariance(&DMatrix::identity(1, 1)).unwrap();
    let kernels: Vec<(&str, Box<dyn Fn(&DVector<f64>) -> geosmc::Result<Proposal>>)> = vec![
        ("uniform", Box::new(|x: &DVector<f64>| Ok(Proposal::UniformBox { center: x.clone(), width: 2.5 }))),
        ("adaptive", Box::new(move |x: &DVector<f64>| am.proposal(x).map(Proposal::Gaussian))),
        ("euler", Box::new(|x: &DVector<f64>| mmala_euler_from_geometry(x, &std_normal_geo(x), 1.2, DriftForm::Printed).map(Proposal::Gaussian))),
        ("simplified", Box::new(|x: &DVector<f64>| mmala_simplified_from_geometry(x, &std_normal_geo(x), 1.2).map(Proposal::Gaussian))),
        (
            "ozaki",
            Box::new(|x: &DVector<f64>| {
                mmala_ozaki_from_geometry(x, &std_normal_geo(x), 1.2, DriftForm::Printed, &|y| Ok(std_normal_geo(y))).map(Proposal::Gaussian)
            }),
        ),
    ];
    for (k, (label, prop)) in kernels.iter().enumerate() {
        let t = chain(lt, start.clone(), prop, n, 40 + k as u64);
        assert_moments(&t[0], 0.0, 1.0, label);
    }
}

/// Posterior moments of the univariate model at phi = 1 on a dense grid.
fn uni_posterior_moments(m: &UnivariateGaussianModel) -> [f64; 4] {
    let (n_mu, n_s) = (400, 400);
    let xbar = m.data.iter().sum::<f64>() / m.data.len() as f64;
    let (mu_lo, mu_hi) = (xbar - 15.0, xbar + 15.0);
    let (s_lo, s_hi) = (4.0, 20.0);
    let mut lg = vec![0.0; n_mu * n_s];
    let mut max = f64::NEG_INFINITY;
    for i in 0..n_mu {
        for j in 0..n_s {
            let mu = mu_lo + (i as f64 + 0.5) * (mu_hi - mu_lo) / n_mu as f64;
            let s = s_lo + (j as f64 + 0.5) * (s_hi - s_lo) / n_s as f64;
            let l = uni_log_gamma(m, &v(&[mu, s]), 1.0);
            lg[i * n_s + j] = l;
            max = max.max(l);
        }
    }
    let mut acc = [0.0; 5];
    for i in 0..n_mu {
        for j in 0..n_s {
            let mu = mu_lo + (i as f64 + 0.5) * (mu_hi - mu_lo) / n_mu as f64;
            let s = s_lo + (j as f64 + 0.5) * (s_hi - s_lo) / n_s as f64;
            let w = (lg[i * n_s + j] - max).exp();
            acc[0] += w;
            acc[1] += w * mu;
            acc[2] += w * mu * mu;
            acc[3] += w * s;
            acc[4] += w * s * s;
        }
    }
    [acc[1] / acc[0], acc[2] / acc[0], acc[3] / acc[0], acc[4] / acc[0]]
}

#[test]
fn kernels_sample_the_univariate_posterior() {
    let m = uni();
    let oracle = uni_posterior_moments(&m);
    let post_cov = DMatrix::from_diagonal(&v(&[oracle[1] - oracle[0].powi(2), oracle[3] - oracle[2].powi(2)]));
    let am = AdaptiveMvn::from_sample_covariance(&post_cov).unwrap();
    let lt = |x: &DVector<f64>| uni_log_gamma(&m, x, 1.0);
    let start = v(&[oracle[0], oracle[2]]);
    let n = 100_000;
    let kernels: Vec<(&str, Box<dyn Fn(&DVector<f64>) -> geosmc::Result<Proposal>>)> = vec![
        ("uniform", Box::new(|x: &DVector<f64>| Ok(Proposal::UniformBox { center: x.clone(), width: 3.0 }))),
        ("adaptive", Box::new(move |x: &DVector<f64>| am.proposal(x).map(Proposal::Gaussian))),
        ("euler", Box::new(|x: &DVector<f64>| mmala_euler_proposal(&m, x, 1.0, 1.0, DriftForm::Printed).map(Proposal::Gaussian))),
        ("christoffel", Box::new(|x: &DVector<f64>| mmala_euler_proposal(&m, x, 1.0, 1.0, DriftForm::Christoffel).map(Proposal::Gaussian))),
        ("simplified", Box::new(|x: &DVector<f64>| mmala_simplified_proposal(&m, x, 1.0, 1.0).map(Proposal::Gaussian))),
        ("ozaki", Box::new(|x: &DVector<f64>| mmala_ozaki_proposal(&m, x, 1.0, 1.0, DriftForm::Christoffel).map(Proposal::Gaussian))),
    ];
    for (k, (label, prop)) in kernels.iter().enumerate() {
        let t = chain(lt, start.clone(), prop, n, 70 + k as u64);
        assert_moments(&t[0], oracle[0], oracle[1], &format!("{label} mu"));
        assert_moments(&t[1], oracle[2], oracle[3], &format!("{label} sigma"));
    }
}

#[test]
fn mh_rejects_out_of_support() {
    let m = uni();
    let mut r = rng(3);
    let x = v(&[50.0, 10.0]);
    let rec = mh_step(
        |y| uni_log_gamma(&m, y, 1.0),
        &x,
        |c| Ok(Proposal::UniformBox { center: c - v(&[0.0, 100.0]), width: 1.0 }),
        &mut r,
    )
    .unwrap();
    assert!(!rec.accepted);
    assert_eq!(rec.log_alpha, f64::NEG_INFINITY);
}
