//! Acceptance checks for the library and the experiment runner. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

use std::path::Path;
use std::time::Instant;

use geosmc::geodesic::{christoffel, gaussian_metric, geodesic_between, GaussianPoint, Geodesic};
use geosmc::kernels::{
    mh_step, mmala_euler_from_geometry, mmala_euler_proposal, mmala_ozaki_from_geometry, mmala_ozaki_proposal,
    mmala_simplified_from_geometry, rw_uniform_kernel_density, AdaptiveMvn, DriftForm, Proposal,
};
use geosmc::metric::{fisher_metric, regularize, truncated_normal_moments, NoiseModel, PriorSpec};
use geosmc::models::{uni_log_gamma, Geometry, MetricBundle, UnivariateGaussianModel};
use geosmc::ode::{integrate, integrate_with_sensitivities, FitzhughNagumo, LotkaVolterra, OdeSystem, Tolerances};
use geosmc::population::{ess, normalize_weights};
use geosmc::presets::{self, uni_data, uni_model};
use geosmc::smc::{drift_only_run, SmcConfig};
use geosmc::stats::norm_pdf;
use geosmc::{run, KernelChoice};
use geosmc_cli::experiments::{first_crossing, sample_variance};
use geosmc_cli::{resolve, run_experiment, Overrides};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
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

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn run_spec(cfg: Value, out: &Path) -> Value {
    let mut cfg = cfg;
    cfg["out_dir"] = json!(out);
    let spec = resolve(Some(cfg), &Overrides::default()).expect("valid acceptance config");
    run_experiment(&spec).expect("experiment runs");
    serde_json::from_slice(&std::fs::read(out.join("summary.json")).expect("summary written")).expect("summary parses")
}

fn f64s(v: &Value) -> Vec<f64> {
    serde_json::from_value(v.clone()).expect("numeric array")
}

// 1 -----------------------------------------------------------------------

fn final_ess_wins(summary: &Value) -> (usize, Vec<f64>, Vec<f64>, Vec<f64>) {
    let t = &summary["aggregate"]["traces"];
    let (g, l, s) = (f64s(&t["geodesic"]["final_ess"]), f64s(&t["straight-line"]["final_ess"]), f64s(&t["two-stage"]["final_ess"]));
    let wins = (0..g.len()).filter(|&r| g[r] > l[r] && g[r] > s[r]).count();
    (wins, g, l, s)
}

fn geodesic_ordering(tmp: &Path) -> Outcome {
    let summary = run_spec(json!({ "experiment": "geodesic-ess" }), &tmp.join("c1"));
    let (wins, g, l, s) = final_ess_wins(&summary);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    // Same comparison with the mixture denominator, reported for reference only.
    let mix = run_spec(json!({ "experiment": "geodesic-ess", "sampler": { "weight_mode": "full-kernel-mixture" } }), &tmp.join("c1m"));
    let (mix_wins, ..) = final_ess_wins(&mix);
    outcome(
        wins >= 8,
        format!(
            "geodesic beats both paths in {wins}/10 replicates (need >= 8); mean final ESS geodesic {:.1}, straight {:.1}, two-stage {:.1}; mixture-denominator weights: {mix_wins}/10",
            mean(&g),
            mean(&l),
            mean(&s)
        ),
    )
}

// 2 -----------------------------------------------------------------------

/// Posterior mean of `mu` at phi = 1 by midpoint quadrature on a 400 x 400 grid.
fn uni_grid_mean(m: &UnivariateGaussianModel) -> f64 {
    let xbar = m.data.iter().sum::<f64>() / m.data.len() as f64;
    let n = 400;
    let (mu_lo, mu_hi, s_lo, s_hi) = (xbar - 15.0, xbar + 15.0, 3.0, 25.0);
    let mut cells = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mu = mu_lo + (i as f64 + 0.5) * (mu_hi - mu_lo) / n as f64;
            let s = s_lo + (j as f64 + 0.5) * (s_hi - s_lo) / n as f64;
            cells.push((mu, uni_log_gamma(m, &v(&[mu, s]), 1.0)));
        }
    }
    let max = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut acc) = (0.0, 0.0);
    for (mu, l) in cells {
        let w = (l - max).exp();
        z += w;
        acc += w * mu;
    }
    acc / z
}

fn univariate_inference(tmp: &Path) -> Outcome {
    let summary = run_spec(json!({ "experiment": "uni-infer" }), &tmp.join("c2"));
    let run = &summary["runs"][0];
    let (mean, sd, ess) = (f64s(&run["mean"]), f64s(&run["sd"]), run["ess"].as_f64().unwrap_or(0.0));
    let oracle = uni_grid_mean(&uni_model(uni_data(presets::UNI_DATA_SEED)).expect("model"));
    let se = sd[0] / ess.sqrt();
    let z = (mean[0] - oracle) / se;
    outcome(
        z.abs() <= 3.0,
        format!("E[mu] = {:.4} vs grid oracle {oracle:.4}: {z:.2} weighted SEs (se {se:.4}, ESS {ess:.0}); E[sigma] = {:.3}", mean[0], mean[1]),
    )
}

// 3 -----------------------------------------------------------------------

fn tight() -> Tolerances {
    Tolerances { rtol: 1e-12, atol: 1e-14, max_steps: 2_000_000 }
}

fn fd_trajectory(sys: &dyn OdeSystem, x0: &[f64], p: &[f64], times: &[f64], i: usize) -> Vec<Vec<f64>> {
    let h = 1e-5 * p[i].abs().max(1e-3);
    let (mut a, mut b) = (p.to_vec(), p.to_vec());
    a[i] += h;
    b[i] -= h;
    let ta = integrate(sys, x0, &a, 0.0, times, &tight()).expect("integrates").states;
    let tb = integrate(sys, x0, &b, 0.0, times, &tight()).expect("integrates").states;
    ta.iter().zip(&tb).map(|(u, w)| u.iter().zip(w).map(|(x, y)| (x - y) / (2.0 * h)).collect()).collect()
}

/// Largest error over time for each state component, relative to that series' largest magnitude.
fn series_error(exact: impl Fn(usize, usize) -> f64, fd: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..fd[0].len() {
        let scale = fd.iter().map(|r| r[l].abs()).fold(1e-8, f64::max);
        for (t, row) in fd.iter().enumerate() {
            worst = worst.max((exact(t, l) - row[l]).abs() / scale);
        }
    }
    worst
}

fn sensitivity_errors(sys: &dyn OdeSystem, x0: &[f64], points: &[Vec<f64>], times: &[f64]) -> (f64, f64) {
    let tol = Tolerances::new(1e-8, 1e-10);
    let (mut e1, mut e2): (f64, f64) = (0.0, 0.0);
    for p in points {
        let s = integrate_with_sensitivities(sys, x0, p, 0.0, times, 2, &tol).expect("sensitivities");
        let d = p.len();
        for i in 0..d {
            e1 = e1.max(series_error(|t, l| s.s(t, i, l), &fd_trajectory(sys, x0, p, times, i)));
        }
        for k in 0..d {
            let h = 1e-5 * p[k].abs().max(1e-3);
            let (mut a, mut b) = (p.clone(), p.clone());
            a[k] += h;
            b[k] -= h;
            let sa = integrate_with_sensitivities(sys, x0, &a, 0.0, times, 1, &tight()).expect("sensitivities");
            let sb = integrate_with_sensitivities(sys, x0, &b, 0.0, times, 1, &tight()).expect("sensitivities");
            for i in 0..d {
                let fd: Vec<Vec<f64>> = (0..times.len())
                    .map(|t| (0..x0.len()).map(|l| (sa.s(t, i, l) - sb.s(t, i, l)) / (2.0 * h)).collect())
                    .collect();
                e2 = e2.max(series_error(|t, l| s.ds(t, k, i, l), &fd));
            }
        }
    }
    (e1, e2)
}

fn sensitivities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let fn_pts: Vec<Vec<f64>> =
        (0..20).map(|_| vec![rng.random_range(0.1..0.5), rng.random_range(0.1..0.5), rng.random_range(2.0..4.0)]).collect();
    let lv_pts: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            vec![rng.random_range(6.0..10.0), rng.random_range(0.4..0.6), rng.random_range(0.15..0.25), rng.random_range(0.008..0.012)]
        })
        .collect();
    let (f1, f2) = sensitivity_errors(&FitzhughNagumo, &presets::FN_X0, &fn_pts, &presets::observation_times(presets::FN_HORIZON, presets::FN_N_OBS));
    let (l1, l2) = sensitivity_errors(&LotkaVolterra, &presets::LV_X0, &lv_pts, &presets::observation_times(presets::LV_HORIZON, presets::LV_N_OBS));
    let worst = f1.max(f2).max(l1).max(l2);
    outcome(worst < 1e-4, format!("max relative error: FN S {f1:.1e}, dS {f2:.1e}; LV S {l1:.1e}, dS {l2:.1e} (need < 1e-4)"))
}

// 4 -----------------------------------------------------------------------

fn fn_metric(xi: &DVector<f64>, phi: f64, order: usize) -> MetricBundle {
    let prior = PriorSpec::mvn_diagonal(v(&presets::FN_TRUTH), &presets::FN_PRIOR_SD).expect("prior");
    let noise = NoiseModel::normal(vec![presets::FN_SIGMA2.sqrt(); 2]).expect("noise");
    let times = presets::observation_times(presets::FN_HORIZON, presets::FN_N_OBS);
    let tol = Tolerances { rtol: 1e-11, atol: 1e-13, max_steps: 2_000_000 };
    let sens = integrate_with_sensitivities(&FitzhughNagumo, &presets::FN_X0, xi.as_slice(), 0.0, &times, order, &tol).expect("sens");
    fisher_metric(phi, &sens, &noise, &prior, xi).expect("metric")
}

fn metric_derivative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let phi = 0.37;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let xi = v(&[rng.random_range(0.1..0.5), rng.random_range(0.1..0.5), rng.random_range(2.0..4.0)]);
        let dg = fn_metric(&xi, phi, 2).dg.expect("derivative");
        for k in 0..3 {
            let h = 1e-5 * xi[k].abs();
            let (mut a, mut b) = (xi.clone(), xi.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (fn_metric(&a, phi, 1).g - fn_metric(&b, phi, 1).g) / (2.0 * h);
            worst = worst.max((&dg[k] - &fd).amax() / fd.amax().max(1e-10));
        }
    }
    outcome(worst < 1e-4, format!("max relative error of dg over 20 FN points: {worst:.1e} (need < 1e-4)"))
}

// 5 -----------------------------------------------------------------------

fn uniform_prior_degeneracy() -> Outcome {
    let prior = PriorSpec::uniform(v(&presets::FN_UNIFORM_LOWER), v(&presets::FN_UNIFORM_UPPER)).expect("prior");
    let noise = NoiseModel::normal(vec![presets::FN_SIGMA2.sqrt(); 2]).expect("noise");
    let xi = v(&presets::FN_TRUTH);
    let times = presets::observation_times(presets::FN_HORIZON, presets::FN_N_OBS);
    let sens = integrate_with_sensitivities(&FitzhughNagumo, &presets::FN_X0, xi.as_slice(), 0.0, &times, 2, &Tolerances::default())
        .expect("sens");
    let m = fisher_metric(0.0, &sens, &noise, &prior, &xi).expect("metric");
    let zero = m.g.iter().all(|x| *x == 0.0);
    let flagged = regularize(&m.g).map(|r| r.singular()).unwrap_or(false);
    outcome(zero && flagged, format!("metric exactly zero: {zero}; regularizer flags singular: {flagged}"))
}

// 6 -----------------------------------------------------------------------

fn std_normal_geo(x: &DVector<f64>) -> Geometry {
    Geometry { grad: -x, metric: MetricBundle::constant(DMatrix::identity(1, 1)) }
}

fn ozaki_limit() -> Outcome {
    let m = uni_model(uni_data(5)).expect("model");
    let xi = v(&[42.0, 13.0]);
    let eps = [0.2, 0.1, 0.05, 0.025];
    let (mut dm, mut dc) = (vec![], vec![]);
    for e in eps {
        let o = mmala_ozaki_proposal(&m, &xi, 0.4, e, DriftForm::Christoffel).expect("ozaki");
        let u = mmala_euler_proposal(&m, &xi, 0.4, e, DriftForm::Christoffel).expect("euler");
        dm.push((&o.mean - &u.mean).norm());
        dc.push((&o.cov - &u.cov).norm());
    }
    let (sm, sc) = (log_slope(&eps, &dm), log_slope(&eps, &dc));
    let mut ou: f64 = 0.0;
    for (x, e) in [(1.3, 0.7), (-0.4, 0.2), (2.0, 1.5)] {
        let xi = v(&[x]);
        let p = mmala_ozaki_from_geometry(&xi, &std_normal_geo(&xi), e, DriftForm::Printed, &|y| Ok(std_normal_geo(y))).expect("ou");
        ou = ou.max((p.mean[0] - x * (-e * e / 2.0).exp()).abs()).max((p.cov[(0, 0)] - (1.0 - (-e * e).exp())).abs());
    }
    outcome(
        (sm - 4.0).abs() <= 0.8 && (sc - 4.0).abs() <= 0.8 && ou < 1e-10,
        format!("mean slope {sm:.2}, covariance slope {sc:.2} (need 4 +- 0.8); OU error {ou:.1e}"),
    )
}

// 7 and 8 -----------------------------------------------------------------

fn robustness_runs(tmp: &Path) -> Value {
    run_spec(
        json!({
            "experiment": "kernel-robustness",
            "replicates": 10,
            "population_counts": [15, 30],
            "sampler": { "n_particles": 300 },
        }),
        &tmp.join("c7"),
    )
}

fn alpha_means(summary: &Value, label: &str) -> Vec<f64> {
    summary["runs"]
        .as_array()
        .expect("runs")
        .iter()
        .filter(|r| r["label"] == label)
        .map(|r| r["mean"][0].as_f64().unwrap_or(f64::NAN))
        .collect()
}

fn kernel_robustness(summary: &Value) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [15, 30] {
        let vm = sample_variance(&alpha_means(summary, &format!("mmala-euler-p{p}")));
        let va = sample_variance(&alpha_means(summary, &format!("adaptive-mvn-p{p}")));
        pass &= vm < va;
        parts.push(format!("p={p}: var mMALA {vm:.3e} vs adaptive {va:.3e}"));
    }
    outcome(pass, parts.join("; "))
}

fn diagnostics_of(run: &Value) -> Vec<geosmc::smc::PopulationDiagnostics> {
    serde_json::from_value(run["diagnostics"].clone()).expect("diagnostics")
}

fn ess_profile(summary: &Value) -> Outcome {
    let runs = summary["runs"].as_array().expect("runs");
    let threshold = 0.3 * 300.0;
    let mut good = 0;
    let mut detail = Vec::new();
    for r in 0..10 {
        let pick = |label: &str| runs.iter().find(|x| x["label"] == label && x["replicate"] == r).map(diagnostics_of).expect("run present");
        let (m, a) = (pick("mmala-euler-p30"), pick("adaptive-mvn-p30"));
        let acc = |d: &[geosmc::smc::PopulationDiagnostics]| d[1..].iter().map(|x| x.acceptance_rate).sum::<f64>() / (d.len() - 1) as f64;
        let cross = |d: &[geosmc::smc::PopulationDiagnostics]| first_crossing(d, threshold).unwrap_or(d.len() + 1);
        let ok = acc(&m) > acc(&a) && cross(&m) >= cross(&a);
        good += ok as usize;
        detail.push(format!("{:.2}/{:.2}@{}/{}", acc(&m), acc(&a), cross(&m), cross(&a)));
    }
    outcome(good >= 7, format!("{good}/10 replicates (need >= 7); acceptance mMALA/adaptive @ ESS crossing: {}", detail.join(" ")))
}

// 9 -----------------------------------------------------------------------

fn drift_heuristic() -> Outcome {
    let data = uni_data(presets::UNI_DATA_SEED);
    let grid = presets::uni_drift_grid();
    let ends = |eps: f64, p: usize| {
        let seq = presets::uni_sequence(data.clone(), p).expect("sequence");
        drift_only_run(&presets::mmala(eps), &seq, &grid).expect("drift").endpoints()
    };
    let (a, b) = (ends(0.4, 45), ends(0.2, 180));
    let span = [40.0, 12.0];
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| ((x[0] - y[0]).abs() / span[0]).max((x[1] - y[1]).abs() / span[1]))
        .fold(0.0, f64::max);
    outcome(worst <= 0.01, format!("largest endpoint gap {:.3}% of the grid span over 24 particles (need <= 1%)", 100.0 * worst))
}

// 10 ----------------------------------------------------------------------

fn property_suites() -> Outcome {
    let mut fails: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // ESS bounds, extremes and shift invariance.
    for n in [1usize, 2, 17, 500] {
        let lw: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let (w, _) = normalize_weights(&lw).expect("weights");
        let e = ess(&w).expect("ess");
        if !(e >= 1.0 - 1e-9 && e <= n as f64 * (1.0 + 1e-12)) {
            fails.push(format!("ESS {e} outside [1, {n}]"));
        }
        let (w2, _) = normalize_weights(&lw.iter().map(|l| l + 123.4).collect::<Vec<_>>()).expect("weights");
        if w.iter().zip(&w2).any(|(a, b)| (a - b).abs() > 1e-12) {
            fails.push("normalization not shift invariant".into());
        }
        if (ess(&vec![1.0 / n as f64; n]).expect("ess") - n as f64).abs() > 1e-9 * n as f64 {
            fails.push("uniform weights do not give ESS = N".into());
        }
        let mut one = vec![0.0; n];
        one[n - 1] = 1.0;
        if ess(&one).expect("ess") != 1.0 {
            fails.push("one-hot weights do not give ESS = 1".into());
        }
    }

    // Geodesic endpoints and residual.
    let (p1, p2) = presets::geodesic_endpoints();
    let geo = Geodesic::between(p1, p2).expect("geodesic");
    let end = geo.at_raw(1.0);
    if (end.mu - p2.mu).abs() > 1e-10 || (end.var - p2.var).abs() > 1e-10 {
        fails.push(format!("geodesic endpoint {end:?}"));
    }
    let path = geodesic_between(p1, p2, 25).expect("path");
    if path[0] != p1 || path[24] != p2 {
        fails.push("sampled path endpoints differ".into());
    }
    let h = 1e-3;
    let mut residual: f64 = 0.0;
    for k in 1..50 {
        let t = k as f64 / 50.0;
        let at = |s: f64| {
            let q = geo.at_raw(t + s * h);
            [q.mu, q.var]
        };
        let (m2, m1, c, q1, q2) = (at(-2.0), at(-1.0), at(0.0), at(1.0), at(2.0));
        let vel: Vec<f64> = (0..2).map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * q1[i] - q2[i]) / (12.0 * h)).collect();
        let acc: Vec<f64> = (0..2).map(|i| (-m2[i] + 16.0 * m1[i] - 30.0 * c[i] + 16.0 * q1[i] - q2[i]) / (12.0 * h * h)).collect();
        let gam = christoffel(&gaussian_metric(GaussianPoint { mu: c[0], var: c[1] })).expect("christoffel");
        for kk in 0..2 {
            let r = acc[kk] + (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| gam[kk][(i, j)] * vel[i] * vel[j]).sum::<f64>();
            residual = residual.max(r.abs());
        }
    }
    if residual >= 1e-6 {
        fails.push(format!("geodesic residual {residual:e}"));
    }

    // Truncated-normal moments against quadrature.
    for (mu, sigma, a, b) in [(0.0, 1.0, -1.0, 2.0), (1.5, 0.7, 0.0, 10.0), (0.0, 1.0, 2.5, 6.0)] {
        let (m, var) = truncated_normal_moments(mu, sigma, a, b).expect("moments");
        let dens = |x: f64| norm_pdf((x - mu) / sigma);
        let z = simpson(dens, a, b, 200_000);
        let mq = simpson(|x| x * dens(x), a, b, 200_000) / z;
        let vq = simpson(|x| (x - mq).powi(2) * dens(x), a, b, 200_000) / z;
        if (m - mq).abs() > 1e-8 * mq.abs().max(1.0) || (var - vq).abs() > 1e-8 * vq {
            fails.push(format!("truncated moments ({m}, {var}) vs ({mq}, {vq})"));
        }
    }

    // Uniform random-walk kernel density has unit mass.
    for (prev, mu, sigma, d) in [(0.0, 0.0, 1.0, 2.0), (3.0, 0.0, 1.0, 2.0), (-0.4, 1.0, 0.5, 5.0), (2.0, 2.1, 3.0, 0.7)] {
        let atom = rw_uniform_kernel_density(prev, prev, mu, sigma, d).expect("density");
        let f = |y: f64| if y == prev { 0.0 } else { rw_uniform_kernel_density(prev, y, mu, sigma, d).expect("density") };
        let mut cuts = vec![prev - d / 2.0, prev, prev + d / 2.0, 2.0 * mu - prev];
        cuts.retain(|c| *c >= prev - d / 2.0 && *c <= prev + d / 2.0);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mass: f64 = atom + cuts.windows(2).map(|w| simpson(f, w[0] + 1e-15, w[1] - 1e-15, 20_000)).sum::<f64>();
        if (mass - 1.0).abs() > 1e-6 {
            fails.push(format!("kernel mass {mass}"));
        }
    }

    // Each kernel leaves N(0, 1) invariant: first two moments within 4 batch SEs.
    let am = AdaptiveMvn::from_sample_covariance(&DMatrix::identity(1, 1)).expect("adaptive");
    type PropFn<'a> = Box<dyn Fn(&DVector<f64>) -> geosmc::Result<Proposal> + 'a>;
    let kernels: Vec<(&str, PropFn)> = vec![
        ("uniform", Box::new(|x: &DVector<f64>| Ok(Proposal::UniformBox { center: x.clone(), width: 2.5 }))),
        ("adaptive", Box::new(|x: &DVector<f64>| am.proposal(x).map(Proposal::Gaussian))),
        ("euler", Box::new(|x: &DVector<f64>| mmala_euler_from_geometry(x, &std_normal_geo(x), 1.2, DriftForm::Printed).map(Proposal::Gaussian))),
        ("simplified", Box::new(|x: &DVector<f64>| mmala_simplified_from_geometry(x, &std_normal_geo(x), 1.2).map(Proposal::Gaussian))),
        (
            "ozaki",
            Box::new(|x: &DVector<f64>| {
                mmala_ozaki_from_geometry(x, &std_normal_geo(x), 1.2, DriftForm::Printed, &|y| Ok(std_normal_geo(y))).map(Proposal::Gaussian)
            }),
        ),
    ];
    let target = |x: &DVector<f64>| -0.5 * x[0] * x[0];
    for (k, (label, prop)) in kernels.iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(300 + k as u64);
        let mut x = v(&[0.5]);
        let n = 100_000;
        let mut trace = Vec::with_capacity(n);
        for _ in 0..n {
            let rec = mh_step(target, &x, prop, &mut r).expect("mh step");
            if rec.accepted {
                x = rec.proposed;
            }
            trace.push(x[0]);
        }
        for (moment, want) in [(1, 0.0), (2, 1.0)] {
            let xs: Vec<f64> = trace.iter().map(|t| t.powi(moment)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let b = 100;
            let len = n / b;
            let bm: Vec<f64> = (0..b).map(|i| xs[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64).collect();
            let se = (sample_variance(&bm) / b as f64).sqrt();
            if (m - want).abs() > 4.0 * se {
                fails.push(format!("{label}: moment {moment} = {m} (se {se})"));
            }
        }
    }

    // Deterministic replay.
    let seq = presets::uni_sequence(uni_data(presets::UNI_DATA_SEED), 10).expect("sequence");
    let cfg = SmcConfig::new(200, 0.5, presets::mmala(0.4), 42);
    let (a, b) = (run(&cfg, &seq).expect("run"), run(&cfg, &seq).expect("run"));
    if a != b {
        fails.push("replay differs".into());
    }
    let cfg = SmcConfig::new(200, 0.5, KernelChoice::AdaptiveMvn, 42);
    if run(&cfg, &seq).expect("run") != run(&cfg, &seq).expect("run") {
        fails.push("adaptive replay differs".into());
    }

    let pass = fails.is_empty();
    outcome(pass, if pass { "all property checks hold".to_string() } else { fails.join("; ") })
}

fn report(n: usize, name: &str, started: Instant, o: Outcome) -> bool {
    println!(
        "criterion {n:>2} {}: {name}: {} [{:.1} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        started.elapsed().as_secs_f64()
    );
    o.pass
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that matches nothing here skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut ok = true;
    let t = Instant::now();
    ok &= report(1, "geodesic ESS ordering", t, geodesic_ordering(tmp.path()));
    let t = Instant::now();
    ok &= report(2, "univariate inference", t, univariate_inference(tmp.path()));
    let t = Instant::now();
    ok &= report(3, "sensitivity correctness", t, sensitivities());
    let t = Instant::now();
    ok &= report(4, "metric derivative", t, metric_derivative());
    let t = Instant::now();
    ok &= report(5, "uniform-prior degeneracy", t, uniform_prior_degeneracy());
    let t = Instant::now();
    ok &= report(6, "Ozaki limit", t, ozaki_limit());
    let t = Instant::now();
    let robustness = robustness_runs(tmp.path());
    ok &= report(7, "kernel robustness ordering", t, kernel_robustness(&robustness));
    let t = Instant::now();
    ok &= report(8, "ESS and acceptance profile", t, ess_profile(&robustness));
    let t = Instant::now();
    ok &= report(9, "drift heuristic", t, drift_heuristic());
    let t = Instant::now();
    ok &= report(10, "property suites", t, property_suites());
    if !ok {
        std::process::exit(1);
    }
}
