use geosmc::ode::{integrate, integrate_with_sensitivities, FitzhughNagumo, LotkaVolterra, OdeSystem, SensitivityState, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> Tolerances {
    Tolerances { rtol: 1e-12, atol: 1e-14, max_steps: 2_000_000 }
}

fn fn_points(n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..n)
        .map(|_| vec![rng.random_range(0.1..0.5), rng.random_range(0.1..0.5), rng.random_range(2.0..4.0)])
        .collect()
}

fn lv_points(n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    (0..n)
        .map(|_| {
            vec![
                rng.random_range(6.0..10.0),
                rng.random_range(0.4..0.6),
                rng.random_range(0.15..0.25),
                rng.random_range(0.008..0.012),
            ]
        })
        .collect()
}

/// Central differences of the trajectory; `fd[i][t][l]`.
fn fd_first(sys: &dyn OdeSystem, x0: &[f64], p: &[f64], times: &[f64]) -> Vec<Vec<Vec<f64>>> {
    (0..p.len())
        .map(|i| {
            let h = 1e-5 * p[i].abs().max(1e-3);
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[i] += h;
            pm[i] -= h;
            let a = integrate(sys, x0, &pp, 0.0, times, &tight()).unwrap().states;
            let b = integrate(sys, x0, &pm, 0.0, times, &tight()).unwrap().states;
            a.iter()
                .zip(&b)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(u, v)| (u - v) / (2.0 * h)).collect())
                .collect()
        })
        .collect()
}

/// Central differences of first sensitivities; `fd[k][i][t][l]` approximates `d_k S_i`.
fn fd_second(sys: &dyn OdeSystem, x0: &[f64], p: &[f64], times: &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let d = p.len();
    (0..d)
        .map(|k| {
            let h = 1e-5 * p[k].abs().max(1e-3);
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[k] += h;
            pm[k] -= h;
            let a = integrate_with_sensitivities(sys, x0, &pp, 0.0, times, 1, &tight()).unwrap();
            let b = integrate_with_sensitivities(sys, x0, &pm, 0.0, times, 1, &tight()).unwrap();
            (0..d)
                .map(|i| {
                    (0..times.len())
                        .map(|t| (0..x0.len()).map(|l| (a.s(t, i, l) - b.s(t, i, l)) / (2.0 * h)).collect())
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Error of each series relative to its own largest magnitude.
fn series_error(exact: impl Fn(usize, usize) -> f64, fd: &[Vec<f64>]) -> f64 {
    let dx = fd[0].len();
    let mut worst: f64 = 0.0;
    for l in 0..dx {
        let scale = fd.iter().map(|r| r[l].abs()).fold(1e-8, f64::max);
        for (t, row) in fd.iter().enumerate() {
            worst = worst.max((exact(t, l) - row[l]).abs() / scale);
        }
    }
    worst
}

fn check_system(sys: &dyn OdeSystem, x0: &[f64], points: &[Vec<f64>], times: &[f64]) -> (f64, f64) {
    let tol = Tolerances::new(1e-8, 1e-10);
    let (mut e1, mut e2): (f64, f64) = (0.0, 0.0);
    for p in points {
        let sens: SensitivityState = integrate_with_sensitivities(sys, x0, p, 0.0, times, 2, &tol).unwrap();
        let f1 = fd_first(sys, x0, p, times);
        for (i, fi) in f1.iter().enumerate() {
            e1 = e1.max(series_error(|t, l| sens.s(t, i, l), fi));
        }
        let f2 = fd_second(sys, x0, p, times);
        for (k, fk) in f2.iter().enumerate() {
            for (i, fki) in fk.iter().enumerate() {
                e2 = e2.max(series_error(|t, l| sens.ds(t, k, i, l), fki));
            }
        }
    }
    (e1, e2)
}

fn grid(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 * horizon / n as f64).collect()
}

#[test]
fn fitzhugh_nagumo_sensitivities_match_finite_differences() {
    let (e1, e2) = check_system(&FitzhughNagumo, &[-1.0, 1.0], &fn_points(20), &grid(10.0, 25));
    assert!(e1 < 1e-4, "first-order error {e1:e}");
    assert!(e2 < 1e-4, "second-order error {e2:e}");
}

#[test]
fn lotka_volterra_sensitivities_match_finite_differences() {
    let (e1, e2) = check_system(&LotkaVolterra, &[15.0, 30.0], &lv_points(20), &grid(10.0, 20));
    assert!(e1 < 1e-4, "first-order error {e1:e}");
    assert!(e2 < 1e-4, "second-order error {e2:e}");
}

#[test]
fn third_order_matches_differences_of_second() {
    let times = grid(5.0, 10);
    let x0 = [-1.0, 1.0];
    for p in fn_points(3) {
        let s3 = integrate_with_sensitivities(&FitzhughNagumo, &x0, &p, 0.0, &times, 3, &tight()).unwrap();
        for j in 0..3 {
            let h = 1e-5 * p[j].abs();
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[j] += h;
            pm[j] -= h;
            let a = integrate_with_sensitivities(&FitzhughNagumo, &x0, &pp, 0.0, &times, 2, &tight()).unwrap();
            let b = integrate_with_sensitivities(&FitzhughNagumo, &x0, &pm, 0.0, &times, 2, &tight()).unwrap();
            for k in 0..3 {
                for i in 0..3 {
                    let fd: Vec<Vec<f64>> = (0..times.len())
                        .map(|t| (0..2).map(|l| (a.ds(t, k, i, l) - b.ds(t, k, i, l)) / (2.0 * h)).collect())
                        .collect();
                    let e = series_error(|t, l| s3.dds(t, j, k, i, l), &fd);
                    assert!(e < 1e-5, "d{j}d{k}S{i}: {e:e}");
                }
            }
        }
    }
}

#[test]
fn second_sensitivities_are_symmetric() {
    let times = grid(10.0, 20);
    for p in lv_points(3) {
        let s = integrate_with_sensitivities(&LotkaVolterra, &[15.0, 30.0], &p, 0.0, &times, 2, &Tolerances::default()).unwrap();
        for t in 0..times.len() {
            for k in 0..4 {
                for i in 0..4 {
                    for l in 0..2 {
                        assert_eq!(s.ds(t, k, i, l), s.ds(t, i, k, l));
                    }
                }
            }
        }
    }
}

#[test]
fn lotka_volterra_conserves_its_first_integral() {
    let p = [8.0, 0.5, 0.2, 0.01];
    let inv = |x: f64, y: f64| p[3] * x - p[2] * x.ln() + p[1] * y - p[0] * y.ln();
    let times = grid(10.0, 200);
    let traj = integrate(&LotkaVolterra, &[15.0, 30.0], &p, 0.0, &times, &Tolerances::default()).unwrap();
    let v0 = inv(15.0, 30.0);
    for s in &traj.states {
        assert!((inv(s[0], s[1]) - v0).abs() < 1e-6 * v0.abs().max(1.0));
    }
}

#[test]
fn state_part_of_augmented_run_matches_plain_run() {
    let times = grid(10.0, 25);
    let p = [0.2, 0.2, 3.0];
    let plain = integrate(&FitzhughNagumo, &[-1.0, 1.0], &p, 0.0, &times, &tight()).unwrap();
    let sens = integrate_with_sensitivities(&FitzhughNagumo, &[-1.0, 1.0], &p, 0.0, &times, 2, &tight()).unwrap();
    for (t, row) in plain.states.iter().enumerate() {
        for (l, x) in row.iter().enumerate() {
            assert!((sens.x(t, l) - x).abs() < 1e-9);
        }
    }
}

#[test]
fn log_transform_applies_chain_rule() {
    let times = grid(10.0, 20);
    let p = [8.0, 0.5, 0.2, 0.01];
    let s = integrate_with_sensitivities(&LotkaVolterra, &[15.0, 30.0], &p, 0.0, &times, 2, &tight()).unwrap();
    let lg = s.log_transform().unwrap();
    for t in [0, 7, 19] {
        for l in 0..2 {
            let x = s.x(t, l);
            assert!((lg.x(t, l) - x.ln()).abs() < 1e-14);
            for i in 0..4 {
                assert!((lg.s(t, i, l) - s.s(t, i, l) / x).abs() < 1e-12 * (1.0 + lg.s(t, i, l).abs()));
                for k in 0..4 {
                    let want = s.ds(t, k, i, l) / x - s.s(t, i, l) * s.s(t, k, l) / (x * x);
                    assert!((lg.ds(t, k, i, l) - want).abs() < 1e-10 * (1.0 + want.abs()));
                }
            }
        }
    }
}
