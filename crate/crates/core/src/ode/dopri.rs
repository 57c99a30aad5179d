//! Dormand–Prince 5(4) with step-size control and free dense output.

use crate::error::{Error, Result};

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 200_000 }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output (Hairer & Wanner, dopri5 contd5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate `y' = f(t, y)` from `t0` and report the state at each of `times`.
///
/// `times` must be non-decreasing and not earlier than `t0`.
pub fn solve<F>(mut f: F, t0: f64, y0: &[f64], times: &[f64], tol: &Tolerances) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    if let Some(&first) = times.first() {
        if first < t0 {
            return Err(Error::Config(format!("first output time {first} precedes t0 = {t0}")));
        }
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("output times must be non-decreasing".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    if next == times.len() {
        return Ok(out);
    }
    let t_end = times[times.len() - 1];

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rcont = vec![0.0; 5 * n];

    f(t, &y, &mut k1);
    let mut h = initial_step(&mut f, t, &y, &k1, t_end - t0, tol);
    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = 0;

    while t < t_end {
        if steps >= tol.max_steps {
            return Err(Error::Integration { time: t, reason: "maximum number of steps exceeded".into() });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration { time: t, reason: "step size underflow".into() });
        }
        let h_step = if t + h > t_end { t_end - t } else { h };
        steps += 1;

        for i in 0..n {
            ytmp[i] = y[i] + h_step * A21 * k1[i];
        }
        f(t + C2 * h_step, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h_step * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h_step, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h_step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h_step, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h_step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h_step, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + h_step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h_step, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i]
                + h_step * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h_step, &ynew, &mut k7);
        for i in 0..n {
            err[i] = h_step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let mut acc = 0.0;
        for i in 0..n {
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        let err_norm = (acc / n as f64).sqrt();
        if !err_norm.is_finite() {
            h = 0.1 * h_step;
            rejected_last = true;
            if ynew.iter().any(|v| !v.is_finite()) && h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration { time: t, reason: "non-finite state".into() });
            }
            continue;
        }

        // PI step-size controller (Hairer's beta = 0.04).
        let fac11 = err_norm.powf(0.2 - 0.04 * 0.75);
        let mut fac = fac11 / fac_old.powf(0.04);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let h_new = h_step / fac;

        if err_norm <= 1.0 {
            fac_old = err_norm.max(1e-4);
            let t_new = t + h_step;
            // Dense output coefficients.
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h_step * k1[i] - ydiff;
                rcont[i] = y[i];
                rcont[n + i] = ydiff;
                rcont[2 * n + i] = bspl;
                rcont[3 * n + i] = ydiff - h_step * k7[i] - bspl;
                rcont[4 * n + i] = h_step
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            while next < times.len() && times[next] <= t_new {
                let tq = times[next];
                if tq == t_new {
                    out.push(ynew.clone());
                } else {
                    let theta = (tq - t) / h_step;
                    let theta1 = 1.0 - theta;
                    out.push(
                        (0..n)
                            .map(|i| {
                                rcont[i]
                                    + theta
                                        * (rcont[n + i]
                                            + theta1
                                                * (rcont[2 * n + i]
                                                    + theta
                                                        * (rcont[3 * n + i] + theta1 * rcont[4 * n + i])))
                            })
                            .collect(),
                    );
                }
                next += 1;
            }
            if ynew.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { time: t_new, reason: "non-finite state".into() });
            }
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            h = if rejected_last { h_new.min(h_step) } else { h_new };
            rejected_last = false;
        } else {
            h = h_step / (fac11 / 0.9).min(1.0 / 0.2);
            rejected_last = true;
        }
    }
    while next < times.len() {
        out.push(y.clone());
        next += 1;
    }
    Ok(out)
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64, tol: &Tolerances) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span.abs());
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(t + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span.abs()).max(1e-12)
}
