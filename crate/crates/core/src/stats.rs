//! Standard-normal special functions with stable tails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this standardized value tails are evaluated through the Mills ratio.
const TAIL_SWITCH: f64 = 8.0;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 - Phi(x)) / phi(x)`.
pub fn mills_ratio(x: f64) -> f64 {
    if x < 5.0 {
        return norm_sf(x) / norm_pdf(x);
    }
    // Lentz evaluation of 1/(x + 1/(x + 2/(x + 3/(x + ...)))).
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..2000 {
        let k = k as f64;
        d = x + k * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + k / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `ln Phi(x)`, finite far into the lower tail.
pub fn norm_ln_cdf(x: f64) -> f64 {
    if x < -TAIL_SWITCH {
        norm_ln_pdf(x) + mills_ratio(-x).ln()
    } else if x > 5.0 {
        (-norm_sf(x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Hazard `phi(x) / Phi(x)` (inverse Mills ratio of the lower tail).
pub fn norm_hazard(x: f64) -> f64 {
    if x < -TAIL_SWITCH {
        1.0 / mills_ratio(-x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// Derivative of [`norm_hazard`]: `-lambda (lambda + x)`.
pub fn norm_hazard_derivative(x: f64) -> f64 {
    let l = norm_hazard(x);
    -l * (l + x)
}

/// `(Phi(b) - Phi(a)) / phi(a)` for `0 <= a <= b`, stable when `phi(a)` underflows.
pub fn upper_band_over_density(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a >= 0.0 {
        let tail_b = if b.is_infinite() {
            0.0
        } else {
            mills_ratio(b) * (-0.5 * (b - a) * (b + a)).exp()
        };
        mills_ratio(a) - tail_b
    } else {
        (norm_cdf(b) - norm_cdf(a)) / norm_pdf(a)
    }
}

/// `Phi(b) - Phi(a)` evaluated on whichever tail avoids cancellation.
pub fn norm_interval_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

pub fn sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt()
}
