//! Sheather-Jones "solve-the-equation" plug-in bandwidth.
//!
//! Follows the classic formulation: pilot bandwidths from a normal-scale
//! rule estimate the density functionals of the 4th and 6th derivatives,
//! then the bandwidth `h` solves
//!
//! ```text
//! h = ( R(K) / (n * S(alpha2 * h^(5/7))) )^(1/5),   R(K) = 1 / (2 sqrt(pi))
//! ```
//!
//! where `S(a)` is the pairwise 4th-derivative functional estimate. Pair sums
//! run over all ordered pairs with the diagonal included and are normalized
//! by `n (n - 1)`.

use super::ClimError;
use std::f64::consts::PI;

/// Selected bandwidth. `fallback` is set when the root-find failed and
/// Silverman's rule was used instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub sigma: f64,
    pub fallback: bool,
}

const MAX_BRACKET_TRIES: usize = 100;
const MAX_BISECTIONS: usize = 200;
/// Absolute bracket width (days) at which bisection may stop.
const ABS_TOL: f64 = 1e-4;

fn phi(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

fn phi4(u: f64) -> f64 {
    let u2 = u * u;
    (u2 * u2 - 6.0 * u2 + 3.0) * phi(u)
}

fn phi6(u: f64) -> f64 {
    let u2 = u * u;
    (u2 * u2 * u2 - 15.0 * u2 * u2 + 45.0 * u2 - 15.0) * phi(u)
}

/// Sum of `k((x_i - x_j) / h)` over ordered pairs `i != j`, plus `n k(0)`.
fn pair_sum(x: &[f64], h: f64, k: fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        for &xj in &x[i + 1..] {
            s += k((xi - xj) / h);
        }
    }
    2.0 * s + x.len() as f64 * k(0.0)
}

fn sd_functional(x: &[f64], a: f64) -> f64 {
    let n = x.len() as f64;
    pair_sum(x, a, phi4) / (n * (n - 1.0) * a.powi(5))
}

fn td_functional(x: &[f64], b: f64) -> f64 {
    let n = x.len() as f64;
    -pair_sum(x, b, phi6) / (n * (n - 1.0) * b.powi(7))
}

fn quantile7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Robust scale `min(sd, IQR / 1.349)`, falling back to `sd` when the IQR
/// is zero.
pub(crate) fn robust_scale(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile7(&sorted, 0.75) - quantile7(&sorted, 0.25);
    if iqr > 0.0 {
        sd.min(iqr / 1.349)
    } else {
        sd
    }
}

/// Silverman's rule of thumb, `0.9 * scale * n^(-1/5)`.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64, ClimError> {
    check_sample(x)?;
    Ok(0.9 * robust_scale(x) * (x.len() as f64).powf(-0.2))
}

fn check_sample(x: &[f64]) -> Result<(), ClimError> {
    if x.len() < 2 {
        return Err(ClimError::TooFewPoints(x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ClimError::NonFinite);
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(ClimError::DegenerateSample);
    }
    Ok(())
}

/// Sheather-Jones bandwidth for `doys`, solved by bracketed bisection.
pub fn sheather_jones_bandwidth(doys: &[f64]) -> Result<Bandwidth, ClimError> {
    check_sample(doys)?;
    let n = doys.len() as f64;
    let scale = robust_scale(doys);
    let fallback = || {
        silverman_bandwidth(doys).map(|sigma| Bandwidth { sigma, fallback: true })
    };

    let a = 0.920 * scale * n.powf(-1.0 / 7.0);
    let b = 0.912 * scale * n.powf(-1.0 / 9.0);
    let sd_a = sd_functional(doys, a);
    let td_b = td_functional(doys, b);
    if !(sd_a > 0.0 && td_b > 0.0) {
        return fallback();
    }
    let alpha2 = 1.357 * (sd_a / td_b).powf(1.0 / 7.0);
    let rk = 1.0 / (2.0 * PI.sqrt());
    let f = |h: f64| {
        let s = sd_functional(doys, alpha2 * h.powf(5.0 / 7.0));
        if s > 0.0 {
            (rk / (n * s)).powf(0.2) - h
        } else {
            f64::NAN
        }
    };

    let hmax = 1.144 * scale * n.powf(-0.2);
    let (mut lo, mut hi) = (0.1 * hmax, hmax);
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    let mut tries = 0;
    while !(f_lo * f_hi <= 0.0) {
        if tries >= MAX_BRACKET_TRIES || (f_lo.is_nan() && f_hi.is_nan()) {
            return fallback();
        }
        if tries % 2 == 0 {
            hi *= 1.2;
            f_hi = f(hi);
        } else {
            lo /= 1.2;
            f_lo = f(lo);
        }
        tries += 1;
    }
    // Bisect past ABS_TOL down to a relative width so the result is
    // scale-equivariant to rounding error.
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ABS_TOL.min(1e-12 * hi) || mid == lo || mid == hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid.is_nan() {
            return fallback();
        }
        if (f_mid <= 0.0) == (f_lo <= 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bandwidth {
        sigma: 0.5 * (lo + hi),
        fallback: false,
    })
}
