//! Gaussian tail function and the exponential integral.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Gaussian tail probability `Q(x) = Pr(N(0,1) > x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_func`] on `(0, 1)`.
///
/// Bisection on the monotone map `x -> Q(x)`, run until the bracket stops
/// shrinking in floating point.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q^-1 needs p in (0,1), got {p}")));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // Q is decreasing.
        if q_func(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = if (q_func(lo) - p).abs() <= (q_func(hi) - p).abs() {
        lo
    } else {
        hi
    };
    let residual = (q_func(x) - p).abs();
    if residual >= 1e-12 {
        return Err(Error::numerical(
            "q_inv",
            format!("residual {residual:e} at p = {p}"),
        ));
    }
    Ok(x)
}

/// `E1(z) = ∫_z^∞ e^{-t}/t dt` for `z > 0`, scaled by `e^z`.
///
/// The scaled form stays finite for large `z`, where both `E1` underflows
/// and `e^z` overflows.
pub fn scaled_e1(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    if z <= 1.0 {
        z.exp() * e1_series(z)
    } else {
        e1_continued_fraction(z)
    }
}

/// `E1(z)` for `z > 0`.
pub fn e1(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    if z <= 1.0 {
        e1_series(z)
    } else if z > 745.0 {
        0.0
    } else {
        e1_continued_fraction(z) * (-z).exp()
    }
}

/// Exponential integral `Ei(x) = -E1(-x)` for negative arguments.
pub fn exp_integral_ei(x: f64) -> Result<f64> {
    if !(x < 0.0) {
        return Err(Error::Domain(format!(
            "Ei is only provided for x < 0, got {x}"
        )));
    }
    Ok(-e1(-x))
}

fn e1_series(z: f64) -> f64 {
    // E1(z) = -γ - ln z - Σ_{k≥1} (-z)^k / (k k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -z / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

/// Modified Lentz evaluation of the continued fraction for `e^z E1(z)`.
fn e1_continued_fraction(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}
