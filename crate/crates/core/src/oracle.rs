//! Slow, independent reference computations used to cross-check the closed
//! forms: adaptive Gauss–Kronrod quadrature and power iteration.

use crate::battery::BatteryChain;
use crate::error::{Error, Result};
use crate::metrics::j_div_pointwise;
use crate::model::{LocalDetector, SensorParams};

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive G7/K15 quadrature of `f` over a finite `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("integrate needs finite limits".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, tol)];
    let mut total = 0.0;
    let mut pieces = 0usize;
    while let Some((lo, hi, eps)) = stack.pop() {
        pieces += 1;
        if pieces > 200_000 {
            return Err(Error::numerical("integrate", "subdivision limit reached".to_string()));
        }
        let (value, err) = gk15(&f, lo, hi);
        if !value.is_finite() {
            return Err(Error::numerical("integrate", format!("non-finite on [{lo}, {hi}]")));
        }
        if err <= eps.max(1e-300) || (hi - lo) < 1e-14 * (1.0 + lo.abs()) {
            total += value;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * eps));
            stack.push((mid, hi, 0.5 * eps));
        }
    }
    Ok(total)
}

/// Quadrature over `[a, ∞)` via `x = a + t/(1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<f64> {
    integrate(
        |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            f(a + t / u) / (u * u)
        },
        0.0,
        1.0,
        tol,
    )
}

/// `∫_{μ_lo}^{μ_hi} J(g, α) f_g(g) dg` by direct quadrature in `g`.
pub fn j_interval_quadrature(
    sensor: &SensorParams,
    det: &LocalDetector,
    amplitude: f64,
    mu_lo: f64,
    mu_hi: f64,
) -> Result<f64> {
    let gamma = sensor.mean_sq_gain;
    let integrand = |g: f64| {
        let density = 2.0 * g / gamma * (-g * g / gamma).exp();
        j_div_pointwise(g, amplitude, det, sensor.channel_noise_var) * density
    };
    if mu_hi.is_infinite() {
        integrate_to_infinity(integrand, mu_lo, 1e-13)
    } else {
        integrate(integrand, mu_lo, mu_hi, 1e-13)
    }
}

/// Stationary distribution of `chain`'s transition matrix by power
/// iteration, started from the uniform distribution. Returns the vector and
/// the number of iterations used.
pub fn power_iteration(chain: &BatteryChain, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = chain.capacity() + 1;
    let mut p = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for iter in 1..=max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (j, &w) in chain.psi_row(i).iter().enumerate() {
                next[j] += pi * w;
            }
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        let delta = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut p, &mut next);
        if delta < tol {
            return Ok((p, iter));
        }
    }
    Err(Error::numerical(
        "power_iteration",
        format!("no convergence in {max_iter} iterations"),
    ))
}
