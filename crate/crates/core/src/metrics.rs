//! J-divergence objective, average power, and the Gaussian/CLT error
//! probability approximation.
//!
//! The fusion center sees `y = gα + w` from each sensor. Given the sensor's
//! would-be amplitude `α`, `y` is a two-component Gaussian mixture under each
//! hypothesis; its first two moments define [`MomentPair`]. Everything that
//! follows (J-divergence, the quadratic statistic `z`, the CLT error
//! probability) is built on those matched moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::battery::{build_chain, clipped_poisson, interval_probs, BatteryChain, IntervalProbs};
use crate::error::{Error, Result};
use crate::model::{derive_local_detector, EnergyModel, LocalDetector, Policy, Priors, SensorParams};
use crate::special::{q_func, scaled_e1};

/// Matched means and variances of `y` under H0 and H1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPair {
    pub m0: f64,
    pub m1: f64,
    pub var0: f64,
    pub var1: f64,
}

pub fn moment_match(gain: f64, amplitude: f64, det: &LocalDetector, noise_var: f64) -> MomentPair {
    let ga = gain * amplitude;
    let ga2 = ga * ga;
    MomentPair {
        m0: ga * det.pf,
        m1: ga * det.pd,
        var0: ga2 * det.pf * (1.0 - det.pf) + noise_var,
        var1: ga2 * det.pd * (1.0 - det.pd) + noise_var,
    }
}

/// Coefficients of the closed-form J-divergence in `x = g²α²`:
/// `J = (σ² + A x)/(σ² + B x) + (σ² + C x)/(σ² + D x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl JCoefficients {
    pub fn new(pd: f64, pf: f64) -> Self {
        JCoefficients {
            a: pf * (1.0 - pd) + pd * (pd - pf),
            b: pd * (1.0 - pd),
            c: pd * (1.0 - pf) - pf * (pd - pf),
            d: pf * (1.0 - pf),
        }
    }

    pub fn from_detector(det: &LocalDetector) -> Self {
        Self::new(det.pd, det.pf)
    }
}

/// J-divergence between the moment-matched Gaussians for a given gain and
/// amplitude. Equals 2 when the two hypotheses look identical.
pub fn j_div_pointwise(gain: f64, amplitude: f64, det: &LocalDetector, noise_var: f64) -> f64 {
    let k = JCoefficients::from_detector(det);
    let x = gain * gain * amplitude * amplitude;
    (noise_var + k.a * x) / (noise_var + k.b * x) + (noise_var + k.c * x) / (noise_var + k.d * x)
}

/// `∫_lo^hi λe^{-λx} (s² + p x)/(s² + q x) dx` with `x ~ Exp(λ)`.
///
/// Writing the ratio as `r + (1 - r) s/(x + s)` with `r = p/q`, `s = s²/q`
/// leaves `∫ λe^{-λx} s/(x+s) dx = λ s e^{λs} [E1(λ(lo+s)) - E1(λ(hi+s))]`,
/// evaluated through the scaled `e^z E1(z)` so that large `λs` stays finite.
fn ratio_integral(lambda: f64, noise_var: f64, p: f64, q: f64, lo: f64, hi: f64) -> f64 {
    let decay = |x: f64| if x.is_infinite() { 0.0 } else { (-lambda * x).exp() };
    let mass = decay(lo) - decay(hi);
    if q == 0.0 {
        let first_moment =
            |x: f64| if x.is_infinite() { 0.0 } else { (x + 1.0 / lambda) * decay(x) };
        return mass + p / noise_var * (first_moment(lo) - first_moment(hi));
    }
    let s = noise_var / q;
    let r = p / q;
    let shifted = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            decay(x) * scaled_e1(lambda * (x + s))
        }
    };
    let inverse_part = lambda * s * (shifted(lo) - shifted(hi));
    r * mass + (1.0 - r) * inverse_part
}

/// `∫_{μ_lo}^{μ_hi} J(g, α) f_g(g) dg` for Rayleigh `g` with `E{g²} = γ`.
///
/// This is the unnormalized interval average; dividing by the interval
/// probability gives the conditional mean of `J`.
pub fn j_interval_integral(
    sensor: &SensorParams,
    det: &LocalDetector,
    amplitude_sq: f64,
    mu_lo: f64,
    mu_hi: f64,
) -> f64 {
    let lambda = 1.0 / sensor.mean_sq_gain;
    let (lo, hi) = (mu_lo * mu_lo, mu_hi * mu_hi);
    let mass = (-lambda * lo).exp() - if hi.is_infinite() { 0.0 } else { (-lambda * hi).exp() };
    if amplitude_sq == 0.0 {
        return 2.0 * mass;
    }
    let k = JCoefficients::from_detector(det);
    let s2 = sensor.channel_noise_var;
    ratio_integral(lambda, s2, k.a * amplitude_sq, k.b * amplitude_sq, lo, hi)
        + ratio_integral(lambda, s2, k.c * amplitude_sq, k.d * amplitude_sq, lo, hi)
}

/// Contribution of one battery state to an interval's J average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalTerm {
    pub state: usize,
    pub units: usize,
    pub amplitude_sq: f64,
    /// `E{J | g ∈ I_l, B = k}`; exactly 2 for silent states.
    pub conditional_j: f64,
    /// `φ_k π_l E{J | ...}`.
    pub weighted: f64,
}

/// Per-state breakdown of [`avg_j_interval`], exposed for oracle comparison.
pub fn interval_breakdown(
    sensor: &SensorParams,
    det: &LocalDetector,
    policy: &Policy,
    chain: &BatteryChain,
    energy: &EnergyModel,
    level: usize,
) -> Result<Vec<IntervalTerm>> {
    if level >= policy.levels() {
        return Err(Error::OutOfRange {
            what: "interval index",
            value: level,
            limit: policy.levels() - 1,
        });
    }
    let edges = policy.thresholds();
    let (mu_lo, mu_hi) = (edges[level], edges[level + 1]);
    let pi = interval_probs(sensor.mean_sq_gain, &edges[level..level + 2])?.probs()[0];
    let mut terms = Vec::with_capacity(chain.phi().len());
    for (k, &phi) in chain.phi().iter().enumerate() {
        let units = policy.consumed_units(level, k);
        let amplitude_sq = units as f64 * energy.unit_power();
        // Silent states use the exact α = 0 value instead of the closed form,
        // whose Ei terms degenerate there.
        let integral = if units == 0 {
            2.0 * pi
        } else {
            j_interval_integral(sensor, det, amplitude_sq, mu_lo, mu_hi)
        };
        let conditional_j = if pi > 0.0 { integral / pi } else { 2.0 };
        let weighted = phi * integral;
        if !weighted.is_finite() || !conditional_j.is_finite() {
            return Err(Error::numerical(
                "avg_j_interval",
                format!("non-finite term at state {k}, interval {level}"),
            ));
        }
        terms.push(IntervalTerm {
            state: k,
            units,
            amplitude_sq,
            conditional_j,
            weighted,
        });
    }
    Ok(terms)
}

/// `J̄^{(l)} = Σ_k φ_k π_l E{J | g ∈ I_l, B = k}`.
pub fn avg_j_interval(
    sensor: &SensorParams,
    det: &LocalDetector,
    policy: &Policy,
    chain: &BatteryChain,
    energy: &EnergyModel,
    level: usize,
) -> Result<f64> {
    Ok(interval_breakdown(sensor, det, policy, chain, energy, level)?
        .iter()
        .map(|t| t.weighted)
        .sum())
}

/// `P̄^{(l)} = Π̂₁ Σ_k φ_k π_l ⌊c_l k⌋ b_u/T_s`, in W.
pub fn avg_power_interval(
    policy: &Policy,
    chain: &BatteryChain,
    intervals: &IntervalProbs,
    transmit_prob: f64,
    level: usize,
    energy: &EnergyModel,
) -> f64 {
    let pi = intervals.probs()[level];
    let units: f64 = chain
        .phi()
        .iter()
        .enumerate()
        .map(|(k, &phi)| phi * policy.consumed_units(level, k) as f64)
        .sum();
    transmit_prob * pi * units * energy.unit_power()
}

/// Everything needed to evaluate one sensor's policy.
#[derive(Debug, Clone)]
pub struct SensorSetup {
    pub sensor: SensorParams,
    pub detector: LocalDetector,
    pub energy: EnergyModel,
    pub transmit_prob: f64,
    pub policy: Policy,
    pub intervals: IntervalProbs,
    pub chain: BatteryChain,
}

impl SensorSetup {
    /// Build the chain with the detector-derived transmit probability.
    pub fn new(
        sensor: &SensorParams,
        energy: &EnergyModel,
        priors: &Priors,
        policy: &Policy,
    ) -> Result<Self> {
        let detector = derive_local_detector(sensor)?;
        Self::with_transmit_prob(sensor, energy, detector, detector.transmit_prob(priors), policy)
    }

    pub fn with_transmit_prob(
        sensor: &SensorParams,
        energy: &EnergyModel,
        detector: LocalDetector,
        transmit_prob: f64,
        policy: &Policy,
    ) -> Result<Self> {
        energy.validate()?;
        let arrivals = clipped_poisson(energy.arrival_rate, energy.capacity)?;
        let intervals = interval_probs(sensor.mean_sq_gain, policy.thresholds())?;
        let chain = build_chain(policy, &arrivals, &intervals, transmit_prob)?;
        Ok(SensorSetup {
            sensor: *sensor,
            detector,
            energy: *energy,
            transmit_prob,
            policy: policy.clone(),
            intervals,
            chain,
        })
    }

    /// Objective `Σ_l J̄^{(l)}` and average power `Σ_l P̄^{(l)}`.
    pub fn evaluate(&self) -> Result<PolicyEvaluation> {
        let levels = self.policy.levels();
        let mut objective = 0.0;
        let mut avg_power = 0.0;
        for l in 0..levels {
            objective += avg_j_interval(
                &self.sensor,
                &self.detector,
                &self.policy,
                &self.chain,
                &self.energy,
                l,
            )?;
            avg_power += avg_power_interval(
                &self.policy,
                &self.chain,
                &self.intervals,
                self.transmit_prob,
                l,
                &self.energy,
            );
        }
        Ok(PolicyEvaluation {
            objective,
            avg_power,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    /// `Σ_l J̄^{(l)}`.
    pub objective: f64,
    /// Average transmit power in W.
    pub avg_power: f64,
}

/// Objective and power of `policy` for one sensor.
pub fn evaluate_policy(
    sensor: &SensorParams,
    energy: &EnergyModel,
    priors: &Priors,
    policy: &Policy,
) -> Result<PolicyEvaluation> {
    SensorSetup::new(sensor, energy, priors, policy)?.evaluate()
}

/// `z = a y² + b y + c`, the per-sensor term of the Gaussian-approximation
/// fusion statistic `Δ' = Σ z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ZQuadratic {
    pub fn new(mp: &MomentPair) -> Self {
        ZQuadratic {
            a: 1.0 / mp.var0 - 1.0 / mp.var1,
            b: 2.0 * mp.m1 / mp.var1 - 2.0 * mp.m0 / mp.var0,
            c: mp.m0 * mp.m0 / mp.var0 - mp.m1 * mp.m1 / mp.var1,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.a * y + self.b) * y + self.c
    }
}

/// Conditional mean and variance of `z` under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZMoments {
    pub mean0: f64,
    pub var0: f64,
    pub mean1: f64,
    pub var1: f64,
}

/// Moments of `z = a y² + b y + c` with `y ~ N(m_h, v_h)`:
/// `E z = a(m² + v) + b m + c`, `Var z = 2a²(2m²v + v²) + b v (b + 4 a m)`.
pub fn z_moments(mp: &MomentPair) -> Result<ZMoments> {
    if !(mp.var0 > 0.0 && mp.var1 > 0.0) {
        return Err(Error::Domain(format!(
            "z moments need positive variances, got ({}, {})",
            mp.var0, mp.var1
        )));
    }
    let quad = ZQuadratic::new(mp);
    let moments = |m: f64, v: f64| {
        let mean = quad.a * (m * m + v) + quad.b * m + quad.c;
        let var = 2.0 * quad.a * quad.a * (2.0 * m * m * v + v * v)
            + quad.b * v * (quad.b + 4.0 * quad.a * m);
        (mean, var.max(0.0))
    };
    let (mean0, var0) = moments(mp.m0, mp.var0);
    let (mean1, var1) = moments(mp.m1, mp.var1);
    Ok(ZMoments {
        mean0,
        var0,
        mean1,
        var1,
    })
}

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Density of `z` under hypothesis `h` when `y` follows the matched Gaussian.
///
/// Inverts the quadratic: the two preimages are `y± = (-b ± g(z)) / 2a`
/// with `g(z) = √(b² - 4a(c - z)) = (2/(Υ₀Υ₁))√((m₀-m₁)² + z(Υ₁²-Υ₀²))`, and
/// `f(z) = [f_y(y+) + f_y(y-)] / g(z)`.
pub fn z_pdf(mp: &MomentPair, z: f64, hypothesis: u8) -> Result<f64> {
    if mp.var0 == mp.var1 {
        return Err(Error::Domain(
            "z density is degenerate when both variances are equal".into(),
        ));
    }
    let quad = ZQuadratic::new(mp);
    let radicand = quad.b * quad.b - 4.0 * quad.a * (quad.c - z);
    if radicand < 0.0 {
        return Err(Error::Domain(format!("z = {z} lies outside the support")));
    }
    let g = radicand.sqrt();
    if g == 0.0 {
        return Ok(f64::INFINITY);
    }
    let (m, v) = match hypothesis {
        0 => (mp.m0, mp.var0),
        1 => (mp.m1, mp.var1),
        _ => return Err(Error::Domain(format!("hypothesis must be 0 or 1, got {hypothesis}"))),
    };
    let y_plus = (-quad.b + g) / (2.0 * quad.a);
    let y_minus = (-quad.b - g) / (2.0 * quad.a);
    Ok((gaussian_pdf(y_plus, m, v) + gaussian_pdf(y_minus, m, v)) / g)
}

/// `R = ½ Σ log(Υ²_{n,0} / Υ²_{n,1})`.
pub fn log_det_term(pairs: &[MomentPair]) -> f64 {
    0.5 * pairs.iter().map(|mp| (mp.var0 / mp.var1).ln()).sum::<f64>()
}

/// CLT approximation of the error probability of the rule
/// `Δ' = Σ z_n ≷ τ' = 2(τ - R)`:
/// `P_e = Π₀ Q((τ' - μ₀)/σ₀) + Π₁ [1 - Q((τ' - μ₁)/σ₁)]`, with `σ_h` the
/// standard deviation of `Δ'` under `h`.
pub fn clt_error_prob(moments: &[ZMoments], priors: &Priors, log_det: f64) -> Result<f64> {
    if moments.is_empty() {
        return Err(Error::invalid("moments", "need at least one sensor"));
    }
    let (mu0, var0, mu1, var1) = sums(moments);
    if !(var0 > 0.0 && var1 > 0.0) {
        return Err(Error::Domain(format!(
            "fusion statistic has zero variance (var0 = {var0}, var1 = {var1})"
        )));
    }
    let tau = 2.0 * (priors.log_threshold() - log_det);
    Ok(priors.h0 * q_func((tau - mu0) / var0.sqrt())
        + priors.h1 * (1.0 - q_func((tau - mu1) / var1.sqrt())))
}

fn sums(moments: &[ZMoments]) -> (f64, f64, f64, f64) {
    moments.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, m| {
        (acc.0 + m.mean0, acc.1 + m.var0, acc.2 + m.mean1, acc.3 + m.var1)
    })
}

/// [`clt_error_prob`] from moment pairs, treating a deterministic `Δ'`
/// (every sensor silent) as a point mass instead of failing.
pub fn clt_error_prob_from_pairs(pairs: &[MomentPair], priors: &Priors) -> Result<f64> {
    let moments = pairs.iter().map(z_moments).collect::<Result<Vec<_>>>()?;
    let log_det = log_det_term(pairs);
    let (mu0, var0, mu1, var1) = sums(&moments);
    if var0 > 0.0 && var1 > 0.0 {
        return clt_error_prob(&moments, priors, log_det);
    }
    let tau = 2.0 * (priors.log_threshold() - log_det);
    let exceed = |mu: f64, var: f64| {
        if var > 0.0 {
            q_func((tau - mu) / var.sqrt())
        } else if mu > tau {
            1.0
        } else {
            0.0
        }
    };
    Ok(priors.h0 * exceed(mu0, var0) + priors.h1 * (1.0 - exceed(mu1, var1)))
}

/// Expected CLT error probability over the random channel gains and battery
/// states, `E_{g,B}[P_e(g, α)]`.
///
/// The CLT expression is conditional on each sensor's gain and amplitude;
/// this averages it over `draws` joint samples (battery from `Φ`, Rayleigh
/// gain) so it can be compared with an unconditional Monte-Carlo estimate.
pub fn expected_clt_error_prob(
    setups: &[SensorSetup],
    priors: &Priors,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if setups.is_empty() || draws == 0 {
        return Err(Error::invalid("draws", "need at least one sensor and one draw"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdfs: Vec<Vec<f64>> = setups.iter().map(|s| cumulative(s.chain.phi())).collect();
    let mut pairs = Vec::with_capacity(setups.len());
    let mut total = 0.0;
    for _ in 0..draws {
        pairs.clear();
        for (setup, cdf) in setups.iter().zip(&cdfs) {
            let k = sample_index(cdf, rng.gen::<f64>());
            let e: f64 = rng.sample(Exp1);
            let gain = (setup.sensor.mean_sq_gain * e).sqrt();
            let level = setup.policy.interval_of(gain);
            let units = setup.policy.consumed_units(level, k);
            let amplitude = (units as f64 * setup.energy.unit_power()).sqrt();
            pairs.push(moment_match(
                gain,
                amplitude,
                &setup.detector,
                setup.sensor.channel_noise_var,
            ));
        }
        total += clt_error_prob_from_pairs(&pairs, priors)?;
    }
    Ok(total / draws as f64)
}

pub(crate) fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

pub(crate) fn sample_index(cdf: &[f64], u: f64) -> usize {
    let scaled = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= scaled).min(cdf.len() - 1)
}
