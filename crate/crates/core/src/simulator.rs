//! Slot-level Monte-Carlo of the whole network: hypothesis, local LLR
//! gating, fading channel, battery dynamics and fusion.
//!
//! The fusion center is granted genie knowledge of each sensor's would-be
//! amplitude `α̃` (its battery state and gain interval), which is what the
//! analytic fusion rule presumes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{cumulative, moment_match, sample_index, MomentPair, SensorSetup, ZQuadratic};
use crate::model::{LocalDetector, NetworkConfig, Policy};

const BLOCK_SLOTS: u64 = 1 << 16;

// Independent random streams per block.
const STREAM_HYPOTHESIS: u64 = 0;
const STREAM_OBSERVATION: u64 = 1;
const STREAM_GAIN: u64 = 2;
const STREAM_ARRIVAL: u64 = 3;
const STREAM_CHANNEL: u64 = 4;
const STREAM_INIT: u64 = 5;
const STREAMS_PER_BLOCK: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    /// Optimal mixture likelihood ratio.
    Exact,
    /// Gaussian-approximation quadratic statistic.
    CltApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatteryInit {
    /// Draw each battery from its stationary distribution.
    Stationary,
    /// Start empty and discard `10·K` burn-in slots.
    ColdStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_slots: u64,
    pub seed: u64,
    pub fusion: Fusion,
    pub init: BatteryInit,
    /// Record the first `trace_slots` slots.
    pub trace_slots: usize,
}

impl SimConfig {
    pub fn new(n_slots: u64, seed: u64, fusion: Fusion) -> Self {
        SimConfig {
            n_slots,
            seed,
            fusion,
            init: BatteryInit::Stationary,
            trace_slots: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorSlot {
    pub observation: f64,
    pub llr: f64,
    pub gain: f64,
    pub interval: usize,
    pub battery_before: usize,
    pub consumed_units: usize,
    pub amplitude: f64,
    pub received_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotTrace {
    pub slot: u64,
    pub hypothesis: u8,
    pub sensors: Vec<SensorSlot>,
    pub fusion_llr: f64,
    pub decision: u8,
}

/// Per-sensor empirical statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorStats {
    /// Occupancy counts per battery state (start-of-slot).
    pub occupancy: Vec<u64>,
    pub fired_h0: u64,
    pub fired_h1: u64,
    pub empirical_pf: f64,
    pub empirical_pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub n_slots: u64,
    pub errors: u64,
    pub slots_h0: u64,
    pub slots_h1: u64,
    pub empirical_pe: f64,
    /// 95% normal-approximation half-width.
    pub ci_half_width: f64,
    pub sensors: Vec<SensorStats>,
    #[serde(skip)]
    pub trace: Vec<SlotTrace>,
}

pub fn binomial_ci_half_width(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-sensor term of the exact fusion LLR, with `mean = g α̃`:
/// `log[(pd N(y; mean) + (1-pd) N(y; 0)) / (pf N(y; mean) + (1-pf) N(y; 0))]`.
fn llr_term(y: f64, mean: f64, det: &LocalDetector, noise_var: f64) -> f64 {
    if mean == 0.0 || det.pd == det.pf {
        return 0.0;
    }
    // log N(y; mean) - log N(y; 0)
    let shift = (2.0 * y * mean - mean * mean) / (2.0 * noise_var);
    log_sum_exp(det.pd.ln() + shift, (1.0 - det.pd).ln())
        - log_sum_exp(det.pf.ln() + shift, (1.0 - det.pf).ln())
}

/// Exact fusion log-likelihood ratio `Δ`.
pub fn fusion_llr_exact(
    y: &[f64],
    gains: &[f64],
    amplitudes: &[f64],
    detectors: &[LocalDetector],
    noise_vars: &[f64],
) -> Result<f64> {
    let n = y.len();
    if gains.len() != n || amplitudes.len() != n || detectors.len() != n || noise_vars.len() != n {
        return Err(Error::invalid("fusion", "input vectors must have equal length"));
    }
    Ok((0..n)
        .map(|i| llr_term(y[i], gains[i] * amplitudes[i], &detectors[i], noise_vars[i]))
        .sum())
}

/// Approximate statistic `Δ' = Σ z_n` and its threshold `τ' = 2(τ - R)`.
/// Returns `(Δ', τ', decision)`.
pub fn fusion_statistic_approx(
    y: &[f64],
    pairs: &[MomentPair],
    priors: &crate::model::Priors,
) -> Result<(f64, f64, u8)> {
    if y.len() != pairs.len() {
        return Err(Error::invalid("fusion", "input vectors must have equal length"));
    }
    let stat: f64 = y.iter().zip(pairs).map(|(&v, mp)| ZQuadratic::new(mp).eval(v)).sum();
    let tau = 2.0 * (priors.log_threshold() - crate::metrics::log_det_term(pairs));
    Ok((stat, tau, u8::from(stat > tau)))
}

struct Streams {
    hypothesis: ChaCha8Rng,
    observation: ChaCha8Rng,
    gain: ChaCha8Rng,
    arrival: ChaCha8Rng,
    channel: ChaCha8Rng,
    init: ChaCha8Rng,
}

impl Streams {
    fn for_block(seed: u64, block: u64) -> Self {
        let make = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block * STREAMS_PER_BLOCK + id);
            rng
        };
        Streams {
            hypothesis: make(STREAM_HYPOTHESIS),
            observation: make(STREAM_OBSERVATION),
            gain: make(STREAM_GAIN),
            arrival: make(STREAM_ARRIVAL),
            channel: make(STREAM_CHANNEL),
            init: make(STREAM_INIT),
        }
    }
}

#[derive(Default)]
struct BlockStats {
    errors: u64,
    slots_h0: u64,
    slots_h1: u64,
    occupancy: Vec<Vec<u64>>,
    fired_h0: Vec<u64>,
    fired_h1: Vec<u64>,
    trace: Vec<SlotTrace>,
}

struct Network<'a> {
    config: &'a NetworkConfig,
    setups: Vec<SensorSetup>,
    init_cdfs: Vec<Vec<f64>>,
    arrivals: Poisson<f64>,
    unit_power: f64,
    fusion: Fusion,
}

impl Network<'_> {
    fn run_block(&self, seed: u64, block: u64, slots: u64, init: BatteryInit, trace: usize) -> BlockStats {
        let n = self.setups.len();
        let cap = self.config.energy.capacity;
        let priors = &self.config.priors;
        let tau = priors.log_threshold();
        let mut rng = Streams::for_block(seed, block);
        let mut battery: Vec<usize> = match init {
            BatteryInit::Stationary => self
                .init_cdfs
                .iter()
                .map(|cdf| sample_index(cdf, rng.init.gen::<f64>()))
                .collect(),
            BatteryInit::ColdStart => vec![0; n],
        };
        let burn_in = match init {
            BatteryInit::Stationary => 0,
            BatteryInit::ColdStart => 10 * cap as u64,
        };
        let mut stats = BlockStats {
            occupancy: vec![vec![0; cap + 1]; n],
            fired_h0: vec![0; n],
            fired_h1: vec![0; n],
            ..Default::default()
        };
        let mut y = vec![0.0; n];
        let mut pairs = Vec::with_capacity(n);
        let mut slot_detail = Vec::with_capacity(if trace > 0 { n } else { 0 });
        for t in 0..burn_in + slots {
            let counted = t >= burn_in;
            let h1 = rng.hypothesis.gen::<f64>() < priors.h1;
            let mut exact = 0.0;
            pairs.clear();
            slot_detail.clear();
            for (i, s) in self.setups.iter().enumerate() {
                let sensor = &s.sensor;
                let noise: f64 = rng.observation.sample(StandardNormal);
                let x = if h1 { sensor.signal_amplitude } else { 0.0 } + sensor.obs_noise_var.sqrt() * noise;
                let llr = LocalDetector::llr(sensor, x);
                let fire = llr >= s.detector.theta;
                let e: f64 = rng.gain.sample(Exp1);
                let gain = (sensor.mean_sq_gain * e).sqrt();
                let level = s.policy.interval_of(gain);
                let k = battery[i];
                let would_use = s.policy.consumed_units(level, k);
                debug_assert!(would_use <= k);
                let used = if fire { would_use } else { 0 };
                let genie_amplitude = (would_use as f64 * self.unit_power).sqrt();
                let amplitude = if fire { genie_amplitude } else { 0.0 };
                let w: f64 = rng.channel.sample(StandardNormal);
                y[i] = gain * amplitude + sensor.channel_noise_var.sqrt() * w;
                match self.fusion {
                    Fusion::Exact => {
                        exact += llr_term(y[i], gain * genie_amplitude, &s.detector, sensor.channel_noise_var)
                    }
                    Fusion::CltApprox => pairs.push(moment_match(
                        gain,
                        genie_amplitude,
                        &s.detector,
                        sensor.channel_noise_var,
                    )),
                }
                let harvested = (self.arrivals.sample(&mut rng.arrival) as usize).min(cap);
                battery[i] = (k - used + harvested).min(cap);
                debug_assert!(battery[i] <= cap);
                if counted {
                    stats.occupancy[i][k] += 1;
                    if fire {
                        if h1 {
                            stats.fired_h1[i] += 1;
                        } else {
                            stats.fired_h0[i] += 1;
                        }
                    }
                }
                if trace > 0 {
                    slot_detail.push(SensorSlot {
                        observation: x,
                        llr,
                        gain,
                        interval: level,
                        battery_before: k,
                        consumed_units: used,
                        amplitude,
                        received_y: y[i],
                    });
                }
            }
            let (statistic, decision) = match self.fusion {
                Fusion::Exact => (exact, u8::from(exact > tau)),
                Fusion::CltApprox => {
                    let (stat, _, d) = fusion_statistic_approx(&y, &pairs, priors)
                        .expect("lengths match by construction");
                    (stat, d)
                }
            };
            if !counted {
                continue;
            }
            if h1 {
                stats.slots_h1 += 1;
            } else {
                stats.slots_h0 += 1;
            }
            if decision != u8::from(h1) {
                stats.errors += 1;
            }
            if stats.trace.len() < trace {
                stats.trace.push(SlotTrace {
                    slot: t - burn_in,
                    hypothesis: u8::from(h1),
                    sensors: slot_detail.clone(),
                    fusion_llr: statistic,
                    decision,
                });
            }
        }
        stats
    }
}

/// Monte-Carlo estimate of the network error probability under `policies`.
pub fn run_monte_carlo(network: &NetworkConfig, policies: &[Policy], cfg: &SimConfig) -> Result<SimResult> {
    network.validate()?;
    if policies.len() != network.sensors.len() {
        return Err(Error::invalid(
            "policies",
            format!("expected {} policies, got {}", network.sensors.len(), policies.len()),
        ));
    }
    if cfg.n_slots == 0 {
        return Err(Error::invalid("slots", "must be at least 1"));
    }
    let setups = network
        .sensors
        .iter()
        .zip(policies)
        .enumerate()
        .map(|(n, (s, p))| {
            SensorSetup::new(s, &network.energy, &network.priors, p).map_err(|e| e.within(&format!("sensors[{n}]")))
        })
        .collect::<Result<Vec<_>>>()?;
    let arrivals = Poisson::new(network.energy.arrival_rate)
        .map_err(|e| Error::invalid("energy.arrival_rate", e.to_string()))?;
    let net = Network {
        config: network,
        init_cdfs: setups.iter().map(|s| cumulative(s.chain.phi())).collect(),
        setups,
        arrivals,
        unit_power: network.energy.unit_power(),
        fusion: cfg.fusion,
    };
    let blocks = cfg.n_slots.div_ceil(BLOCK_SLOTS);
    let parts: Vec<BlockStats> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let slots = BLOCK_SLOTS.min(cfg.n_slots - b * BLOCK_SLOTS);
            let trace = if b == 0 { cfg.trace_slots } else { 0 };
            net.run_block(cfg.seed, b, slots, cfg.init, trace)
        })
        .collect();

    let n = network.sensors.len();
    let cap = network.energy.capacity;
    let mut total = BlockStats {
        occupancy: vec![vec![0; cap + 1]; n],
        fired_h0: vec![0; n],
        fired_h1: vec![0; n],
        ..Default::default()
    };
    for part in parts {
        total.errors += part.errors;
        total.slots_h0 += part.slots_h0;
        total.slots_h1 += part.slots_h1;
        for i in 0..n {
            for (a, b) in total.occupancy[i].iter_mut().zip(&part.occupancy[i]) {
                *a += b;
            }
            total.fired_h0[i] += part.fired_h0[i];
            total.fired_h1[i] += part.fired_h1[i];
        }
        total.trace.extend(part.trace);
    }
    let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let pe = total.errors as f64 / cfg.n_slots as f64;
    Ok(SimResult {
        n_slots: cfg.n_slots,
        errors: total.errors,
        slots_h0: total.slots_h0,
        slots_h1: total.slots_h1,
        empirical_pe: pe,
        ci_half_width: binomial_ci_half_width(pe, cfg.n_slots),
        sensors: (0..n)
            .map(|i| SensorStats {
                occupancy: total.occupancy[i].clone(),
                fired_h0: total.fired_h0[i],
                fired_h1: total.fired_h1[i],
                empirical_pf: rate(total.fired_h0[i], total.slots_h0),
                empirical_pd: rate(total.fired_h1[i], total.slots_h1),
            })
            .collect(),
        trace: total.trace,
    })
}

/// Result of simulating one battery against its chain prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryCheck {
    pub frequencies: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `max_k |freq(k) - φ_k|`.
    pub sup_gap: f64,
}

/// Simulate a single battery for `n_slots` with transmission gated by a
/// Bernoulli(`transmit_prob`) draw, exactly the chain's model, and compare
/// the occupancy with `Φ`. Starts empty and discards `10·K` burn-in slots.
pub fn empirical_battery_check(setup: &SensorSetup, n_slots: u64, seed: u64) -> Result<BatteryCheck> {
    if n_slots == 0 {
        return Err(Error::invalid("slots", "must be at least 1"));
    }
    let cap = setup.energy.capacity;
    let arrivals = Poisson::new(setup.energy.arrival_rate)
        .map_err(|e| Error::invalid("energy.arrival_rate", e.to_string()))?;
    let mut rng = Streams::for_block(seed, 0);
    let mut counts = vec![0u64; cap + 1];
    let mut k = 0usize;
    let burn_in = 10 * cap as u64;
    for t in 0..burn_in + n_slots {
        if t >= burn_in {
            counts[k] += 1;
        }
        let fire = rng.hypothesis.gen::<f64>() < setup.transmit_prob;
        let e: f64 = rng.gain.sample(Exp1);
        let level = setup.policy.interval_of((setup.sensor.mean_sq_gain * e).sqrt());
        let used = if fire { setup.policy.consumed_units(level, k) } else { 0 };
        let harvested = (arrivals.sample(&mut rng.arrival) as usize).min(cap);
        k = (k - used + harvested).min(cap);
    }
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n_slots as f64).collect();
    let predicted = setup.chain.phi().to_vec();
    let sup_gap = frequencies
        .iter()
        .zip(&predicted)
        .map(|(f, p)| (f - p).abs())
        .fold(0.0, f64::max);
    Ok(BatteryCheck {
        frequencies,
        predicted,
        sup_gap,
    })
}

/// Write the trace as CSV, one row per slot, sensor columns suffixed `_<n>`.
pub fn write_trace_csv<W: Write>(trace: &[SlotTrace], mut out: W) -> std::io::Result<()> {
    let n = trace.first().map_or(0, |t| t.sensors.len());
    let mut header = vec!["slot".to_string(), "hypothesis".to_string()];
    for i in 0..n {
        for col in [
            "observation",
            "llr",
            "gain",
            "interval",
            "battery_before",
            "consumed_units",
            "amplitude",
            "received_y",
        ] {
            header.push(format!("{col}_{i}"));
        }
    }
    header.push("fusion_llr".into());
    header.push("decision".into());
    writeln!(out, "{}", header.join(","))?;
    for row in trace {
        let mut fields = vec![row.slot.to_string(), row.hypothesis.to_string()];
        for s in &row.sensors {
            fields.extend([
                s.observation.to_string(),
                s.llr.to_string(),
                s.gain.to_string(),
                s.interval.to_string(),
                s.battery_before.to_string(),
                s.consumed_units.to_string(),
                s.amplitude.to_string(),
                s.received_y.to_string(),
            ]);
        }
        fields.push(row.fusion_llr.to_string());
        fields.push(row.decision.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
