//! Problem parameters, their invariants, and the per-sensor local detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{q_func, q_inv};

/// Slack added before flooring `c·k` so that grid scales such as `1/9`
/// multiplied by 9 land on the intended integer.
const FLOOR_SLACK: f64 = 1e-9;

/// Per-sensor statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Mean squared channel gain `E{g²}` (Rayleigh fading).
    pub mean_sq_gain: f64,
    /// Noise variance on the sensor-to-fusion-center channel, in W.
    pub channel_noise_var: f64,
    /// Observation noise variance.
    pub obs_noise_var: f64,
    /// Amplitude of the known signal present under H1.
    pub signal_amplitude: f64,
    /// Required local detection probability.
    pub target_pd: f64,
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        positive("mean_sq_gain", self.mean_sq_gain)?;
        positive("channel_noise_var", self.channel_noise_var)?;
        positive("obs_noise_var", self.obs_noise_var)?;
        positive("signal_amplitude", self.signal_amplitude)?;
        open_unit("target_pd", self.target_pd)
    }

    /// Observation SNR `𝒜/σ_v` as a plain ratio.
    pub fn snr_ratio(&self) -> f64 {
        self.signal_amplitude / self.obs_noise_var.sqrt()
    }

    /// Sensor with the given observation SNR in dB (`20 log10(𝒜/σ_v)`),
    /// unit observation noise.
    pub fn with_snr_db(
        mean_sq_gain: f64,
        channel_noise_var: f64,
        snr_db: f64,
        target_pd: f64,
    ) -> Self {
        SensorParams {
            mean_sq_gain,
            channel_noise_var,
            obs_noise_var: 1.0,
            signal_amplitude: 10f64.powf(snr_db / 20.0),
            target_pd,
        }
    }
}

/// Observation SNR in decibels, `20 log10(𝒜/σ_v)`.
pub fn snr_s(sensor: &SensorParams) -> Result<f64> {
    sensor.validate()?;
    Ok(20.0 * sensor.snr_ratio().log10())
}

/// Energy arrival and battery parameters shared by all sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Mean number of energy units arriving per slot (Poisson rate).
    pub arrival_rate: f64,
    /// Battery capacity in cells.
    pub capacity: usize,
    /// Energy stored per cell, in J.
    pub unit_energy: f64,
    /// Slot duration, in s.
    pub slot_duration: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        positive("arrival_rate", self.arrival_rate)?;
        if self.capacity < 1 {
            return Err(Error::invalid("capacity", "must be at least 1"));
        }
        positive("unit_energy", self.unit_energy)?;
        positive("slot_duration", self.slot_duration)
    }

    /// Power drawn by spending one cell over one slot, `b_u / T_s` in W.
    pub fn unit_power(&self) -> f64 {
        self.unit_energy / self.slot_duration
    }
}

/// Transmit-power map of one sensor: scale factor `c_l` per channel-gain
/// interval `[μ_l, μ_{l+1})`.
///
/// `thresholds` always holds all `L + 1` edges, with `thresholds[0] = 0` and
/// `thresholds[L] = ∞`. Serialized form keeps only the interior edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct Policy {
    scales: Vec<f64>,
    thresholds: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    scales: Vec<f64>,
    thresholds: Vec<f64>,
}

impl TryFrom<PolicyRepr> for Policy {
    type Error = Error;
    fn try_from(r: PolicyRepr) -> Result<Self> {
        Policy::from_interior(r.scales, &r.thresholds)
    }
}

impl From<Policy> for PolicyRepr {
    fn from(p: Policy) -> Self {
        PolicyRepr {
            thresholds: p.interior_thresholds().to_vec(),
            scales: p.scales,
        }
    }
}

impl Policy {
    /// Build from scales and the full edge vector `[0, μ_1, .., μ_{L-1}, ∞]`.
    pub fn new(scales: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        let policy = Policy { scales, thresholds };
        policy.validate()?;
        Ok(policy)
    }

    /// Build from scales and the interior edges `μ_1 .. μ_{L-1}` only.
    pub fn from_interior(scales: Vec<f64>, interior: &[f64]) -> Result<Self> {
        let mut thresholds = Vec::with_capacity(interior.len() + 2);
        thresholds.push(0.0);
        thresholds.extend_from_slice(interior);
        thresholds.push(f64::INFINITY);
        Policy::new(scales, thresholds)
    }

    /// Single-interval policy: the whole gain axis shares scale `c`.
    pub fn single(scale: f64) -> Result<Self> {
        Policy::new(vec![scale], vec![0.0, f64::INFINITY])
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.scales.len();
        if levels == 0 {
            return Err(Error::invalid("scales", "at least one level is required"));
        }
        if self.thresholds.len() != levels + 1 {
            return Err(Error::invalid(
                "thresholds",
                format!(
                    "expected {} edges for {} levels, got {}",
                    levels + 1,
                    levels,
                    self.thresholds.len()
                ),
            ));
        }
        for (i, &c) in self.scales.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(
                    format!("scales[{i}]"),
                    format!("must lie in [0, 1], got {c}"),
                ));
            }
        }
        if self.thresholds[0] != 0.0 {
            return Err(Error::invalid("thresholds[0]", "first edge must be 0"));
        }
        if self.thresholds[levels] != f64::INFINITY {
            return Err(Error::invalid(
                format!("thresholds[{levels}]"),
                "last edge must be +inf",
            ));
        }
        for i in 1..=levels {
            let (a, b) = (self.thresholds[i - 1], self.thresholds[i]);
            if !(b > a) || b.is_nan() {
                return Err(Error::invalid(
                    format!("thresholds[{i}]"),
                    format!("edges must be strictly increasing ({a} then {b})"),
                ));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// All `L + 1` edges, including `0` and `∞`.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn interior_thresholds(&self) -> &[f64] {
        &self.thresholds[1..self.thresholds.len() - 1]
    }

    /// Cells consumed when the battery holds `k` cells and the gain falls in
    /// interval `l`: `⌊c_l k⌋`.
    pub fn consumed_units(&self, level: usize, k: usize) -> usize {
        consumed_units(self.scales[level], k)
    }

    /// Index `l` of the interval `[μ_l, μ_{l+1})` holding gain `g ≥ 0`.
    pub fn interval_of(&self, gain: f64) -> usize {
        // thresholds[0] = 0 <= gain, so partition_point is at least 1.
        let idx = self.thresholds.partition_point(|&t| t <= gain);
        idx.saturating_sub(1).min(self.levels() - 1)
    }
}

/// `⌊c k⌋`, never more than `k`.
pub fn consumed_units(scale: f64, k: usize) -> usize {
    let units = (scale * k as f64 + FLOOR_SLACK).floor();
    (units.max(0.0) as usize).min(k)
}

/// Transmit amplitude `√(⌊c_l k⌋ b_u / T_s)` for battery state `k` and
/// interval `l`.
pub fn transmit_amplitude(
    policy: &Policy,
    energy: &EnergyModel,
    k: usize,
    level: usize,
) -> Result<f64> {
    if k > energy.capacity {
        return Err(Error::OutOfRange {
            what: "battery state",
            value: k,
            limit: energy.capacity,
        });
    }
    if level >= policy.levels() {
        return Err(Error::OutOfRange {
            what: "interval index",
            value: level,
            limit: policy.levels() - 1,
        });
    }
    let units = policy.consumed_units(level, k);
    Ok((units as f64 * energy.unit_power()).sqrt())
}

/// Prior probabilities of the two hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub h0: f64,
    pub h1: f64,
}

impl Priors {
    pub fn new(h0: f64, h1: f64) -> Result<Self> {
        let p = Priors { h0, h1 };
        p.validate()?;
        Ok(p)
    }

    pub fn equal() -> Self {
        Priors { h0: 0.5, h1: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("h0", self.h0)?;
        open_unit("h1", self.h1)?;
        if (self.h0 + self.h1 - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "",
                format!("priors must sum to 1, got {}", self.h0 + self.h1),
            ));
        }
        Ok(())
    }

    /// Bayesian decision threshold `τ = log(Π₀/Π₁)`.
    pub fn log_threshold(&self) -> f64 {
        (self.h0 / self.h1).ln()
    }
}

/// Full network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub sensors: Vec<SensorParams>,
    pub priors: Priors,
    /// Average transmit-power cap per sensor, in W.
    pub power_budget: f64,
    /// Number of channel-gain quantization intervals `L`.
    pub levels: usize,
    pub energy: EnergyModel,
}

impl NetworkConfig {
    /// Check every invariant; the error names the first offending field.
    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::invalid("sensors", "at least one sensor is required"));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            s.validate().map_err(|e| e.within(&format!("sensors[{i}]")))?;
        }
        self.priors.validate().map_err(|e| e.within("priors"))?;
        positive("power_budget", self.power_budget)?;
        if self.levels < 1 {
            return Err(Error::invalid("levels", "must be at least 1"));
        }
        self.energy.validate().map_err(|e| e.within("energy"))
    }
}

/// Local likelihood-ratio detector of one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalDetector {
    /// LLR threshold `θ`.
    pub theta: f64,
    pub pd: f64,
    pub pf: f64,
}

impl LocalDetector {
    /// Probability that the sensor transmits in a slot,
    /// `Π̂₁ = Π₀ P_f + Π₁ P_d`.
    pub fn transmit_prob(&self, priors: &Priors) -> f64 {
        priors.h0 * self.pf + priors.h1 * self.pd
    }

    /// Local LLR of observation `x` for the known-signal-in-Gaussian-noise model.
    pub fn llr(sensor: &SensorParams, x: f64) -> f64 {
        let a = sensor.signal_amplitude;
        (a * x - 0.5 * a * a) / sensor.obs_noise_var
    }
}

/// LLR threshold and false-alarm rate that pin the detection probability to
/// `target_pd`.
///
/// Under H0 the LLR is `N(-s²/2, s²)` and under H1 `N(s²/2, s²)` with
/// `s = 𝒜/σ_v`, hence `θ = s Q⁻¹(P̄_d) + s²/2` and `P_f = Q(Q⁻¹(P̄_d) + s)`.
pub fn derive_local_detector(sensor: &SensorParams) -> Result<LocalDetector> {
    sensor.validate()?;
    let s = sensor.snr_ratio();
    let qi = q_inv(sensor.target_pd)?;
    Ok(LocalDetector {
        theta: s * qi + 0.5 * s * s,
        pd: sensor.target_pd,
        pf: q_func(qi + s),
    })
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn open_unit(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(path, format!("must lie in (0, 1), got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor(pd: f64, snr: f64) -> SensorParams {
        SensorParams {
            mean_sq_gain: 1.0,
            channel_noise_var: 1.0,
            obs_noise_var: 1.0,
            signal_amplitude: snr,
            target_pd: pd,
        }
    }

    #[test]
    fn detector_pd_09_unit_snr() {
        // Q^-1(0.9) = -1.2815515655446004 and Q(-0.28155..) = 0.610856308354639
        // from an independent high-precision normal table.
        let det = derive_local_detector(&sensor(0.9, 1.0)).unwrap();
        assert!((det.theta - (-1.281_551_565_544_600_5 + 0.5)).abs() < 1e-10);
        assert!((det.theta + 0.7816).abs() < 1e-4);
        assert!((det.pf - 0.610_856_308_354_639).abs() < 1e-12, "pf = {}", det.pf);
        assert_eq!(det.pd, 0.9);
    }

    #[test]
    fn detector_median_threshold() {
        let s = 1.7;
        let det = derive_local_detector(&sensor(0.5, s)).unwrap();
        assert!((det.theta - s * s / 2.0).abs() < 1e-12);
        assert!((det.pf - q_func(s)).abs() < 1e-15);
    }

    #[test]
    fn detector_pd_near_one() {
        let det = derive_local_detector(&sensor(1.0 - 1e-12, 1.0)).unwrap();
        assert!(det.theta < -6.0);
        assert!(det.pf > 0.999_999);
    }

    #[test]
    fn detector_rejects_bad_pd() {
        for pd in [0.0, 1.0, -0.1, 1.5] {
            let err = derive_local_detector(&sensor(pd, 1.0)).unwrap_err();
            assert!(matches!(err, Error::InvalidParameter { ref path, .. } if path == "target_pd"));
        }
    }

    #[test]
    fn forward_pd_recovers_target() {
        for &pd in &[0.05, 0.3, 0.5, 0.9, 0.999] {
            for &s in &[0.1, 1.0, 3.0] {
                let det = derive_local_detector(&sensor(pd, s)).unwrap();
                let forward = q_func((det.theta - s * s / 2.0) / s);
                assert!((forward - pd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snr_db() {
        assert_eq!(snr_s(&sensor(0.9, 1.0)).unwrap(), 0.0);
        assert!((snr_s(&sensor(0.9, 10.0)).unwrap() - 20.0).abs() < 1e-12);
        assert!((snr_s(&sensor(0.9, 2f64.sqrt())).unwrap() - 3.010_299_956_639_812).abs() < 1e-12);
    }

    #[test]
    fn amplitude_worked_map() {
        let energy = EnergyModel {
            arrival_rate: 2.0,
            capacity: 6,
            unit_energy: 0.01,
            slot_duration: 10.0,
        };
        let a = Policy::from_interior(vec![0.1, 0.3, 0.5, 0.7], &[0.2, 1.4, 3.6]).unwrap();
        let amp = transmit_amplitude(&a, &energy, 3, 2).unwrap();
        assert!((amp * amp - 1e-3).abs() < 1e-15);
        assert_eq!(transmit_amplitude(&a, &energy, 0, 3).unwrap(), 0.0);
        let b = Policy::from_interior(vec![0.3, 0.5, 0.7, 0.9], &[0.3, 2.5, 4.7]).unwrap();
        let amp = transmit_amplitude(&b, &energy, 3, 2).unwrap();
        assert!((amp * amp - 2e-3).abs() < 1e-15);
        assert!(transmit_amplitude(&a, &energy, 7, 0).is_err());
        assert!(transmit_amplitude(&a, &energy, 1, 4).is_err());
    }

    #[test]
    fn consumption_never_exceeds_state() {
        for k in 0..=200 {
            for i in 0..=1000 {
                let c = i as f64 / 1000.0;
                assert!(consumed_units(c, k) <= k);
            }
        }
        assert_eq!(consumed_units(1.0 / 9.0, 9), 1);
        assert_eq!(consumed_units(0.7, 10), 7);
    }

    #[test]
    fn policy_validation_paths() {
        let e = Policy::from_interior(vec![0.2, 1.2], &[0.5]).unwrap_err();
        assert_eq!(e.to_string(), "scales[1]: must lie in [0, 1], got 1.2");
        let e = Policy::from_interior(vec![0.2, 0.3, 0.4], &[0.5, 0.5]).unwrap_err();
        assert!(e.to_string().starts_with("thresholds[2]"));
        assert!(Policy::new(vec![0.5], vec![0.0, 3.0]).is_err());
    }

    #[test]
    fn policy_serde_uses_interior_edges() {
        let p = Policy::from_interior(vec![0.1, 0.9], &[1.5]).unwrap();
        let repr: PolicyRepr = p.clone().into();
        assert_eq!(repr.thresholds, vec![1.5]);
        assert_eq!(Policy::try_from(repr).unwrap(), p);
    }

    #[test]
    fn interval_lookup() {
        let p = Policy::from_interior(vec![0.1, 0.2, 0.3], &[0.5, 1.0]).unwrap();
        assert_eq!(p.interval_of(0.0), 0);
        assert_eq!(p.interval_of(0.49), 0);
        assert_eq!(p.interval_of(0.5), 1);
        assert_eq!(p.interval_of(1.0), 2);
        assert_eq!(p.interval_of(1e9), 2);
    }

    #[test]
    fn network_validation_reports_path() {
        let mut net = NetworkConfig {
            sensors: vec![sensor(0.9, 1.0), sensor(0.9, 1.0)],
            priors: Priors::equal(),
            power_budget: 1e-3,
            levels: 2,
            energy: EnergyModel {
                arrival_rate: 2.0,
                capacity: 5,
                unit_energy: 0.01,
                slot_duration: 10.0,
            },
        };
        assert!(net.validate().is_ok());
        net.sensors[1].target_pd = 1.2;
        assert_eq!(
            net.validate().unwrap_err().to_string(),
            "sensors[1].target_pd: must lie in (0, 1), got 1.2"
        );
        net.sensors[1].target_pd = 0.9;
        net.energy.capacity = 0;
        assert!(net.validate().unwrap_err().to_string().starts_with("energy.capacity"));
    }
}
