//! TOML experiment configuration.
//!
//! All powers and noise variances are in W, energies in J, durations in s.
//! Validation stops at the first violated invariant and names its path,
//! e.g. `sensors[1].target_pd: must lie in (0, 1), got 1.2`.

use std::path::Path;

use ehwsn_core::optimizer::{GridSpec, Method, RrsParams, SolverSettings};
use ehwsn_core::simulator::{BatteryInit, Fusion};
use ehwsn_core::{EnergyModel, NetworkConfig, Priors, SensorParams};
use serde::Deserialize;

use crate::error::HarnessError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    priors: Option<Priors>,
    energy: EnergyModel,
    network: RawNetwork,
    sensors: Vec<RawSensor>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    simulation: RawSimulation,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    levels: usize,
    /// W.
    power_budget: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensor {
    mean_sq_gain: f64,
    channel_noise_var: f64,
    target_pd: f64,
    snr_db: Option<f64>,
    signal_amplitude: Option<f64>,
    obs_noise_var: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    method: Option<String>,
    n_c: Option<usize>,
    n_mu: Option<usize>,
    mu_max: Option<f64>,
    rrs: Option<RrsParams>,
    hybrid: Option<RrsParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    slots: Option<u64>,
    fusion: Option<Fusion>,
    init: Option<BatteryInit>,
    clt_draws: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: String,
    values: Vec<f64>,
    methods: Vec<String>,
    replications: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub slots: u64,
    pub fusion: Fusion,
    pub init: BatteryInit,
    /// Draws used to average the CLT error probability over gains/batteries.
    pub clt_draws: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            slots: 100_000,
            fusion: Fusion::Exact,
            init: BatteryInit::Stationary,
            clt_draws: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    PowerBudget,
    Capacity,
    ArrivalRate,
    SnrDb,
    Levels,
    Sensors,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::PowerBudget => "P0",
            SweepVariable::Capacity => "K",
            SweepVariable::ArrivalRate => "rho",
            SweepVariable::SnrDb => "snr_s",
            SweepVariable::Levels => "L",
            SweepVariable::Sensors => "N",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            SweepVariable::PowerBudget,
            SweepVariable::Capacity,
            SweepVariable::ArrivalRate,
            SweepVariable::SnrDb,
            SweepVariable::Levels,
            SweepVariable::Sensors,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }

    fn is_integer(&self) -> bool {
        matches!(self, SweepVariable::Capacity | SweepVariable::Levels | SweepVariable::Sensors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub replications: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::config("sweep.values", "must not be empty"));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(HarnessError::config("sweep.values", "must be strictly monotone"));
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() || (self.variable.is_integer() && (v.fract() != 0.0 || *v < 1.0)) {
                return Err(HarnessError::config(
                    format!("sweep.values[{i}]"),
                    format!("invalid value {v} for {}", self.variable.name()),
                ));
            }
        }
        if self.methods.is_empty() {
            return Err(HarnessError::config("sweep.methods", "must not be empty"));
        }
        if self.replications == 0 {
            return Err(HarnessError::config("sweep.replications", "must be at least 1"));
        }
        Ok(())
    }

    /// `base` with the swept variable set to `value`.
    pub fn apply(&self, base: &Config, value: f64) -> Result<Config, HarnessError> {
        let mut cfg = base.clone();
        let net = &mut cfg.network;
        match self.variable {
            SweepVariable::PowerBudget => net.power_budget = value,
            SweepVariable::Capacity => net.energy.capacity = value as usize,
            SweepVariable::ArrivalRate => net.energy.arrival_rate = value,
            SweepVariable::SnrDb => {
                for s in &mut net.sensors {
                    s.signal_amplitude = s.obs_noise_var.sqrt() * 10f64.powf(value / 20.0);
                }
            }
            SweepVariable::Levels => net.levels = value as usize,
            SweepVariable::Sensors => {
                let first = net.sensors[0];
                net.sensors = vec![first; value as usize];
            }
        }
        net.validate()?;
        Ok(cfg)
    }
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub network: NetworkConfig,
    pub seed: u64,
    pub method: Method,
    pub solver: SolverSettings,
    pub simulation: SimulationSettings,
    pub sweep: Option<SweepSpec>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        raw.into_config()
    }
}

fn parse_method(path: &str, s: &str) -> Result<Method, HarnessError> {
    s.parse().map_err(|e: ehwsn_core::Error| HarnessError::config(path, strip_path(&e)))
}

fn strip_path(e: &ehwsn_core::Error) -> String {
    match e {
        ehwsn_core::Error::InvalidParameter { reason, .. } => reason.clone(),
        other => other.to_string(),
    }
}

impl RawConfig {
    fn into_config(self) -> Result<Config, HarnessError> {
        let priors = self.priors.unwrap_or_else(Priors::equal);
        if self.sensors.is_empty() {
            return Err(HarnessError::config("sensors", "at least one sensor is required"));
        }
        let mut sensors = Vec::new();
        for (i, raw) in self.sensors.iter().enumerate() {
            let path = format!("sensors[{i}]");
            let obs_noise_var = raw.obs_noise_var.unwrap_or(1.0);
            let signal_amplitude = match (raw.snr_db, raw.signal_amplitude) {
                (Some(db), None) => obs_noise_var.sqrt() * 10f64.powf(db / 20.0),
                (None, Some(a)) => a,
                _ => {
                    return Err(HarnessError::config(
                        path,
                        "exactly one of snr_db and signal_amplitude must be given",
                    ))
                }
            };
            let sensor = SensorParams {
                mean_sq_gain: raw.mean_sq_gain,
                channel_noise_var: raw.channel_noise_var,
                obs_noise_var,
                signal_amplitude,
                target_pd: raw.target_pd,
            };
            sensor.validate().map_err(|e| HarnessError::from(e.within(&path)))?;
            let count = raw.count.unwrap_or(1);
            if count == 0 {
                return Err(HarnessError::config(format!("{path}.count"), "must be at least 1"));
            }
            sensors.extend(std::iter::repeat_n(sensor, count));
        }
        let network = NetworkConfig {
            sensors,
            priors,
            power_budget: self.network.power_budget,
            levels: self.network.levels,
            energy: self.energy,
        };
        // Sensor paths above refer to config entries; re-check the rest.
        network.priors.validate().map_err(|e| HarnessError::from(e.within("priors")))?;
        network.energy.validate().map_err(|e| HarnessError::from(e.within("energy")))?;
        if !(network.power_budget > 0.0) {
            return Err(HarnessError::config(
                "network.power_budget",
                format!("must be positive, got {}", network.power_budget),
            ));
        }
        if network.levels < 1 {
            return Err(HarnessError::config("network.levels", "must be at least 1"));
        }

        let defaults = SolverSettings::default();
        let solver = SolverSettings {
            grid: GridSpec {
                n_c: self.solver.n_c.unwrap_or(defaults.grid.n_c),
                n_mu: self.solver.n_mu.unwrap_or(defaults.grid.n_mu),
                mu_max: self.solver.mu_max,
            },
            rrs: self.solver.rrs.unwrap_or(defaults.rrs),
            hybrid: self.solver.hybrid.unwrap_or(defaults.hybrid),
        };
        solver.grid.validate().map_err(|e| HarnessError::from(e.within("solver")))?;
        solver.rrs.validate().map_err(|e| HarnessError::from(e.within("solver.rrs")))?;
        solver.hybrid.validate().map_err(|e| HarnessError::from(e.within("solver.hybrid")))?;
        let method = match &self.solver.method {
            Some(m) => parse_method("solver.method", m)?,
            None => Method::HybridMmae,
        };

        let d = SimulationSettings::default();
        let simulation = SimulationSettings {
            slots: self.simulation.slots.unwrap_or(d.slots),
            fusion: self.simulation.fusion.unwrap_or(d.fusion),
            init: self.simulation.init.unwrap_or(d.init),
            clt_draws: self.simulation.clt_draws.unwrap_or(d.clt_draws),
        };
        if simulation.slots == 0 {
            return Err(HarnessError::config("simulation.slots", "must be at least 1"));
        }
        if simulation.clt_draws == 0 {
            return Err(HarnessError::config("simulation.clt_draws", "must be at least 1"));
        }

        let sweep = match self.sweep {
            None => None,
            Some(raw) => {
                let variable = SweepVariable::parse(&raw.variable).ok_or_else(|| {
                    HarnessError::config(
                        "sweep.variable",
                        format!("unknown variable '{}' (P0, K, rho, snr_s, L, N)", raw.variable),
                    )
                })?;
                let methods = raw
                    .methods
                    .iter()
                    .enumerate()
                    .map(|(i, m)| parse_method(&format!("sweep.methods[{i}]"), m))
                    .collect::<Result<Vec<_>, _>>()?;
                let spec = SweepSpec {
                    variable,
                    values: raw.values,
                    methods,
                    replications: raw.replications.unwrap_or(1),
                };
                spec.validate()?;
                Some(spec)
            }
        };

        Ok(Config {
            network,
            seed: self.seed.unwrap_or(1),
            method,
            solver,
            simulation,
            sweep,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7

[energy]
arrival_rate = 2.0
capacity = 5
unit_energy = 0.01
slot_duration = 10.0

[network]
levels = 2
power_budget = 1e-3

[[sensors]]
mean_sq_gain = 2.0
channel_noise_var = 1e-3
snr_db = 3.0
target_pd = 0.9
count = 3
"#;

    #[test]
    fn loads_base() {
        let cfg = Config::from_toml(BASE).unwrap();
        assert_eq!(cfg.network.sensors.len(), 3);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.method, Method::HybridMmae);
        assert!((cfg.network.sensors[0].signal_amplitude - 10f64.powf(0.15)).abs() < 1e-15);
        assert_eq!(cfg.network.priors, Priors::equal());
    }

    #[test]
    fn reports_sensor_path() {
        let text = format!(
            "{BASE}\n[[sensors]]\nmean_sq_gain = 1.0\nchannel_noise_var = 1e-3\nsnr_db = 0.0\ntarget_pd = 1.2\n"
        );
        let err = Config::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("sensors[1].target_pd"), "{err}");
    }

    #[test]
    fn reports_energy_path() {
        let text = BASE.replace("capacity = 5", "capacity = 0");
        let err = Config::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("energy.capacity"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_methods() {
        assert!(Config::from_toml(&format!("{BASE}\n[solver]\nmethod = \"annealing\"\n")).is_err());
        assert!(Config::from_toml(&BASE.replace("seed = 7", "seed = 7\nbogus = 1")).is_err());
    }

    #[test]
    fn sweep_validation() {
        let good = format!("{BASE}\n[sweep]\nvariable = \"P0\"\nvalues = [1e-3, 2e-3]\nmethods = [\"grid\"]\n");
        let cfg = Config::from_toml(&good).unwrap();
        let spec = cfg.sweep.clone().unwrap();
        assert_eq!(spec.replications, 1);
        let applied = spec.apply(&cfg, 2e-3).unwrap();
        assert_eq!(applied.network.power_budget, 2e-3);
        let bad = good.replace("[1e-3, 2e-3]", "[2e-3, 1e-3, 3e-3]");
        let err = Config::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("sweep.values"), "{err}");
        let bad_k = good.replace("\"P0\"", "\"K\"").replace("[1e-3, 2e-3]", "[2.5, 3]");
        assert!(Config::from_toml(&bad_k).unwrap_err().to_string().contains("sweep.values[0]"));
    }
}
