//! The four subcommands as library functions, so tests can drive them
//! without spawning the binary.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ehwsn_core::metrics::{expected_clt_error_prob, SensorSetup};
use ehwsn_core::optimizer::{solve_p1, Method};
use ehwsn_core::simulator::{run_monte_carlo, Fusion, SensorStats, SimConfig, SimResult};
use ehwsn_core::Policy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::HarnessError;

/// Frozen sweep CSV header.
pub const SWEEP_HEADER: [&str; 11] = [
    "variable",
    "value",
    "method",
    "objective",
    "avg_power_watts",
    "analytic_pe",
    "empirical_pe",
    "ci_half_width",
    "seed",
    "wall_time",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSolution {
    pub sensor: usize,
    pub policy: Policy,
    pub objective: f64,
    pub avg_power_watts: f64,
    pub feasible: bool,
}

/// Output of `optimize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub method: Method,
    pub seed: u64,
    pub power_budget_watts: f64,
    pub sensors: Vec<SensorSolution>,
    /// Seconds; only filled when timing is requested, so that reruns stay
    /// byte-identical by default.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
}

impl SolutionRecord {
    pub fn policies(&self) -> Vec<Policy> {
        self.sensors.iter().map(|s| s.policy.clone()).collect()
    }
}

pub fn optimize(cfg: &Config, method: Method, seed: u64, timing: bool) -> Result<SolutionRecord, HarnessError> {
    let start = Instant::now();
    let results = solve_p1(&cfg.network, method, &cfg.solver, seed)?;
    let mut sensors = Vec::with_capacity(results.len());
    for (n, r) in results.into_iter().enumerate() {
        let c = r?;
        sensors.push(SensorSolution {
            sensor: n,
            policy: c.policy,
            objective: c.objective,
            avg_power_watts: c.avg_power,
            feasible: c.feasible,
        });
    }
    Ok(SolutionRecord {
        method,
        seed,
        power_budget_watts: cfg.network.power_budget,
        sensors,
        wall_time: timing.then(|| start.elapsed().as_secs_f64()),
    })
}

pub fn setups(cfg: &Config, policies: &[Policy]) -> Result<Vec<SensorSetup>, HarnessError> {
    if policies.len() != cfg.network.sensors.len() {
        return Err(HarnessError::Config(format!(
            "solution has {} policies but the config has {} sensors",
            policies.len(),
            cfg.network.sensors.len()
        )));
    }
    cfg.network
        .sensors
        .iter()
        .zip(policies)
        .map(|(s, p)| Ok(SensorSetup::new(s, &cfg.network.energy, &cfg.network.priors, p)?))
        .collect()
}

/// CLT error probability averaged over gains and battery states.
pub fn analytic_pe(cfg: &Config, policies: &[Policy], seed: u64) -> Result<f64, HarnessError> {
    let s = setups(cfg, policies)?;
    Ok(expected_clt_error_prob(&s, &cfg.network.priors, cfg.simulation.clt_draws, seed)?)
}

/// Output of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub fusion: Fusion,
    pub n_slots: u64,
    pub errors: u64,
    pub empirical_pe: f64,
    pub ci_half_width: f64,
    pub analytic_pe: f64,
    pub sensors: Vec<SensorStats>,
}

pub fn simulate(
    cfg: &Config,
    policies: &[Policy],
    slots: u64,
    seed: u64,
    trace_slots: usize,
) -> Result<(SimReport, SimResult), HarnessError> {
    let sim_cfg = SimConfig {
        n_slots: slots,
        seed,
        fusion: cfg.simulation.fusion,
        init: cfg.simulation.init,
        trace_slots,
    };
    let result = run_monte_carlo(&cfg.network, policies, &sim_cfg)?;
    let report = SimReport {
        seed,
        fusion: cfg.simulation.fusion,
        n_slots: result.n_slots,
        errors: result.errors,
        empirical_pe: result.empirical_pe,
        ci_half_width: result.ci_half_width,
        analytic_pe: analytic_pe(cfg, policies, seed)?,
        sensors: result.sensors.clone(),
    };
    Ok((report, result))
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variable: String,
    pub value: f64,
    pub method: String,
    /// Mean over sensors of `Σ J̄`.
    pub objective: Option<f64>,
    /// Largest per-sensor average power.
    pub avg_power_watts: Option<f64>,
    pub analytic_pe: Option<f64>,
    pub empirical_pe: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub seed: u64,
    pub wall_time: Option<f64>,
    pub error: Option<String>,
}

fn sweep_cell(base: &Config, value: f64, method: Method, seed: u64, slots: u64, timing: bool) -> SweepRow {
    let spec = base.sweep.as_ref().expect("sweep section present");
    let start = Instant::now();
    let mut row = SweepRow {
        variable: spec.variable.name().to_string(),
        value,
        method: method.to_string(),
        objective: None,
        avg_power_watts: None,
        analytic_pe: None,
        empirical_pe: None,
        ci_half_width: None,
        seed,
        wall_time: None,
        error: None,
    };
    let outcome = (|| -> Result<(), HarnessError> {
        let cfg = spec.apply(base, value)?;
        let sol = optimize(&cfg, method, seed, false)?;
        let n = sol.sensors.len() as f64;
        row.objective = Some(sol.sensors.iter().map(|s| s.objective).sum::<f64>() / n);
        row.avg_power_watts = Some(sol.sensors.iter().map(|s| s.avg_power_watts).fold(0.0, f64::max));
        let policies = sol.policies();
        let (report, _) = simulate(&cfg, &policies, slots, seed, 0)?;
        row.analytic_pe = Some(report.analytic_pe);
        row.empirical_pe = Some(report.empirical_pe);
        row.ci_half_width = Some(report.ci_half_width);
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    if timing {
        row.wall_time = Some(start.elapsed().as_secs_f64());
    }
    row
}

/// Run every (value, method, replication) cell. Replication `r` uses seed
/// `seed + r`. Rows come back in that nested order regardless of scheduling;
/// failed cells carry their error message and the sweep continues.
pub fn sweep(cfg: &Config, seed: u64, slots: u64, timing: bool) -> Result<Vec<SweepRow>, HarnessError> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::config("sweep", "the config has no [sweep] section"))?;
    let mut cells = Vec::new();
    for &value in &spec.values {
        for &method in &spec.methods {
            for r in 0..spec.replications {
                cells.push((value, method, seed + r as u64));
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(value, method, s)| sweep_cell(cfg, value, method, s, slots, timing))
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: "<csv>".into(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable record");
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| HarnessError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Write `Ψ`/`Φ` CSVs for every sensor as `chain_<n>.csv` under `dir`.
pub fn dump_chains(cfg: &Config, policies: &[Policy], dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (n, s) in setups(cfg, policies)?.iter().enumerate() {
        let path = dir.join(format!("chain_{n}.csv"));
        let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        s.chain
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(())
}
