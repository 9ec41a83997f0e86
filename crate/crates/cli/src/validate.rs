//! Oracle suite behind `ehwsn validate`.

use std::str::FromStr;

use ehwsn_core::battery::BatteryChain;
use ehwsn_core::metrics::interval_breakdown;
use ehwsn_core::oracle::{integrate_to_infinity, j_interval_quadrature, power_iteration};
use ehwsn_core::simulator::empirical_battery_check;
use ehwsn_core::special::exp_integral_ei;
use serde::Serialize;

use crate::commands::{analytic_pe, optimize, setups, simulate};
use crate::config::Config;
use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub operation: &'static str,
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Check {
    fn within(
        module: &'static str,
        operation: &'static str,
        name: impl Into<String>,
        observed: f64,
        expected: f64,
        tolerance: f64,
    ) -> Self {
        Check {
            module,
            operation,
            name: name.into(),
            passed: (observed - expected).abs() <= tolerance,
            observed,
            expected,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub method: String,
    pub seed: u64,
    pub slots: u64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

/// Deliberate corruptions used to prove the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scale the `Ψ` row of the most probable battery state by 0.9, so both
    /// row sums and stationarity break.
    PsiRowScale,
}

impl FromStr for Fault {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psi-row-scale" => Ok(Fault::PsiRowScale),
            other => Err(HarnessError::config("inject-fault", format!("unknown fault '{other}' (psi-row-scale)"))),
        }
    }
}

fn corrupt(chain: &BatteryChain) -> BatteryChain {
    let n = chain.capacity() + 1;
    let target = (0..n).fold(0, |best, i| if chain.phi()[i] > chain.phi()[best] { i } else { best });
    let rows = (0..n)
        .map(|i| {
            let scale = if i == target { 0.9 } else { 1.0 };
            chain.psi_row(i).iter().map(|v| v * scale).collect()
        })
        .collect();
    BatteryChain::from_raw(rows, chain.phi().to_vec())
}

fn chain_checks(chain: &BatteryChain, tag: &str, out: &mut Vec<Check>) -> Result<(), HarnessError> {
    const M: &str = "battery-chain";
    const OP: &str = "build_chain";
    out.push(Check::within(M, OP, format!("{tag} row-stochastic"), chain.row_sum_deviation(), 0.0, 1e-10));
    out.push(Check::within(M, OP, format!("{tag} stationarity"), chain.stationarity_residual(), 0.0, 1e-10));
    out.push(Check::within(M, OP, format!("{tag} normalization"), chain.phi().iter().sum(), 1.0, 1e-10));
    let gap = match power_iteration(chain, 1e-14, 1_000_000) {
        Ok((p, _)) => p
            .iter()
            .zip(chain.phi())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    out.push(Check::within(M, OP, format!("{tag} power-iteration agreement"), gap, 0.0, 1e-8));
    Ok(())
}

/// Run the oracle suite on the configured network with policies from
/// `cfg.method`. Checks run for each distinct sensor.
pub fn validate(cfg: &Config, seed: u64, slots: u64, fault: Option<Fault>) -> Result<ValidationReport, HarnessError> {
    let mut checks = Vec::new();

    for &x in &[-0.1, -1.0, -5.0, -10.0] {
        let reference = -integrate_to_infinity(|t: f64| (-t).exp() / t, -x, 1e-15)?;
        checks.push(Check::within(
            "detection-metrics",
            "exp_integral_ei",
            format!("Ei({x}) vs quadrature"),
            exp_integral_ei(x)?,
            reference,
            1e-10,
        ));
    }

    let solution = optimize(cfg, cfg.method, seed, false)?;
    for s in &solution.sensors {
        checks.push(Check {
            module: "optimizer",
            operation: "solve",
            name: format!("sensor {} power budget", s.sensor),
            passed: s.avg_power_watts <= solution.power_budget_watts + 1e-12,
            observed: s.avg_power_watts,
            expected: solution.power_budget_watts,
            tolerance: 1e-12,
        });
    }
    let policies = solution.policies();
    let all = setups(cfg, &policies)?;
    let mut seen: Vec<usize> = Vec::new();
    for (n, setup) in all.iter().enumerate() {
        if seen.iter().any(|&m| all[m].sensor == setup.sensor && all[m].policy == setup.policy) {
            continue;
        }
        seen.push(n);
        let tag = format!("sensor {n}");
        let chain = match fault {
            Some(Fault::PsiRowScale) => corrupt(&setup.chain),
            None => setup.chain.clone(),
        };
        chain_checks(&chain, &tag, &mut checks)?;

        // Interval averages against direct quadrature, worst relative error.
        let edges = setup.policy.thresholds();
        let mut worst: f64 = 0.0;
        for l in 0..setup.policy.levels() {
            let terms = interval_breakdown(
                &setup.sensor,
                &setup.detector,
                &setup.policy,
                &setup.chain,
                &setup.energy,
                l,
            )?;
            for t in terms {
                let reference = j_interval_quadrature(
                    &setup.sensor,
                    &setup.detector,
                    t.amplitude_sq.sqrt(),
                    edges[l],
                    edges[l + 1],
                )?;
                let closed = t.weighted / setup.chain.phi()[t.state].max(f64::MIN_POSITIVE);
                if setup.chain.phi()[t.state] > 0.0 && reference > 0.0 {
                    worst = worst.max((closed - reference).abs() / reference);
                }
            }
        }
        checks.push(Check::within(
            "detection-metrics",
            "avg_j_interval",
            format!("{tag} closed form vs quadrature (relative)"),
            worst,
            0.0,
            1e-6,
        ));

        let bc = empirical_battery_check(setup, slots, seed)?;
        checks.push(Check::within(
            "simulator",
            "empirical_battery_check",
            format!("{tag} occupancy sup-gap"),
            bc.sup_gap,
            0.0,
            0.01,
        ));
    }

    let (report, _) = simulate(cfg, &policies, slots, seed, 0)?;
    let analytic = analytic_pe(cfg, &policies, seed)?;
    checks.push(Check::within(
        "detection-metrics",
        "clt_error_prob",
        "CLT vs Monte-Carlo error probability",
        analytic,
        report.empirical_pe,
        0.02,
    ));

    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        method: cfg.method.to_string(),
        seed,
        slots,
        checks,
    })
}
