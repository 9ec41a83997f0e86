//! Shared fixtures for the benchmarks and the scaling probe.

use ehwsn_core::{EnergyModel, Policy, Priors, Problem, SensorParams};

pub fn desk_sensor() -> SensorParams {
    SensorParams::with_snr_db(2.0, 1e-3, 3.0, 0.9)
}

pub fn energy(capacity: usize) -> EnergyModel {
    EnergyModel { arrival_rate: 2.0, capacity, unit_energy: 0.01, slot_duration: 10.0 }
}

pub fn desk_problem(capacity: usize, budget: f64) -> Problem {
    Problem::new(desk_sensor(), energy(capacity), Priors::equal(), budget).expect("valid desk problem")
}

pub fn three_level_policy() -> Policy {
    Policy::from_interior(vec![0.2, 0.6, 0.4], &[0.8, 1.6]).expect("valid policy")
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
