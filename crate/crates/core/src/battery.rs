//! Battery-state Markov chain: arrivals, gain-interval probabilities,
//! transition matrix and its stationary distribution.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Policy;

/// Pmf of the number of cells stored per slot: Poisson arrivals clipped at
/// the battery capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalPmf(Vec<f64>);

impl ArrivalPmf {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn capacity(&self) -> usize {
        self.0.len() - 1
    }
}

/// `q_e = e^{-ρ}ρ^e/e!` for `e < K`, with `q_K` absorbing the tail.
pub fn clipped_poisson(rate: f64, capacity: usize) -> Result<ArrivalPmf> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid("arrival_rate", format!("must be positive, got {rate}")));
    }
    if capacity < 1 {
        return Err(Error::invalid("capacity", "must be at least 1"));
    }
    let mut q = Vec::with_capacity(capacity + 1);
    let mut p = (-rate).exp();
    let mut head = 0.0;
    for e in 0..capacity {
        q.push(p);
        head += p;
        p *= rate / (e + 1) as f64;
    }
    // When the head already holds most of the mass, summing the tail directly
    // is more accurate than 1 - head.
    let tail = if head > 0.5 {
        let mut tail = 0.0;
        let mut term = p;
        let mut e = capacity;
        while term > 1e-300 && e < capacity + 10_000 {
            tail += term;
            e += 1;
            term *= rate / e as f64;
            if term < 1e-18 * tail {
                break;
            }
        }
        tail
    } else {
        (1.0 - head).max(0.0)
    };
    q.push(tail);
    Ok(ArrivalPmf(q))
}

/// Probability of each gain interval under Rayleigh fading,
/// `π_l = exp(-μ_l²/γ) - exp(-μ_{l+1}²/γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalProbs(Vec<f64>);

impl IntervalProbs {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

pub fn interval_probs(mean_sq_gain: f64, thresholds: &[f64]) -> Result<IntervalProbs> {
    if !(mean_sq_gain > 0.0) {
        return Err(Error::invalid("mean_sq_gain", "must be positive"));
    }
    if thresholds.len() < 2 {
        return Err(Error::invalid("thresholds", "need at least two edges"));
    }
    let survival = |mu: f64| (-mu * mu / mean_sq_gain).exp();
    Ok(IntervalProbs(
        thresholds
            .windows(2)
            .map(|w| survival(w[0]) - survival(w[1]))
            .collect(),
    ))
}

/// Battery state at the start of the next slot: `min([i + s - d]^+, K)`.
pub fn next_state(state: usize, stored: usize, consumed: usize, capacity: usize) -> Result<usize> {
    if state > capacity {
        return Err(Error::OutOfRange {
            what: "battery state",
            value: state,
            limit: capacity,
        });
    }
    if consumed > state {
        return Err(Error::OutOfRange {
            what: "consumed units",
            value: consumed,
            limit: state,
        });
    }
    Ok((state + stored - consumed).min(capacity))
}

/// Transition matrix `Ψ` (row-major) with its stationary vector `Φ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryChain {
    size: usize,
    psi: Vec<f64>,
    phi: Vec<f64>,
}

impl BatteryChain {
    /// Assemble a chain from raw parts without any checks. Meant for fault
    /// injection and for comparing against externally computed matrices.
    pub fn from_raw(psi: Vec<Vec<f64>>, phi: Vec<f64>) -> Self {
        let size = phi.len();
        BatteryChain {
            size,
            psi: psi.into_iter().flatten().collect(),
            phi,
        }
    }

    pub fn capacity(&self) -> usize {
        self.size - 1
    }

    pub fn psi(&self, i: usize, j: usize) -> f64 {
        self.psi[i * self.size + j]
    }

    pub fn psi_row(&self, i: usize) -> &[f64] {
        &self.psi[i * self.size..(i + 1) * self.size]
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `max_i |Σ_j ψ_ij - 1|`.
    pub fn row_sum_deviation(&self) -> f64 {
        (0..self.size)
            .map(|i| (self.psi_row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `‖Φ - ΦΨ‖∞`.
    pub fn stationarity_residual(&self) -> f64 {
        (0..self.size)
            .map(|j| {
                let flow: f64 = (0..self.size).map(|i| self.phi[i] * self.psi(i, j)).sum();
                (flow - self.phi[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Write `Ψ` followed by `Φ` as CSV, full precision.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# psi ({}x{}, row-major)", self.size, self.size)?;
        for i in 0..self.size {
            let row: Vec<String> = self.psi_row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        writeln!(out, "# phi")?;
        let row: Vec<String> = self.phi.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))
    }
}

/// Build `Ψ` for a policy and solve `Φ = -(Ψᵀ - I - B)⁻¹ 1`.
///
/// `transmit_prob` is `Π̂₁`, the probability that the local detector fires in
/// a slot; with probability `1 - Π̂₁` nothing is consumed.
pub fn build_chain(
    policy: &Policy,
    arrivals: &ArrivalPmf,
    intervals: &IntervalProbs,
    transmit_prob: f64,
) -> Result<BatteryChain> {
    if !(0.0..=1.0).contains(&transmit_prob) {
        return Err(Error::invalid(
            "transmit_prob",
            format!("must lie in [0, 1], got {transmit_prob}"),
        ));
    }
    if intervals.probs().len() != policy.levels() {
        return Err(Error::invalid(
            "intervals",
            "interval count does not match policy levels",
        ));
    }
    let capacity = arrivals.capacity();
    let n = capacity + 1;
    let q = arrivals.probs();
    let pi = intervals.probs();
    let mut psi = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut psi[i * n..(i + 1) * n];
        for (e, &qe) in q.iter().enumerate() {
            row[(i + e).min(capacity)] += (1.0 - transmit_prob) * qe;
        }
        for (l, &pl) in pi.iter().enumerate() {
            let d = policy.consumed_units(l, i);
            let w = transmit_prob * pl;
            for (e, &qe) in q.iter().enumerate() {
                row[(i + e - d).min(capacity)] += w * qe;
            }
        }
    }
    let mut chain = BatteryChain {
        size: n,
        psi,
        phi: Vec::new(),
    };
    let dev = chain.row_sum_deviation();
    if dev > 1e-8 {
        return Err(Error::ChainConstruction(format!(
            "row sums deviate from 1 by {dev:e}"
        )));
    }
    chain.phi = stationary_closed_form(&chain)?;
    let residual = chain.stationarity_residual();
    if residual > 1e-8 {
        return Err(Error::ChainConstruction(format!(
            "stationarity residual {residual:e}"
        )));
    }
    Ok(chain)
}

fn stationary_closed_form(chain: &BatteryChain) -> Result<Vec<f64>> {
    let n = chain.size;
    // A = Ψᵀ - I - B, B the all-ones matrix.
    let a = DMatrix::from_fn(n, n, |r, c| {
        chain.psi(c, r) - if r == c { 1.0 } else { 0.0 } - 1.0
    });
    let ones = DVector::from_element(n, 1.0);
    let sol = a
        .lu()
        .solve(&ones)
        .ok_or_else(|| Error::ChainConstruction("singular system for the stationary vector".into()))?;
    let mut phi: Vec<f64> = sol.iter().map(|v| -v).collect();
    if phi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::ChainConstruction(format!(
            "stationary vector has invalid entries: {phi:?}"
        )));
    }
    for v in phi.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = phi.iter().sum();
    for v in phi.iter_mut() {
        *v /= total;
    }
    Ok(phi)
}

/// Summary of the stationary battery level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryStats {
    pub mean: f64,
    pub p_empty: f64,
    pub p_full: f64,
}

pub fn battery_stats(chain: &BatteryChain) -> BatteryStats {
    let phi = chain.phi();
    BatteryStats {
        mean: phi.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        p_empty: phi[0],
        p_full: phi[phi.len() - 1],
    }
}
