//! Per-sensor policy search: exhaustive grid, Recursive Random Search, and
//! the hybrid methods that fix thresholds by a quantizer rule and search
//! scales only.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{PolicyEvaluation, SensorSetup};
use crate::model::{derive_local_detector, EnergyModel, LocalDetector, NetworkConfig, Policy, Priors, SensorParams};

/// Grid resolution. Scales take `n_c` evenly spaced values on `[0, 1]`;
/// thresholds take `n_mu` values `μ_max/n_mu, 2μ_max/n_mu, ..., μ_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_c: usize,
    pub n_mu: usize,
    /// Threshold cap; `None` means `3√γ` for the sensor being solved.
    #[serde(default)]
    pub mu_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_c: 10,
            n_mu: 20,
            mu_max: None,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_c < 2 {
            return Err(Error::invalid("n_c", format!("must be at least 2, got {}", self.n_c)));
        }
        if self.n_mu < 2 {
            return Err(Error::invalid("n_mu", format!("must be at least 2, got {}", self.n_mu)));
        }
        if let Some(m) = self.mu_max {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::invalid("mu_max", format!("must be positive and finite, got {m}")));
            }
        }
        Ok(())
    }

    pub fn mu_max_for(&self, mean_sq_gain: f64) -> f64 {
        self.mu_max.unwrap_or(3.0 * mean_sq_gain.sqrt())
    }
}

/// The discrete search domain for one sensor. A point is an index vector:
/// `L` scale indices followed by `L-1` strictly increasing threshold indices
/// (omitted when thresholds are fixed).
#[derive(Debug, Clone)]
pub struct SearchSpace {
    levels: usize,
    n_c: usize,
    n_mu: usize,
    mu_max: f64,
    fixed_thresholds: Option<Vec<f64>>,
}

impl SearchSpace {
    pub fn full(grid: &GridSpec, levels: usize, mean_sq_gain: f64) -> Result<Self> {
        grid.validate()?;
        if levels == 0 {
            return Err(Error::invalid("levels", "must be at least 1"));
        }
        if levels - 1 > grid.n_mu {
            return Err(Error::invalid(
                "n_mu",
                format!("{} thresholds cannot fit {} strictly increasing values", grid.n_mu, levels - 1),
            ));
        }
        Ok(SearchSpace {
            levels,
            n_c: grid.n_c,
            n_mu: grid.n_mu,
            mu_max: grid.mu_max_for(mean_sq_gain),
            fixed_thresholds: None,
        })
    }

    /// Scales-only space with the given interior thresholds.
    pub fn scales_only(grid: &GridSpec, interior: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        // Validate thresholds through the policy constructor.
        Policy::from_interior(vec![0.0; interior.len() + 1], &interior)?;
        Ok(SearchSpace {
            levels: interior.len() + 1,
            n_c: grid.n_c,
            n_mu: grid.n_mu,
            mu_max: grid.mu_max_for(1.0),
            fixed_thresholds: Some(interior),
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dims(&self) -> usize {
        match self.fixed_thresholds {
            Some(_) => self.levels,
            None => 2 * self.levels - 1,
        }
    }

    pub fn scale_value(&self, i: usize) -> f64 {
        i as f64 / (self.n_c - 1) as f64
    }

    pub fn threshold_value(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.mu_max / self.n_mu as f64
    }

    fn upper(&self, d: usize) -> usize {
        if d < self.levels {
            self.n_c - 1
        } else {
            self.n_mu - 1
        }
    }

    /// Number of points: `n_c^L · C(n_mu, L-1)` (or `n_c^L` with fixed thresholds).
    pub fn size(&self) -> u128 {
        let scales = (self.n_c as u128).pow(self.levels as u32);
        if self.fixed_thresholds.is_some() {
            return scales;
        }
        let (n, k) = (self.n_mu as u128, (self.levels - 1) as u128);
        let mut comb = 1u128;
        for i in 0..k {
            comb = comb * (n - i) / (i + 1);
        }
        scales * comb
    }

    pub fn contains(&self, point: &[usize]) -> bool {
        if point.len() != self.dims() {
            return false;
        }
        if point.iter().enumerate().any(|(d, &v)| v > self.upper(d)) {
            return false;
        }
        point[self.levels.min(point.len())..].windows(2).all(|w| w[0] < w[1])
    }

    pub fn decode(&self, point: &[usize]) -> Result<Policy> {
        if !self.contains(point) {
            return Err(Error::invalid("point", format!("{point:?} is not on the grid")));
        }
        let scales = point[..self.levels].iter().map(|&i| self.scale_value(i)).collect();
        match &self.fixed_thresholds {
            Some(interior) => Policy::from_interior(scales, interior),
            None => {
                let interior: Vec<f64> =
                    point[self.levels..].iter().map(|&j| self.threshold_value(j)).collect();
                Policy::from_interior(scales, &interior)
            }
        }
    }

    /// Smallest point in lexicographic order.
    pub fn first(&self) -> Vec<usize> {
        let mut p = vec![0; self.dims()];
        for (t, v) in p[self.levels..].iter_mut().enumerate() {
            *v = t;
        }
        p
    }

    /// Advance `point` to its lexicographic successor; `false` at the end.
    pub fn advance(&self, point: &mut [usize]) -> bool {
        let dims = self.dims();
        let thresholds = dims - self.levels;
        for d in (0..dims).rev() {
            let cap = if d < self.levels {
                self.n_c - 1
            } else {
                // Leave room for the remaining strictly increasing indices.
                self.n_mu - 1 - (thresholds - 1 - (d - self.levels))
            };
            if point[d] < cap {
                point[d] += 1;
                for e in d + 1..dims {
                    point[e] = if e <= self.levels {
                        0
                    } else {
                        point[e - 1] + 1
                    };
                }
                return true;
            }
        }
        false
    }

    /// All points in lexicographic order.
    pub fn enumerate(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut p = self.first();
        loop {
            out.push(p.clone());
            if !self.advance(&mut p) {
                return out;
            }
        }
    }

    /// A uniformly distributed point.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.levels).map(|_| rng.gen_range(0..self.n_c)).collect();
        if self.fixed_thresholds.is_none() && self.levels > 1 {
            let mut t = index::sample(rng, self.n_mu, self.levels - 1).into_vec();
            t.sort_unstable();
            p.extend(t);
        }
        p
    }

    /// Chebyshev ball of radius `rho` around `center` in index space,
    /// clipped to the grid, excluding the center. Lexicographic order.
    pub fn neighborhood(&self, center: &[usize], rho: usize) -> Vec<Vec<usize>> {
        let dims = self.dims();
        let lo: Vec<usize> = center.iter().map(|&c| c.saturating_sub(rho)).collect();
        let hi: Vec<usize> = (0..dims).map(|d| (center[d] + rho).min(self.upper(d))).collect();
        let mut out = Vec::new();
        let mut p = lo.clone();
        loop {
            if p != center && self.contains(&p) {
                out.push(p.clone());
            }
            let mut d = dims;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if p[d] < hi[d] {
                    p[d] += 1;
                    break;
                }
                p[d] = lo[d];
            }
        }
    }

    /// Up to `count` distinct uniform draws from the radius-`rho` ball.
    fn sample_neighbors<R: Rng>(
        &self,
        center: &[usize],
        rho: usize,
        count: usize,
        rng: &mut R,
    ) -> Vec<Vec<usize>> {
        let box_size = (2 * rho as u128 + 1).checked_pow(self.dims() as u32);
        if box_size.is_some_and(|s| s <= 4096) {
            let all = self.neighborhood(center, rho);
            let take = count.min(all.len());
            return index::sample(rng, all.len(), take)
                .into_iter()
                .map(|i| all[i].clone())
                .collect();
        }
        // Rejection sampling from the box for high-dimensional balls.
        let mut picked: Vec<Vec<usize>> = Vec::with_capacity(count);
        let mut attempts = 0;
        while picked.len() < count && attempts < 10_000 * count {
            attempts += 1;
            let p: Vec<usize> = center
                .iter()
                .enumerate()
                .map(|(d, &c)| {
                    let lo = c.saturating_sub(rho);
                    let hi = (c + rho).min(self.upper(d));
                    rng.gen_range(lo..=hi)
                })
                .collect();
            if p.as_slice() != center && self.contains(&p) && !picked.contains(&p) {
                picked.push(p);
            }
        }
        picked
    }
}

/// Single-sensor problem (P2): maximize `Σ J̄` subject to `Σ P̄ ≤ 𝒫₀`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub sensor: SensorParams,
    pub energy: EnergyModel,
    pub priors: Priors,
    /// Average-power budget in W.
    pub power_budget: f64,
    detector: LocalDetector,
}

impl Problem {
    pub fn new(sensor: SensorParams, energy: EnergyModel, priors: Priors, power_budget: f64) -> Result<Self> {
        sensor.validate()?;
        energy.validate().map_err(|e| e.within("energy"))?;
        priors.validate()?;
        if !(power_budget > 0.0) {
            return Err(Error::invalid("power_budget", format!("must be positive, got {power_budget}")));
        }
        let detector = derive_local_detector(&sensor)?;
        Ok(Problem {
            sensor,
            energy,
            priors,
            power_budget,
            detector,
        })
    }

    pub fn detector(&self) -> &LocalDetector {
        &self.detector
    }

    pub fn setup(&self, policy: &Policy) -> Result<SensorSetup> {
        SensorSetup::with_transmit_prob(
            &self.sensor,
            &self.energy,
            self.detector,
            self.detector.transmit_prob(&self.priors),
            policy,
        )
    }

    pub fn evaluate(&self, policy: &Policy) -> Result<PolicyEvaluation> {
        self.setup(policy)?.evaluate()
    }

    pub fn is_feasible(&self, eval: &PolicyEvaluation) -> bool {
        eval.avg_power <= self.power_budget
    }
}

/// An evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub policy: Policy,
    pub indices: Vec<usize>,
    pub objective: f64,
    /// W.
    pub avg_power: f64,
    pub feasible: bool,
}

impl Candidate {
    fn build(problem: &Problem, space: &SearchSpace, point: &[usize], eval: PolicyEvaluation) -> Result<Self> {
        Ok(Candidate {
            policy: space.decode(point)?,
            indices: point.to_vec(),
            objective: eval.objective,
            avg_power: eval.avg_power,
            feasible: problem.is_feasible(&eval),
        })
    }
}

fn evaluate_point(problem: &Problem, space: &SearchSpace, point: &[usize]) -> Result<PolicyEvaluation> {
    problem.evaluate(&space.decode(point)?)
}

/// Exhaustive search. Returns the feasible maximizer; ties go to the
/// lexicographically smallest index vector.
pub fn grid_search(problem: &Problem, space: &SearchSpace) -> Result<Candidate> {
    const BATCH: usize = 4096;
    let mut best: Option<(Vec<usize>, PolicyEvaluation)> = None;
    let mut min_power = f64::INFINITY;
    let mut point = space.first();
    let mut done = false;
    while !done {
        let mut batch = Vec::with_capacity(BATCH);
        while batch.len() < BATCH {
            batch.push(point.clone());
            if !space.advance(&mut point) {
                done = true;
                break;
            }
        }
        let evals: Vec<PolicyEvaluation> = batch
            .par_iter()
            .map(|p| evaluate_point(problem, space, p))
            .collect::<Result<_>>()?;
        for (p, e) in batch.into_iter().zip(evals) {
            min_power = min_power.min(e.avg_power);
            if !problem.is_feasible(&e) {
                continue;
            }
            if best.as_ref().is_none_or(|(_, b)| e.objective > b.objective) {
                best = Some((p, e));
            }
        }
    }
    match best {
        Some((p, e)) => Candidate::build(problem, space, &p, e),
        None => Err(Error::Infeasible { min_power_w: min_power }),
    }
}

/// `Q₁ = ⌈ln(1-p) / ln(1-r)⌉`, at least 1.
pub fn exploration_count(p: f64, r: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) || !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("rrs", format!("p and r must lie in (0, 1), got p = {p}, r = {r}")));
    }
    // The slack keeps exact ratios (p = r) from rounding up an extra draw.
    let q = ((1.0 - p).ln() / (1.0 - r).ln() - 1e-9).ceil();
    Ok((q as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrsParams {
    pub p: f64,
    pub r: f64,
    pub q2: usize,
    pub rho0: usize,
}

impl RrsParams {
    pub fn random_default() -> Self {
        RrsParams {
            p: 0.99,
            r: 0.1,
            q2: 10,
            rho0: 3,
        }
    }

    pub fn hybrid_default() -> Self {
        RrsParams {
            q2: 3,
            ..Self::random_default()
        }
    }

    pub fn q1(&self) -> Result<usize> {
        exploration_count(self.p, self.r)
    }

    pub fn validate(&self) -> Result<()> {
        self.q1()?;
        if self.q2 == 0 {
            return Err(Error::invalid("q2", "must be at least 1"));
        }
        if self.rho0 == 0 {
            return Err(Error::invalid("rho0", "must be at least 1"));
        }
        Ok(())
    }
}

/// Memoized objective evaluations keyed by grid point.
struct Evaluator<'a> {
    problem: &'a Problem,
    space: &'a SearchSpace,
    cache: HashMap<Vec<usize>, PolicyEvaluation>,
}

impl<'a> Evaluator<'a> {
    fn batch(&mut self, points: &[Vec<usize>]) -> Result<Vec<PolicyEvaluation>> {
        let missing: Vec<&Vec<usize>> = {
            let mut seen = HashSet::new();
            points
                .iter()
                .filter(|p| !self.cache.contains_key(*p) && seen.insert(*p))
                .collect()
        };
        let fresh: Vec<PolicyEvaluation> = missing
            .par_iter()
            .map(|p| evaluate_point(self.problem, self.space, p))
            .collect::<Result<_>>()?;
        for (p, e) in missing.into_iter().zip(fresh) {
            self.cache.insert(p.clone(), e);
        }
        Ok(points.iter().map(|p| self.cache[p]).collect())
    }
}

/// Draws previously unseen points, uniformly at random. Switches to
/// shuffling the remainder once most of the grid has been seen.
struct FreshSampler {
    seen: HashSet<Vec<usize>>,
    remainder: Option<Vec<Vec<usize>>>,
}

impl FreshSampler {
    fn draw<R: Rng>(&mut self, space: &SearchSpace, rng: &mut R) -> Option<Vec<usize>> {
        if self.remainder.is_none() && (self.seen.len() as u128) * 2 >= space.size() {
            let mut rest: Vec<Vec<usize>> =
                space.enumerate().into_iter().filter(|p| !self.seen.contains(p)).collect();
            rest.shuffle(rng);
            self.remainder = Some(rest);
        }
        let p = match &mut self.remainder {
            Some(rest) => rest.pop()?,
            None => loop {
                let p = space.sample(rng);
                if !self.seen.contains(&p) {
                    break p;
                }
            },
        };
        self.seen.insert(p.clone());
        Some(p)
    }
}

/// Recursive Random Search over `space`.
pub fn rrs_solve(problem: &Problem, space: &SearchSpace, params: &RrsParams, seed: u64) -> Result<Candidate> {
    params.validate()?;
    let q1 = params.q1()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = Evaluator {
        problem,
        space,
        cache: HashMap::new(),
    };
    let mut sampler = FreshSampler {
        seen: HashSet::new(),
        remainder: None,
    };

    // Exploration: collect q1 feasible samples, replacing infeasible draws.
    let mut explored: Vec<(Vec<usize>, PolicyEvaluation)> = Vec::with_capacity(q1);
    let mut exhausted = false;
    while explored.len() < q1 && !exhausted {
        let need = q1 - explored.len();
        let mut draws = Vec::with_capacity(need);
        for _ in 0..need {
            match sampler.draw(space, &mut rng) {
                Some(p) => draws.push(p),
                None => {
                    exhausted = true;
                    break;
                }
            }
        }
        let evals = eval.batch(&draws)?;
        explored.extend(draws.into_iter().zip(evals).filter(|(_, e)| problem.is_feasible(e)));
    }
    if explored.len() < q1 {
        // Fewer feasible points than q1: everything has been evaluated.
        return best_of(problem, space, eval.cache.iter().map(|(p, e)| (p.clone(), *e)));
    }

    let j_tr = explored.iter().map(|(_, e)| e.objective).sum::<f64>() / q1 as f64;
    // q2 must stay below the smallest neighborhood to keep the draw random.
    let shell_one = 3usize.saturating_pow(space.dims() as u32) - 1;
    let q2 = params.q2.min(shell_one.saturating_sub(1).max(1));

    for slot in explored.iter_mut() {
        let (mut center, mut center_eval) = slot.clone();
        let mut shell = params.rho0;
        let mut realigns = 0;
        while shell > 0 {
            let draws = space.sample_neighbors(&center, shell, q2, &mut rng);
            let evals = eval.batch(&draws)?;
            let best = draws
                .into_iter()
                .zip(evals)
                .filter(|(_, e)| {
                    problem.is_feasible(e) && e.objective >= j_tr && e.objective > center_eval.objective
                })
                .fold(None::<(Vec<usize>, PolicyEvaluation)>, |acc, (p, e)| match acc {
                    Some((_, ref b)) if b.objective >= e.objective => acc,
                    _ => Some((p, e)),
                });
            match best {
                Some((p, e)) if realigns < q1 => {
                    center = p;
                    center_eval = e;
                    realigns += 1;
                }
                _ => shell -= 1,
            }
        }
        *slot = (center, center_eval);
    }
    best_of(problem, space, explored.into_iter())
}

fn best_of<I>(problem: &Problem, space: &SearchSpace, points: I) -> Result<Candidate>
where
    I: Iterator<Item = (Vec<usize>, PolicyEvaluation)>,
{
    let mut best: Option<(Vec<usize>, PolicyEvaluation)> = None;
    let mut min_power = f64::INFINITY;
    for (p, e) in points {
        min_power = min_power.min(e.avg_power);
        if !problem.is_feasible(&e) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bp, be)) => e.objective > be.objective || (e.objective == be.objective && p < *bp),
        };
        if better {
            best = Some((p, e));
        }
    }
    match best {
        Some((p, e)) => Candidate::build(problem, space, &p, e),
        None => Err(Error::Infeasible { min_power_w: min_power }),
    }
}

fn rayleigh_cdf(g: f64, gamma: f64) -> f64 {
    -(-g * g / gamma).exp_m1()
}

fn rayleigh_pdf(g: f64, gamma: f64) -> f64 {
    2.0 * g / gamma * (-g * g / gamma).exp()
}

/// Implied `F(μ_L)` from the MAE stationarity recursion seeded with `μ₁`;
/// `None` if the recursion leaves `[0, 1)` before the last step.
fn mmae_recursion(mu1: f64, gamma: f64, levels: usize) -> (f64, Vec<f64>) {
    let mut mu = vec![0.0, mu1];
    for l in 1..levels {
        let f_next = rayleigh_cdf(mu[l], gamma) + (mu[l] - mu[l - 1]) * rayleigh_pdf(mu[l], gamma);
        if l == levels - 1 {
            return (f_next, mu[1..].to_vec());
        }
        if f_next >= 1.0 {
            return (f_next.max(1.0 + 1e-12), mu[1..].to_vec());
        }
        // F^{-1}(u) = √(-γ ln(1 - u))
        mu.push((-gamma * (-f_next).ln_1p()).sqrt());
    }
    unreachable!("levels >= 2")
}

/// Interior thresholds minimizing the mean absolute quantization error of a
/// Rayleigh gain with `E{g²} = γ`, by shooting on `μ₁`.
pub fn mmae_thresholds(gamma: f64, levels: usize) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::invalid("levels", format!("MMAE needs at least 2 levels, got {levels}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("mean_sq_gain", format!("must be positive, got {gamma}")));
    }
    let (mut lo, mut hi) = (0.0_f64, 10.0 * gamma.sqrt());
    if mmae_recursion(hi, gamma, levels).0 < 1.0 {
        return Err(Error::invalid("mmae", "bisection failed to bracket the terminal condition"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mmae_recursion(mid, gamma, levels).0 < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (terminal, mu) = mmae_recursion(0.5 * (lo + hi), gamma, levels);
    if (terminal - 1.0).abs() >= 1e-9 || mu.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "mmae",
            format!("terminal residual {:e} not below 1e-9", (terminal - 1.0).abs()),
        ));
    }
    Ok(mu)
}

/// Interior thresholds giving `L` equal-probability cells for the gain.
pub fn moe_thresholds(gamma: f64, levels: usize) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::invalid("levels", format!("MOE needs at least 2 levels, got {levels}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("mean_sq_gain", format!("must be positive, got {gamma}")));
    }
    Ok((1..levels)
        .map(|l| (-gamma * (-(l as f64) / levels as f64).ln_1p()).sqrt())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grid,
    Rrs,
    HybridMmae,
    HybridMoe,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Grid, Method::Rrs, Method::HybridMmae, Method::HybridMoe];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Grid => "grid",
            Method::Rrs => "rrs",
            Method::HybridMmae => "hybrid-mmae",
            Method::HybridMoe => "hybrid-moe",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("method", format!("unknown method '{s}' (grid, rrs, hybrid-mmae, hybrid-moe)")))
    }
}

/// Solver knobs shared by every sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub grid: GridSpec,
    pub rrs: RrsParams,
    pub hybrid: RrsParams,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            grid: GridSpec::default(),
            rrs: RrsParams::random_default(),
            hybrid: RrsParams::hybrid_default(),
        }
    }
}

/// Threshold-fixing stage followed by RRS over the scales.
pub fn hybrid_solve(
    problem: &Problem,
    levels: usize,
    method: Method,
    grid: &GridSpec,
    params: &RrsParams,
    seed: u64,
) -> Result<Candidate> {
    let gamma = problem.sensor.mean_sq_gain;
    let interior = match (method, levels) {
        (_, 1) => Vec::new(),
        (Method::HybridMmae, _) => mmae_thresholds(gamma, levels)?,
        (Method::HybridMoe, _) => moe_thresholds(gamma, levels)?,
        _ => return Err(Error::invalid("method", format!("{method} is not a hybrid method"))),
    };
    let space = SearchSpace::scales_only(grid, interior)?;
    rrs_solve(problem, &space, params, seed)
}

/// Solve (P2) for one sensor with the chosen method.
pub fn solve(problem: &Problem, levels: usize, method: Method, settings: &SolverSettings, seed: u64) -> Result<Candidate> {
    match method {
        Method::Grid => grid_search(problem, &SearchSpace::full(&settings.grid, levels, problem.sensor.mean_sq_gain)?),
        Method::Rrs => rrs_solve(
            problem,
            &SearchSpace::full(&settings.grid, levels, problem.sensor.mean_sq_gain)?,
            &settings.rrs,
            seed,
        ),
        Method::HybridMmae | Method::HybridMoe => {
            hybrid_solve(problem, levels, method, &settings.grid, &settings.hybrid, seed)
        }
    }
}

/// (P1) decomposes into independent per-sensor problems. Every sensor uses
/// the same seed, so identical sensors get identical policies.
pub fn solve_p1(network: &NetworkConfig, method: Method, settings: &SolverSettings, seed: u64) -> Result<Vec<Result<Candidate>>> {
    network.validate()?;
    // Every sensor gets the same seed, so identical sensors share one solve.
    let mut out: Vec<Result<Candidate>> = Vec::with_capacity(network.sensors.len());
    for (n, s) in network.sensors.iter().enumerate() {
        let r = match network.sensors[..n].iter().position(|t| t == s) {
            Some(m) => match &out[m] {
                Ok(c) => Ok(c.clone()),
                Err(_) => solve_one(network, s, method, settings, seed),
            },
            None => solve_one(network, s, method, settings, seed),
        };
        out.push(r.map_err(|e| e.within(&format!("sensors[{n}]"))));
    }
    Ok(out)
}

fn solve_one(network: &NetworkConfig, s: &SensorParams, method: Method, settings: &SolverSettings, seed: u64) -> Result<Candidate> {
    Problem::new(*s, network.energy, network.priors, network.power_budget)
        .and_then(|p| solve(&p, network.levels, method, settings, seed))
}
