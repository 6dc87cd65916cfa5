//! Wealth exchange among `N` agents on a weighted graph.
//!
//! Each unordered pair `{i, j}` trades at rate `2 p(i, j)` with the map
//! `T^λ_ε`. Expected wealths then follow the rate-`(1-λ)` random walk:
//! `E[x_i(t)] = Σ_j p_{(1-λ)t}(i, j) x_j`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::exchange::{jump, ModelParams, WealthPair};
use crate::measures::RedistributionMeasure;
use crate::stats::{Estimate, MeanAccumulator, EQUALITY_SIGMAS};
use crate::trials::{exp_variate, stream, try_run_trials};

const KERNEL_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-10;
const POISSON_TAIL: f64 = 1e-13;

/// Symmetric stochastic jump matrix of the random walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkKernel {
    p: Vec<Vec<f64>>,
}

impl WalkKernel {
    pub fn size(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.p
    }

    /// Nearest-neighbour walk on a cycle of `n ≥ 2` sites.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("a ring needs at least 2 sites, got {n}")));
        }
        let mut p = vec![vec![0.0; n]; n];
        for (i, row) in p.iter_mut().enumerate() {
            row[(i + 1) % n] += 0.5;
            row[(i + n - 1) % n] += 0.5;
        }
        build_walk(p)
    }

    /// Uniform jumps to any other site.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("need at least 2 sites, got {n}")));
        }
        let q = 1.0 / (n - 1) as f64;
        build_walk(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { q }).collect())
                .collect(),
        )
    }

    /// `P v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.p.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Validates a symmetric stochastic matrix.
pub fn build_walk(weights: Vec<Vec<f64>>) -> Result<WalkKernel> {
    let n = weights.len();
    if n == 0 {
        return Err(invalid("kernel", "empty matrix"));
    }
    for (i, row) in weights.iter().enumerate() {
        if row.len() != n {
            return Err(invalid("kernel", format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid("kernel", format!("row {i} holds the entry {v}")));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let (pij, pji) = (weights[i][j], weights[j][i]);
            if (pij - pji).abs() > KERNEL_TOL {
                return Err(Error::AsymmetricKernel { i, j, pij, pji });
            }
        }
        let sum: f64 = weights[i].iter().sum();
        if (sum - 1.0).abs() > KERNEL_TOL {
            return Err(Error::RowSumViolation { row: i, sum });
        }
    }
    Ok(WalkKernel { p: weights })
}

/// Wealth per agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentConfig {
    pub x: Vec<f64>,
}

impl AgentConfig {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid("x0", format!("wealth must be nonnegative, got {v}")));
        }
        Ok(Self { x })
    }

    /// Unit wealth at one site.
    pub fn unit_at(n: usize, site: usize) -> Self {
        let mut x = vec![0.0; n];
        x[site] = 1.0;
        Self { x }
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }
}

/// Pairs `i < j` with positive weight and the global event clock.
struct PairClock {
    pairs: Vec<(usize, usize)>,
    rate: f64,
    pick: Option<WeightedIndex<f64>>,
}

impl PairClock {
    fn new(kernel: &WalkKernel) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut rates = Vec::new();
        for i in 0..kernel.size() {
            for j in i + 1..kernel.size() {
                if kernel.p(i, j) > 0.0 {
                    pairs.push((i, j));
                    rates.push(2.0 * kernel.p(i, j));
                }
            }
        }
        let rate = rates.iter().sum();
        // a single pair needs no draw, which keeps N = 2 on the two-agent stream
        let pick = if pairs.len() > 1 {
            Some(WeightedIndex::new(&rates).map_err(|e| invalid("kernel", e.to_string()))?)
        } else {
            None
        };
        Ok(Self { pairs, rate, pick })
    }

    fn next<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        match &self.pick {
            Some(w) => self.pairs[w.sample(rng)],
            None => self.pairs[0],
        }
    }
}

fn check_model(x0: &AgentConfig, lambda: f64, measure: &RedistributionMeasure, kernel: &WalkKernel) -> Result<ModelParams> {
    measure.require_s_independent()?;
    let mean = measure.mean(1.0)?;
    if (mean - 0.5).abs() > MEAN_TOL {
        return Err(Error::AsymmetricMean { mean });
    }
    if x0.x.len() != kernel.size() {
        return Err(invalid("x0", format!("{} agents on a {}-site kernel", x0.x.len(), kernel.size())));
    }
    AgentConfig::new(x0.x.clone())?;
    ModelParams::wealth(lambda)
}

/// Event times and the configuration after each event; the last entry is
/// the state at `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NAgentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

fn run<R: Rng + ?Sized>(
    x0: &AgentConfig,
    lambda: f64,
    measure: &RedistributionMeasure,
    kernel: &WalkKernel,
    t_end: f64,
    rng: &mut R,
    mut record: impl FnMut(f64, &[f64]),
) -> Result<(Vec<f64>, usize)> {
    let params = check_model(x0, lambda, measure, kernel)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("t_end", format!("must be nonnegative, got {t_end}")));
    }
    let clock = PairClock::new(kernel)?;
    let mut x = x0.x.clone();
    let mut events = 0;
    if t_end == 0.0 || clock.pairs.is_empty() {
        return Ok((x, 0));
    }
    let mut t = 0.0;
    loop {
        t += exp_variate(rng, clock.rate);
        if t > t_end {
            return Ok((x, events));
        }
        let (i, j) = clock.next(rng);
        let next = jump(WealthPair { x: x[i], y: x[j] }, &params, measure, rng)?;
        x[i] = next.x;
        x[j] = next.y;
        events += 1;
        record(t, &x);
    }
}

pub fn simulate_nagent<R: Rng + ?Sized>(
    x0: &AgentConfig,
    lambda: f64,
    measure: &RedistributionMeasure,
    kernel: &WalkKernel,
    t_end: f64,
    rng: &mut R,
) -> Result<NAgentTrajectory> {
    let mut traj = NAgentTrajectory {
        times: vec![0.0],
        states: vec![x0.x.clone()],
    };
    let (end, _) = run(x0, lambda, measure, kernel, t_end, rng, |t, x| {
        traj.times.push(t);
        traj.states.push(x.to_vec());
    })?;
    traj.times.push(t_end);
    traj.states.push(end);
    Ok(traj)
}

/// Final configuration and event count of [`simulate_nagent`].
pub fn simulate_nagent_endpoint<R: Rng + ?Sized>(
    x0: &AgentConfig,
    lambda: f64,
    measure: &RedistributionMeasure,
    kernel: &WalkKernel,
    t_end: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    run(x0, lambda, measure, kernel, t_end, rng, |_, _| {})
}

/// `exp(t(P - I))` by uniformization: Poisson(t)-weighted powers of `P`.
pub fn heat_kernel(kernel: &WalkKernel, t: f64) -> Result<Vec<Vec<f64>>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be nonnegative, got {t}")));
    }
    let n = kernel.size();
    let mut power: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    let mut out = vec![vec![0.0; n]; n];
    if t == 0.0 {
        return Ok(power);
    }
    let mut k = 0u64;
    loop {
        let w = (-t + k as f64 * t.ln() - ln_gamma(k as f64 + 1.0)).exp();
        for (o, pw) in out.iter_mut().zip(&power) {
            for (a, b) in o.iter_mut().zip(pw) {
                *a += w * b;
            }
        }
        // past the mode the tail is at most w · t/(k+2-t) summed geometrically
        let ratio = t / (k as f64 + 2.0);
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < POISSON_TAIL {
            return Ok(out);
        }
        power = power
            .iter()
            .map(|row| (0..n).map(|j| (0..n).map(|m| row[m] * kernel.p(m, j)).sum()).collect())
            .collect();
        k += 1;
    }
}

/// `Σ_j p_{(1-λ)t}(i, j) x_j` for every agent.
pub fn expected_wealth(x0: &AgentConfig, lambda: f64, kernel: &WalkKernel, t: f64) -> Result<Vec<f64>> {
    let pt = heat_kernel(kernel, (1.0 - lambda) * t)?;
    Ok(pt.iter().map(|row| row.iter().zip(&x0.x).map(|(p, x)| p * x).sum()).collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AgentMeanRow {
    pub agent: usize,
    pub mc: Estimate,
    pub analytic: f64,
    pub pass: bool,
}

/// Monte Carlo `E[x_i(t)]` against the heat-kernel prediction.
#[allow(clippy::too_many_arguments)]
pub fn expected_wealth_check(
    x0: &AgentConfig,
    lambda: f64,
    measure: &RedistributionMeasure,
    kernel: &WalkKernel,
    t: f64,
    trials: u64,
    seed: u64,
) -> Result<Vec<AgentMeanRow>> {
    let ends = try_run_trials(seed, stream::NAGENT, trials, |_, rng| {
        simulate_nagent_endpoint(x0, lambda, measure, kernel, t, rng).map(|e| e.0)
    })?;
    let analytic = expected_wealth(x0, lambda, kernel, t)?;
    Ok(analytic
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mc = ends.iter().map(|x| x[i]).collect::<MeanAccumulator>().estimate();
            AgentMeanRow {
                agent: i,
                mc,
                analytic: a,
                pass: mc.within(a, EQUALITY_SIGMAS),
            }
        })
        .collect())
}

/// `P ρ - ρ` with `ρ_i = E_μ[x_i]`, estimated from configurations drawn
/// from `μ`.
pub fn harmonicity_check(samples: &[Vec<f64>], kernel: &WalkKernel) -> Vec<Estimate> {
    (0..kernel.size())
        .map(|i| {
            samples
                .iter()
                .map(|x| kernel.apply(x)[i] - x[i])
                .collect::<MeanAccumulator>()
                .estimate()
        })
        .collect()
}
