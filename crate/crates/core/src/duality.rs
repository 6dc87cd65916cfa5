//! Discrete dual chains of the two-agent models.
//!
//! Energy model: `D(n, m; x, y) = x^n y^m / c_nm` with `c_nm` the joint
//! moments of an invariant reference measure. The dual lives on the level set
//! `n + m = N` and jumps from `(n, m)` to `(k, N-k)` at rate
//! `C(N,k) ν_nm c_{k,N-k} / c_nm`.
//!
//! Wealth model: on `x + y = 1` the function `r^n1 (1-r)^n2 / α(n1, n2)`
//! is dual to a chain that only loses particles.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exchange::{simulate_endpoint, ModelParams, WealthPair};
use crate::measures::{Family, RedistributionMeasure};
use crate::stationary::{AlphaTable, SLaw};
use crate::stats::{Estimate, MeanAccumulator, EQUALITY_SIGMAS};
use crate::trials::{exp_variate, run_trials, stream, try_run_trials};

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Γ(k+n) / Γ(k)`.
fn rising(k: f64, n: u32) -> f64 {
    (0..n).map(|i| k + i as f64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DualState {
    pub n: u32,
    pub m: u32,
}

impl DualState {
    pub fn new(n: u32, m: u32) -> Self {
        Self { n, m }
    }

    pub fn total(&self) -> u32 {
        self.n + self.m
    }
}

/// Off-diagonal rates of a dual chain on a finite state set.
#[derive(Debug, Clone)]
pub struct DualRateTable {
    /// Conserved total for the energy dual.
    pub level: Option<u32>,
    states: Vec<DualState>,
    index: HashMap<DualState, usize>,
    out: Vec<Vec<(usize, f64)>>,
}

impl DualRateTable {
    fn from_rows(level: Option<u32>, rows: Vec<(DualState, Vec<(DualState, f64)>)>) -> Result<Self> {
        let states: Vec<DualState> = rows.iter().map(|(s, _)| *s).collect();
        let index: HashMap<DualState, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut out = Vec::with_capacity(rows.len());
        for (from, targets) in rows {
            let mut row = Vec::with_capacity(targets.len());
            for (to, q) in targets {
                if !(q >= -1e-14 && q.is_finite()) {
                    return Err(invalid("rate", format!("{from:?} -> {to:?} has rate {q}")));
                }
                if to == from || q <= 0.0 {
                    continue;
                }
                let j = *index
                    .get(&to)
                    .ok_or_else(|| invalid("rate", format!("target {to:?} outside the state set")))?;
                row.push((j, q));
            }
            out.push(row);
        }
        Ok(Self {
            level,
            states,
            index,
            out,
        })
    }

    pub fn states(&self) -> &[DualState] {
        &self.states
    }

    /// Rate from `from` to `to`, zero when absent.
    pub fn rate(&self, from: DualState, to: DualState) -> f64 {
        let (Some(&i), Some(&j)) = (self.index.get(&from), self.index.get(&to)) else {
            return 0.0;
        };
        self.out[i].iter().find(|(k, _)| *k == j).map_or(0.0, |(_, q)| *q)
    }

    pub fn exit_rate(&self, state: DualState) -> f64 {
        self.index
            .get(&state)
            .map_or(0.0, |&i| self.out[i].iter().map(|(_, q)| q).sum())
    }

    /// All off-diagonal transitions as `(from, to, rate)`.
    pub fn transitions(&self) -> impl Iterator<Item = (DualState, DualState, f64)> + '_ {
        self.out.iter().enumerate().flat_map(move |(i, row)| {
            row.iter().map(move |&(j, q)| (self.states[i], self.states[j], q))
        })
    }
}

/// An invariant reference measure for the energy model.
#[derive(Debug, Clone)]
pub enum Reference {
    /// Product of two Gamma(shape, rate 1) laws.
    ProductGamma { shape: f64 },
    /// Mixture of canonical measures `(εS, (1-ε)S)` with `S` independent of `ε`.
    GrandCanonical {
        measure: RedistributionMeasure,
        s_law: SLaw,
    },
    /// Samples from an invariant measure.
    Sampled(Vec<WealthPair>),
}

impl Reference {
    /// Product Gamma reference when ν is Beta(k, k), canonical at `s = 1`
    /// otherwise.
    pub fn default_for(measure: &RedistributionMeasure) -> Result<Self> {
        measure.require_s_independent()?;
        Ok(match *measure.family() {
            Family::Uniform => Self::ProductGamma { shape: 1.0 },
            Family::Beta { a, b } if a == b => Self::ProductGamma { shape: a },
            _ => Self::GrandCanonical {
                measure: measure.clone(),
                s_law: SLaw::PointMass(1.0),
            },
        })
    }
}

/// `c_nm = ∫ x^n y^m μ0(dx dy)`, with a standard error for sampled references.
pub fn c_moments(reference: &Reference, n: u32, m: u32) -> Result<Estimate> {
    let exact = |estimate| Estimate { estimate, stderr: 0.0 };
    match reference {
        Reference::ProductGamma { shape } => Ok(exact(rising(*shape, n) * rising(*shape, m))),
        Reference::GrandCanonical { measure, s_law } => {
            measure.require_s_independent()?;
            match s_law.raw_moment(n + m) {
                Some(sn) => Ok(exact(measure.moment_nm(n, m, 1.0)? * sn)),
                None => Err(invalid("reference", "custom total law needs a sampled reference")),
            }
        }
        Reference::Sampled(samples) => {
            if samples.is_empty() {
                return Err(invalid("reference", "no samples"));
            }
            Ok(samples
                .iter()
                .map(|p| p.x.powi(n as i32) * p.y.powi(m as i32))
                .collect::<MeanAccumulator>()
                .estimate())
        }
    }
}

/// `c_nm` for all `n + m ≤ max_order`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTable {
    pub max_order: u32,
    c: BTreeMap<(u32, u32), Estimate>,
}

impl MomentTable {
    pub fn build(reference: &Reference, max_order: u32) -> Result<Self> {
        let mut c = BTreeMap::new();
        for total in 0..=max_order {
            for n in 0..=total {
                let e = c_moments(reference, n, total - n)?;
                if !(e.estimate > 0.0) {
                    return Err(invalid("reference", format!("c_{n},{} = {}", total - n, e.estimate)));
                }
                c.insert((n, total - n), e);
            }
        }
        Ok(Self { max_order, c })
    }

    pub fn c(&self, n: u32, m: u32) -> f64 {
        self.entry(n, m).estimate
    }

    pub fn entry(&self, n: u32, m: u32) -> Estimate {
        *self
            .c
            .get(&(n, m))
            .unwrap_or_else(|| panic!("c_{n},{m} beyond the table order {}", self.max_order))
    }
}

/// Coefficients of `L f_nm = Σ a_{nm;rs} f_rs`, `f_nm = x^n y^m`:
/// `a_{nm;k,N-k} = C(N,k) ν_nm`, minus one on the diagonal.
pub fn energy_generator_coeffs(
    measure: &RedistributionMeasure,
    n: u32,
    m: u32,
) -> Result<BTreeMap<(u32, u32), f64>> {
    measure.require_s_independent()?;
    let level = n + m;
    let nu = measure.moment_nm(n, m, 1.0)?;
    Ok((0..=level)
        .map(|k| {
            let diag = if k == n { 1.0 } else { 0.0 };
            ((k, level - k), binomial(level, k) * nu - diag)
        })
        .collect())
}

/// Energy dual rates on the level set `n + m = level`:
/// `q_{nm,rs} = a_{nm;rs} c_rs / c_nm`.
pub fn energy_dual_rates(
    measure: &RedistributionMeasure,
    ctable: &MomentTable,
    level: u32,
) -> Result<DualRateTable> {
    if level > ctable.max_order {
        return Err(invalid("level", format!("{level} beyond the moment table order")));
    }
    let mut rows = Vec::new();
    for n in 0..=level {
        let m = level - n;
        let from = DualState::new(n, m);
        let coeffs = energy_generator_coeffs(measure, n, m)?;
        let targets = coeffs
            .into_iter()
            .filter(|&(rs, _)| rs != (n, m))
            .map(|((r, s), a)| (DualState::new(r, s), a * ctable.c(r, s) / ctable.c(n, m)))
            .collect();
        rows.push((from, targets));
    }
    DualRateTable::from_rows(Some(level), rows)
}

pub fn duality_fn_energy(ctable: &MomentTable, n: u32, m: u32, x: f64, y: f64) -> f64 {
    x.powi(n as i32) * y.powi(m as i32) / ctable.c(n, m)
}

/// `r^n1 (1-r)^n2 / α(n1, n2)`, the wealth duality function on `x + y = 1`.
pub fn duality_fn_wealth(alpha: &AlphaTable, n1: u32, n2: u32, x: f64, y: f64) -> f64 {
    x.powi(n1 as i32) * y.powi(n2 as i32) / alpha.joint(n1 as usize, n2 as usize)
}

fn check_order(alpha: &AlphaTable, total: u32) -> Result<()> {
    if total as usize > alpha.max_order() {
        return Err(invalid("n", format!("order {total} beyond the α table")));
    }
    Ok(())
}

/// Rates `n → k < n` of the one-site wealth dual:
/// `(α_k/α_n) C(n,k) λ^k (1-λ)^{n-k} m_{n-k}`.
pub fn wealth_dual_rates_r(
    measure: &RedistributionMeasure,
    alpha: &AlphaTable,
    n: u32,
) -> Result<BTreeMap<u32, f64>> {
    check_order(alpha, n)?;
    let lambda = alpha.lambda();
    let mut rates = BTreeMap::new();
    for k in 0..n {
        let a = binomial(n, k)
            * lambda.powi(k as i32)
            * (1.0 - lambda).powi((n - k) as i32)
            * measure.moment_nm(n - k, 0, 1.0)?;
        rates.insert(k, a * alpha.alpha(k as usize) / alpha.alpha(n as usize));
    }
    Ok(rates)
}

/// Rates `(n1, n2) → (k1, k2)` of the two-index wealth dual.
pub fn wealth_dual_rates_2d(
    measure: &RedistributionMeasure,
    alpha: &AlphaTable,
    (n1, n2): (u32, u32),
) -> Result<BTreeMap<(u32, u32), f64>> {
    check_order(alpha, n1 + n2)?;
    let lambda = alpha.lambda();
    let norm = alpha.joint(n1 as usize, n2 as usize);
    let mut rates = BTreeMap::new();
    for k1 in 0..=n1 {
        for k2 in 0..=n2 {
            if (k1, k2) == (n1, n2) {
                continue;
            }
            let lost = n1 + n2 - k1 - k2;
            let a = binomial(n1, k1)
                * binomial(n2, k2)
                * lambda.powi((k1 + k2) as i32)
                * (1.0 - lambda).powi(lost as i32)
                * measure.moment_nm(n1 - k1, n2 - k2, 1.0)?;
            rates.insert((k1, k2), a * alpha.joint(k1 as usize, k2 as usize) / norm);
        }
    }
    Ok(rates)
}

/// Wealth dual on the box `{(k1, k2) : k1 ≤ n1, k2 ≤ n2}`.
pub fn wealth_dual_table(
    measure: &RedistributionMeasure,
    alpha: &AlphaTable,
    top: (u32, u32),
) -> Result<DualRateTable> {
    let mut rows = Vec::new();
    for n1 in 0..=top.0 {
        for n2 in 0..=top.1 {
            let targets = wealth_dual_rates_2d(measure, alpha, (n1, n2))?
                .into_iter()
                .map(|((k1, k2), q)| (DualState::new(k1, k2), q))
                .collect();
            rows.push((DualState::new(n1, n2), targets));
        }
    }
    DualRateTable::from_rows(None, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DualState>,
}

impl DualTrajectory {
    pub fn final_state(&self) -> DualState {
        *self.states.last().expect("trajectory holds the initial state")
    }
}

fn dual_step<R: Rng + ?Sized>(table: &DualRateTable, i: usize, rng: &mut R) -> Option<(f64, usize)> {
    let row = &table.out[i];
    let total: f64 = row.iter().map(|(_, q)| q).sum();
    if total <= 0.0 {
        return None;
    }
    let wait = exp_variate(rng, total);
    let mut u = rng.random::<f64>() * total;
    for &(j, q) in row {
        if u < q {
            return Some((wait, j));
        }
        u -= q;
    }
    Some((wait, row[row.len() - 1].0))
}

fn locate(table: &DualRateTable, state: DualState) -> Result<usize> {
    table
        .index
        .get(&state)
        .copied()
        .ok_or_else(|| invalid("initial", format!("{state:?} is not in the dual state set")))
}

/// Continuous-time jump chain with the table's rates.
pub fn simulate_dual<R: Rng + ?Sized>(
    table: &DualRateTable,
    initial: DualState,
    t_end: f64,
    rng: &mut R,
) -> Result<DualTrajectory> {
    let mut i = locate(table, initial)?;
    let mut traj = DualTrajectory {
        times: vec![0.0],
        states: vec![initial],
    };
    let mut t = 0.0;
    while let Some((wait, j)) = dual_step(table, i, rng) {
        t += wait;
        if t > t_end {
            break;
        }
        i = j;
        traj.times.push(t);
        traj.states.push(table.states[j]);
    }
    traj.times.push(t_end);
    traj.states.push(table.states[i]);
    Ok(traj)
}

/// Endpoint of [`simulate_dual`] on the same random stream.
pub fn simulate_dual_endpoint<R: Rng + ?Sized>(
    table: &DualRateTable,
    initial: DualState,
    t_end: f64,
    rng: &mut R,
) -> Result<DualState> {
    let mut i = locate(table, initial)?;
    let mut t = 0.0;
    while let Some((wait, j)) = dual_step(table, i, rng) {
        t += wait;
        if t > t_end {
            break;
        }
        i = j;
    }
    Ok(table.states[i])
}

/// Which model a duality check runs against.
#[derive(Debug, Clone)]
pub enum DualModel {
    Energy {
        measure: RedistributionMeasure,
        ctable: MomentTable,
    },
    Wealth {
        measure: RedistributionMeasure,
        alpha: AlphaTable,
    },
}

impl DualModel {
    pub fn energy(measure: RedistributionMeasure, max_order: u32) -> Result<Self> {
        let ctable = MomentTable::build(&Reference::default_for(&measure)?, max_order)?;
        Ok(Self::Energy { measure, ctable })
    }

    pub fn wealth(measure: RedistributionMeasure, lambda: f64, max_order: u32) -> Result<Self> {
        let alpha = AlphaTable::new(lambda, &measure, max_order as usize)?;
        Ok(Self::Wealth { measure, alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Energy { .. } => "energy",
            Self::Wealth { .. } => "wealth",
        }
    }

    fn measure(&self) -> &RedistributionMeasure {
        match self {
            Self::Energy { measure, .. } | Self::Wealth { measure, .. } => measure,
        }
    }

    fn params(&self) -> Result<ModelParams> {
        match self {
            Self::Energy { .. } => Ok(ModelParams::energy()),
            Self::Wealth { alpha, .. } => ModelParams::wealth(alpha.lambda()),
        }
    }

    fn duality_fn(&self, n: u32, m: u32, x: f64, y: f64) -> f64 {
        match self {
            Self::Energy { ctable, .. } => duality_fn_energy(ctable, n, m, x, y),
            Self::Wealth { alpha, .. } => duality_fn_wealth(alpha, n, m, x, y),
        }
    }

    fn dual_table(&self, n: u32, m: u32) -> Result<DualRateTable> {
        match self {
            Self::Energy { measure, ctable } => energy_dual_rates(measure, ctable, n + m),
            Self::Wealth { measure, alpha } => wealth_dual_table(measure, alpha, (n, m)),
        }
    }

    fn check_start(&self, x: f64, y: f64) -> Result<()> {
        if let Self::Wealth { .. } = self {
            if (x + y - 1.0).abs() > 1e-12 {
                return Err(Error::UnnormalizedTotal { total: x + y });
            }
        }
        Ok(())
    }
}

/// Both sides of `E_{x,y} D(n,m; X_t,Y_t) = Ê_{n,m} D(N_t,M_t; x,y)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualityRow {
    pub model: &'static str,
    pub n: u32,
    pub m: u32,
    pub t: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub pass: bool,
}

fn compare(model: &'static str, n: u32, m: u32, t: f64, lhs: Estimate, rhs: Estimate) -> DualityRow {
    let gap = (lhs.estimate - rhs.estimate).abs();
    DualityRow {
        model,
        n,
        m,
        t,
        lhs,
        rhs,
        pass: gap <= EQUALITY_SIGMAS * (lhs.stderr + rhs.stderr),
    }
}

/// Seed for one `(n, m, t)` cell of a batch of dual runs.
fn cell_seed(seed: u64, cell: u64) -> u64 {
    seed ^ ((cell + 1) << 40)
}

fn dual_side(
    model: &DualModel,
    table: &DualRateTable,
    (n, m): (u32, u32),
    (x, y): (f64, f64),
    t: f64,
    trials: u64,
    seed: u64,
) -> Result<Estimate> {
    let values = try_run_trials(seed, stream::DUAL, trials, |_, rng| {
        let end = simulate_dual_endpoint(table, DualState::new(n, m), t, rng)?;
        Ok::<_, Error>(model.duality_fn(end.n, end.m, x, y))
    })?;
    Ok(values.into_iter().collect::<MeanAccumulator>().estimate())
}

fn forward_endpoints(model: &DualModel, x: f64, y: f64, t: f64, trials: u64, seed: u64) -> Result<Vec<WealthPair>> {
    let params = model.params()?;
    let start = WealthPair::new(x, y)?;
    try_run_trials(seed, stream::FORWARD, trials, |_, rng| {
        simulate_endpoint(start, &params, model.measure(), t, rng).map(|(p, _)| p)
    })
}

/// Two-sided Monte Carlo check of the duality relation at one `(n, m, t)`.
#[allow(clippy::too_many_arguments)]
pub fn duality_check(
    model: &DualModel,
    x: f64,
    y: f64,
    n: u32,
    m: u32,
    t: f64,
    trials: u64,
    seed: u64,
) -> Result<DualityRow> {
    model.check_start(x, y)?;
    let ends = forward_endpoints(model, x, y, t, trials, seed)?;
    let lhs: MeanAccumulator = ends.iter().map(|p| model.duality_fn(n, m, p.x, p.y)).collect();
    let table = model.dual_table(n, m)?;
    let rhs = dual_side(model, &table, (n, m), (x, y), t, trials, seed)?;
    Ok(compare(model.name(), n, m, t, lhs.estimate(), rhs))
}

/// [`duality_check`] over all `n + m ≤ max_order` and every time, sharing
/// the forward runs across `(n, m)`.
pub fn duality_check_batch(
    model: &DualModel,
    x: f64,
    y: f64,
    max_order: u32,
    times: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<DualityRow>> {
    model.check_start(x, y)?;
    let mut rows = Vec::new();
    let mut cell = 0;
    for (ti, &t) in times.iter().enumerate() {
        let ends = forward_endpoints(model, x, y, t, trials, cell_seed(seed, ti as u64))?;
        for total in 0..=max_order {
            for n in 0..=total {
                let m = total - n;
                let lhs: MeanAccumulator = ends.iter().map(|p| model.duality_fn(n, m, p.x, p.y)).collect();
                let table = model.dual_table(n, m)?;
                let rhs = dual_side(model, &table, (n, m), (x, y), t, trials, cell_seed(seed, cell))?;
                cell += 1;
                rows.push(compare(model.name(), n, m, t, lhs.estimate(), rhs));
            }
        }
    }
    Ok(rows)
}

/// `∫ x^n y^m dμ / c_nm` along the level `n + m = level`.
pub fn harmonic_profile(samples: &[WealthPair], ctable: &MomentTable, level: u32) -> Vec<(DualState, Estimate)> {
    (0..=level)
        .map(|n| {
            let m = level - n;
            let c = ctable.c(n, m);
            let e = samples
                .iter()
                .map(|p| p.x.powi(n as i32) * p.y.powi(m as i32) / c)
                .collect::<MeanAccumulator>()
                .estimate();
            (DualState::new(n, m), e)
        })
        .collect()
}

/// `E[x^n y^m] − E[x^n] E[y^m]` under the sampled law; zero for every
/// `(n, m)` exactly when the moments factorize.
pub fn factorization_defect(samples: &[WealthPair], n: u32, m: u32) -> Estimate {
    let u: Vec<f64> = samples.iter().map(|p| p.x.powi(n as i32)).collect();
    let v: Vec<f64> = samples.iter().map(|p| p.y.powi(m as i32)).collect();
    let len = samples.len() as f64;
    let mu = u.iter().sum::<f64>() / len;
    let mv = v.iter().sum::<f64>() / len;
    u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).collect::<MeanAccumulator>().estimate()
}

/// Mean time to absorption at `(0, 0)` from every state of a wealth dual
/// table, by back substitution over decreasing totals.
pub fn mean_absorption_times(table: &DualRateTable) -> BTreeMap<DualState, f64> {
    let mut order: Vec<usize> = (0..table.states.len()).collect();
    order.sort_by_key(|&i| table.states[i].total());
    let mut tau = vec![0.0; table.states.len()];
    for i in order {
        let exit: f64 = table.out[i].iter().map(|(_, q)| q).sum();
        if exit > 0.0 {
            tau[i] = (1.0 + table.out[i].iter().map(|&(j, q)| q * tau[j]).sum::<f64>()) / exit;
        }
    }
    table.states.iter().copied().zip(tau).collect()
}

/// Simulated absorption times, for comparison with [`mean_absorption_times`].
pub fn sample_absorption_times(table: &DualRateTable, initial: DualState, trials: u64, seed: u64) -> Result<Vec<f64>> {
    let start = locate(table, initial)?;
    Ok(run_trials(seed, stream::DUAL, trials, |_, rng| {
        let mut i = start;
        let mut t = 0.0;
        while let Some((wait, j)) = dual_step(table, i, rng) {
            t += wait;
            i = j;
        }
        t
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::beta_density;
    use crate::quadrature::integrate_unit;
    use crate::stationary::{sample_grand_canonical, GrandCanonicalSpec, SeriesTruncation};
    use crate::stats::{mean_estimate, DISTINCT_SIGMAS};
    use crate::trials::trial_rng;

    fn uniform() -> RedistributionMeasure {
        RedistributionMeasure::uniform()
    }

    fn kmp_table(order: u32) -> MomentTable {
        MomentTable::build(&Reference::ProductGamma { shape: 1.0 }, order).unwrap()
    }

    #[test]
    fn generator_coefficients() {
        let a = energy_generator_coeffs(&uniform(), 1, 1).unwrap();
        assert!((a[&(0, 2)] - 1.0 / 6.0).abs() < 1e-15);
        assert!((a[&(1, 1)] - (2.0 / 6.0 - 1.0)).abs() < 1e-15);
        assert!((a[&(2, 0)] - 1.0 / 6.0).abs() < 1e-15);
        assert!((a.values().sum::<f64>() - (4.0 / 6.0 - 1.0)).abs() < 1e-15);
        let z = energy_generator_coeffs(&uniform(), 0, 0).unwrap();
        assert_eq!(z.values().copied().collect::<Vec<_>>(), vec![0.0]);
        let p = RedistributionMeasure::pareto(1.0).unwrap();
        assert_eq!(energy_generator_coeffs(&p, 1, 1).unwrap_err(), Error::SDependentMeasure);
    }

    #[test]
    fn c_moment_examples() {
        let e = Reference::ProductGamma { shape: 1.0 };
        assert_eq!(c_moments(&e, 2, 1).unwrap().estimate, 2.0);
        assert_eq!(c_moments(&e, 0, 0).unwrap().estimate, 1.0);
        let g = Reference::ProductGamma { shape: 2.0 };
        assert_eq!(c_moments(&g, 1, 1).unwrap().estimate, 4.0);

        let samples = run_trials(1, stream::REFERENCE, 400_000, |_, rng| {
            let s = SLaw::Gamma { shape: 4.0, rate: 1.0 };
            sample_grand_canonical(
                &GrandCanonicalSpec { s_law: s },
                0.0,
                &RedistributionMeasure::beta(2.0, 2.0).unwrap(),
                &SeriesTruncation::default(),
                rng,
            )
            .unwrap()
        });
        let mc = c_moments(&Reference::Sampled(samples), 1, 1).unwrap();
        assert!(mc.within(4.0, EQUALITY_SIGMAS));
    }

    #[test]
    fn references_agree_up_to_level_factor() {
        // product Gamma(k) and canonical references give the same dual rates
        let nu = RedistributionMeasure::beta(2.0, 2.0).unwrap();
        let a = MomentTable::build(&Reference::ProductGamma { shape: 2.0 }, 6).unwrap();
        let b = MomentTable::build(
            &Reference::GrandCanonical {
                measure: nu.clone(),
                s_law: SLaw::PointMass(1.7),
            },
            6,
        )
        .unwrap();
        for level in 0..=6 {
            let ta = energy_dual_rates(&nu, &a, level).unwrap();
            let tb = energy_dual_rates(&nu, &b, level).unwrap();
            for (from, to, q) in ta.transitions() {
                assert!((q - tb.rate(from, to)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kmp_rates_are_uniform() {
        let c = kmp_table(6);
        for level in 1..=6 {
            let t = energy_dual_rates(&uniform(), &c, level).unwrap();
            assert_eq!(t.transitions().count() as u32, level * (level + 1));
            for (_, _, q) in t.transitions() {
                assert!((q - 1.0 / (level + 1) as f64).abs() < 1e-14);
            }
        }
        let t0 = energy_dual_rates(&uniform(), &c, 0).unwrap();
        assert_eq!(t0.transitions().count(), 0);
    }

    #[test]
    fn energy_rows_are_conservative() {
        // Σ_rs a_{nm;rs} c_rs = 0 makes the dual a proper Markov chain
        for (nu, reference) in [
            (uniform(), Reference::ProductGamma { shape: 1.0 }),
            (RedistributionMeasure::beta(3.0, 3.0).unwrap(), Reference::ProductGamma { shape: 3.0 }),
            (
                RedistributionMeasure::beta(2.0, 5.0).unwrap(),
                Reference::default_for(&RedistributionMeasure::beta(2.0, 5.0).unwrap()).unwrap(),
            ),
        ] {
            let c = MomentTable::build(&reference, 6).unwrap();
            for level in 0..=6 {
                for n in 0..=level {
                    let a = energy_generator_coeffs(&nu, n, level - n).unwrap();
                    let row: f64 = a.iter().map(|(&(r, s), v)| v * c.c(r, s)).sum();
                    assert!(row.abs() < 1e-12 * c.c(n, level - n).max(1.0));
                }
            }
        }
    }

    #[test]
    fn reciprocal_moments_do_not_give_a_markov_dual() {
        // with 1/c_nm in place of c_nm the rows no longer balance
        let c = kmp_table(4);
        let a = energy_generator_coeffs(&uniform(), 1, 1).unwrap();
        let row: f64 = a.iter().map(|(&(r, s), v)| v / c.c(r, s)).sum();
        assert!(row.abs() > 0.1);
    }

    #[test]
    fn beta_gamma_rates_match_brute_force() {
        let nu = RedistributionMeasure::beta(2.0, 2.0).unwrap();
        let c = MomentTable::build(&Reference::ProductGamma { shape: 2.0 }, 5).unwrap();
        let gamma_moment = |n: u32, m: u32| rising(2.0, n) * rising(2.0, m);
        for level in 1..=5 {
            let t = energy_dual_rates(&nu, &c, level).unwrap();
            for n in 0..=level {
                let m = level - n;
                let nu_nm = integrate_unit(
                    |e| beta_density(2.0, 2.0, e) * e.powi(n as i32) * (1.0 - e).powi(m as i32),
                    0.0,
                    1.0,
                )
                .unwrap();
                for k in (0..=level).filter(|&k| k != n) {
                    let q = binomial(level, k) * nu_nm * gamma_moment(k, level - k) / gamma_moment(n, m);
                    let got = t.rate(DualState::new(n, m), DualState::new(k, level - k));
                    assert!((got - q).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn duality_function_examples() {
        let c = kmp_table(4);
        assert_eq!(duality_fn_energy(&c, 0, 0, 3.0, 7.0), 1.0);
        assert_eq!(duality_fn_energy(&c, 1, 1, 3.0, 7.0), 21.0);
        assert_eq!(duality_fn_energy(&c, 2, 1, 0.0, 7.0), 0.0);
    }

    #[test]
    fn wealth_rate_examples() {
        let alpha = AlphaTable::new(0.5, &uniform(), 8).unwrap();
        let r = wealth_dual_rates_r(&uniform(), &alpha, 1).unwrap();
        assert!((r[&0] - 0.5).abs() < 1e-15);
        for n in 1..=8 {
            let exit: f64 = wealth_dual_rates_r(&uniform(), &alpha, n).unwrap().values().sum();
            assert!((exit - (1.0 - 0.5f64.powi(n as i32))).abs() < 1e-10);
        }
        let q = wealth_dual_rates_2d(&uniform(), &alpha, (1, 0)).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q[&(0, 0)] - 0.5).abs() < 1e-15);

        let frozen = AlphaTable::new(0.999_999, &uniform(), 4).unwrap();
        for q in wealth_dual_rates_r(&uniform(), &frozen, 4).unwrap().values() {
            assert!(*q < 1e-5);
        }
    }

    #[test]
    fn wealth_2d_rates() {
        let nu = RedistributionMeasure::beta(2.0, 2.0).unwrap();
        for lambda in [0.0, 0.3, 0.7] {
            let alpha = AlphaTable::new(lambda, &nu, 8).unwrap();
            for n1 in 0..=4u32 {
                for n2 in 0..=4u32 {
                    let q = wealth_dual_rates_2d(&nu, &alpha, (n1, n2)).unwrap();
                    let exit: f64 = q.values().sum();
                    assert!((exit - (1.0 - lambda.powi((n1 + n2) as i32))).abs() < 1e-10);
                    assert!(q.values().all(|&v| v >= 0.0));
                    let mirror = wealth_dual_rates_2d(&nu, &alpha, (n2, n1)).unwrap();
                    for (&(k1, k2), &v) in &q {
                        assert!((v - mirror[&(k2, k1)]).abs() < 1e-12);
                    }
                    if lambda == 0.0 && n1 + n2 > 0 {
                        assert!((q[&(0, 0)] - 1.0).abs() < 1e-12);
                        assert!(q.iter().all(|(&k, &v)| k == (0, 0) || v == 0.0));
                    }
                }
            }
            // the first column is the one-site dual
            for n in 1..=6 {
                let one = wealth_dual_rates_r(&nu, &alpha, n).unwrap();
                let two = wealth_dual_rates_2d(&nu, &alpha, (n, 0)).unwrap();
                for (k, v) in one {
                    assert!((v - two[&(k, 0)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kmp_dual_occupation_is_uniform() {
        let table = energy_dual_rates(&uniform(), &kmp_table(2), 2).unwrap();
        let traj = simulate_dual(&table, DualState::new(2, 0), 200_000.0, &mut trial_rng(3, stream::DUAL, 0)).unwrap();
        let mut occupation: BTreeMap<DualState, f64> = BTreeMap::new();
        for w in traj.times.windows(2).zip(&traj.states) {
            *occupation.entry(*w.1).or_default() += w.0[1] - w.0[0];
        }
        for v in occupation.values() {
            assert!((v / 200_000.0 - 1.0 / 3.0).abs() < 0.01);
        }
        assert!(traj.states.iter().all(|s| s.total() == 2));
    }

    #[test]
    fn zero_state_is_constant() {
        let table = energy_dual_rates(&uniform(), &kmp_table(2), 0).unwrap();
        let traj = simulate_dual(&table, DualState::new(0, 0), 10.0, &mut trial_rng(4, 0, 0)).unwrap();
        assert_eq!(traj.states, vec![DualState::new(0, 0); 2]);
    }

    #[test]
    fn wealth_dual_absorbs() {
        let nu = uniform();
        let alpha = AlphaTable::new(0.5, &nu, 6).unwrap();
        let table = wealth_dual_table(&nu, &alpha, (3, 0)).unwrap();
        for i in 0..2000 {
            let traj = simulate_dual(&table, DualState::new(3, 0), 1e3, &mut trial_rng(5, 0, i)).unwrap();
            assert!(traj.states.windows(2).all(|w| w[1].total() <= w[0].total()));
            assert_eq!(traj.final_state(), DualState::new(0, 0));
        }
        let tau = mean_absorption_times(&table)[&DualState::new(3, 0)];
        let times = sample_absorption_times(&table, DualState::new(3, 0), 200_000, 6).unwrap();
        assert!(mean_estimate(&times).within(tau, EQUALITY_SIGMAS));
        assert!(tau.is_finite() && tau > 1.0);
    }

    #[test]
    fn trivial_duality_checks() {
        let kmp = DualModel::energy(uniform(), 4).unwrap();
        let row = duality_check(&kmp, 1.0, 2.0, 0, 0, 1.0, 1000, 1).unwrap();
        assert_eq!((row.lhs.estimate, row.rhs.estimate), (1.0, 1.0));
        let row = duality_check(&kmp, 1.0, 2.0, 2, 1, 0.0, 1000, 1).unwrap();
        let d = duality_fn_energy(&kmp_table(4), 2, 1, 1.0, 2.0);
        assert_eq!((row.lhs.estimate, row.rhs.estimate), (d, d));
        assert!(row.pass);

        let w = DualModel::wealth(uniform(), 0.5, 4).unwrap();
        assert_eq!(
            duality_check(&w, 0.3, 0.8, 1, 1, 1.0, 10, 1).unwrap_err(),
            Error::UnnormalizedTotal { total: 0.3 + 0.8 }
        );
    }

    #[test]
    fn kmp_duality_holds() {
        let kmp = DualModel::energy(uniform(), 2).unwrap();
        let row = duality_check(&kmp, 1.0, 1.0, 1, 1, 1.0, 1_000_000, 7).unwrap();
        assert!(row.pass, "{row:?}");
    }

    #[test]
    fn wealth_and_beta_duality_holds() {
        let w = DualModel::wealth(uniform(), 0.5, 3).unwrap();
        for row in duality_check_batch(&w, 0.2, 0.8, 3, &[1.0], 200_000, 8).unwrap() {
            assert!(row.pass, "{row:?}");
        }
        let b = DualModel::energy(RedistributionMeasure::beta(2.0, 5.0).unwrap(), 3).unwrap();
        for row in duality_check_batch(&b, 0.5, 1.5, 3, &[0.7], 200_000, 9).unwrap() {
            assert!(row.pass, "{row:?}");
        }
    }

    #[test]
    fn wrong_dual_direction_is_detected() {
        // a dual that gains particles at the mirrored rates breaks the relation
        let nu = uniform();
        let alpha = AlphaTable::new(0.5, &nu, 2).unwrap();
        let rows = vec![
            (DualState::new(1, 0), vec![(DualState::new(2, 0), 0.5)]),
            (DualState::new(2, 0), vec![]),
        ];
        let up = DualRateTable::from_rows(None, rows).unwrap();
        let model = DualModel::Wealth { measure: nu, alpha };
        let lhs: MeanAccumulator = forward_endpoints(&model, 0.2, 0.8, 1.0, 200_000, 10)
            .unwrap()
            .iter()
            .map(|p| model.duality_fn(1, 0, p.x, p.y))
            .collect();
        let rhs = dual_side(&model, &up, (1, 0), (0.2, 0.8), 1.0, 200_000, 11).unwrap();
        let row = compare("wealth", 1, 0, 1.0, lhs.estimate(), rhs);
        assert!(!row.pass);
    }

    #[test]
    fn factorization_criterion() {
        for k in [1.0, 2.0, 3.5] {
            let c = MomentTable::build(&Reference::ProductGamma { shape: k }, 8).unwrap();
            for n in 0..=4 {
                for m in 0..=4 {
                    let lhs = c.c(n, m) * c.c(0, 0);
                    let rhs = c.c(n, 0) * c.c(0, m);
                    assert!((lhs - rhs).abs() <= 1e-10 * lhs);
                }
            }
        }
        let spec = GrandCanonicalSpec {
            s_law: SLaw::Gamma { shape: 2.0, rate: 1.0 },
        };
        let samples = run_trials(12, stream::REFERENCE, 200_000, |_, rng| {
            sample_grand_canonical(&spec, 0.5, &uniform(), &SeriesTruncation::default(), rng).unwrap()
        });
        let d = factorization_defect(&samples, 1, 1);
        assert!(d.estimate.abs() > DISTINCT_SIGMAS * d.stderr);
    }

    #[test]
    fn harmonic_profiles() {
        let c = kmp_table(4);
        let product = run_trials(13, stream::REFERENCE, 200_000, |_, rng| {
            let x = exp_variate(rng, 1.0);
            let y = exp_variate(rng, 1.0);
            WealthPair { x, y }
        });
        for (_, e) in harmonic_profile(&product, &c, 3) {
            assert!(e.within(1.0, EQUALITY_SIGMAS));
        }

        let canonical = run_trials(14, stream::REFERENCE, 200_000, |_, rng| {
            crate::stationary::sample_canonical_energy(2.0, &uniform(), rng).unwrap()
        });
        let profile = harmonic_profile(&canonical, &c, 3);
        let first = profile[0].1;
        for (_, e) in &profile[1..] {
            let se = (e.stderr.powi(2) + first.stderr.powi(2)).sqrt();
            assert!((e.estimate - first.estimate).abs() <= 4.0 * se);
        }

        let points = vec![WealthPair { x: 1.0, y: 3.0 }; 100];
        let profile = harmonic_profile(&points, &c, 2);
        let spread = profile.iter().map(|p| p.1.estimate).fold(f64::MIN, f64::max)
            - profile.iter().map(|p| p.1.estimate).fold(f64::MAX, f64::min);
        let se: f64 = profile.iter().map(|p| p.1.stderr).sum();
        assert!(spread > DISTINCT_SIGMAS * se && spread > 0.0);
    }
}
