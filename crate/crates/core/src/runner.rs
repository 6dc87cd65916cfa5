//! Runs a resolved configuration and writes its artifacts.
//!
//! Every experiment produces a flat list of [`CheckRow`]s. A row passes when
//! its `rule` holds: `gap_le` means `|value − reference| ≤ threshold`, `lt`
//! means `value < threshold`, `gt` means `value > threshold`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Gamma};

use crate::config::{build_density, ConfigError, Details, DriftKind, Experiment, Resolved, ResolvedProductCase};
use crate::diffusion::{drift_from_measure, simulate_batch, DriftSpec, StationaryDensity};
use crate::duality::{duality_check_batch, energy_generator_coeffs, energy_dual_rates, DualModel, MomentTable, Reference};
use crate::exchange::{simulate_endpoint, ModelParams, WealthPair};
use crate::measures::{beta_density, Family, RedistributionMeasure};
use crate::nagent::{expected_wealth, expected_wealth_check, AgentConfig, WalkKernel};
use crate::quadrature::integrate_tol;
use crate::stationary::{
    sample_canonical_energy, sample_eps_infinity, sample_stationary_wealth, sample_two_prop,
    verify_product_invariance, default_a_grid, default_s_grid, AlphaTable, SLaw,
};
use crate::stats::{beta_from_moments, histogram, ks_critical_99, ks_statistic, mean_estimate, Estimate, Histogram};
use crate::trials::{stream, try_run_trials};
use crate::Error;

pub const RESULTS_HEADER: &str = "# wealthsim results v1";
pub const HISTOGRAM_HEADER: &str = "# wealthsim histogram v1";
const HIST_BINS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{experiment}: {source}")]
    Model { experiment: &'static str, source: Error },
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing results: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    GapLe,
    Lt,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub label: String,
    pub value: f64,
    pub stderr: f64,
    pub reference: f64,
    pub reference_stderr: f64,
    pub threshold: f64,
    pub rule: Rule,
    pub pass: bool,
}

impl CheckRow {
    fn new(check: &str, label: String, value: Estimate, reference: Estimate, threshold: f64, rule: Rule) -> Self {
        let pass = match rule {
            Rule::GapLe => (value.estimate - reference.estimate).abs() <= threshold,
            Rule::Lt => value.estimate < threshold,
            Rule::Gt => value.estimate > threshold,
        };
        Self {
            check: check.into(),
            label,
            value: value.estimate,
            stderr: value.stderr,
            reference: reference.estimate,
            reference_stderr: reference.stderr,
            threshold,
            rule,
            pass,
        }
    }

    /// Two independent estimates agreeing within `sigmas` combined stderrs.
    fn agree(check: &str, label: String, value: Estimate, reference: Estimate, sigmas: f64) -> Self {
        let combined = value.stderr.hypot(reference.stderr);
        Self::new(check, label, value, reference, sigmas * combined, Rule::GapLe)
    }

    fn exact(check: &str, label: String, value: f64, reference: f64, tol: f64) -> Self {
        Self::new(check, label, exact(value), exact(reference), tol, Rule::GapLe)
    }

    fn bound(check: &str, label: String, value: f64, threshold: f64, rule: Rule) -> Self {
        Self::new(check, label, exact(value), exact(f64::NAN), threshold, rule)
    }
}

fn exact(v: f64) -> Estimate {
    Estimate { estimate: v, stderr: 0.0 }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: &'static str,
    pub seed: u64,
    pub trials: u64,
    pub rows: Vec<CheckRow>,
    /// Diagnostics recorded alongside the checks.
    pub notes: BTreeMap<String, f64>,
    #[serde(skip)]
    pub histogram: Option<(String, Histogram)>,
}

impl Report {
    fn new(r: &Resolved) -> Self {
        Self {
            experiment: r.experiment.name(),
            seed: r.seed,
            trials: r.trials,
            rows: Vec::new(),
            notes: BTreeMap::new(),
            histogram: None,
        }
    }

    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    /// Rows of one check.
    pub fn check(&self, name: &str) -> impl Iterator<Item = &CheckRow> + '_ {
        let name = name.to_string();
        self.rows.iter().filter(move |r| r.check == name)
    }

    fn push(&mut self, row: CheckRow) {
        self.rows.push(row);
    }
}

/// Offsets the master seed for independent sub-runs.
fn sub_seed(seed: u64, k: u64) -> u64 {
    seed ^ (k.wrapping_add(1) << 48)
}

pub fn run(r: &Resolved) -> Result<Report, RunError> {
    let wrap = |source: Error| RunError::Model {
        experiment: r.experiment.name(),
        source,
    };
    let mut report = Report::new(r);
    match &r.details {
        Details::Canonical { s_law } => canonical(r, s_law, &mut report),
        Details::WealthStationary { lambda, lambda2, s, t_end } => {
            wealth_stationary(r, *lambda, *lambda2, *s, *t_end, &mut report)
        }
        Details::Product { cases } => product_check(r, cases, &mut report),
        Details::Duality { .. } if r.experiment == Experiment::DualityEnergy => duality_energy(r, &mut report),
        Details::Duality { .. } => duality_wealth(r, &mut report),
        Details::Diffusion { .. } => diffusion(r, &mut report),
        Details::Nagent { kernel, lambda, lambda_alt, x0, times } => {
            nagent(r, kernel, *lambda, *lambda_alt, x0, times, &mut report)
        }
        Details::Eps { lambdas, max_order, non_beta } => eps_infinity(r, lambdas, *max_order, *non_beta, &mut report),
        Details::None => unreachable!("resolved configs always carry details"),
    }
    .map_err(wrap)?;
    Ok(report)
}

fn product_check(r: &Resolved, cases: &[ResolvedProductCase], report: &mut Report) -> crate::Result<()> {
    for c in cases {
        let residual = verify_product_invariance(&c.mu, &c.measure, &default_s_grid(), &default_a_grid())?;
        let row = if c.mismatch {
            CheckRow::bound("product_mismatch", c.label.clone(), residual, MISMATCH_RESIDUAL, Rule::Gt)
        } else {
            CheckRow::bound("product_invariance", c.label.clone(), residual, r.tolerances.residual, Rule::Lt)
        };
        report.push(row);
    }
    Ok(())
}

/// A product density paired with the wrong measure should miss by at least this.
pub const MISMATCH_RESIDUAL: f64 = 1e-2;

fn beta_params(measure: &RedistributionMeasure) -> Option<(f64, f64)> {
    match measure.family() {
        Family::Uniform => Some((1.0, 1.0)),
        Family::Beta { a, b } => Some((*a, *b)),
        _ => None,
    }
}

fn beta_cdf(a: f64, b: f64) -> crate::Result<impl Fn(f64) -> f64> {
    let d = Beta::new(a, b).map_err(|e| crate::error::invalid("beta", e.to_string()))?;
    Ok(move |x: f64| d.cdf(x.clamp(0.0, 1.0)))
}

fn gamma_cdf(shape: f64, rate: f64) -> crate::Result<impl Fn(f64) -> f64> {
    let d = Gamma::new(shape, rate).map_err(|e| crate::error::invalid("gamma", e.to_string()))?;
    Ok(move |x: f64| d.cdf(x.max(0.0)))
}

/// CDF of `x` under `μ(x)μ(s − x)`, tabulated by quadrature on `cells`
/// equal cells and interpolated linearly.
fn conditioned_product_cdf(mu: &crate::measures::Density1D, s: f64, cells: usize) -> crate::Result<impl Fn(f64) -> f64> {
    let lo = mu.lower_bound().max(0.0);
    let hi = s - lo;
    if !(hi > lo) {
        return Err(Error::ZeroDenominator { s });
    }
    let f = |x: f64| mu.evaluate(x) * mu.evaluate(s - x);
    let h = (hi - lo) / cells as f64;
    let mut cum = vec![0.0];
    for k in 0..cells {
        let a = lo + k as f64 * h;
        let mass = integrate_tol(f, a, a + h, 1e-13)?;
        cum.push(cum[k] + mass);
    }
    let z = cum[cells];
    if !(z > 0.0) {
        return Err(Error::ZeroDenominator { s });
    }
    Ok(move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let u = (x - lo) / h;
        let k = (u as usize).min(cells - 1);
        let w = u - k as f64;
        (cum[k] + w * (cum[k + 1] - cum[k])) / z
    })
}

fn set_histogram(report: &mut Report, series: &str, samples: &[f64], range: (f64, f64)) -> crate::Result<()> {
    report.histogram = Some((series.to_string(), histogram(samples, HIST_BINS, range)?));
    Ok(())
}

fn canonical(r: &Resolved, s_law: &SLaw, report: &mut Report) -> crate::Result<()> {
    let measure = r.measure();
    let tol = &r.tolerances;
    let pairs = try_run_trials(r.seed, stream::SAMPLER, r.trials, |_, rng| {
        let s = s_law.sample(rng)?;
        let p = sample_stationary_wealth(s, 0.0, measure, &r.trunc, rng)?;
        Ok::<_, Error>((s, p))
    })?;
    let xs: Vec<f64> = pairs.iter().map(|(_, p)| p.x).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, p)| p.y).collect();
    let drift = pairs.iter().map(|(s, p)| (p.total() - s).abs() / s.max(1.0)).fold(0.0, f64::max);
    report.push(CheckRow::bound("conservation", "max |x+y-s|/max(s,1)".into(), drift, 1e-12, Rule::Lt));

    match *s_law {
        SLaw::PointMass(s) => {
            let fractions: Vec<f64> = xs.iter().map(|x| x / s).collect();
            if let Some((a, b)) = beta_params(measure) {
                let ks = ks_statistic(&fractions, beta_cdf(a, b)?);
                report.push(CheckRow::bound("marginal_ks", format!("x/s vs Beta({a}, {b})"), ks, tol.ks, Rule::Lt));
            }
            if let Family::Induced(_) = measure.family() {
                let mc = &r.measures[0].0;
                let mu_name = mc.mu.as_deref().unwrap_or_default();
                let mu = build_density(mu_name, &mc.mu_params, "measure").map_err(|e| crate::error::invalid("mu", e.to_string()))?;
                let cdf = conditioned_product_cdf(&mu, s, 4000)?;
                let ks = ks_statistic(&xs, cdf);
                report.push(CheckRow::bound(
                    "conditioned_product_ks",
                    format!("x vs {mu_name}{:?} product conditioned on x+y={s}", mc.mu_params),
                    ks,
                    tol.ks,
                    Rule::Lt,
                ));
            }
            set_histogram(report, "x", &xs, (0.0, s))?;
        }
        SLaw::Gamma { shape, rate } => {
            let totals: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
            let ks = ks_statistic(&pairs.iter().map(|(_, p)| p.total()).collect::<Vec<_>>(), gamma_cdf(shape, rate)?);
            report.push(CheckRow::bound("total_ks", format!("x+y vs Gamma({shape}, {rate})"), ks, tol.ks, Rule::Lt));
            if let Some((a, b)) = beta_params(measure).filter(|(a, b)| (a + b - shape).abs() < 1e-12) {
                // Beta(a, b) split of a Gamma(a + b) total: independent Gamma(a), Gamma(b)
                for (name, v, k) in [("x", &xs, a), ("y", &ys, b)] {
                    let ks = ks_statistic(v, gamma_cdf(k, rate)?);
                    report.push(CheckRow::bound("marginal_ks", format!("{name} vs Gamma({k}, {rate})"), ks, tol.ks, Rule::Lt));
                }
                let mx = mean_estimate(&xs).estimate;
                let my = mean_estimate(&ys).estimate;
                let cov: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect();
                report.push(CheckRow::agree("covariance", "cov(x, y)".into(), mean_estimate(&cov), exact(0.0), tol.sigmas));
            }
            let mean_s = mean_estimate(&totals).estimate;
            set_histogram(report, "x", &xs, (0.0, 5.0 * mean_s))?;
        }
        SLaw::Custom(_) => {}
    }
    Ok(())
}

/// Joint orders `(i, j)` with `1 ≤ i + j ≤ max`.
fn joint_orders(max: u32) -> Vec<(u32, u32)> {
    (1..=max).flat_map(|n| (0..=n).map(move |i| (i, n - i))).collect()
}

fn joint_moment(pairs: &[WealthPair], i: u32, j: u32) -> Estimate {
    let v: Vec<f64> = pairs.iter().map(|p| p.x.powi(i as i32) * p.y.powi(j as i32)).collect();
    mean_estimate(&v)
}

fn wealth_stationary(
    r: &Resolved,
    lambda: f64,
    lambda2: Option<f64>,
    s: f64,
    t_end: f64,
    report: &mut Report,
) -> crate::Result<()> {
    let measure = r.measure();
    let params = match lambda2 {
        Some(l2) => ModelParams::two_propensities(lambda, l2)?,
        None => ModelParams::wealth(lambda)?,
    };
    let draw = |rng: &mut crate::trials::SimRng| match lambda2 {
        Some(l2) => sample_two_prop(s, lambda, l2, measure, &r.trunc, rng),
        None => sample_stationary_wealth(s, lambda, measure, &r.trunc, rng),
    };
    let initial = try_run_trials(r.seed, stream::STATIONARY, r.trials, |_, rng| draw(rng))?;
    let evolved = try_run_trials(r.seed, stream::FORWARD, r.trials, |_, rng| {
        let p = draw(rng)?;
        simulate_endpoint(p, &params, measure, t_end, rng).map(|e| e.0)
    })?;
    let alpha = match lambda2 {
        None if !measure.is_s_dependent() => Some(AlphaTable::new(lambda, measure, 3)?),
        _ => None,
    };
    for (i, j) in joint_orders(3) {
        let label = format!("E[x^{i} y^{j}]");
        let before = joint_moment(&initial, i, j);
        let after = joint_moment(&evolved, i, j);
        report.push(CheckRow::agree("moment_invariance", label.clone(), after, before, r.tolerances.moment_sigmas));
        if let Some(a) = &alpha {
            let exact_moment = s.powi((i + j) as i32) * a.joint(i as usize, j as usize);
            report.push(CheckRow::agree("moment_analytic", label, after, exact(exact_moment), r.tolerances.moment_sigmas));
        }
    }
    let fractions: Vec<f64> = evolved.iter().map(|p| p.x / s).collect();
    set_histogram(report, "x/s after evolution", &fractions, (0.0, 1.0))
}

fn duality_settings(r: &Resolved) -> (f64, f64, f64, u32, &[f64], u32, u64, f64) {
    match &r.details {
        Details::Duality {
            lambda,
            x,
            y,
            n_max,
            times,
            rate_levels,
            harmonic_trials,
            s,
        } => (*lambda, *x, *y, *n_max, times, *rate_levels, *harmonic_trials, *s),
        _ => unreachable!(),
    }
}

fn push_duality_rows(report: &mut Report, model: &DualModel, r: &Resolved, x: f64, y: f64, n_max: u32, times: &[f64]) -> crate::Result<()> {
    for row in duality_check_batch(model, x, y, n_max, times, r.trials, r.seed)? {
        report.push(CheckRow {
            check: "duality".into(),
            label: format!("n={},m={},t={}", row.n, row.m, row.t),
            value: row.lhs.estimate,
            stderr: row.lhs.stderr,
            reference: row.rhs.estimate,
            reference_stderr: row.rhs.stderr,
            threshold: crate::stats::EQUALITY_SIGMAS * (row.lhs.stderr + row.rhs.stderr),
            rule: Rule::GapLe,
            pass: row.pass,
        });
    }
    Ok(())
}

fn duality_energy(r: &Resolved, report: &mut Report) -> crate::Result<()> {
    let (_, x, y, n_max, times, rate_levels, harmonic_trials, s) = duality_settings(r);
    let measure = r.measure().clone();
    let reference = Reference::default_for(&measure)?;
    let ctable = MomentTable::build(&reference, n_max.max(rate_levels))?;

    // generator rows annihilate the reference moments
    let mut row_residual: f64 = 0.0;
    for level in 1..=rate_levels {
        for n in 0..=level {
            let coeffs = energy_generator_coeffs(&measure, n, level - n)?;
            let sum: f64 = coeffs.iter().map(|(&(a, b), q)| q * ctable.c(a, b)).sum();
            row_residual = row_residual.max((sum / ctable.c(n, level - n)).abs());
        }
    }
    report.push(CheckRow::bound("generator_rows", format!("levels 1..={rate_levels}"), row_residual, r.tolerances.rate, Rule::Lt));
    if let Family::Uniform = measure.family() {
        for level in 1..=rate_levels {
            let table = energy_dual_rates(&measure, &ctable, level)?;
            let target = 1.0 / (level as f64 + 1.0);
            let worst = table.transitions().map(|(_, _, q)| (q - target).abs()).fold(0.0, f64::max);
            report.push(CheckRow::exact("kmp_rates", format!("level {level}: max |q - 1/(N+1)|"), worst, 0.0, r.tolerances.rate));
        }
    }

    let model = DualModel::energy(measure.clone(), n_max)?;
    push_duality_rows(report, &model, r, x, y, n_max, times)?;

    // ∫ x^n y^m dμ_s / c_nm is constant along each level; compare every
    // entry with the (0, N) one through the paired difference
    let samples = try_run_trials(sub_seed(r.seed, 1), stream::SAMPLER, harmonic_trials, |_, rng| {
        sample_canonical_energy(s, &measure, rng)
    })?;
    for level in 1..=n_max {
        for n in 1..=level {
            let m = level - n;
            let diff: Vec<f64> = samples
                .iter()
                .map(|p| {
                    p.x.powi(n as i32) * p.y.powi(m as i32) / ctable.c(n, m) - p.y.powi(level as i32) / ctable.c(0, level)
                })
                .collect();
            report.push(CheckRow::agree(
                "harmonic_profile",
                format!("({n},{m}) - (0,{level}) at s={s}"),
                mean_estimate(&diff),
                exact(0.0),
                r.tolerances.moment_sigmas,
            ));
        }
    }
    let fractions: Vec<f64> = samples.iter().map(|p| p.x / s).collect();
    set_histogram(report, "x/s canonical", &fractions, (0.0, 1.0))
}

fn duality_wealth(r: &Resolved, report: &mut Report) -> crate::Result<()> {
    let (lambda, x, y, n_max, times, ..) = duality_settings(r);
    let model = DualModel::wealth(r.measure().clone(), lambda, n_max)?;
    push_duality_rows(report, &model, r, x, y, n_max, times)?;
    let table = crate::duality::wealth_dual_table(r.measure(), &AlphaTable::new(lambda, r.measure(), n_max as usize)?, (n_max, 0))?;
    let worst = table
        .states()
        .iter()
        .filter(|st| st.total() > 0)
        .map(|&st| (table.exit_rate(st) - (1.0 - lambda.powi(st.total() as i32))).abs())
        .fold(0.0, f64::max);
    report.push(CheckRow::exact("exit_rates", format!("max |q(n) - (1 - λ^n)|, n ≤ {n_max}"), worst, 0.0, r.tolerances.rate));
    Ok(())
}

/// Grid for density comparisons, away from the endpoint singularities.
fn interior_grid() -> impl Iterator<Item = f64> {
    (1..=99).map(|i| i as f64 / 100.0)
}

fn diffusion(r: &Resolved, report: &mut Report) -> crate::Result<()> {
    let Details::Diffusion { drift, dt, t_end, paths, r0, s } = r.details else {
        unreachable!()
    };
    let tol = &r.tolerances;
    match drift {
        DriftKind::Linear(alpha) => {
            let spec = DriftSpec::linear(alpha)?;
            let batch = simulate_batch(&spec, s, r0, t_end, dt, paths, r.seed)?;
            let ks = ks_statistic(&batch.endpoints, beta_cdf(alpha, alpha)?);
            report.push(CheckRow::bound("stationary_ks", format!("r vs Beta({alpha}, {alpha})"), ks, tol.ks, Rule::Lt));
            report.notes.insert("absorbed_paths".into(), batch.absorbed as f64);

            let psi = StationaryDensity::new(&spec, s)?;
            let mut density_err: f64 = 0.0;
            let mut drift_err: f64 = 0.0;
            let beta = RedistributionMeasure::beta(alpha, alpha)?;
            for x in interior_grid() {
                density_err = density_err.max((psi.evaluate(x)? - beta_density(alpha, alpha, x)).abs());
                drift_err = drift_err.max((drift_from_measure(&beta, s, x)? - alpha * (1.0 - 2.0 * x)).abs());
            }
            report.push(CheckRow::bound("round_trip", "drift -> density".into(), density_err, tol.round_trip, Rule::Lt));
            report.push(CheckRow::bound("round_trip", "density -> drift".into(), drift_err, tol.round_trip, Rule::Lt));
            set_histogram(report, "r", &batch.endpoints, (0.0, 1.0))
        }
        DriftKind::FromMeasure => {
            for (k, (_, measure)) in r.measures.iter().enumerate() {
                let spec = DriftSpec::FromMeasure(measure.clone());
                let batch = simulate_batch(&spec, s, r0, t_end, dt, paths, sub_seed(r.seed, k as u64))?;
                measure.cdf(s, 0.5)?;
                let ks = ks_statistic(&batch.endpoints, |x| measure.cdf(s, x.clamp(0.0, 1.0)).unwrap_or(f64::NAN));
                report.push(CheckRow::bound("thermalization_ks", format!("r vs {}", measure.name()), ks, tol.ks, Rule::Lt));
                report.notes.insert(format!("absorbed_paths[{}]", measure.name()), batch.absorbed as f64);
                let psi = StationaryDensity::new(&spec, s)?;
                let mut err: f64 = 0.0;
                for x in interior_grid() {
                    err = err.max((psi.evaluate(x)? - measure.density(s, x)?).abs());
                }
                report.push(CheckRow::bound("round_trip", format!("{} -> drift -> density", measure.name()), err, tol.round_trip, Rule::Lt));
                if k == 0 {
                    set_histogram(report, "r", &batch.endpoints, (0.0, 1.0))?;
                }
            }
            Ok(())
        }
    }
}

fn nagent(
    r: &Resolved,
    kernel: &WalkKernel,
    lambda: f64,
    lambda_alt: f64,
    x0: &AgentConfig,
    times: &[f64],
    report: &mut Report,
) -> crate::Result<()> {
    let measure = r.measure();
    let sigmas = r.tolerances.sigmas;
    for (k, &t) in times.iter().enumerate() {
        for row in expected_wealth_check(x0, lambda, measure, kernel, t, r.trials, sub_seed(r.seed, k as u64))? {
            report.push(CheckRow::agree(
                "expected_wealth",
                format!("agent {} at t={t}", row.agent),
                row.mc,
                exact(row.analytic),
                sigmas,
            ));
        }
    }

    // two agents: closed form, analytic and Monte Carlo
    let pair = WalkKernel::complete(2)?;
    let start = AgentConfig::unit_at(2, 0);
    for (k, &t) in times.iter().enumerate() {
        let closed = (1.0 + (-2.0 * (1.0 - lambda) * t).exp()) / 2.0;
        let analytic = expected_wealth(&start, lambda, &pair, t)?[0];
        report.push(CheckRow::exact("two_agent_closed_form", format!("heat kernel at t={t}"), analytic, closed, 1e-12));
        let mc = expected_wealth_check(&start, lambda, measure, &pair, t, r.trials, sub_seed(r.seed, 100 + k as u64))?;
        report.push(CheckRow::agree("two_agent_closed_form", format!("Monte Carlo at t={t}"), mc[0].mc, exact(closed), sigmas));
    }

    // only (1 - λ)t matters
    for &t in times {
        let t_alt = t * (1.0 - lambda) / (1.0 - lambda_alt);
        let a = expected_wealth(x0, lambda, kernel, t)?;
        let b = expected_wealth(x0, lambda_alt, kernel, t_alt)?;
        let gap = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        report.push(CheckRow::exact(
            "time_change",
            format!("(λ={lambda}, t={t}) vs (λ={lambda_alt}, t={t_alt})"),
            gap,
            0.0,
            1e-12,
        ));
    }
    Ok(())
}

fn eps_infinity(r: &Resolved, lambdas: &[f64], max_order: u32, non_beta: bool, report: &mut Report) -> crate::Result<()> {
    let tol = &r.tolerances;
    let orders: Vec<u32> = (1..=max_order).collect();
    let mut k = 0;
    for (_, measure) in &r.measures {
        for &lambda in lambdas {
            let table = AlphaTable::new(lambda, measure, max_order as usize)?;
            let samples = try_run_trials(sub_seed(r.seed, k), stream::STATIONARY, r.trials, |_, rng| {
                sample_eps_infinity(lambda, measure, &r.trunc, rng)
            })?;
            k += 1;
            let moments = crate::stats::empirical_moments(&samples, &orders);
            for (&n, est) in &moments {
                report.push(CheckRow::agree(
                    "alpha_moment",
                    format!("{} λ={lambda} n={n}", measure.name()),
                    *est,
                    exact(table.alpha(n as usize)),
                    tol.moment_sigmas,
                ));
            }
            if matches!(measure.family(), Family::Uniform) && lambda == 0.5 && max_order >= 2 {
                report.push(CheckRow::exact("alpha_spot", "α_2, Uniform, λ=1/2".into(), table.alpha(2), 5.0 / 18.0, 1e-12));
            }
            if non_beta && lambda > 0.0 && max_order >= 2 {
                let mean = table.alpha(1);
                let (a, b) = beta_from_moments(mean, table.alpha(2) - mean * mean)?;
                let ks = ks_statistic(&samples, beta_cdf(a, b)?);
                let label = format!("{} λ={lambda} vs Beta({a:.4}, {b:.4})", measure.name());
                report.push(CheckRow::bound("non_beta_ks", label.clone(), ks, tol.non_beta_ks, Rule::Gt));
                let floor = tol.distinct_sigmas * ks_critical_99(samples.len());
                report.push(CheckRow::bound("non_beta_ks_margin", label, ks, floor, Rule::Gt));
            }
            if report.histogram.is_none() {
                set_histogram(report, &format!("eps_inf {} λ={lambda}", measure.name()), &samples, (0.0, 1.0))?;
            }
        }
    }
    Ok(())
}

/// Writes `results.csv`, `summary.json` and, when present, `histogram.csv`.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;

    let mut file = fs::File::create(dir.join("results.csv"))?;
    writeln!(file, "{RESULTS_HEADER}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "experiment",
        "check",
        "label",
        "value",
        "stderr",
        "reference",
        "reference_stderr",
        "threshold",
        "rule",
        "pass",
    ])?;
    for row in &report.rows {
        let rule = match row.rule {
            Rule::GapLe => "gap_le",
            Rule::Lt => "lt",
            Rule::Gt => "gt",
        };
        w.write_record([
            report.experiment.to_string(),
            row.check.clone(),
            row.label.clone(),
            row.value.to_string(),
            row.stderr.to_string(),
            row.reference.to_string(),
            row.reference_stderr.to_string(),
            row.threshold.to_string(),
            rule.to_string(),
            row.pass.to_string(),
        ])?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct CheckSummary {
        rows: usize,
        failed: usize,
        pass: bool,
    }
    let mut checks: BTreeMap<&str, CheckSummary> = BTreeMap::new();
    for row in &report.rows {
        let c = checks.entry(&row.check).or_insert(CheckSummary {
            rows: 0,
            failed: 0,
            pass: true,
        });
        c.rows += 1;
        if !row.pass {
            c.failed += 1;
            c.pass = false;
        }
    }
    let summary = serde_json::json!({
        "format": "wealthsim summary v1",
        "experiment": report.experiment,
        "seed": report.seed,
        "trials": report.trials,
        "pass": report.passed(),
        "checks": checks,
        "notes": report.notes,
        "rows": report.rows,
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;

    let hist_path = dir.join("histogram.csv");
    if let Some((series, h)) = &report.histogram {
        let mut file = fs::File::create(&hist_path)?;
        writeln!(file, "{HISTOGRAM_HEADER}")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["series", "lo", "hi", "count"])?;
        for (bin, count) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(bin);
            w.write_record([series.clone(), lo.to_string(), hi.to_string(), count.to_string()])?;
        }
        w.write_record([series.clone(), "-inf".into(), h.lo.to_string(), h.underflow.to_string()])?;
        w.write_record([series.clone(), h.hi.to_string(), "inf".into(), h.overflow.to_string()])?;
        w.flush()?;
    } else if hist_path.exists() {
        fs::remove_file(hist_path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn run_text(text: &str) -> Report {
        run(&Config::parse(text).unwrap().resolve().unwrap()).unwrap()
    }

    #[test]
    fn rules_decide_pass() {
        let e = |v| exact(v);
        assert!(CheckRow::new("c", "l".into(), e(1.0), e(1.05), 0.1, Rule::GapLe).pass);
        assert!(!CheckRow::new("c", "l".into(), e(1.0), e(1.2), 0.1, Rule::GapLe).pass);
        assert!(CheckRow::bound("c", "l".into(), 0.01, 0.02, Rule::Lt).pass);
        assert!(!CheckRow::bound("c", "l".into(), 0.01, 0.02, Rule::Gt).pass);
        assert!(!CheckRow::bound("c", "l".into(), f64::NAN, 0.02, Rule::Lt).pass);
    }

    #[test]
    fn conditioned_product_cdf_matches_exponential_oracle() {
        // exponential product conditioned on x + y = s is uniform on [0, s]
        let mu = crate::measures::Density1D::exponential(1.0).unwrap();
        let cdf = conditioned_product_cdf(&mu, 3.0, 200).unwrap();
        for x in [0.3, 1.0, 1.5, 2.9] {
            assert!((cdf(x) - x / 3.0).abs() < 1e-10);
        }
        assert_eq!(cdf(-1.0), 0.0);
        assert_eq!(cdf(4.0), 1.0);
    }

    #[test]
    fn small_runs_pass() {
        let r = run_text("experiment = \"product_check\"\n[[product]]\nmu = \"exponential\"\nmu_params = [1.0]");
        assert!(r.passed(), "{:?}", r.rows);
        let r = run_text("experiment = \"nagent\"\ntrials = 2000\n[nagent]\nlambda = 0.5\nn = 4");
        assert!(r.check("time_change").all(|row| row.pass));
        assert!(r.check("two_agent_closed_form").count() == 6);
        let r = run_text("experiment = \"eps_infinity\"\ntrials = 5000\n[model]\nlambda = 0.5\n[eps]\nmax_order = 3");
        assert!(r.check("alpha_spot").all(|row| row.pass));
        assert_eq!(r.check("alpha_moment").count(), 3);
    }

    #[test]
    fn joint_orders_cover_total_degree() {
        assert_eq!(joint_orders(3).len(), 2 + 3 + 4);
    }
}
