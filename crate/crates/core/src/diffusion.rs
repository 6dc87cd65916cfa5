//! Two-site wealth diffusion in the fraction coordinate.
//!
//! The total `s` is constant and the fraction follows
//! `dr = b(r) dt + √(2 r (1-r)) dW`, generator `r(1-r) ∂²_r + b(r) ∂_r`,
//! with absorption at the endpoints. The stationary density is
//! `ψ(r) ∝ exp(Φ(r)) / (r(1-r))` where `Φ' = b / (r(1-r))`.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exchange::{from_rs, WealthPair};
use crate::measures::{Family, RedistributionMeasure};
use crate::quadrature::{integrate_tol, UNIT_INSET};
use crate::stats::ks_statistic;
use crate::trials::{stream, try_run_trials};

/// Paths are absorbed once they come this close to an endpoint.
pub const ABSORB_EPS: f64 = 1e-9;
/// Largest accepted Euler–Maruyama step.
pub const MAX_DT: f64 = 1e-2;
const FD_STEP: f64 = 1e-6;

pub type DriftFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Drift of the fraction, already divided by `s`.
#[derive(Clone)]
pub enum DriftSpec {
    /// `α(1 - 2r)`.
    Linear { alpha: f64 },
    /// The drift whose stationary law is `ν(s, ·)`.
    FromMeasure(RedistributionMeasure),
    /// `b(r, s)`.
    Custom(DriftFn),
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { alpha } => write!(f, "Linear({alpha})"),
            Self::FromMeasure(m) => write!(f, "FromMeasure({})", m.name()),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl DriftSpec {
    pub fn linear(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be nonnegative, got {alpha}")));
        }
        Ok(Self::Linear { alpha })
    }

    pub fn evaluate(&self, r: f64, s: f64) -> Result<f64> {
        match self {
            Self::Linear { alpha } => Ok(alpha * (1.0 - 2.0 * r)),
            Self::FromMeasure(m) => drift_from_measure(m, s, r),
            Self::Custom(f) => Ok(f(r, s)),
        }
    }
}

/// `r(1-r) ∂_r log(r(1-r) ν(s, r))`, the drift with stationary law `ν(s, ·)`.
pub fn drift_from_measure(measure: &RedistributionMeasure, s: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::BoundaryUndefined { r });
    }
    // Uniform and Beta densities are positive on (0, 1); skip the evaluation
    if !matches!(measure.family(), Family::Uniform | Family::Beta { .. }) && !(measure.density(s, r)? > 0.0) {
        return Err(Error::NonpositiveDensity { r });
    }
    let dlog = match measure.log_density_derivative(s, r) {
        Some(d) => d,
        None => {
            let h = FD_STEP.min(r / 2.0).min((1.0 - r) / 2.0);
            let up = measure.density(s, r + h)?;
            let down = measure.density(s, r - h)?;
            if !(up > 0.0 && down > 0.0) {
                return Err(Error::NonpositiveDensity { r });
            }
            (up.ln() - down.ln()) / (2.0 * h)
        }
    };
    Ok(1.0 - 2.0 * r + r * (1.0 - r) * dlog)
}

/// Normalized stationary density of the fraction diffusion.
///
/// `Φ` is split as `b0 ln(2r) - b1 ln(2(1-r))` plus the integral of the
/// bounded remainder `b/(u(1-u)) - b0/u - b1/(1-u)`, where `b0`, `b1` are the
/// endpoint drifts. Near `r = 0` the density behaves like `r^{b0 - 1}`.
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    drift: DriftSpec,
    s: f64,
    b0: f64,
    b1: f64,
    log_norm: f64,
}

/// Where the endpoint drifts are read off.
const EDGE: f64 = 1e-14;
const REMAINDER_CUT: f64 = 1e-7;
const PHI_TOL: f64 = 1e-10;

impl StationaryDensity {
    pub fn new(drift: &DriftSpec, s: f64) -> Result<Self> {
        let mut psi = Self {
            drift: drift.clone(),
            s,
            b0: drift.evaluate(EDGE, s)?,
            b1: drift.evaluate(1.0 - EDGE, s)?,
            log_norm: 0.0,
        };
        for (p, end) in [(psi.b0 - 1.0, "0"), (-psi.b1 - 1.0, "1")] {
            if p <= -1.0 + 1e-9 {
                return Err(Error::NonIntegrable(format!("density behaves like d^{p:.3} at r = {end}")));
            }
        }
        // the pieces within UNIT_INSET of each end, from the power law
        let d = UNIT_INSET;
        let tails = d * psi.log_unnormalized(d)?.exp() / psi.b0 + d * psi.log_unnormalized(1.0 - d)?.exp() / -psi.b1;
        let body = integrate_tol(|r| psi.log_unnormalized(r).map_or(f64::NAN, f64::exp), d, 1.0 - d, 10.0 * PHI_TOL)?;
        let z = body + tails;
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::NonIntegrable(format!("normalization {z}")));
        }
        psi.log_norm = z.ln();
        Ok(psi)
    }

    /// `Φ(r) = ∫_{1/2}^r b(u) / (u(1-u)) du`.
    fn phi(&self, r: f64) -> Result<f64> {
        let singular = self.b0 * (2.0 * r).ln() - self.b1 * (2.0 * (1.0 - r)).ln();
        if let DriftSpec::Linear { .. } = self.drift {
            return Ok(singular);
        }
        let (b0, b1) = (self.b0, self.b1);
        let failure = RefCell::new(None);
        let remainder = |u: f64| match self.drift.evaluate(u, self.s) {
            Ok(b) => ((b - b0) * (1.0 - u) + (b - b1) * u) / (u * (1.0 - u)),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        // the remainder is bounded; closer to the ends than REMAINDER_CUT it
        // is held constant, since a numerical drift is noisy there
        let inner = r.clamp(REMAINDER_CUT, 1.0 - REMAINDER_CUT);
        let value = integrate_tol(remainder, 0.5, inner, PHI_TOL).map(|v| v + remainder(inner) * (r - inner));
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(singular + value?),
        }
    }

    fn log_unnormalized(&self, r: f64) -> Result<f64> {
        Ok(self.phi(r)? - (r * (1.0 - r)).ln())
    }

    pub fn evaluate(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::BoundaryUndefined { r });
        }
        Ok((self.log_unnormalized(r)? - self.log_norm).exp())
    }
}

/// `ψ(r)` for one point; build a [`StationaryDensity`] to evaluate many.
pub fn stationary_density(drift: &DriftSpec, s: f64, r: f64) -> Result<f64> {
    StationaryDensity::new(drift, s)?.evaluate(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RPath {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub absorbed: bool,
}

impl RPath {
    /// `(rs, (1-r)s)` along the path.
    pub fn pairs(&self, s: f64) -> Vec<WealthPair> {
        self.r.iter().map(|&r| from_rs(r, s)).collect()
    }
}

fn check_path_args(r0: f64, t_end: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if dt > MAX_DT {
        return Err(Error::StepTooLarge { dt });
    }
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(invalid("r0", format!("must lie in (0, 1), got {r0}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("t_end", format!("must be nonnegative, got {t_end}")));
    }
    Ok(())
}

/// How each endpoint treats a step that lands outside `(ε_b, 1 - ε_b)`.
///
/// With scale density `exp(-Φ) ~ d^{-b}` near an endpoint, the diffusion
/// cannot reach it when the inward drift there is at least one. Overshoots
/// of such an endpoint are discretization error and are mirrored back;
/// reachable endpoints absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Boundaries {
    pub reflect_low: bool,
    pub reflect_high: bool,
}

impl Boundaries {
    pub fn classify(drift: &DriftSpec, s: f64) -> Result<Self> {
        const FELLER_TOL: f64 = 1e-6;
        Ok(Self {
            reflect_low: drift.evaluate(ABSORB_EPS, s)? >= 1.0 - FELLER_TOL,
            reflect_high: -drift.evaluate(1.0 - ABSORB_EPS, s)? >= 1.0 - FELLER_TOL,
        })
    }
}

/// One Euler–Maruyama step driven by the increment `dw`; flags absorption.
#[inline]
fn em_step(drift: &DriftSpec, bounds: Boundaries, s: f64, r: f64, h: f64, dw: f64) -> Result<(f64, bool)> {
    let mut next = r + drift.evaluate(r, s)? * h + (2.0 * r * (1.0 - r)).sqrt() * dw;
    if next <= ABSORB_EPS && bounds.reflect_low {
        next = -next;
    }
    if next >= 1.0 - ABSORB_EPS && bounds.reflect_high {
        next = 2.0 - next;
    }
    if next <= ABSORB_EPS {
        if bounds.reflect_low {
            Ok((ABSORB_EPS * 2.0, false))
        } else {
            Ok((0.0, true))
        }
    } else if next >= 1.0 - ABSORB_EPS {
        if bounds.reflect_high {
            Ok((1.0 - ABSORB_EPS * 2.0, false))
        } else {
            Ok((1.0, true))
        }
    } else {
        Ok((next, false))
    }
}

/// Step sizes covering `[0, t_end]`: full steps of `dt` and a shorter last one.
fn step_count(t_end: f64, dt: f64) -> (usize, f64) {
    let full = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
    let rest = t_end - full as f64 * dt;
    (full, if rest > dt * 1e-9 { rest } else { 0.0 })
}

fn run_path<R: Rng + ?Sized>(
    drift: &DriftSpec,
    s: f64,
    r0: f64,
    t_end: f64,
    dt: f64,
    rng: &mut R,
    mut record: impl FnMut(f64, f64),
) -> Result<(f64, bool)> {
    check_path_args(r0, t_end, dt)?;
    let bounds = Boundaries::classify(drift, s)?;
    let (full, rest) = step_count(t_end, dt);
    let mut r = r0;
    let mut t = 0.0;
    let steps = (0..full).map(|_| dt).chain((rest > 0.0).then_some(rest));
    for h in steps {
        let z: f64 = rng.sample(StandardNormal);
        let (next, absorbed) = em_step(drift, bounds, s, r, h, z * h.sqrt())?;
        r = next;
        t += h;
        record(t, r);
        if absorbed {
            return Ok((r, true));
        }
    }
    Ok((r, false))
}

/// Euler–Maruyama path of the fraction from `r0` up to `t_end`. After
/// absorption the path is held at the endpoint.
pub fn simulate_r_diffusion<R: Rng + ?Sized>(
    drift: &DriftSpec,
    s: f64,
    r0: f64,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<RPath> {
    let mut times = vec![0.0];
    let mut values = vec![r0];
    let (r, absorbed) = run_path(drift, s, r0, t_end, dt, rng, |t, r| {
        times.push(t);
        values.push(r);
    })?;
    if absorbed && *times.last().unwrap() < t_end {
        times.push(t_end);
        values.push(r);
    }
    Ok(RPath {
        times,
        r: values,
        absorbed,
    })
}

/// Endpoint of [`simulate_r_diffusion`] on the same random stream.
pub fn simulate_r_endpoint<R: Rng + ?Sized>(
    drift: &DriftSpec,
    s: f64,
    r0: f64,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    run_path(drift, s, r0, t_end, dt, rng, |_, _| {})
}

/// Endpoints of many independent paths.
#[derive(Debug, Clone, Serialize)]
pub struct PathBatch {
    pub endpoints: Vec<f64>,
    pub absorbed: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_batch(
    drift: &DriftSpec,
    s: f64,
    r0: f64,
    t_end: f64,
    dt: f64,
    paths: u64,
    seed: u64,
) -> Result<PathBatch> {
    check_path_args(r0, t_end, dt)?;
    let ends = try_run_trials(seed, stream::DIFFUSION, paths, |_, rng| {
        simulate_r_endpoint(drift, s, r0, t_end, dt, rng)
    })?;
    Ok(PathBatch {
        absorbed: ends.iter().filter(|e| e.1).count(),
        endpoints: ends.into_iter().map(|e| e.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thermalization {
    pub ks: f64,
    pub absorbed: usize,
}

/// KS distance between the law of `r_{t_long}` under the drift built from
/// `ν` and `ν(s, ·)` itself.
#[allow(clippy::too_many_arguments)]
pub fn thermalization_check(
    measure: &RedistributionMeasure,
    s: f64,
    r0: f64,
    t_long: f64,
    paths: u64,
    dt: f64,
    seed: u64,
) -> Result<Thermalization> {
    let drift = DriftSpec::FromMeasure(measure.clone());
    let batch = simulate_batch(&drift, s, r0, t_long, dt, paths, seed)?;
    measure.cdf(s, 0.5)?;
    let ks = ks_statistic(&batch.endpoints, |r| measure.cdf(s, r.clamp(0.0, 1.0)).unwrap_or(f64::NAN));
    Ok(Thermalization {
        ks,
        absorbed: batch.absorbed,
    })
}

/// Endpoints at several step sizes `fine_dt · factor` driven by the same
/// Brownian path, one vector per factor.
#[allow(clippy::too_many_arguments)]
pub fn coupled_endpoints(
    drift: &DriftSpec,
    s: f64,
    r0: f64,
    t_end: f64,
    fine_dt: f64,
    factors: &[usize],
    paths: u64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let coarsest = *factors.iter().max().ok_or_else(|| invalid("factors", "empty"))?;
    check_path_args(r0, t_end, fine_dt * coarsest as f64)?;
    if factors.contains(&0) {
        return Err(invalid("factors", "must be positive"));
    }
    let bounds = Boundaries::classify(drift, s)?;
    let blocks = (t_end / (fine_dt * coarsest as f64)).round() as usize;
    let per_path = try_run_trials(seed, stream::DIFFUSION, paths, |_, rng| {
        let mut state: Vec<(f64, bool)> = vec![(r0, false); factors.len()];
        let mut acc = vec![0.0; factors.len()];
        for step in 1..=blocks * coarsest {
            let z: f64 = rng.sample(StandardNormal);
            let dw = z * fine_dt.sqrt();
            for (k, &f) in factors.iter().enumerate() {
                acc[k] += dw;
                if step % f == 0 {
                    let (r, dead) = state[k];
                    if !dead {
                        state[k] = em_step(drift, bounds, s, r, fine_dt * f as f64, acc[k])?;
                    }
                    acc[k] = 0.0;
                }
            }
        }
        Ok::<_, Error>(state.into_iter().map(|(r, _)| r).collect::<Vec<f64>>())
    })?;
    Ok((0..factors.len())
        .map(|k| per_path.iter().map(|v| v[k]).collect())
        .collect())
}
