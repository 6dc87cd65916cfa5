//! Two-agent redistribution maps and the event-driven energy/wealth processes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::RedistributionMeasure;
use crate::trials::exp_variate;

/// Wealth (or energy) of the two agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthPair {
    pub x: f64,
    pub y: f64,
}

impl WealthPair {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) {
            return Err(invalid("wealth", format!("({x}, {y}) must be nonnegative")));
        }
        Ok(Self { x, y })
    }

    pub fn total(&self) -> f64 {
        self.x + self.y
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            x: c * self.x,
            y: c * self.y,
        }
    }
}

/// Saving propensity (one or two agents) and the event rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub lambda2: Option<f64>,
    pub jump_rate: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lambda2: None,
            jump_rate: 1.0,
        }
    }
}

fn check_propensity(name: &'static str, l: f64) -> Result<()> {
    if (0.0..1.0).contains(&l) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0, 1), got {l}")))
    }
}

impl ModelParams {
    /// The energy model (no saving).
    pub fn energy() -> Self {
        Self::default()
    }

    pub fn wealth(lambda: f64) -> Result<Self> {
        check_propensity("lambda", lambda)?;
        Ok(Self {
            lambda,
            ..Self::default()
        })
    }

    pub fn two_propensities(lambda1: f64, lambda2: f64) -> Result<Self> {
        check_propensity("lambda", lambda1)?;
        check_propensity("lambda2", lambda2)?;
        Ok(Self {
            lambda: lambda1,
            lambda2: Some(lambda2),
            jump_rate: 1.0,
        })
    }

    pub fn with_rate(mut self, jump_rate: f64) -> Result<Self> {
        if !(jump_rate > 0.0 && jump_rate.is_finite()) {
            return Err(invalid("jump_rate", format!("must be positive, got {jump_rate}")));
        }
        self.jump_rate = jump_rate;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_propensity("lambda", self.lambda)?;
        if let Some(l2) = self.lambda2 {
            check_propensity("lambda2", l2)?;
        }
        if !(self.jump_rate > 0.0 && self.jump_rate.is_finite()) {
            return Err(invalid("jump_rate", "must be positive"));
        }
        Ok(())
    }

    /// Applies the map selected by these parameters with redistribution `eps`.
    pub fn redistribute(&self, eps: f64, p: WealthPair) -> WealthPair {
        match self.lambda2 {
            Some(l2) => apply_t_two_prop(self.lambda, l2, eps, p),
            None if self.lambda == 0.0 => apply_t(eps, p),
            None => apply_t_lambda(self.lambda, eps, p),
        }
    }
}

/// Splits `s` as `(first, s - first)`, keeping both parts in `[0, s]`.
#[inline]
fn split(first: f64, s: f64) -> WealthPair {
    let x = first.clamp(0.0, s);
    WealthPair { x, y: s - x }
}

/// `T_ε(x, y) = (ε(x+y), (1-ε)(x+y))`.
#[inline]
pub fn apply_t(eps: f64, p: WealthPair) -> WealthPair {
    let s = p.total();
    split(eps * s, s)
}

/// `T_ε^λ(x, y) = λ(x, y) + (1-λ) T_ε(x, y)`.
#[inline]
pub fn apply_t_lambda(lambda: f64, eps: f64, p: WealthPair) -> WealthPair {
    let s = p.total();
    split(lambda * p.x + (1.0 - lambda) * eps * s, s)
}

/// Agent-dependent propensities: each agent keeps `λ_i` of its wealth and the
/// pool `(1-λ1)x + (1-λ2)y` is split as `(ε, 1-ε)`.
#[inline]
pub fn apply_t_two_prop(l1: f64, l2: f64, eps: f64, p: WealthPair) -> WealthPair {
    let s = p.total();
    let pool = (1.0 - l1) * p.x + (1.0 - l2) * p.y;
    split(l1 * p.x + eps * pool, s)
}

/// `(r, s) = (x / (x+y), x + y)`.
pub fn to_rs(p: WealthPair) -> Result<(f64, f64)> {
    let s = p.total();
    if s <= 0.0 {
        return Err(Error::ZeroTotal);
    }
    Ok(((p.x / s).min(1.0), s))
}

pub fn from_rs(r: f64, s: f64) -> WealthPair {
    split(r * s, s)
}

/// One redistribution event: draws `ε ~ ν(x+y, ·)` and applies the map.
pub fn jump<R: Rng + ?Sized>(
    state: WealthPair,
    params: &ModelParams,
    measure: &RedistributionMeasure,
    rng: &mut R,
) -> Result<WealthPair> {
    Ok(jump_traced(state, params, measure, rng)?.0)
}

/// [`jump`] that also returns the drawn `ε`.
pub fn jump_traced<R: Rng + ?Sized>(
    state: WealthPair,
    params: &ModelParams,
    measure: &RedistributionMeasure,
    rng: &mut R,
) -> Result<(WealthPair, f64)> {
    let eps = measure.sample(state.total(), rng)?;
    Ok((params.redistribute(eps, state), eps))
}

/// Piecewise-constant path: `states[k]` holds on `[times[k], times[k+1])`.
/// The last entry is the state at `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<WealthPair>,
}

impl Trajectory {
    pub fn final_state(&self) -> WealthPair {
        *self.states.last().expect("trajectory is never empty")
    }

    /// Number of redistribution events.
    pub fn n_events(&self) -> usize {
        self.times.len().saturating_sub(2)
    }
}

fn check_t_end(t_end: f64) -> Result<()> {
    if t_end >= 0.0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(invalid("t_end", format!("must be nonnegative, got {t_end}")))
    }
}

/// Runs the process from `initial` up to `t_end`, recording every event.
pub fn simulate<R: Rng + ?Sized>(
    initial: WealthPair,
    params: &ModelParams,
    measure: &RedistributionMeasure,
    t_end: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    check_t_end(t_end)?;
    params.validate()?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![initial],
    };
    if t_end == 0.0 {
        return Ok(traj);
    }
    let mut state = initial;
    let mut t = 0.0;
    loop {
        t += exp_variate(rng, params.jump_rate);
        if t > t_end {
            break;
        }
        state = jump(state, params, measure, rng)?;
        traj.times.push(t);
        traj.states.push(state);
    }
    traj.times.push(t_end);
    traj.states.push(state);
    Ok(traj)
}

/// Same law and random stream as [`simulate`], keeping only the endpoint and
/// the event count.
pub fn simulate_endpoint<R: Rng + ?Sized>(
    initial: WealthPair,
    params: &ModelParams,
    measure: &RedistributionMeasure,
    t_end: f64,
    rng: &mut R,
) -> Result<(WealthPair, usize)> {
    check_t_end(t_end)?;
    params.validate()?;
    let mut state = initial;
    let mut events = 0;
    if t_end == 0.0 {
        return Ok((state, 0));
    }
    let mut t = 0.0;
    loop {
        t += exp_variate(rng, params.jump_rate);
        if t > t_end {
            return Ok((state, events));
        }
        state = jump(state, params, measure, rng)?;
        events += 1;
    }
}
