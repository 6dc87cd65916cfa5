//! Stationary laws of the two-agent processes.
//!
//! With saving propensity `λ` the fraction `r = x/(x+y)` follows the
//! contraction `r ← λr + (1-λ)ε`, whose stationary law is that of
//! `Σ_n (1-λ) λ^n ε_n` with i.i.d. `ε_n ~ ν`. The series is cut after `N`
//! terms with `λ^N ≤ tol`; the tail is replaced by `λ^N ε_N`, which keeps the
//! sample in `[0, 1]` and is within `λ^N` of the untruncated value pathwise.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma};

use crate::error::{invalid, Error, Result};
use crate::exchange::{from_rs, WealthPair};
use crate::measures::{Density1D, RedistributionMeasure};
use crate::quadrature::integrate_unit;

/// Truncation of the geometric series for the stationary fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTruncation {
    pub tol: f64,
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        Self { tol: 1e-12 }
    }
}

impl SeriesTruncation {
    pub fn new(tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(invalid("tol", format!("must lie in (0, 1), got {tol}")));
        }
        Ok(Self { tol })
    }

    /// Smallest `N` with `factor^N ≤ tol`.
    pub fn depth(&self, factor: f64) -> Result<usize> {
        if factor >= 1.0 {
            return Err(Error::TruncationOverflow { factor });
        }
        if factor <= 0.0 {
            return Ok(0);
        }
        Ok((self.tol.ln() / factor.ln()).ceil().max(1.0) as usize)
    }
}

/// Sampler for a user-supplied law of the total `S`.
pub type TotalSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Law of the conserved total `S` in a grand-canonical mixture.
#[derive(Clone)]
pub enum SLaw {
    PointMass(f64),
    Gamma { shape: f64, rate: f64 },
    Custom(TotalSampler),
}

impl fmt::Debug for SLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PointMass(s) => write!(f, "PointMass({s})"),
            Self::Gamma { shape, rate } => write!(f, "Gamma(shape={shape}, rate={rate})"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl SLaw {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        let s = match self {
            Self::PointMass(s) => *s,
            Self::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / *rate)
                .map_err(|e| invalid("s_law", e.to_string()))?
                .sample(rng),
            Self::Custom(f) => f(rng),
        };
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid("s_law", format!("sampled a negative total {s}")));
        }
        Ok(s)
    }

    /// `E[S^k]` where known in closed form.
    pub fn raw_moment(&self, k: u32) -> Option<f64> {
        match *self {
            Self::PointMass(s) => Some(s.powi(k as i32)),
            Self::Gamma { shape, rate } => {
                Some((0..k).map(|i| shape + i as f64).product::<f64>() / rate.powi(k as i32))
            }
            Self::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrandCanonicalSpec {
    pub s_law: SLaw,
}

/// Stationary fraction at total `s`. For an `s`-dependent measure the
/// redistribution draws all use `ν(s, ·)`.
fn eps_infinity_at<R: Rng + ?Sized>(
    s: f64,
    lambda: f64,
    measure: &RedistributionMeasure,
    trunc: &SeriesTruncation,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(invalid("lambda", format!("must lie in [0, 1), got {lambda}")));
    }
    let depth = trunc.depth(lambda)?;
    if depth == 0 {
        return measure.sample(s, rng);
    }
    let mut weight = 1.0 - lambda;
    let mut r = 0.0;
    for _ in 0..depth {
        r += weight * measure.sample(s, rng)?;
        weight *= lambda;
    }
    // weight = (1-λ)λ^N here; the tail stands in for λ^N r_0 with r_0 ~ ν
    r += weight / (1.0 - lambda) * measure.sample(s, rng)?;
    Ok(r.clamp(0.0, 1.0))
}

/// One draw from the stationary law of the wealth fraction, `ν_∞^λ`.
pub fn sample_eps_infinity<R: Rng + ?Sized>(
    lambda: f64,
    measure: &RedistributionMeasure,
    trunc: &SeriesTruncation,
    rng: &mut R,
) -> Result<f64> {
    measure.require_s_independent()?;
    eps_infinity_at(1.0, lambda, measure, trunc, rng)
}

/// Moments `α_0..α_{n_max}` of the stationary fraction, from the
/// stationarity of the contraction:
/// `α_n (1 - λ^n) = Σ_{k<n} C(n,k) λ^k (1-λ)^{n-k} m_{n-k} α_k`.
pub fn alpha_moments(lambda: f64, measure: &RedistributionMeasure, n_max: usize) -> Result<Vec<f64>> {
    measure.require_s_independent()?;
    if lambda >= 1.0 {
        return Err(Error::Degenerate);
    }
    if lambda < 0.0 {
        return Err(invalid("lambda", format!("must be nonnegative, got {lambda}")));
    }
    let m: Vec<f64> = (0..=n_max as u32)
        .map(|j| measure.moment_nm(j, 0, 1.0))
        .collect::<Result<_>>()?;
    let mut alpha = vec![1.0; n_max + 1];
    for n in 1..=n_max {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..n {
            acc += binom
                * lambda.powi(k as i32)
                * (1.0 - lambda).powi((n - k) as i32)
                * m[n - k]
                * alpha[k];
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        alpha[n] = acc / (1.0 - lambda.powi(n as i32));
    }
    Ok(alpha)
}

/// Mixed moments `α(i, j) = E[r^i (1-r)^j]` of the stationary fraction,
/// precomputed up to a total order.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    lambda: f64,
    alpha: Vec<f64>,
}

impl AlphaTable {
    pub fn new(lambda: f64, measure: &RedistributionMeasure, max_order: usize) -> Result<Self> {
        Ok(Self {
            lambda,
            alpha: alpha_moments(lambda, measure, max_order)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn max_order(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha[n]
    }

    /// `α(i, j) = Σ_{k ≤ j} C(j,k) (-1)^k α_{i+k}`.
    pub fn joint(&self, i: usize, j: usize) -> f64 {
        assert!(i + j <= self.max_order(), "α({i},{j}) beyond the table order");
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..=j {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * self.alpha[i + k];
            binom = binom * (j - k) as f64 / (k + 1) as f64;
        }
        acc
    }
}

pub fn alpha_joint(lambda: f64, measure: &RedistributionMeasure, i: usize, j: usize) -> Result<f64> {
    Ok(AlphaTable::new(lambda, measure, i + j)?.joint(i, j))
}

/// `(εs, (1-ε)s)` with `ε ~ ν(s, ·)`.
pub fn sample_canonical_energy<R: Rng + ?Sized>(
    s: f64,
    measure: &RedistributionMeasure,
    rng: &mut R,
) -> Result<WealthPair> {
    if s == 0.0 {
        return Ok(WealthPair { x: 0.0, y: 0.0 });
    }
    Ok(from_rs(measure.sample(s, rng)?, s))
}

/// `(r_∞ s, (1-r_∞) s)`.
pub fn sample_stationary_wealth<R: Rng + ?Sized>(
    s: f64,
    lambda: f64,
    measure: &RedistributionMeasure,
    trunc: &SeriesTruncation,
    rng: &mut R,
) -> Result<WealthPair> {
    if s == 0.0 {
        return Ok(WealthPair { x: 0.0, y: 0.0 });
    }
    if lambda == 0.0 {
        return sample_canonical_energy(s, measure, rng);
    }
    Ok(from_rs(eps_infinity_at(s, lambda, measure, trunc, rng)?, s))
}

/// Stationary fraction for agent-dependent propensities:
/// `Σ_k (1-λ2) ε_k Π_{i<k} (λ1 + (λ2-λ1) ε_i)`.
pub fn sample_two_prop_fraction<R: Rng + ?Sized>(
    s: f64,
    l1: f64,
    l2: f64,
    measure: &RedistributionMeasure,
    trunc: &SeriesTruncation,
    rng: &mut R,
) -> Result<f64> {
    for (name, l) in [("lambda", l1), ("lambda2", l2)] {
        if l < 0.0 {
            return Err(invalid(name, format!("must be nonnegative, got {l}")));
        }
    }
    // every factor lies between λ1 and λ2
    let depth = trunc.depth(l1.max(l2))?;
    let mut product = 1.0;
    let mut r = 0.0;
    for _ in 0..depth.max(1) {
        let eps = measure.sample(s, rng)?;
        r += (1.0 - l2) * eps * product;
        product *= l1 + (l2 - l1) * eps;
    }
    if product > 0.0 {
        r += product * measure.sample(s, rng)?;
    }
    Ok(r.clamp(0.0, 1.0))
}

pub fn sample_two_prop<R: Rng + ?Sized>(
    s: f64,
    l1: f64,
    l2: f64,
    measure: &RedistributionMeasure,
    trunc: &SeriesTruncation,
    rng: &mut R,
) -> Result<WealthPair> {
    Ok(from_rs(sample_two_prop_fraction(s, l1, l2, measure, trunc, rng)?, s))
}

/// Draws `S` from its law, then the stationary pair at total `S`.
pub fn sample_grand_canonical<R: Rng>(
    spec: &GrandCanonicalSpec,
    lambda: f64,
    measure: &RedistributionMeasure,
    trunc: &SeriesTruncation,
    rng: &mut R,
) -> Result<WealthPair> {
    let s = spec.s_law.sample(rng)?;
    sample_stationary_wealth(s, lambda, measure, trunc, rng)
}

/// Default grids for [`verify_product_invariance`].
pub fn default_s_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0, 10.0]
}

/// 101 equispaced interior points of `(0, 1)`.
pub fn default_a_grid() -> Vec<f64> {
    (1..=101).map(|i| i as f64 / 102.0).collect()
}

/// `sup |ν(s, a) − μ(as)μ((1−a)s) / ∫₀¹ μ(αs)μ((1−α)s) dα|` over the grid.
/// Zero exactly when the product `μ(x)μ(y)` is invariant.
pub fn verify_product_invariance(
    mu: &Density1D,
    measure: &RedistributionMeasure,
    s_grid: &[f64],
    a_grid: &[f64],
) -> Result<f64> {
    let mut residual: f64 = 0.0;
    for &s in s_grid {
        let edge = (mu.lower_bound() / s).max(0.0);
        if edge >= 0.5 {
            return Err(Error::ZeroDenominator { s });
        }
        let z = integrate_unit(|a| mu.evaluate(a * s) * mu.evaluate((1.0 - a) * s), edge, 1.0 - edge)?;
        if z <= 0.0 {
            return Err(Error::ZeroDenominator { s });
        }
        for &a in a_grid {
            let induced = mu.evaluate(a * s) * mu.evaluate((1.0 - a) * s) / z;
            let nu = match measure.density(s, a) {
                Ok(v) => v,
                Err(Error::DegenerateSupport { .. }) => 0.0,
                Err(e) => return Err(e),
            };
            residual = residual.max((nu - induced).abs());
        }
    }
    Ok(residual)
}
