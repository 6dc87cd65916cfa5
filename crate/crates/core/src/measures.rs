//! Redistribution measures `ν(s, dε)`: the law of the fraction of the pooled
//! total `s` that goes to the first agent.
//!
//! Uniform and Beta measures use closed forms throughout. Pareto-type,
//! induced and custom measures are handled numerically: for every total `s`
//! that is queried, a [`SliceTable`] with the normalizing constant and a
//! 1024-cell CDF table is built once and memoized.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::Distribution;
use statrs::distribution::{Beta as BetaDist, ContinuousCDF, Exp, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, integrate_unit, UNIT_INSET};

/// Number of cells in the tabulated CDF used for inversion sampling.
pub const TABLE_CELLS: usize = 1024;

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A probability density on `[0, ∞)`.
#[derive(Clone)]
pub enum Density1D {
    /// `rate^shape x^{shape-1} e^{-rate x} / Γ(shape)`
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    /// `alpha x^{-alpha-1}` on `x ≥ 1`.
    ParetoI { alpha: f64 },
    /// User density, zero below `lower`.
    Custom { f: Fn1, lower: f64 },
}

impl fmt::Debug for Density1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gamma { shape, rate } => write!(f, "Gamma(shape={shape}, rate={rate})"),
            Self::Exponential { rate } => write!(f, "Exponential(rate={rate})"),
            Self::ParetoI { alpha } => write!(f, "ParetoI(alpha={alpha})"),
            Self::Custom { lower, .. } => write!(f, "Custom(lower={lower})"),
        }
    }
}

impl Density1D {
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("rate", rate)?;
        Ok(Self::Gamma { shape, rate })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn pareto_i(alpha: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        Ok(Self::ParetoI { alpha })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lower: f64) -> Self {
        Self::Custom {
            f: Arc::new(f),
            lower,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if x < self.lower_bound() {
            return 0.0;
        }
        match *self {
            Self::Gamma { shape, rate } => {
                if x == 0.0 {
                    return if shape == 1.0 {
                        rate
                    } else if shape < 1.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
            }
            Self::Exponential { rate } => rate * (-rate * x).exp(),
            Self::ParetoI { alpha } => alpha * x.powf(-alpha - 1.0),
            Self::Custom { ref f, .. } => f(x),
        }
    }

    /// Left end of the support.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Self::ParetoI { .. } => 1.0,
            Self::Custom { lower, .. } => lower,
            _ => 0.0,
        }
    }

    /// Closed-form CDF for the built-in families.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match *self {
            Self::Gamma { shape, rate } => Some(Gamma::new(shape, rate).ok()?.cdf(x.max(0.0))),
            Self::Exponential { rate } => Some(Exp::new(rate).ok()?.cdf(x.max(0.0))),
            Self::ParetoI { alpha } => Some(if x < 1.0 { 0.0 } else { 1.0 - x.powf(-alpha) }),
            Self::Custom { .. } => None,
        }
    }

    /// `d/dx log μ(x)` for the built-in families.
    fn log_derivative(&self, x: f64) -> Option<f64> {
        match *self {
            Self::Gamma { shape, rate } => Some((shape - 1.0) / x - rate),
            Self::Exponential { rate } => Some(-rate),
            Self::ParetoI { alpha } => Some(-(alpha + 1.0) / x),
            Self::Custom { .. } => None,
        }
    }
}

/// A density on `[0, ∞)²`, either a product `μ(x)μ(y)` or a joint density.
#[derive(Clone)]
pub enum Density2D {
    Product(Density1D),
    Joint(Fn2),
}

impl fmt::Debug for Density2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Product(mu) => write!(f, "Product({mu:?})"),
            Self::Joint(_) => write!(f, "Joint(..)"),
        }
    }
}

impl From<Density1D> for Density2D {
    fn from(mu: Density1D) -> Self {
        Self::Product(mu)
    }
}

impl Density2D {
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Product(mu) => mu.evaluate(x) * mu.evaluate(y),
            Self::Joint(f) => f(x, y),
        }
    }
}

#[derive(Clone)]
pub enum Family {
    Uniform,
    Beta { a: f64, b: f64 },
    /// `ε^{-α-1}(1-ε)^{-α-1}` restricted to `[1/s, (s-1)/s]`, normalized per `s`.
    ParetoType { alpha: f64 },
    /// `ν(s, a) ∝ μ(as, (1-a)s)`.
    Induced(Density2D),
    /// `ν(s, ε) ∝ f(s, ε)`.
    Custom(Fn2),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "Uniform"),
            Self::Beta { a, b } => write!(f, "Beta({a}, {b})"),
            Self::ParetoType { alpha } => write!(f, "ParetoType({alpha})"),
            Self::Induced(mu) => write!(f, "Induced({mu:?})"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Normalizer and tabulated CDF of a numerically handled measure at one `s`.
#[derive(Debug, Clone)]
pub struct SliceTable {
    pub lo: f64,
    pub hi: f64,
    pub norm: f64,
    /// `cdf[k]` is the mass of `[lo, lo + k·h]`, with `cdf[TABLE_CELLS] = 1`.
    pub cdf: Vec<f64>,
}

impl SliceTable {
    fn width(&self) -> f64 {
        (self.hi - self.lo) / TABLE_CELLS as f64
    }

    /// Inverse of the piecewise-linear interpolated CDF.
    fn invert(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, TABLE_CELLS) - 1;
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        (self.lo + (k as f64 + frac.clamp(0.0, 1.0)) * self.width()).clamp(self.lo, self.hi)
    }
}

/// The law `ν(s, dε)` of the redistributed fraction.
#[derive(Clone)]
pub struct RedistributionMeasure {
    family: Family,
    s_dependent: bool,
    beta_sampler: Option<rand_distr::Beta<f64>>,
    tables: Arc<RwLock<HashMap<u64, Arc<SliceTable>>>>,
}

impl fmt::Debug for RedistributionMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RedistributionMeasure")
            .field("family", &self.family)
            .field("s_dependent", &self.s_dependent)
            .finish()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(invalid("eps", format!("must lie in [0, 1], got {eps}")))
    }
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(invalid("s", format!("total must be positive, got {s}")))
    }
}

impl RedistributionMeasure {
    fn with_family(family: Family, s_dependent: bool) -> Self {
        let beta_sampler = match family {
            Family::Beta { a, b } => rand_distr::Beta::new(a, b).ok(),
            _ => None,
        };
        Self {
            family,
            s_dependent,
            beta_sampler,
            tables: Arc::default(),
        }
    }

    /// `ν(dε) = dε`, the KMP redistribution.
    pub fn uniform() -> Self {
        Self::with_family(Family::Uniform, false)
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(Self::with_family(Family::Beta { a, b }, false))
    }

    pub fn pareto(alpha: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        Ok(Self::with_family(Family::ParetoType { alpha }, true))
    }

    /// A measure with density proportional to `f(s, ε)`. Whether `f` depends
    /// on `s` is declared, not inferred.
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, s_dependent: bool) -> Self {
        Self::with_family(Family::Custom(Arc::new(f)), s_dependent)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_s_dependent(&self) -> bool {
        self.s_dependent
    }

    pub fn require_s_independent(&self) -> Result<()> {
        if self.s_dependent {
            Err(Error::SDependentMeasure)
        } else {
            Ok(())
        }
    }

    /// Short human-readable name.
    pub fn name(&self) -> String {
        format!("{:?}", self.family)
    }

    /// Support of `ν(s, ·)` inside `[0, 1]`.
    pub fn support(&self, s: f64) -> Result<(f64, f64)> {
        match &self.family {
            Family::ParetoType { .. } => {
                if s <= 2.0 {
                    return Err(Error::DegenerateSupport { s });
                }
                Ok((1.0 / s, (s - 1.0) / s))
            }
            Family::Induced(Density2D::Product(mu)) => {
                let edge = mu.lower_bound() / s;
                if edge >= 0.5 {
                    return Err(Error::ZeroDenominator { s });
                }
                Ok((edge.max(0.0), 1.0 - edge.max(0.0)))
            }
            _ => Ok((0.0, 1.0)),
        }
    }

    fn unnormalized(&self, s: f64, eps: f64) -> f64 {
        match &self.family {
            Family::Uniform => 1.0,
            Family::Beta { a, b } => eps.powf(a - 1.0) * (1.0 - eps).powf(b - 1.0),
            Family::ParetoType { alpha } => (eps * (1.0 - eps)).powf(-alpha - 1.0),
            Family::Induced(mu) => mu.evaluate(eps * s, (1.0 - eps) * s),
            Family::Custom(f) => f(s, eps),
        }
    }

    fn is_tabulated(&self) -> bool {
        !matches!(self.family, Family::Uniform | Family::Beta { .. })
    }

    /// Memoized normalizer and CDF table at total `s`.
    pub fn table(&self, s: f64) -> Result<Arc<SliceTable>> {
        let key = if self.s_dependent { s.to_bits() } else { 0 };
        if let Some(t) = self.tables.read().expect("table cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(self.build_table(s)?);
        self.tables
            .write()
            .expect("table cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }

    fn build_table(&self, s: f64) -> Result<SliceTable> {
        let (lo, hi) = self.support(s)?;
        let (lo, hi) = (lo.max(UNIT_INSET), hi.min(1.0 - UNIT_INSET));
        let h = (hi - lo) / TABLE_CELLS as f64;
        let f = |e: f64| self.unnormalized(s, e);
        let mut cdf = Vec::with_capacity(TABLE_CELLS + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for k in 0..TABLE_CELLS {
            let a = lo + k as f64 * h;
            let b = if k + 1 == TABLE_CELLS { hi } else { a + h };
            let mass = integrate(f, a, b)?;
            if mass < 0.0 {
                let eps = 0.5 * (a + b);
                return Err(Error::NonAdmissible {
                    s,
                    eps,
                    value: f(eps),
                });
            }
            acc += mass;
            cdf.push(acc);
        }
        if acc <= 0.0 || !acc.is_finite() {
            return Err(Error::ZeroDenominator { s });
        }
        // a single global quadrature is more accurate than the cell sum
        let norm = integrate_unit(f, lo, hi)?;
        for c in &mut cdf {
            *c /= acc;
        }
        cdf[TABLE_CELLS] = 1.0;
        Ok(SliceTable { lo, hi, norm, cdf })
    }

    /// Density `ν(s, ε)`; zero outside the support.
    pub fn density(&self, s: f64, eps: f64) -> Result<f64> {
        check_s(s)?;
        check_eps(eps)?;
        match self.family {
            Family::Uniform => Ok(1.0),
            Family::Beta { a, b } => Ok(beta_density(a, b, eps)),
            _ => {
                let (lo, hi) = self.support(s)?;
                if eps < lo || eps > hi {
                    return Ok(0.0);
                }
                let value = self.unnormalized(s, eps);
                if value < 0.0 {
                    return Err(Error::NonAdmissible { s, eps, value });
                }
                Ok(value / self.table(s)?.norm)
            }
        }
    }

    /// `ν(s, [0, ε])`.
    pub fn cdf(&self, s: f64, eps: f64) -> Result<f64> {
        check_s(s)?;
        let eps = eps.clamp(0.0, 1.0);
        match self.family {
            Family::Uniform => Ok(eps),
            Family::Beta { a, b } => Ok(BetaDist::new(a, b)
                .map_err(|e| invalid("beta", e.to_string()))?
                .cdf(eps)),
            _ => {
                let t = self.table(s)?;
                if eps <= t.lo {
                    return Ok(0.0);
                }
                if eps >= t.hi {
                    return Ok(1.0);
                }
                let k = (((eps - t.lo) / t.width()) as usize).min(TABLE_CELLS - 1);
                let start = t.lo + k as f64 * t.width();
                let partial = integrate(|e| self.unnormalized(s, e), start, eps)? / t.norm;
                Ok((t.cdf[k] + partial).clamp(0.0, 1.0))
            }
        }
    }

    /// Draws `ε ~ ν(s, ·)`.
    pub fn sample<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        match self.family {
            Family::Uniform => Ok(rng.random()),
            Family::Beta { .. } => Ok(self
                .beta_sampler
                .as_ref()
                .expect("beta sampler built at construction")
                .sample(rng)),
            _ => {
                let t = self.table(s)?;
                Ok(t.invert(rng.random()))
            }
        }
    }

    /// `ν_{nm}(s) = ∫ ε^n (1-ε)^m ν(s, dε)`.
    pub fn moment_nm(&self, n: u32, m: u32, s: f64) -> Result<f64> {
        match self.family {
            Family::Uniform => Ok(beta_moment(1.0, 1.0, n, m)),
            Family::Beta { a, b } => Ok(beta_moment(a, b, n, m)),
            _ => {
                check_s(s)?;
                if n == 0 && m == 0 {
                    return Ok(1.0);
                }
                let t = self.table(s)?;
                let v = integrate_unit(
                    |e| e.powi(n as i32) * (1.0 - e).powi(m as i32) * self.unnormalized(s, e),
                    t.lo,
                    t.hi,
                )?;
                Ok(v / t.norm)
            }
        }
    }

    /// `∫ ε ν(s, dε)`.
    pub fn mean(&self, s: f64) -> Result<f64> {
        self.moment_nm(1, 0, s)
    }

    /// Closed-form `∂_ε log ν(s, ε)` where one exists.
    pub fn log_density_derivative(&self, s: f64, eps: f64) -> Option<f64> {
        match &self.family {
            Family::Uniform => Some(0.0),
            Family::Beta { a, b } => Some((a - 1.0) / eps - (b - 1.0) / (1.0 - eps)),
            Family::ParetoType { alpha } => Some(-(alpha + 1.0) * (1.0 / eps - 1.0 / (1.0 - eps))),
            Family::Induced(Density2D::Product(mu)) => {
                Some(s * (mu.log_derivative(eps * s)? - mu.log_derivative((1.0 - eps) * s)?))
            }
            _ => None,
        }
    }

    /// Whether the measure is handled through numerical tables.
    pub fn tabulated(&self) -> bool {
        self.is_tabulated()
    }
}

/// Beta density `ε^{a-1}(1-ε)^{b-1} / B(a, b)`.
pub fn beta_density(a: f64, b: f64, eps: f64) -> f64 {
    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    if eps == 0.0 || eps == 1.0 {
        let edge_exp = if eps == 0.0 { a } else { b };
        return if edge_exp < 1.0 {
            f64::INFINITY
        } else if edge_exp == 1.0 {
            (-ln_b).exp()
        } else {
            0.0
        };
    }
    ((a - 1.0) * eps.ln() + (b - 1.0) * (1.0 - eps).ln() - ln_b).exp()
}

/// `B(a+n, b+m) / B(a, b)` as a finite product.
pub fn beta_moment(a: f64, b: f64, n: u32, m: u32) -> f64 {
    let mut num = 1.0;
    for i in 0..n {
        num *= a + i as f64;
    }
    for j in 0..m {
        num *= b + j as f64;
    }
    let mut den = 1.0;
    for k in 0..(n + m) {
        den *= a + b + k as f64;
    }
    num / den
}

/// The measure induced by a candidate invariant density:
/// `ν(s, a) = μ(as, (1-a)s) / ∫₀¹ μ(αs, (1-α)s) dα`.
pub fn induce_from_density(mu: impl Into<Density2D>) -> RedistributionMeasure {
    RedistributionMeasure::with_family(Family::Induced(mu.into()), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_99, ks_statistic, mean_estimate, EQUALITY_SIGMAS};
    use crate::trials::trial_rng;

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (1..n).map(move |i| i as f64 / n as f64)
    }

    #[test]
    fn density_examples() {
        let u = RedistributionMeasure::uniform();
        assert_eq!(u.density(5.0, 0.3).unwrap(), 1.0);
        let b = RedistributionMeasure::beta(2.0, 2.0).unwrap();
        assert!((b.density(1.0, 0.5).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn pareto_density_matches_closed_form_normalizer() {
        // ∫_{1/3}^{2/3} (ε(1-ε))^{-2} dε = [-1/ε + 1/(1-ε) + 2 ln(ε/(1-ε))] = 3 + 4 ln 2
        let p = RedistributionMeasure::pareto(1.0).unwrap();
        let expected = 16.0 / (3.0 + 4.0 * 2f64.ln());
        assert!((p.density(3.0, 0.5).unwrap() - expected).abs() < 1e-10);
        assert_eq!(p.density(3.0, 0.2).unwrap(), 0.0);
        assert_eq!(p.density(3.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn pareto_needs_s_above_two() {
        let p = RedistributionMeasure::pareto(1.0).unwrap();
        assert!(matches!(p.density(2.0, 0.5), Err(Error::DegenerateSupport { .. })));
        let mut rng = trial_rng(0, 0, 0);
        assert!(matches!(p.sample(1.5, &mut rng), Err(Error::DegenerateSupport { .. })));
        assert!(matches!(p.moment_nm(1, 1, 2.0), Err(Error::DegenerateSupport { .. })));
    }

    #[test]
    fn negative_custom_density_is_rejected() {
        let c = RedistributionMeasure::custom(|_, e| e - 0.25, false);
        assert!(matches!(c.density(1.0, 0.1), Err(Error::NonAdmissible { .. })));
    }

    #[test]
    fn eps_outside_unit_interval_is_rejected() {
        let u = RedistributionMeasure::uniform();
        assert!(u.density(1.0, 1.5).is_err());
        assert!(u.density(1.0, -0.1).is_err());
    }

    #[test]
    fn moment_examples() {
        let u = RedistributionMeasure::uniform();
        assert!((u.moment_nm(1, 1, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let b = RedistributionMeasure::beta(2.0, 2.0).unwrap();
        assert!((b.moment_nm(1, 0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let p = RedistributionMeasure::pareto(1.5).unwrap();
        for m in [&u, &b, &p] {
            assert!((m.moment_nm(0, 0, 4.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_on_s_grid() {
        let families = [
            RedistributionMeasure::uniform(),
            RedistributionMeasure::beta(2.0, 2.0).unwrap(),
            RedistributionMeasure::beta(3.0, 1.5).unwrap(),
            RedistributionMeasure::pareto(1.0).unwrap(),
            RedistributionMeasure::pareto(1.5).unwrap(),
        ];
        for m in &families {
            for k in 0..20 {
                let s = 2.5 + 0.75 * k as f64;
                let (lo, hi) = m.support(s).unwrap();
                let total = integrate_unit(|e| m.density(s, e).unwrap(), lo, hi).unwrap();
                assert!((total - 1.0).abs() < 1e-10, "{} at s={s}: {total}", m.name());
            }
        }
    }

    #[test]
    fn symmetric_families_are_symmetric() {
        for m in [
            RedistributionMeasure::uniform(),
            RedistributionMeasure::beta(2.5, 2.5).unwrap(),
        ] {
            for e in grid(50) {
                let (l, r) = (m.density(1.0, e).unwrap(), m.density(1.0, 1.0 - e).unwrap());
                assert!((l - r).abs() <= 1e-12 * l.max(1.0));
            }
        }
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        for (a, b) in [(1.0, 1.0), (2.0, 2.0), (3.0, 1.5)] {
            let m = RedistributionMeasure::beta(a, b).unwrap();
            for n in 0..=8u32 {
                for k in 0..=(8 - n) {
                    let closed = m.moment_nm(n, k, 1.0).unwrap();
                    let quad = integrate_unit(
                        |e| e.powi(n as i32) * (1.0 - e).powi(k as i32) * beta_density(a, b, e),
                        0.0,
                        1.0,
                    )
                    .unwrap();
                    assert!((closed - quad).abs() < 1e-10, "Beta({a},{b}) n={n} m={k}");
                }
            }
        }
    }

    #[test]
    fn samplers_follow_their_laws() {
        let n = 100_000;
        let crit = ks_critical_99(n);
        let cases: Vec<(RedistributionMeasure, f64)> = vec![
            (RedistributionMeasure::uniform(), 1.0),
            (RedistributionMeasure::beta(2.0, 2.0).unwrap(), 1.0),
            (RedistributionMeasure::pareto(1.0).unwrap(), 3.0),
            (RedistributionMeasure::pareto(1.5).unwrap(), 5.0),
            (induce_from_density(Density1D::gamma(2.0, 1.0).unwrap()), 2.0),
        ];
        for (k, (m, s)) in cases.iter().enumerate() {
            let mut rng = trial_rng(11, 0, k as u64);
            let x: Vec<f64> = (0..n).map(|_| m.sample(*s, &mut rng).unwrap()).collect();
            let d = ks_statistic(&x, |e| m.cdf(*s, e).unwrap());
            assert!(d < crit, "{} KS {d}", m.name());
        }
    }

    #[test]
    fn uniform_sampler_and_beta_mean() {
        let mut rng = trial_rng(12, 0, 0);
        let u = RedistributionMeasure::uniform();
        let x: Vec<f64> = (0..100_000).map(|_| u.sample(7.0, &mut rng).unwrap()).collect();
        assert!(ks_statistic(&x, |e| e) < 0.01);
        let b = RedistributionMeasure::beta(2.0, 2.0).unwrap();
        let y: Vec<f64> = (0..100_000).map(|_| b.sample(7.0, &mut rng).unwrap()).collect();
        assert!(mean_estimate(&y).within(0.5, EQUALITY_SIGMAS));
    }

    #[test]
    fn pareto_samples_stay_in_support() {
        let p = RedistributionMeasure::pareto(1.0).unwrap();
        let mut rng = trial_rng(13, 0, 0);
        for _ in 0..100_000 {
            let e = p.sample(3.0, &mut rng).unwrap();
            assert!((1.0 / 3.0..=2.0 / 3.0).contains(&e));
        }
    }

    #[test]
    fn induced_exponential_is_uniform() {
        let nu = induce_from_density(Density1D::exponential(1.0).unwrap());
        for s in [0.5, 1.0, 2.0, 5.0, 10.0] {
            for a in grid(20) {
                assert!((nu.density(s, a).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn induced_gamma_is_beta_and_s_independent() {
        for k in [2.0, 3.0, 1.5] {
            let nu = induce_from_density(Density1D::gamma(k, 1.0).unwrap());
            let mut worst: f64 = 0.0;
            let reference: Vec<f64> = grid(100).map(|a| nu.density(1.0, a).unwrap()).collect();
            for s in [0.5, 2.0, 5.0, 10.0] {
                for (a, r) in grid(100).zip(&reference) {
                    let d = nu.density(s, a).unwrap();
                    worst = worst.max((d - r).abs());
                    assert!((d - beta_density(k, k, a)).abs() < 1e-8, "k={k} s={s} a={a}");
                }
            }
            assert!(worst < 1e-8);
        }
    }

    #[test]
    fn induced_pareto_is_pareto_type() {
        let nu = induce_from_density(Density1D::pareto_i(1.5).unwrap());
        let p = RedistributionMeasure::pareto(1.5).unwrap();
        for s in [3.0, 4.0, 8.0] {
            for a in grid(40) {
                let (x, y) = (nu.density(s, a).unwrap(), p.density(s, a).unwrap());
                assert!((x - y).abs() < 1e-9 * y.max(1.0), "s={s} a={a}: {x} vs {y}");
            }
        }
        assert!(matches!(nu.density(1.5, 0.5), Err(Error::ZeroDenominator { .. })));
    }

    #[test]
    fn log_derivative_matches_finite_difference() {
        let cases = [
            RedistributionMeasure::beta(2.0, 3.0).unwrap(),
            RedistributionMeasure::pareto(1.5).unwrap(),
            induce_from_density(Density1D::gamma(2.5, 1.0).unwrap()),
        ];
        for m in &cases {
            for r in [0.3, 0.45, 0.6] {
                let h = 1e-5;
                let fd = ((m.density(4.0, r + h).unwrap()).ln()
                    - (m.density(4.0, r - h).unwrap()).ln())
                    / (2.0 * h);
                let exact = m.log_density_derivative(4.0, r).unwrap();
                assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0));
            }
        }
    }
}
