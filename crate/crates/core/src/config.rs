//! Experiment configuration files (TOML).
//!
//! Every table rejects unknown keys. Values left out fall back to the
//! defaults listed in `README.md`; [`Config::resolve`] checks everything an
//! experiment needs before any simulation starts.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::measures::{induce_from_density, Density1D, RedistributionMeasure};
use crate::nagent::{build_walk, AgentConfig, WalkKernel};
use crate::stationary::{SLaw, SeriesTruncation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config error at `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn err(key: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError {
        key: key.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Canonical,
    WealthStationary,
    ProductCheck,
    DualityEnergy,
    DualityWealth,
    Diffusion,
    Nagent,
    EpsInfinity,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::Canonical,
        Self::WealthStationary,
        Self::ProductCheck,
        Self::DualityEnergy,
        Self::DualityWealth,
        Self::Diffusion,
        Self::Nagent,
        Self::EpsInfinity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Canonical => "canonical",
            Self::WealthStationary => "wealth_stationary",
            Self::ProductCheck => "product_check",
            Self::DualityEnergy => "duality_energy",
            Self::DualityWealth => "duality_wealth",
            Self::Diffusion => "diffusion",
            Self::Nagent => "nagent",
            Self::EpsInfinity => "eps_infinity",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::Canonical => "canonical / grand-canonical samples at λ = 0: conservation, product law, conditioned-product marginal",
            Self::WealthStationary => "stationary wealth law evolved forward: joint moments of order ≤ 3 preserved",
            Self::ProductCheck => "product invariance residual of μ(x)μ(y) against ν on a grid",
            Self::DualityEnergy => "energy dual: rates, two-sided duality relation, harmonic profile",
            Self::DualityWealth => "wealth dual: two-sided duality relation on x + y = 1",
            Self::Diffusion => "fraction diffusion: stationary law and density round trip",
            Self::Nagent => "N-agent model: expected wealth against the heat kernel, time change",
            Self::EpsInfinity => "stationary fraction: α-moments, best Beta fit",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// `uniform`, `beta`, `pareto` or `induced`.
    pub family: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    /// Density for `induced`: `exponential`, `gamma` or `pareto_i`.
    pub mu: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu_params: Vec<f64>,
}

fn need(v: Option<f64>, key: &str) -> Result<f64, ConfigError> {
    v.ok_or_else(|| err(key, "missing"))
}

pub fn build_density(mu: &str, params: &[f64], key: &str) -> Result<Density1D, ConfigError> {
    let param = |i: usize| {
        params
            .get(i)
            .copied()
            .ok_or_else(|| err(format!("{key}.mu_params"), format!("`{mu}` needs {} parameter(s)", i + 1)))
    };
    let built = match mu {
        "exponential" => Density1D::exponential(param(0)?),
        "gamma" => Density1D::gamma(param(0)?, params.get(1).copied().unwrap_or(1.0)),
        "pareto_i" => Density1D::pareto_i(param(0)?),
        other => return Err(err(format!("{key}.mu"), format!("unknown density `{other}`"))),
    };
    built.map_err(|e| err(format!("{key}.mu_params"), e))
}

impl MeasureConfig {
    pub fn build(&self, key: &str) -> Result<RedistributionMeasure, ConfigError> {
        let family = self.family.as_deref().unwrap_or("uniform");
        let built = match family {
            "uniform" => Ok(RedistributionMeasure::uniform()),
            "beta" => RedistributionMeasure::beta(need(self.a, &format!("{key}.a"))?, need(self.b, &format!("{key}.b"))?),
            "pareto" => RedistributionMeasure::pareto(need(self.alpha, &format!("{key}.alpha"))?),
            "induced" => {
                let mu = self.mu.as_deref().ok_or_else(|| err(format!("{key}.mu"), "missing"))?;
                Ok(induce_from_density(build_density(mu, &self.mu_params, key)?))
            }
            other => return Err(err(format!("{key}.family"), format!("unknown family `{other}`"))),
        };
        built.map_err(|e| err(key, e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    pub jump_rate: Option<f64>,
    pub t_end: Option<f64>,
    pub s: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SLawConfig {
    /// `point` or `gamma`.
    pub kind: String,
    pub s: Option<f64>,
    pub shape: Option<f64>,
    pub rate: Option<f64>,
}

impl SLawConfig {
    pub fn build(&self) -> Result<SLaw, ConfigError> {
        match self.kind.as_str() {
            "point" => {
                let s = need(self.s, "s_law.s")?;
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(err("s_law.s", "must be nonnegative"));
                }
                Ok(SLaw::PointMass(s))
            }
            "gamma" => {
                let shape = need(self.shape, "s_law.shape")?;
                let rate = self.rate.unwrap_or(1.0);
                if !(shape > 0.0 && rate > 0.0) {
                    return Err(err("s_law", "shape and rate must be positive"));
                }
                Ok(SLaw::Gamma { shape, rate })
            }
            other => Err(err("s_law.kind", format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityConfig {
    pub n_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    /// Levels over which the KMP rates are checked.
    pub rate_levels: Option<u32>,
    pub harmonic_trials: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// `linear` or `from_measure`.
    pub drift: Option<String>,
    pub alpha: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub paths: Option<u64>,
    pub r0: Option<f64>,
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NagentConfig {
    /// `ring`, `complete` or `matrix`.
    pub topology: Option<String>,
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrix: Vec<Vec<f64>>,
    pub lambda: Option<f64>,
    /// Second propensity for the time-change check.
    pub lambda_alt: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductCase {
    pub mu: String,
    #[serde(default)]
    pub mu_params: Vec<f64>,
    #[serde(flatten)]
    pub measure: MeasureConfig,
    /// `invariant` (default) or `mismatch`.
    pub expect: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsConfig {
    pub max_order: Option<u32>,
    /// Require the best-fit Beta law to be distinguishable from the samples.
    pub non_beta: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub sigmas: Option<f64>,
    pub moment_sigmas: Option<f64>,
    pub distinct_sigmas: Option<f64>,
    pub ks: Option<f64>,
    pub residual: Option<f64>,
    pub round_trip: Option<f64>,
    pub rate: Option<f64>,
    pub non_beta_ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub output: Option<String>,
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measures: Vec<MeasureConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    pub s_law: Option<SLawConfig>,
    #[serde(default)]
    pub duality: DualityConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub nagent: NagentConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub product: Vec<ProductCase>,
    #[serde(default)]
    pub eps: EpsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub output: Option<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let key = e.span().map_or_else(|| "<file>".to_string(), |s| format!("bytes {}..{}", s.start, s.end));
            err(key, e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.trials.is_some() {
            self.trials = o.trials;
        }
        if o.output.is_some() {
            self.output.clone_from(&o.output);
        }
    }

    /// `[[measures]]` when given, else `[measure]`, else Uniform.
    pub fn measure_configs(&self) -> Vec<MeasureConfig> {
        if !self.measures.is_empty() {
            self.measures.clone()
        } else {
            vec![self.measure.clone().unwrap_or_default()]
        }
    }

    /// Checks every parameter the experiment uses and fills in defaults.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let trials = self.trials.unwrap_or(100_000);
        if trials == 0 {
            return Err(err("trials", "must be positive"));
        }
        let measure_key = |i: usize| if self.measures.is_empty() { "measure".to_string() } else { format!("measures[{i}]") };
        let measures = self
            .measure_configs()
            .iter()
            .enumerate()
            .map(|(i, m)| Ok((m.clone(), m.build(&measure_key(i))?)))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let t = &self.tolerances;
        let tolerances = ResolvedTolerances {
            sigmas: t.sigmas.unwrap_or(3.0),
            moment_sigmas: t.moment_sigmas.unwrap_or(4.0),
            distinct_sigmas: t.distinct_sigmas.unwrap_or(5.0),
            ks: t.ks.unwrap_or(match self.experiment {
                Experiment::Diffusion => 0.015,
                _ => 0.01,
            }),
            residual: t.residual.unwrap_or(1e-8),
            round_trip: t.round_trip.unwrap_or(1e-6),
            rate: t.rate.unwrap_or(1e-12),
            non_beta_ks: t.non_beta_ks.unwrap_or(0.02),
        };
        let trunc = SeriesTruncation::new(self.model.tol.unwrap_or(1e-12)).map_err(|e| err("model.tol", e))?;
        let lambda_in = |key: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(v)
            } else {
                Err(err(key, format!("must lie in [0, 1), got {v}")))
            }
        };
        let mut r = Resolved {
            experiment: self.experiment,
            seed: self.seed.unwrap_or(0),
            trials,
            output: self.output.clone().unwrap_or_else(|| "out".into()),
            measures,
            tolerances,
            trunc,
            details: Details::None,
        };
        let m = &self.model;
        r.details = match self.experiment {
            Experiment::Canonical => {
                let s_law = match &self.s_law {
                    Some(s) => s.build()?,
                    None => SLaw::PointMass(m.s.unwrap_or(1.0)),
                };
                Details::Canonical { s_law }
            }
            Experiment::WealthStationary => {
                let lambda = lambda_in("model.lambda", need(m.lambda, "model.lambda")?)?;
                let lambda2 = m.lambda2.map(|l| lambda_in("model.lambda2", l)).transpose()?;
                let s = m.s.unwrap_or(1.0);
                if !(s > 0.0) {
                    return Err(err("model.s", "must be positive"));
                }
                Details::WealthStationary {
                    lambda,
                    lambda2,
                    s,
                    t_end: m.t_end.unwrap_or(5.0),
                }
            }
            Experiment::ProductCheck => {
                if self.product.is_empty() {
                    return Err(err("product", "at least one [[product]] case is required"));
                }
                let cases = self
                    .product
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let key = format!("product[{i}]");
                        let mismatch = match c.expect.as_deref().unwrap_or("invariant") {
                            "invariant" => false,
                            "mismatch" => true,
                            other => return Err(err(format!("{key}.expect"), format!("unknown value `{other}`"))),
                        };
                        Ok(ResolvedProductCase {
                            label: format!("{}{:?} vs {}", c.mu, c.mu_params, c.measure.family.as_deref().unwrap_or("uniform")),
                            mu: build_density(&c.mu, &c.mu_params, &key)?,
                            measure: c.measure.build(&key)?,
                            mismatch,
                        })
                    })
                    .collect::<Result<_, _>>()?;
                Details::Product { cases }
            }
            Experiment::DualityEnergy | Experiment::DualityWealth => {
                let wealth = self.experiment == Experiment::DualityWealth;
                let lambda = if wealth {
                    lambda_in("model.lambda", need(m.lambda, "model.lambda")?)?
                } else {
                    0.0
                };
                let x = m.x0.unwrap_or(if wealth { 0.5 } else { 1.0 });
                let y = m.y0.unwrap_or(if wealth { 1.0 - x } else { 1.0 });
                if !(x >= 0.0 && y >= 0.0) {
                    return Err(err("model.x0", "wealths must be nonnegative"));
                }
                if wealth && (x + y - 1.0).abs() > 1e-12 {
                    return Err(err("model.y0", format!("the wealth dual needs x0 + y0 = 1, got {}", x + y)));
                }
                let d = &self.duality;
                let times = if d.times.is_empty() { vec![0.5, 1.0, 2.0] } else { d.times.clone() };
                if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
                    return Err(err("duality.times", format!("negative time {t}")));
                }
                Details::Duality {
                    lambda,
                    x,
                    y,
                    n_max: d.n_max.unwrap_or(if wealth { 3 } else { 4 }),
                    times,
                    rate_levels: d.rate_levels.unwrap_or(6),
                    harmonic_trials: d.harmonic_trials.unwrap_or(trials),
                    s: m.s.unwrap_or(1.0),
                }
            }
            Experiment::Diffusion => {
                let d = &self.diffusion;
                let drift = match d.drift.as_deref().unwrap_or("linear") {
                    "linear" => DriftKind::Linear(need(d.alpha, "diffusion.alpha")?),
                    "from_measure" => DriftKind::FromMeasure,
                    other => return Err(err("diffusion.drift", format!("unknown drift `{other}`"))),
                };
                if let DriftKind::Linear(a) = drift {
                    if !(a > 0.0) {
                        return Err(err("diffusion.alpha", "must be positive for a stationary law"));
                    }
                }
                let dt = d.dt.unwrap_or(1e-3);
                if !(dt > 0.0 && dt <= crate::diffusion::MAX_DT) {
                    return Err(err("diffusion.dt", format!("must lie in (0, {}]", crate::diffusion::MAX_DT)));
                }
                let r0 = d.r0.unwrap_or(0.5);
                if !(r0 > 0.0 && r0 < 1.0) {
                    return Err(err("diffusion.r0", "must lie in (0, 1)"));
                }
                let paths = d.paths.unwrap_or(trials);
                if paths == 0 {
                    return Err(err("diffusion.paths", "must be positive"));
                }
                Details::Diffusion {
                    drift,
                    dt,
                    t_end: d.t_end.unwrap_or(50.0),
                    paths,
                    r0,
                    s: d.s.unwrap_or(1.0),
                }
            }
            Experiment::Nagent => {
                let c = &self.nagent;
                let kernel = match c.topology.as_deref().unwrap_or("ring") {
                    "ring" => WalkKernel::ring(c.n.unwrap_or(10)),
                    "complete" => WalkKernel::complete(c.n.unwrap_or(10)),
                    "matrix" => build_walk(c.matrix.clone()),
                    other => return Err(err("nagent.topology", format!("unknown topology `{other}`"))),
                }
                .map_err(|e| err("nagent", e))?;
                let lambda = lambda_in("nagent.lambda", need(c.lambda.or(m.lambda), "nagent.lambda")?)?;
                let lambda_alt = lambda_in("nagent.lambda_alt", c.lambda_alt.unwrap_or(0.2))?;
                let x0 = if c.x0.is_empty() {
                    AgentConfig::unit_at(kernel.size(), 0)
                } else {
                    if c.x0.len() != kernel.size() {
                        return Err(err("nagent.x0", format!("{} entries for {} agents", c.x0.len(), kernel.size())));
                    }
                    AgentConfig::new(c.x0.clone()).map_err(|e| err("nagent.x0", e))?
                };
                let times = if c.times.is_empty() { vec![0.5, 1.0, 2.0] } else { c.times.clone() };
                if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
                    return Err(err("nagent.times", format!("negative time {t}")));
                }
                Details::Nagent {
                    kernel,
                    lambda,
                    lambda_alt,
                    x0,
                    times,
                }
            }
            Experiment::EpsInfinity => {
                let lambdas = if m.lambdas.is_empty() {
                    vec![need(m.lambda, "model.lambda")?]
                } else {
                    m.lambdas.clone()
                };
                for (i, l) in lambdas.iter().enumerate() {
                    lambda_in(&format!("model.lambdas[{i}]"), *l)?;
                }
                for (mc, nu) in &r.measures {
                    if nu.is_s_dependent() {
                        return Err(err("measure.family", format!("`{}` depends on s", mc.family.as_deref().unwrap_or("uniform"))));
                    }
                }
                Details::Eps {
                    lambdas,
                    max_order: self.eps.max_order.unwrap_or(6),
                    non_beta: self.eps.non_beta.unwrap_or(false),
                }
            }
        };
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DriftKind {
    Linear(f64),
    FromMeasure,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTolerances {
    pub sigmas: f64,
    pub moment_sigmas: f64,
    pub distinct_sigmas: f64,
    pub ks: f64,
    pub residual: f64,
    pub round_trip: f64,
    pub rate: f64,
    pub non_beta_ks: f64,
}

#[derive(Debug, Clone)]
pub struct ResolvedProductCase {
    pub label: String,
    pub mu: Density1D,
    pub measure: RedistributionMeasure,
    pub mismatch: bool,
}

#[derive(Debug, Clone)]
pub enum Details {
    None,
    Canonical {
        s_law: SLaw,
    },
    WealthStationary {
        lambda: f64,
        lambda2: Option<f64>,
        s: f64,
        t_end: f64,
    },
    Product {
        cases: Vec<ResolvedProductCase>,
    },
    Duality {
        lambda: f64,
        x: f64,
        y: f64,
        n_max: u32,
        times: Vec<f64>,
        rate_levels: u32,
        harmonic_trials: u64,
        s: f64,
    },
    Diffusion {
        drift: DriftKind,
        dt: f64,
        t_end: f64,
        paths: u64,
        r0: f64,
        s: f64,
    },
    Nagent {
        kernel: WalkKernel,
        lambda: f64,
        lambda_alt: f64,
        x0: AgentConfig,
        times: Vec<f64>,
    },
    Eps {
        lambdas: Vec<f64>,
        max_order: u32,
        non_beta: bool,
    },
}

/// A validated configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub seed: u64,
    pub trials: u64,
    pub output: String,
    pub measures: Vec<(MeasureConfig, RedistributionMeasure)>,
    pub tolerances: ResolvedTolerances,
    pub trunc: SeriesTruncation,
    pub details: Details,
}

impl Resolved {
    pub fn measure(&self) -> &RedistributionMeasure {
        &self.measures[0].1
    }

    /// Human-readable echo of the resolved settings.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "experiment = {}\nseed = {}\ntrials = {}\noutput = {}\n",
            self.experiment.name(),
            self.seed,
            self.trials,
            self.output
        );
        for (_, m) in &self.measures {
            out += &format!("measure = {}\n", m.name());
        }
        out += &format!("tolerances = {:?}\n", self.tolerances);
        out += &format!("details = {:?}\n", self.details);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<Resolved, ConfigError> {
        Config::parse(text)?.resolve()
    }

    #[test]
    fn catalogue_has_all_kinds() {
        assert_eq!(Experiment::ALL.len(), 8);
        for e in Experiment::ALL {
            let text = format!("experiment = \"{}\"", e.name());
            assert_eq!(Config::parse(&text).unwrap().experiment, e);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = Config::parse("experiment = \"canonical\"\ncolour = 3").unwrap_err();
        assert!(e.reason.contains("colour"), "{e}");
        let e = Config::parse("experiment = \"canonical\"\n[model]\nlamda = 0.5").unwrap_err();
        assert!(e.reason.contains("lamda"), "{e}");
    }

    #[test]
    fn zero_trials_is_an_error() {
        assert_eq!(resolve("experiment = \"canonical\"\ntrials = 0").unwrap_err().key, "trials");
    }

    #[test]
    fn missing_lambda_is_named() {
        for e in ["wealth_stationary", "duality_wealth", "eps_infinity"] {
            let text = format!("experiment = \"{e}\"");
            assert_eq!(resolve(&text).unwrap_err().key, "model.lambda");
        }
        assert_eq!(resolve("experiment = \"nagent\"").unwrap_err().key, "nagent.lambda");
    }

    #[test]
    fn defaults_resolve() {
        let r = resolve("experiment = \"duality_energy\"").unwrap();
        assert_eq!(r.seed, 0);
        assert_eq!(r.trials, 100_000);
        assert_eq!(r.measure().name(), RedistributionMeasure::uniform().name());
        match r.details {
            Details::Duality { n_max, ref times, .. } => {
                assert_eq!(n_max, 4);
                assert_eq!(times, &vec![0.5, 1.0, 2.0]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn bad_values_are_named() {
        let e = resolve("experiment = \"duality_wealth\"\n[model]\nlambda = 0.5\nx0 = 0.3\ny0 = 0.3").unwrap_err();
        assert_eq!(e.key, "model.y0");
        let e = resolve("experiment = \"canonical\"\n[measure]\nfamily = \"beta\"\na = 2").unwrap_err();
        assert_eq!(e.key, "measure.b");
        let e = resolve("experiment = \"diffusion\"\n[diffusion]\nalpha = 2\ndt = 0.1").unwrap_err();
        assert_eq!(e.key, "diffusion.dt");
        let e = resolve("experiment = \"eps_infinity\"\n[model]\nlambda = 0.5\n[measure]\nfamily = \"pareto\"\nalpha = 1")
            .unwrap_err();
        assert_eq!(e.key, "measure.family");
        let e = resolve("experiment = \"nagent\"\n[nagent]\nlambda = 0.5\ntopology = \"matrix\"\nmatrix = [[0.4, 0.6], [0.4, 0.6]]")
            .unwrap_err();
        assert_eq!(e.key, "nagent");
    }

    #[test]
    fn product_cases_parse() {
        let text = r#"
experiment = "product_check"
[[product]]
mu = "gamma"
mu_params = [2.0, 1.0]
family = "beta"
a = 2.0
b = 2.0
[[product]]
mu = "gamma"
mu_params = [2.0]
expect = "mismatch"
"#;
        match resolve(text).unwrap().details {
            Details::Product { cases } => {
                assert_eq!(cases.len(), 2);
                assert!(!cases[0].mismatch && cases[1].mismatch);
            }
            _ => panic!(),
        }
    }
}
