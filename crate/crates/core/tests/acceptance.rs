//! Acceptance suite: one test per criterion, each running the shipped config
//! under `configs/` and printing a PASS/FAIL line.

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use wealthsim::config::Config;
use wealthsim::runner::{run, CheckRow, Report};
use wealthsim::stationary::{default_a_grid, default_s_grid, verify_product_invariance};
use wealthsim::measures::{Density1D, RedistributionMeasure};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

fn run_config(name: &str) -> Report {
    let cfg = Config::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    run(&cfg.resolve().unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Configs shared by several criteria run once per test binary.
fn shared(name: &'static str) -> &'static Report {
    static KMP: OnceLock<Report> = OnceLock::new();
    static NAGENT: OnceLock<Report> = OnceLock::new();
    let cell = match name {
        "kmp_duality" => &KMP,
        "nagent_ring" => &NAGENT,
        _ => unreachable!(),
    };
    cell.get_or_init(|| run_config(name))
}

fn rows<'a>(report: &'a Report, checks: &[&str]) -> Vec<&'a CheckRow> {
    report.rows.iter().filter(|r| checks.contains(&r.check.as_str())).collect()
}

/// Largest |value − reference| / threshold (gap rules) or value/threshold.
fn worst(rows: &[&CheckRow]) -> String {
    let w = rows
        .iter()
        .max_by(|a, b| ratio(a).total_cmp(&ratio(b)))
        .expect("no rows");
    let measured = if w.reference.is_nan() {
        format!("value {:.4e}", w.value)
    } else {
        format!("gap {:.4e}", (w.value - w.reference).abs())
    };
    format!("{} rows, worst {} [{}] {measured} vs threshold {:.4e}", rows.len(), w.check, w.label, w.threshold)
}

fn ratio(r: &CheckRow) -> f64 {
    let v = if r.reference.is_nan() { r.value } else { (r.value - r.reference).abs() };
    if !r.pass {
        return f64::INFINITY;
    }
    v / r.threshold.max(f64::MIN_POSITIVE)
}

fn report_line(n: u32, title: &str, pass: bool, detail: &str) {
    // written past the test harness capture so every line shows up
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "\ncriterion {n:>2} {verdict}  {title}: {detail}").unwrap();
}

fn criterion(n: u32, title: &str, report: &Report, checks: &[&str]) {
    let selected = rows(report, checks);
    for c in checks {
        assert!(selected.iter().any(|r| r.check == *c), "criterion {n}: no `{c}` rows");
    }
    let pass = selected.iter().all(|r| r.pass);
    report_line(n, title, pass, &worst(&selected));
    assert!(pass, "criterion {n} failed: {:#?}", selected.iter().filter(|r| !r.pass).collect::<Vec<_>>());
}

#[test]
fn criterion_01_kmp_dual_rates() {
    let r = shared("kmp_duality");
    assert_eq!(r.check("kmp_rates").count(), 6);
    criterion(1, "KMP dual rates 1/(N+1)", r, &["kmp_rates", "generator_rows"]);
}

#[test]
fn criterion_02_energy_duality() {
    let r = shared("kmp_duality");
    assert_eq!(r.check("duality").count(), 15 * 3);
    criterion(2, "two-sided energy duality", r, &["duality"]);
}

#[test]
fn criterion_03_wealth_duality() {
    let r = run_config("wealth_duality");
    assert_eq!(r.check("duality").count(), 10 * 3);
    criterion(3, "two-sided wealth duality", &r, &["duality"]);
}

#[test]
fn criterion_04_product_fixed_point() {
    let r = run_config("product_fixed_point");
    assert_eq!(r.check("product_invariance").count(), 3);
    // Gamma shape k pairs with Beta(k, k); shape 2k does not
    let beta = RedistributionMeasure::beta(2.0, 2.0).unwrap();
    let paired = verify_product_invariance(&Density1D::gamma(2.0, 1.0).unwrap(), &beta, &default_s_grid(), &default_a_grid()).unwrap();
    let doubled = verify_product_invariance(&Density1D::gamma(4.0, 1.0).unwrap(), &beta, &default_s_grid(), &default_a_grid()).unwrap();
    let mut err = std::io::stderr().lock();
    writeln!(err, "\n  resolved Gamma shape for Beta(2,2): k = 2 (residual {paired:.2e}); shape 2k = 4 gives {doubled:.3}").unwrap();
    drop(err);
    criterion(4, "product fixed point", &r, &["product_invariance", "product_mismatch"]);
}

#[test]
fn criterion_05_grand_canonical_product() {
    let r = run_config("grand_canonical");
    assert_eq!(r.check("marginal_ks").count(), 2);
    criterion(5, "grand-canonical product law", &r, &["marginal_ks", "covariance", "conservation"]);
}

#[test]
fn criterion_06_no_beta_law() {
    let r = run_config("eps_non_beta");
    criterion(6, "stationary fraction is not Beta", &r, &["non_beta_ks", "non_beta_ks_margin"]);
}

#[test]
fn criterion_07_alpha_moments() {
    let r = run_config("alpha_moments");
    assert_eq!(r.check("alpha_moment").count(), 2 * 3 * 6);
    criterion(7, "α-moment recursion vs Monte Carlo", &r, &["alpha_moment", "alpha_spot"]);
}

#[test]
fn criterion_08_wealth_stationary() {
    let r = run_config("wealth_stationary");
    assert_eq!(r.check("moment_invariance").count(), 9);
    criterion(8, "stationary wealth law invariant", &r, &["moment_invariance", "moment_analytic"]);
}

#[test]
fn criterion_09_diffusion_stationary() {
    let r = run_config("diffusion_linear");
    criterion(9, "diffusion stationary Beta(2,2)", &r, &["stationary_ks", "round_trip"]);
}

#[test]
fn criterion_10_thermalization() {
    let r = run_config("thermalization");
    assert_eq!(r.check("thermalization_ks").count(), 2);
    criterion(10, "thermalization to ν", &r, &["thermalization_ks"]);
}

#[test]
fn criterion_11_nagent_expected_wealth() {
    let r = shared("nagent_ring");
    assert_eq!(r.check("expected_wealth").count(), 10 * 3);
    criterion(11, "N-agent expected wealth", r, &["expected_wealth", "two_agent_closed_form"]);
}

#[test]
fn criterion_12_time_change() {
    let r = shared("nagent_ring");
    criterion(12, "propensity as time scale", r, &["time_change"]);
}

#[test]
fn criterion_13_pareto_conditioned_product() {
    let r = run_config("pareto_canonical");
    criterion(13, "Pareto conditioned product", &r, &["conditioned_product_ks"]);
}

#[test]
fn criterion_14_harmonic_profile() {
    let r = shared("kmp_duality");
    assert_eq!(r.check("harmonic_profile").count(), 1 + 2 + 3 + 4);
    criterion(14, "harmonic profile constant on levels", r, &["harmonic_profile"]);
}
