//! Side-by-side comparison of the closed-form model and the oracles.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::enumerate::enumerate_with;
use super::sampling::{rao_blackwell_average, sample_eta_r_fov, Moments};
use super::slots::{simulate_slots, SimConfig, SlotParams};
use super::{stream_rng, Adjudication, FovMode};
use crate::channel::DerivedChannel;
use crate::error::{ModelError, Result};
use crate::performance::{
    average_key_rate, average_qber, conditional_qber, expected_eta_r, multi_pair_factor, ConditionalPoint, QuadConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub rb_draws: u64,
    pub mc_slots: u64,
    pub seed: u64,
    pub quad: QuadConfig,
    /// Pair and background truncation of the enumerations.
    pub enum_pairs: u64,
    pub enum_background: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            rb_draws: 200_000,
            mc_slots: 2_000_000,
            seed: 20240601,
            quad: QuadConfig::default(),
            enum_pairs: 7,
            enum_background: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The model and the oracle are known to disagree here.
    ExpectedDivergence,
    /// The compared quantity does not exist for these inputs.
    Undefined,
}

impl CheckStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::ExpectedDivergence => "EXPECTED-DIVERGENCE",
            Self::Undefined => "UNDEFINED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub description: String,
    pub status: CheckStatus,
    pub values: BTreeMap<String, f64>,
    pub note: Option<String>,
}

impl Check {
    fn new(id: &str, description: &str) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            status: CheckStatus::Pass,
            values: BTreeMap::new(),
            note: None,
        }
    }

    fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.into(), v);
        self
    }

    fn status(mut self, s: CheckStatus) -> Self {
        self.status = s;
        self
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    /// True when no check failed. Expected divergences do not count.
    pub fn all_consistent(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serialisable")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", c.status.label(), c.id, c.description)?;
            for (k, v) in &c.values {
                writeln!(f, "    {k} = {v:.6e}")?;
            }
            if let Some(n) = &c.note {
                writeln!(f, "    note: {n}")?;
            }
        }
        Ok(())
    }
}

fn within(diff: f64, tol: f64) -> CheckStatus {
    if diff <= tol {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

const UNDEFINED_NOTE: &str = "no source pairs and no background: nothing is sifted and the QBER is undefined";

fn qber_vs_rao_blackwell(a: &DerivedChannel, b: &DerivedChannel, cfg: &ValidationConfig) -> Result<Check> {
    let check = Check::new("qber_quadrature_vs_monte_carlo", "averaged QBER by quadrature against Rao-Blackwellised Monte Carlo");
    let quad = match average_qber(a, b, &cfg.quad) {
        Err(ModelError::UndefinedQber) => return Ok(check.status(CheckStatus::Undefined).note(UNDEFINED_NOTE)),
        other => other?,
    };
    let rb = rao_blackwell_average(a, b, cfg.rb_draws, cfg.seed)?;
    let diff = (quad.qber - rb.qber).abs();
    let tol = (3.0 * rb.qber_stderr).max(quad.error_estimate) + 1e-12 * quad.qber.abs();
    Ok(check
        .value("quadrature", quad.qber)
        .value("monte_carlo", rb.qber)
        .value("monte_carlo_stderr", rb.qber_stderr)
        .value("quadrature_error", quad.error_estimate)
        .status(within(diff, tol)))
}

fn rate_vs_rao_blackwell(a: &DerivedChannel, b: &DerivedChannel, cfg: &ValidationConfig) -> Result<Check> {
    let exact = average_key_rate(a, b)?.per_slot;
    let rb = rao_blackwell_average(a, b, cfg.rb_draws, cfg.seed.wrapping_add(1))?;
    let diff = (exact - rb.rate_per_slot).abs();
    Ok(Check::new("key_rate_closed_form_vs_monte_carlo", "averaged key rate per slot in closed form against Monte Carlo")
        .value("closed_form", exact)
        .value("monte_carlo", rb.rate_per_slot)
        .value("monte_carlo_stderr", rb.rate_stderr)
        .status(within(diff, 3.0 * rb.rate_stderr + 1e-12 * exact)))
}

fn mean_point_vs_enumeration(a: &DerivedChannel, b: &DerivedChannel, cfg: &ValidationConfig) -> Result<Check> {
    let check = Check::new(
        "conditional_qber_vs_enumeration",
        "conditional QBER at the mean reception rates against exact first-principles enumeration",
    );
    if a.mu_t == 0.0 {
        if a.mu_b == 0.0 || b.mu_b == 0.0 {
            return Ok(check.status(CheckStatus::Undefined).note(UNDEFINED_NOTE));
        }
        return Ok(check.status(CheckStatus::Undefined).note("no source pairs: see the background-limit check"));
    }
    let (ea, eb) = (expected_eta_r(a), expected_eta_r(b));
    let model = conditional_qber(&ConditionalPoint { eta_r_a: ea, eta_r_b: eb, mu_b_a: a.mu_b, mu_b_b: b.mu_b, mu_t: a.mu_t })?;
    let p = SlotParams {
        mu_t: a.mu_t,
        eta_a: (ea / a.mu_t).min(1.0),
        eta_b: (eb / b.mu_t).min(1.0),
        mu_b_a: a.mu_b,
        mu_b_b: b.mu_b,
    };
    let fp = enumerate_with(&p, cfg.enum_pairs, cfg.enum_background, Adjudication::FirstPrinciples)?;
    let table = enumerate_with(&p, cfg.enum_pairs, cfg.enum_background, Adjudication::ErrorTable)?;
    let (Some(fpq), Some(tq)) = (fp.qber, table.qber) else {
        return Ok(check.status(CheckStatus::Undefined).note("nothing sifted in the enumerated outcome space"));
    };
    let rel = (fpq - model).abs() / fpq.max(model);
    let status = if rel <= 0.1 { CheckStatus::Pass } else { CheckStatus::ExpectedDivergence };
    Ok(check
        .value("model", model)
        .value("enumerated_first_principles", fpq)
        .value("enumerated_table_rules", tq)
        .value("relative_gap", rel)
        .value("truncation_mass", fp.truncation_mass)
        .status(status)
        .note(
            "the model charges multi-pair slots e^-mu (mu^2/8 + mu^3/18) per coincidence; \
             resolving which pair each detector saw gives a floor about mu/2 when detection is weak",
        ))
}

fn multi_pair_floor(cfg: &ValidationConfig) -> Result<Check> {
    let mu = 0.05;
    let p = SlotParams { mu_t: mu, eta_a: 0.2, eta_b: 0.2, mu_b_a: 0.0, mu_b_b: 0.0 };
    let fp = enumerate_with(&p, cfg.enum_pairs, cfg.enum_background, Adjudication::FirstPrinciples)?;
    let floor = multi_pair_factor(mu);
    let enumerated = fp.qber.expect("pairs are emitted");
    let ratio = enumerated / floor;
    let status = if (10.0..=1000.0).contains(&ratio) { CheckStatus::ExpectedDivergence } else { CheckStatus::Fail };
    Ok(Check::new("multi_pair_floor", "background-free QBER floor at mu_t = 0.05, eta = 0.2 on both sides")
        .value("closed_form", floor)
        .value("enumerated", enumerated)
        .value("ratio", ratio)
        .status(status)
        .note("the closed-form floor is roughly two orders of magnitude below the first-principles value"))
}

fn background_limit(cfg: &ValidationConfig) -> Result<Check> {
    let mu_b = 0.05;
    let model = conditional_qber(&ConditionalPoint { eta_r_a: 0.0, eta_r_b: 0.0, mu_b_a: mu_b, mu_b_b: mu_b, mu_t: 0.0 })?;
    let p = SlotParams { mu_t: 0.0, eta_a: 0.0, eta_b: 0.0, mu_b_a: mu_b, mu_b_b: mu_b };
    let sim = SimConfig {
        n_slots: cfg.mc_slots,
        seed: cfg.seed.wrapping_add(2),
        adjudication: Adjudication::FirstPrinciples,
        fov_mode: FovMode::PerPhoton,
        force: false,
    };
    let t = simulate_slots(&sim, &p)?;
    let (q, se) = (t.qber_hat.unwrap_or(f64::NAN), t.stderr_qber.unwrap_or(f64::NAN));
    let diverges = model == 1.0 && (q - 0.5).abs() <= 3.0 * se;
    Ok(Check::new("background_limit", "QBER with background clicks only")
        .value("model", model)
        .value("simulated", q)
        .value("simulated_stderr", se)
        .status(if diverges { CheckStatus::ExpectedDivergence } else { CheckStatus::Fail })
        .note("the model counts every background coincidence as an error; an uncorrelated click is right half the time"))
}

fn slots_vs_enumeration(cfg: &ValidationConfig) -> Result<Check> {
    let p = SlotParams { mu_t: 0.3, eta_a: 0.1, eta_b: 0.1, mu_b_a: 0.01, mu_b_b: 0.01 };
    let mut check = Check::new("slot_simulation_vs_enumeration", "slot-level simulation against exact enumeration at a boosted point");
    let mut ok = true;
    for (i, adj) in [Adjudication::FirstPrinciples, Adjudication::ErrorTable].into_iter().enumerate() {
        let sim = SimConfig {
            n_slots: cfg.mc_slots,
            seed: cfg.seed.wrapping_add(3 + i as u64),
            adjudication: adj,
            fov_mode: FovMode::PerPhoton,
            force: false,
        };
        let t = simulate_slots(&sim, &p)?;
        let e = enumerate_with(&p, cfg.enum_pairs, cfg.enum_background, adj)?;
        let (q, se, eq) = (t.qber_hat.unwrap_or(f64::NAN), t.stderr_qber.unwrap_or(f64::NAN), e.qber.unwrap_or(f64::NAN));
        ok &= (q - eq).abs() <= 4.0 * se;
        check = check
            .value(&format!("{}_simulated", adj.as_str()), q)
            .value(&format!("{}_stderr", adj.as_str()), se)
            .value(&format!("{}_enumerated", adj.as_str()), eq);
    }
    Ok(check.status(if ok { CheckStatus::Pass } else { CheckStatus::Fail }))
}

fn aperture(side: &str, ch: &DerivedChannel) -> Result<Check> {
    let mut check = Check::new(&format!("aperture_coupling_{side}"), "far-field aperture coupling against the exact disk integral");
    let mut worst: f64 = 0.0;
    for (label, frac) in [("on_axis", 0.0), ("half_width", 0.5), ("one_width", 1.0)] {
        let r = frac * ch.w_z;
        let approx = ch.aperture_coupling_approx(r / ch.distance, 0.0);
        let exact = ch.aperture_coupling_exact(r, 0.0, 1e-8)?;
        let rel = (approx - exact).abs() / exact;
        worst = worst.max(rel);
        check = check.value(&format!("{label}_approx"), approx).value(&format!("{label}_exact"), exact);
    }
    check = check.value("worst_relative_gap", worst).value("width_over_radius", ch.w_z / ch.aperture_radius);
    if ch.w_z >= 20.0 * ch.aperture_radius {
        Ok(check.status(within(worst, 1e-2)))
    } else {
        Ok(check
            .status(CheckStatus::ExpectedDivergence)
            .note("beam narrower than 20 aperture radii: the far-field coupling is outside its regime"))
    }
}

fn physical_means(ch: &DerivedChannel, draws: u64, seed: u64) -> (Moments, Moments) {
    let (mut photon, mut slot) = (Moments::default(), Moments::default());
    let mut rng = stream_rng(seed, 0);
    for _ in 0..draws {
        photon.push(sample_eta_r_fov(ch, FovMode::PerPhoton, &mut rng));
        slot.push(sample_eta_r_fov(ch, FovMode::PerSlot, &mut rng));
    }
    (photon, slot)
}

fn fov_and_pointing(side: &str, ch: &DerivedChannel, cfg: &ValidationConfig, seed: u64) -> Vec<Check> {
    let (photon, slot) = physical_means(ch, cfg.rb_draws, seed);
    let se = photon.stderr().hypot(slot.stderr());
    let gap = (photon.mean - slot.mean).abs();
    let fov = Check::new(&format!("fov_modes_{side}"), "mean reception rate with the field-of-view stop per photon and per slot")
        .value("per_photon", photon.mean)
        .value("per_slot", slot.mean)
        .value("combined_stderr", se)
        .status(within(gap, 3.0 * se));

    let closed = expected_eta_r(ch);
    let published = ch.w_z * ch.w_z / (4.0 * ch.distance * ch.distance * ch.track_jitter_sigma * ch.track_jitter_sigma);
    let uses_published = (ch.gamma - published).abs() <= 1e-9 * ch.gamma;
    let agrees = (photon.mean - closed).abs() <= 3.0 * photon.stderr() + 1e-12 * closed;
    let status = match (agrees, uses_published) {
        (true, _) => CheckStatus::Pass,
        (false, true) => CheckStatus::ExpectedDivergence,
        (false, false) => CheckStatus::Fail,
    };
    let mut pointing = Check::new(&format!("pointing_law_{side}"), "power-law mean reception rate against simulated Gaussian pointing")
        .value("closed_form", closed)
        .value("simulated", photon.mean)
        .value("simulated_stderr", photon.stderr())
        .value("gamma", ch.gamma)
        .status(status);
    if uses_published {
        pointing = pointing.note("with Gaussian pointing the coupling follows a power law with exponent 4 gamma, not gamma");
    }
    vec![fov, pointing]
}

/// Runs every comparison for the link pair `(a, b)`.
pub fn validation_report(a: &DerivedChannel, b: &DerivedChannel, cfg: &ValidationConfig) -> Result<ValidationReport> {
    if a.mu_t != b.mu_t || a.slot != b.slot {
        return Err(ModelError::InvalidParameter {
            name: "mu_t",
            value: b.mu_t,
            constraint: "shared by both links",
        });
    }
    let mut checks = vec![qber_vs_rao_blackwell(a, b, cfg)?];
    if a.eta_r_max > 0.0 || b.eta_r_max > 0.0 {
        checks.push(rate_vs_rao_blackwell(a, b, cfg)?);
    }
    checks.push(mean_point_vs_enumeration(a, b, cfg)?);
    checks.push(multi_pair_floor(cfg)?);
    checks.push(background_limit(cfg)?);
    checks.push(slots_vs_enumeration(cfg)?);
    checks.push(aperture("alice", a)?);
    checks.push(aperture("bob", b)?);
    if a.track_jitter_sigma > 0.0 && a.mu_t > 0.0 {
        checks.extend(fov_and_pointing("alice", a, cfg, cfg.seed.wrapping_add(10)));
    }
    if b.track_jitter_sigma > 0.0 && b.mu_t > 0.0 {
        checks.extend(fov_and_pointing("bob", b, cfg, cfg.seed.wrapping_add(11)));
    }
    Ok(ValidationReport { checks })
}
