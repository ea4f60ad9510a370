//! Sifted-key rate and QBER of a two-link entanglement distribution.
//!
//! Conditional on the two reception rates `(η_A, η_B)` the model counts,
//! per slot and including the ½ basis-sifting factor:
//!
//! * `e1 = ½ μ_bA μ_bB`, both clicks from background,
//! * `e2 = ½ (η_A μ_bB + μ_bA η_B)`, one signal click, one background,
//! * `e3 = ½ η_A η_B e^(−μ_t)(μ_t²/8 + μ_t³/18)`, two- and three-pair mismatches,
//! * `sift = ½ (η_A + μ_bA)(η_B + μ_bB)`, linearised coincidence rate.
//!
//! The conditional QBER is `(e1 + e2 + e3) / sift`. Averages over the
//! pointing jitter use the power-law laws of `η_A` and `η_B`: the key rate
//! in closed form, the QBER by tensor-product Gauss–Legendre after mapping
//! each axis through its quantile function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::DerivedChannel;
use crate::error::{ModelError, Result};
use crate::quadrature::{composite_nodes, graded_unit_panels, GaussLegendre, NeumaierSum};

/// Probability that both parties pick the same basis.
pub const BASIS_MATCH: f64 = 0.5;

/// The quantities a conditional QBER is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPoint {
    pub eta_r_a: f64,
    pub eta_r_b: f64,
    pub mu_b_a: f64,
    pub mu_b_b: f64,
    pub mu_t: f64,
}

/// Per-slot error terms and sifted-bit probability.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub sift: f64,
}

impl ErrorBreakdown {
    pub fn errors(&self) -> f64 {
        self.e1 + self.e2 + self.e3
    }

    pub fn qber(&self) -> Result<f64> {
        if self.sift > 0.0 {
            Ok(self.errors() / self.sift)
        } else {
            Err(ModelError::UndefinedQber)
        }
    }
}

/// `e^(−μ)(μ²/8 + μ³/18)`: the multi-pair QBER floor.
pub fn multi_pair_factor(mu_t: f64) -> f64 {
    (-mu_t).exp() * (mu_t * mu_t / 8.0 + mu_t * mu_t * mu_t / 18.0)
}

/// Sifted-key bits per slot, `p_basis (η_A + μ_bA)(η_B + μ_bB)`.
pub fn conditional_key_rate(p: &ConditionalPoint, p_basis: f64) -> f64 {
    p_basis * (p.eta_r_a + p.mu_b_a) * (p.eta_r_b + p.mu_b_b)
}

pub fn conditional_error_components(p: &ConditionalPoint) -> ErrorBreakdown {
    ErrorBreakdown {
        e1: 0.5 * p.mu_b_a * p.mu_b_b,
        e2: 0.5 * (p.eta_r_a * p.mu_b_b + p.mu_b_a * p.eta_r_b),
        e3: 0.5 * p.eta_r_a * p.eta_r_b * multi_pair_factor(p.mu_t),
        sift: 0.5 * (p.eta_r_a + p.mu_b_a) * (p.eta_r_b + p.mu_b_b),
    }
}

/// Conditional QBER, written out term by term.
pub fn conditional_qber(p: &ConditionalPoint) -> Result<f64> {
    let (ea, eb, ma, mb) = (p.eta_r_a, p.eta_r_b, p.mu_b_a, p.mu_b_b);
    let mu = p.mu_t;
    let den = (ea + ma) * (eb + mb);
    if den <= 0.0 {
        return Err(ModelError::UndefinedQber);
    }
    let num = ma * mb
        + ea * mb
        + ma * eb
        + (-mu).exp() * mu * mu / 8.0 * ea * eb
        + (-mu).exp() * mu * mu * mu / 18.0 * ea * eb;
    Ok(num / den)
}

/// `E[η_r] = μ_t η_det P_FoV C γ / (γ + 1)`.
pub fn expected_eta_r(ch: &DerivedChannel) -> f64 {
    ch.c_factor * ch.p_fov * ch.coupling_peak * ch.gamma / (ch.gamma + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRate {
    pub per_slot: f64,
    pub per_second: f64,
}

fn check_shared_source(a: &DerivedChannel, b: &DerivedChannel) -> Result<()> {
    if a.mu_t != b.mu_t {
        return Err(ModelError::InvalidParameter {
            name: "mu_t",
            value: b.mu_t,
            constraint: "shared by both links",
        });
    }
    if a.slot != b.slot {
        return Err(ModelError::InvalidParameter {
            name: "slot",
            value: b.slot,
            constraint: "shared by both links",
        });
    }
    Ok(())
}

/// `½ (E[η_A] + μ_bA)(E[η_B] + μ_bB)`; exact because the links are
/// independent and the rate is bilinear.
pub fn average_key_rate(a: &DerivedChannel, b: &DerivedChannel) -> Result<KeyRate> {
    check_shared_source(a, b)?;
    let per_slot = BASIS_MATCH * (expected_eta_r(a) + a.mu_b) * (expected_eta_r(b) + b.mu_b);
    Ok(KeyRate {
        per_slot,
        per_second: per_slot / a.slot,
    })
}

/// Expectation of each error term over the pointing jitter.
pub fn average_error_breakdown(a: &DerivedChannel, b: &DerivedChannel) -> Result<ErrorBreakdown> {
    check_shared_source(a, b)?;
    Ok(conditional_error_components(&ConditionalPoint {
        eta_r_a: expected_eta_r(a),
        eta_r_b: expected_eta_r(b),
        mu_b_a: a.mu_b,
        mu_b_b: b.mu_b,
        mu_t: a.mu_t,
    }))
}

/// `E[errors] / E[sift]`, the ratio of averages. Reported as a diagnostic
/// next to the average of the ratio.
pub fn ratio_of_averages(a: &DerivedChannel, b: &DerivedChannel) -> Result<f64> {
    average_error_breakdown(a, b)?.qber()
}

/// Node counts and tolerance for [`average_qber`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes per panel for the first pass.
    pub nodes: usize,
    /// Relative agreement required between `n` and `2n` node results.
    pub rel_tol: f64,
    /// Refinement stops with an error once `2n` would exceed this.
    pub max_nodes: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            nodes: 64,
            rel_tol: 1e-6,
            max_nodes: 512,
        }
    }
}

// Geometric grading toward u = 0 on each axis: the reception rate
// K u^(1/γ) has algebraic behaviour there and a boundary layer where it
// crosses μ_b.
const PANEL_RATIO: f64 = 0.125;
const PANEL_DEPTH: usize = 20;

/// Average QBER with its decomposition into the three error mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberEstimate {
    pub qber: f64,
    /// `E[e1/sift]`, `E[e2/sift]`, `E[e3/sift]`; they sum to `qber`.
    pub components: [f64; 3],
    /// `|Q(2n) − Q(n)|` for the accepted pair of node counts.
    pub error_estimate: f64,
    /// Nodes per panel of the accepted (finer) pass.
    pub nodes: usize,
}

/// Per-axis `(weight, signal share, background share)` after the quantile
/// substitution; `signal + background = 1` wherever the side can click.
fn axis_shares(ch: &DerivedChannel, rule: &GaussLegendre) -> Result<Vec<(f64, f64, f64)>> {
    let nodes = composite_nodes(rule, &graded_unit_panels(PANEL_RATIO, PANEL_DEPTH));
    nodes
        .into_iter()
        .map(|(u, w)| {
            let eta = ch.eta_r_quantile(u);
            let total = eta + ch.mu_b;
            if total > 0.0 {
                Ok((w, eta / total, ch.mu_b / total))
            } else if ch.eta_r_max > 0.0 {
                // η underflowed on a background-free side: the u → 0 limit
                Ok((w, 1.0, 0.0))
            } else {
                Err(ModelError::UndefinedQber)
            }
        })
        .collect()
}

fn tensor_pass(a: &DerivedChannel, b: &DerivedChannel, n: usize) -> Result<[f64; 3]> {
    let rule = GaussLegendre::new(n);
    let axis_a = axis_shares(a, &rule)?;
    let axis_b = axis_shares(b, &rule)?;
    let floor = multi_pair_factor(a.mu_t);
    let rows: Vec<[f64; 3]> = axis_a
        .par_iter()
        .map(|&(wa, sa, ba)| {
            // non-negative terms: a plain row sum is accurate, rows are
            // combined with compensated summation below
            let mut acc = [0.0; 3];
            for &(wb, sb, bb) in &axis_b {
                let w = wa * wb;
                // (e1, e2, e3) / sift after dividing through by (η+μ)(η+μ)
                acc[0] += w * ba * bb;
                acc[1] += w * (sa * bb + ba * sb);
                acc[2] += w * floor * sa * sb;
            }
            acc
        })
        .collect();
    let mut total = [NeumaierSum::default(); 3];
    for r in &rows {
        for k in 0..3 {
            total[k].add(r[k]);
        }
    }
    Ok([total[0].value(), total[1].value(), total[2].value()])
}

/// `E[QBER(η_A, η_B)]` over the product of the two power laws.
///
/// Each axis is mapped through `η = K u^(1/γ)`, which turns the density
/// into the uniform weight on `[0, 1]`; the unit square is then covered by
/// a tensor product of composite Gauss–Legendre rules on graded panels.
/// The node count doubles until two successive passes agree to
/// `quad.rel_tol`.
pub fn average_qber(a: &DerivedChannel, b: &DerivedChannel, quad: &QuadConfig) -> Result<QberEstimate> {
    check_shared_source(a, b)?;
    if quad.nodes < 16 {
        return Err(ModelError::InvalidParameter {
            name: "nodes",
            value: quad.nodes as f64,
            constraint: ">= 16",
        });
    }
    if !(quad.rel_tol > 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "rel_tol",
            value: quad.rel_tol,
            constraint: "> 0",
        });
    }
    let sum = |c: &[f64; 3]| c[0] + c[1] + c[2];
    let mut n = quad.nodes;
    let mut coarse = tensor_pass(a, b, n)?;
    loop {
        if 2 * n > quad.max_nodes {
            return Err(ModelError::Tolerance {
                tol: quad.rel_tol,
                estimate: sum(&coarse),
                error: f64::NAN,
            });
        }
        let fine = tensor_pass(a, b, 2 * n)?;
        let (qc, qf) = (sum(&coarse), sum(&fine));
        let err = (qf - qc).abs();
        if err <= quad.rel_tol * qf.abs() {
            return Ok(QberEstimate {
                qber: qf,
                components: fine,
                error_estimate: err,
                nodes: 2 * n,
            });
        }
        if 4 * n > quad.max_nodes {
            return Err(ModelError::Tolerance {
                tol: quad.rel_tol,
                estimate: qf,
                error: err,
            });
        }
        n *= 2;
        coarse = fine;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Mc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Mc => "mc",
        }
    }
}

/// Qualifications attached to a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Caveat {
    /// Background dominates the clicks; the model's QBER tends to 1 here,
    /// while an uncorrelated click errs only half the time.
    BackgroundLimit,
    /// `μ_t >= 1`, outside the low-gain regime the pair statistics assume.
    HighBrightness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub key_rate_per_slot: f64,
    pub key_rate_per_second: f64,
    pub qber: f64,
    /// Expected per-slot error terms and sift probability.
    pub breakdown: ErrorBreakdown,
    /// Share of the average QBER carried by e1, e2 and e3.
    pub shares: [f64; 3],
    pub method: Method,
    pub qber_stderr: Option<f64>,
    pub rate_stderr: Option<f64>,
    pub quad_error: Option<f64>,
    /// `E[errors]/E[sift]`, for comparison with the averaged ratio.
    pub ratio_of_averages: Option<f64>,
    pub caveats: Vec<Caveat>,
}

pub(crate) fn shares_of(components: [f64; 3]) -> [f64; 3] {
    let total = components[0] + components[1] + components[2];
    if total > 0.0 {
        components.map(|c| c / total)
    } else {
        [0.0; 3]
    }
}

pub(crate) fn caveats_for(a: &DerivedChannel, b: &DerivedChannel, qber: f64) -> Vec<Caveat> {
    let mut out = Vec::new();
    // signal share of the clicks below 1% on either side
    let signal_starved = |ch: &DerivedChannel| {
        let eta = expected_eta_r(ch);
        eta + ch.mu_b > 0.0 && eta < 0.01 * (eta + ch.mu_b)
    };
    if signal_starved(a) || signal_starved(b) || qber >= 0.5 {
        out.push(Caveat::BackgroundLimit);
    }
    if a.mu_t >= 1.0 {
        out.push(Caveat::HighBrightness);
    }
    out
}

/// Closed-form key rate plus quadrature QBER for one pair of links.
pub fn analytic_report(a: &DerivedChannel, b: &DerivedChannel, quad: &QuadConfig) -> Result<PerformanceReport> {
    let rate = average_key_rate(a, b)?;
    let q = average_qber(a, b, quad)?;
    let breakdown = average_error_breakdown(a, b)?;
    Ok(PerformanceReport {
        key_rate_per_slot: rate.per_slot,
        key_rate_per_second: rate.per_second,
        qber: q.qber,
        breakdown,
        shares: shares_of(q.components),
        method: Method::Analytic,
        qber_stderr: None,
        rate_stderr: None,
        quad_error: Some(q.error_estimate),
        ratio_of_averages: breakdown.qber().ok(),
        caveats: caveats_for(a, b, q.qber),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{derive_channel, LinkGeometry, ReceiverParams, SourceParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn link(z: f64, sigma: f64, phi: f64, mu_t: f64) -> DerivedChannel {
        derive_channel(
            &SourceParams { wavelength: 1.55e-6, waist: 0.08, mu_t, slot: 1e-10 },
            &ReceiverParams {
                aperture_radius: 0.15,
                eta_det: 0.6,
                fov_angle: 1e-3,
                fov_jitter_sigma: 1e-4,
                background_flux: phi,
            },
            &LinkGeometry { distance: z, track_jitter_sigma: sigma },
        )
        .unwrap()
    }

    fn point(eta: f64, mu_b: f64, mu_t: f64) -> ConditionalPoint {
        ConditionalPoint { eta_r_a: eta, eta_r_b: eta, mu_b_a: mu_b, mu_b_b: mu_b, mu_t }
    }

    #[test]
    fn key_rate_at_reference_point() {
        let p = point(1.823e-5, 7.854e-10, 0.05);
        let r = conditional_key_rate(&p, BASIS_MATCH);
        assert_relative_eq!(r, 0.5 * (1.823e-5f64 + 7.854e-10).powi(2), max_relative = 1e-15);
        assert_relative_eq!(r / 1e-10, 1.663, max_relative = 1e-3);
        assert_eq!(conditional_key_rate(&point(0.0, 0.0, 0.05), BASIS_MATCH), 0.0);
        let doubled = ConditionalPoint { eta_r_a: 2.0 * 1e-4, ..point(1e-4, 0.0, 0.05) };
        assert_relative_eq!(
            conditional_key_rate(&doubled, 0.5),
            2.0 * conditional_key_rate(&point(1e-4, 0.0, 0.05), 0.5),
            max_relative = 1e-15
        );
    }

    #[test]
    fn expected_eta_r_reference_and_limits() {
        let ch = link(500e3, 3e-6, 1e7, 0.05);
        assert_relative_eq!(expected_eta_r(&ch), 1.822_831_020_428_45e-5, max_relative = 1e-12);
        let sharp = link(500e3, 1e-12, 1e7, 0.05);
        assert_relative_eq!(
            expected_eta_r(&sharp),
            sharp.c_factor * sharp.p_fov * sharp.coupling_peak,
            max_relative = 1e-9
        );
        let far = link(1000e3, 3e-6, 1e7, 0.05);
        assert_relative_eq!(expected_eta_r(&far), expected_eta_r(&ch) / 4.0, max_relative = 5e-3);
    }

    #[test]
    fn average_key_rate_reference() {
        let ch = link(500e3, 3e-6, 1e7, 0.05);
        let r = average_key_rate(&ch, &ch).unwrap();
        assert_relative_eq!(r.per_second, 1.661_499_632_412_94, max_relative = 1e-10);
        assert_relative_eq!(r.per_second, r.per_slot / 1e-10, max_relative = 1e-15);
        let dark = link(500e3, 3e-6, 0.0, 1e-30);
        assert!(average_key_rate(&dark, &dark).unwrap().per_slot < 1e-60);
    }

    #[test]
    fn error_components_reference() {
        let b = conditional_error_components(&point(1.823e-5, 0.0, 0.05));
        assert_eq!((b.e1, b.e2), (0.0, 0.0));
        assert_relative_eq!(b.e3, 5.049_216_086e-14, max_relative = 1e-9);
        assert_relative_eq!(multi_pair_factor(0.05), 3.038_649_550_488_39e-4, max_relative = 1e-12);

        let only_bg = conditional_error_components(&point(0.0, 1e-3, 0.05));
        assert!(only_bg.e1 > 0.0 && only_bg.e2 == 0.0 && only_bg.e3 == 0.0);
    }

    #[test]
    fn two_and_three_pair_terms_recompose() {
        let mu: f64 = 0.3;
        let per_table = 0.5 * (mu * mu / 8.0 + mu.powi(3) / 18.0) * (-mu).exp();
        let two_pair = 0.5 * 0.5 * ((-mu).exp() * mu * mu / 2.0);
        let three_pair = (2.0 / 3.0) * 0.5 * ((-mu).exp() * mu.powi(3) / 6.0);
        let summed = (-mu).exp() * (9.0 * mu * mu + 4.0 * mu.powi(3)) / 72.0;
        assert_relative_eq!(two_pair + three_pair, summed, max_relative = 1e-14);
        assert_relative_eq!(per_table, summed / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn qber_reference_values() {
        let q = conditional_qber(&point(1.822_831_020_428_45e-5, 7.853_981_470_349_87e-10, 0.05)).unwrap();
        assert_relative_eq!(q, 3.900_066_479_709_76e-4, max_relative = 1e-10);
        let floor = conditional_qber(&point(1e-5, 0.0, 0.05)).unwrap();
        assert_relative_eq!(floor, 3.038_649_550_488_39e-4, max_relative = 1e-12);
        assert_eq!(conditional_qber(&point(0.0, 1e-9, 0.05)).unwrap(), 1.0);
        assert_eq!(conditional_qber(&point(0.0, 0.0, 0.05)), Err(ModelError::UndefinedQber));
    }

    proptest! {
        #[test]
        fn components_reassemble_qber(
            ea in 0.0f64..1e-2, eb in 0.0f64..1e-2,
            ma in 1e-12f64..1e-3, mb in 1e-12f64..1e-3, mu in 0.0f64..=1.0,
        ) {
            let p = ConditionalPoint { eta_r_a: ea, eta_r_b: eb, mu_b_a: ma, mu_b_b: mb, mu_t: mu };
            let c = conditional_error_components(&p);
            let q = conditional_qber(&p).unwrap();
            prop_assert!((c.qber().unwrap() - q).abs() <= 1e-12 * q.max(1e-300));
            prop_assert!((0.0..=1.0).contains(&q));
            prop_assert!(c.errors() <= c.sift * (1.0 + 1e-12));
        }

        #[test]
        fn floor_is_scale_invariant(ea in 1e-9f64..1.0, eb in 1e-9f64..1.0, c in 1e-6f64..1e3, mu in 0.0f64..=1.0) {
            let base = conditional_qber(&ConditionalPoint { eta_r_a: ea, eta_r_b: eb, mu_b_a: 0.0, mu_b_b: 0.0, mu_t: mu }).unwrap();
            let scaled = conditional_qber(&ConditionalPoint { eta_r_a: c * ea, eta_r_b: c * eb, mu_b_a: 0.0, mu_b_b: 0.0, mu_t: mu }).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-14 * base.max(1e-300));
        }

        #[test]
        fn qber_grows_with_background(
            ea in 1e-8f64..1e-3, eb in 1e-8f64..1e-3, ma in 0.0f64..1e-4, mb in 1e-12f64..1e-4,
            extra in 0.0f64..1e-4, mu in 0.0f64..=1.0,
        ) {
            let p = ConditionalPoint { eta_r_a: ea, eta_r_b: eb, mu_b_a: ma, mu_b_b: mb, mu_t: mu };
            let more_a = ConditionalPoint { mu_b_a: ma + extra, ..p };
            let more_b = ConditionalPoint { mu_b_b: mb + extra, ..p };
            let q = conditional_qber(&p).unwrap();
            prop_assert!(conditional_qber(&more_a).unwrap() >= q * (1.0 - 1e-12));
            prop_assert!(conditional_qber(&more_b).unwrap() >= q * (1.0 - 1e-12));
        }

        #[test]
        fn qber_grows_with_pair_rate(
            ea in 1e-8f64..1e-3, eb in 1e-8f64..1e-3, ma in 0.0f64..1e-4, mb in 1e-12f64..1e-4,
            mu1 in 1e-6f64..=1.0, mu2 in 1e-6f64..=1.0,
        ) {
            let (lo, hi) = if mu1 <= mu2 { (mu1, mu2) } else { (mu2, mu1) };
            let p = ConditionalPoint { eta_r_a: ea, eta_r_b: eb, mu_b_a: ma, mu_b_b: mb, mu_t: lo };
            let q_lo = conditional_qber(&p).unwrap();
            let q_hi = conditional_qber(&ConditionalPoint { mu_t: hi, ..p }).unwrap();
            prop_assert!(q_hi >= q_lo * (1.0 - 1e-12));
        }

        #[test]
        fn separable_integrand_matches_verbatim_qber(
            ea in 1e-12f64..1e-2, eb in 1e-12f64..1e-2, ma in 0.0f64..1e-3, mb in 0.0f64..1e-3, mu in 0.0f64..=1.0,
        ) {
            let p = ConditionalPoint { eta_r_a: ea, eta_r_b: eb, mu_b_a: ma, mu_b_b: mb, mu_t: mu };
            let (sa, ba) = (ea / (ea + ma), ma / (ea + ma));
            let (sb, bb) = (eb / (eb + mb), mb / (eb + mb));
            let q = ba * bb + sa * bb + ba * sb + multi_pair_factor(mu) * sa * sb;
            let v = conditional_qber(&p).unwrap();
            prop_assert!((q - v).abs() <= 1e-13 * v.max(1e-300));
        }
    }

    #[test]
    fn background_free_average_is_the_floor() {
        let a = link(500e3, 3e-6, 0.0, 0.05);
        let b = link(800e3, 5e-6, 0.0, 0.05);
        let est = average_qber(&a, &b, &QuadConfig::default()).unwrap();
        assert_relative_eq!(est.qber, multi_pair_factor(0.05), max_relative = 1e-14);
        assert_eq!(est.components[0], 0.0);
        assert_eq!(est.components[1], 0.0);
    }

    #[test]
    fn average_qber_against_separable_oracle() {
        // E[QBER] = 1 − (1 − F) E[s_A] E[s_B] with s = η/(η + μ_b): the
        // two 1-D expectations come from an adaptive integrator in u.
        use crate::quadrature::integrate_adaptive;
        let a = link(500e3, 3e-6, 1e7, 0.05);
        let est = average_qber(&a, &a, &QuadConfig::default()).unwrap();
        let share = |ch: &DerivedChannel| {
            let f = |u: f64| {
                let eta = ch.eta_r_quantile(u);
                eta / (eta + ch.mu_b)
            };
            let mut total = 0.0;
            let mut edges = vec![0.0];
            edges.extend((0..=30).rev().map(|k| 0.5f64.powi(k)));
            for w in edges.windows(2) {
                total += integrate_adaptive(f, w[0], w[1], 1e-13, 1e-300, 2000).unwrap().value;
            }
            total
        };
        let s = share(&a);
        assert_relative_eq!(s, 0.999_813_659_021_603, max_relative = 1e-11);
        let oracle = 1.0 - (1.0 - multi_pair_factor(0.05)) * s * s;
        assert_relative_eq!(est.qber, oracle, max_relative = 1e-8);
        assert_relative_eq!(est.qber, 6.763_989_544_467_85e-4, max_relative = 1e-8);
        assert!(est.qber >= 3.900_066e-4);
    }

    #[test]
    fn refinement_converges_at_defaults() {
        let a = link(500e3, 3e-6, 1e7, 0.05);
        let n64 = tensor_pass(&a, &a, 64).unwrap().iter().sum::<f64>();
        let n128 = tensor_pass(&a, &a, 128).unwrap().iter().sum::<f64>();
        assert!((n64 - n128).abs() / n128 <= 1e-6);
    }

    #[test]
    fn quadrature_config_is_validated() {
        let a = link(500e3, 3e-6, 1e7, 0.05);
        let bad = QuadConfig { nodes: 8, ..QuadConfig::default() };
        assert!(average_qber(&a, &a, &bad).is_err());
        let capped = QuadConfig { nodes: 16, rel_tol: 1e-30, max_nodes: 64 };
        assert!(matches!(average_qber(&a, &a, &capped), Err(ModelError::Tolerance { .. })));
    }

    #[test]
    fn silent_dark_links_have_no_qber() {
        let a = link(500e3, 3e-6, 0.0, 0.0);
        assert_eq!(average_qber(&a, &a, &QuadConfig::default()), Err(ModelError::UndefinedQber));
        let lit = link(500e3, 3e-6, 1e7, 0.0);
        let est = average_qber(&lit, &lit, &QuadConfig::default()).unwrap();
        assert_relative_eq!(est.qber, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn mismatched_sources_are_rejected() {
        let a = link(500e3, 3e-6, 1e7, 0.05);
        let b = link(500e3, 3e-6, 1e7, 0.1);
        assert!(average_key_rate(&a, &b).is_err());
    }

    #[test]
    fn report_flags_background_limit() {
        let lit = link(500e3, 3e-6, 1e7, 0.0);
        let r = analytic_report(&lit, &lit, &QuadConfig::default()).unwrap();
        assert!(r.caveats.contains(&Caveat::BackgroundLimit));
        assert_relative_eq!(r.key_rate_per_slot, 0.5 * lit.mu_b * lit.mu_b, max_relative = 1e-14);
        let normal = link(500e3, 3e-6, 1e7, 0.05);
        let r = analytic_report(&normal, &normal, &QuadConfig::default()).unwrap();
        assert!(r.caveats.is_empty());
        assert_relative_eq!(r.shares.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    }
}
