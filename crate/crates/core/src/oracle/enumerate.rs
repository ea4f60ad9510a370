//! Exact conditional statistics over a truncated outcome space.
//!
//! Every slot with at most `n_t_max` pairs and at most `n_b_max`
//! background photons per side is enumerated: each pair is lost, reaches
//! Alice only, Bob only, or both, and the winning click on each side is
//! uniform over that side's photons.

use serde::{Deserialize, Serialize};

use super::slots::SlotParams;
use super::Adjudication;
use crate::error::{ModelError, Result};
use crate::performance::BASIS_MATCH;
use crate::photon::poisson_pmf;

/// Largest pair count the brute force accepts (`4^n` patterns).
pub const MAX_PAIRS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    /// Probability per slot of a sifted bit.
    pub sift_prob: f64,
    /// Probability per slot of an erroneous sifted bit.
    pub err_prob: f64,
    /// `err_prob / sift_prob`; `None` when nothing is ever sifted.
    pub qber: Option<f64>,
    /// Probability mass outside the enumerated configurations.
    pub truncation_mass: f64,
}

/// First-principles enumeration. `p.eta_a`, `p.eta_b` are per-photon
/// survival probabilities.
pub fn enumerate_conditional(p: &SlotParams, n_t_max: u64, n_b_max: u64) -> Result<EnumerationResult> {
    enumerate_with(p, n_t_max, n_b_max, Adjudication::FirstPrinciples)
}

pub fn enumerate_with(p: &SlotParams, n_t_max: u64, n_b_max: u64, adjudication: Adjudication) -> Result<EnumerationResult> {
    p.validate()?;
    if !(3..=MAX_PAIRS).contains(&n_t_max) {
        return Err(ModelError::InvalidParameter {
            name: "n_t_max",
            value: n_t_max as f64,
            constraint: "in [3, 10]",
        });
    }
    if n_b_max < 2 {
        return Err(ModelError::InvalidParameter {
            name: "n_b_max",
            value: n_b_max as f64,
            constraint: ">= 2",
        });
    }
    let (ea, eb) = (p.eta_a, p.eta_b);
    let fates = [(1.0 - ea) * (1.0 - eb), ea * (1.0 - eb), (1.0 - ea) * eb, ea * eb];
    let bg_a: Vec<f64> = (0..=n_b_max).map(|k| poisson_pmf(p.mu_b_a, k)).collect();
    let bg_b: Vec<f64> = (0..=n_b_max).map(|k| poisson_pmf(p.mu_b_b, k)).collect();

    let (mut sift, mut err, mut mass) = (0.0, 0.0, 0.0);
    for n in 0..=n_t_max {
        let pn = poisson_pmf(p.mu_t, n);
        for code in 0..4u64.pow(n as u32) {
            let (mut prob, mut both, mut only_a, mut only_b) = (pn, 0u64, 0u64, 0u64);
            let mut c = code;
            for _ in 0..n {
                let fate = (c % 4) as usize;
                c /= 4;
                prob *= fates[fate];
                match fate {
                    1 => only_a += 1,
                    2 => only_b += 1,
                    3 => both += 1,
                    _ => {}
                }
            }
            let (sig_a, sig_b) = (both + only_a, both + only_b);
            for (xa, &qa) in bg_a.iter().enumerate() {
                for (xb, &qb) in bg_b.iter().enumerate() {
                    let q = prob * qa * qb;
                    mass += q;
                    let (da, db) = (sig_a + xa as u64, sig_b + xb as u64);
                    if da == 0 || db == 0 {
                        continue;
                    }
                    let (da, db) = (da as f64, db as f64);
                    let e = match adjudication {
                        Adjudication::FirstPrinciples => 0.5 * (1.0 - both as f64 / (da * db)),
                        Adjudication::ErrorTable => {
                            let signal = (sig_a as f64 / da) * (sig_b as f64 / db);
                            0.5 * (1.0 - signal) + signal * adjudication.signal_error_probability(n, false)
                        }
                    };
                    sift += BASIS_MATCH * q;
                    err += BASIS_MATCH * q * e;
                }
            }
        }
    }
    Ok(EnumerationResult {
        sift_prob: sift,
        err_prob: err,
        qber: (sift > 0.0).then(|| err / sift),
        truncation_mass: (1.0 - mass).max(0.0),
    })
}
