//! Counting statistics: Poisson pair emission, binomial channel thinning,
//! Poisson background and the resulting click probabilities.
//!
//! Thinning a Poisson(μ) pair count by an independent survival probability
//! η gives exactly Poisson(μη) photons, so the received-signal law below is
//! exact rather than a low-brightness approximation.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::channel::fov_solid_angle;
use crate::error::{non_negative, probability, ModelError, Result};

/// `e^(−mean) mean^k / k!`, evaluated in log space.
pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return (-mean).exp();
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k)).exp()
}

/// `C(n, k) η^k (1 − η)^(n−k)`.
pub fn binomial_thinning_pmf(n: u64, eta: f64, k: u64) -> Result<f64> {
    probability("eta", eta)?;
    if k > n {
        return Err(ModelError::Domain {
            value: k as f64,
            lo: 0.0,
            hi: n as f64,
        });
    }
    // exact endpoints keep 0^0 = 1 semantics
    if eta == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if eta == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    Ok((ln_choose + k as f64 * eta.ln() + (n - k) as f64 * (-eta).ln_1p()).exp())
}

/// Mean background count per slot, `Φ_b Ω_FoV(θ) T_b`.
pub fn background_mean(flux: f64, fov_angle: f64, slot: f64) -> f64 {
    flux * fov_solid_angle(fov_angle) * slot
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickModel {
    /// `1 − exp(−η_r − μ_b)`.
    #[default]
    Exact,
    /// First-order expansion `η_r + μ_b`.
    Linearized,
}

/// Probability that a receiver registers at least one photon in a slot.
pub fn click_probability(eta_r: f64, mu_b: f64, model: ClickModel) -> f64 {
    let total = eta_r + mu_b;
    match model {
        ClickModel::Exact => -(-total).exp_m1(),
        ClickModel::Linearized => total,
    }
}

/// Per-slot photon counts at one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    /// Mean emitted pairs per slot.
    pub pair_mean: f64,
    /// Per-photon survival probability through the channel and detector.
    pub eta: f64,
    /// Mean background photons per slot.
    pub background_mean: f64,
}

impl CountModel {
    pub fn new(pair_mean: f64, eta: f64, background_mean: f64) -> Result<Self> {
        Ok(Self {
            pair_mean: non_negative("pair_mean", pair_mean)?,
            eta: probability("eta", eta)?,
            background_mean: non_negative("background_mean", background_mean)?,
        })
    }

    /// Mean detected signal photons, `μ_t η`.
    pub fn signal_mean(&self) -> f64 {
        self.pair_mean * self.eta
    }

    /// Law of the detected signal count (exactly Poisson).
    pub fn signal_pmf(&self, k: u64) -> f64 {
        poisson_pmf(self.signal_mean(), k)
    }

    /// Law of signal plus background.
    pub fn total_pmf(&self, k: u64) -> f64 {
        poisson_pmf(self.signal_mean() + self.background_mean, k)
    }

    pub fn click_probability(&self, model: ClickModel) -> f64 {
        click_probability(self.signal_mean(), self.background_mean, model)
    }
}
