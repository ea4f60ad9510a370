//! Independent checks on the closed-form model.
//!
//! * [`sampling`] draws reception rates, either from the power law or by
//!   simulating the pointing error, and averages the conditional formulas
//!   over those draws (Rao–Blackwellised Monte Carlo).
//! * [`slots`] simulates individual slots photon by photon.
//! * [`enumerate`] computes the same conditional statistics exactly over a
//!   truncated outcome space.
//! * [`report`] puts all of them side by side.
//!
//! Randomness comes from ChaCha8 with one stream per fixed-size batch, so a
//! run is bit-for-bit reproducible from its seed whatever the thread count.

pub mod enumerate;
pub mod report;
pub mod sampling;
pub mod slots;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use enumerate::{enumerate_conditional, enumerate_with, EnumerationResult};
pub use report::{validation_report, Check, CheckStatus, ValidationConfig, ValidationReport};
pub use sampling::{rao_blackwell_average, sample_eta_r, sample_eta_r_fov, RaoBlackwellEstimate, SamplingMode};
pub use slots::{simulate_link_slots, simulate_slots, SimConfig, SlotParams, Tally};

/// Draws per RNG stream.
pub const BATCH: u64 = 4096;

/// Generator for batch `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(batch index, batch length)` covering `n` items.
pub(crate) fn batches(n: u64) -> impl Iterator<Item = (u64, u64)> {
    (0..n.div_ceil(BATCH)).map(move |i| (i, BATCH.min(n - i * BATCH)))
}

/// How a sifted coincidence is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjudication {
    /// Uses the event table: background-involved clicks err with
    /// probability ½; signal-signal coincidences err with ½ × the pair
    /// mismatch probability of the slot's pair count (½ for two pairs,
    /// ⅔ for three), and four or more pairs are neglected.
    #[serde(rename = "paper_table")]
    ErrorTable,
    /// Resolves the actual winning photons: a bit is correct iff both
    /// winners are signal photons of the same pair, otherwise it errs with
    /// probability ½.
    #[default]
    FirstPrinciples,
}

impl std::str::FromStr for Adjudication {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_table" => Ok(Self::ErrorTable),
            "first_principles" => Ok(Self::FirstPrinciples),
            other => Err(format!("unknown adjudication `{other}` (expected paper_table or first_principles)")),
        }
    }
}

impl Adjudication {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ErrorTable => "paper_table",
            Self::FirstPrinciples => "first_principles",
        }
    }

    /// Error probability of a signal-signal coincidence from a slot with
    /// `pairs` emitted pairs, given whether the two winners share a pair.
    pub(crate) fn signal_error_probability(&self, pairs: u64, same_pair: bool) -> f64 {
        match self {
            Self::FirstPrinciples => {
                if same_pair {
                    0.0
                } else {
                    0.5
                }
            }
            Self::ErrorTable => match pairs {
                2 => 0.5 * 0.5,
                3 => 0.5 * 2.0 / 3.0,
                _ => 0.0,
            },
        }
    }
}

/// Where the receiver's field-of-view stop acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FovMode {
    /// Every photon independently passes with probability `P_FoV`.
    #[default]
    PerPhoton,
    /// One Rayleigh draw per slot gates all of that slot's signal photons.
    PerSlot,
}

impl std::str::FromStr for FovMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_photon" => Ok(Self::PerPhoton),
            "per_slot" => Ok(Self::PerSlot),
            other => Err(format!("unknown fov mode `{other}` (expected per_photon or per_slot)")),
        }
    }
}

impl FovMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PerPhoton => "per_photon",
            Self::PerSlot => "per_slot",
        }
    }
}
