//! Photon-level slot simulation.
//!
//! Each slot draws a Poisson number of pairs, lets every photon of every
//! pair survive to its receiver independently, adds Poisson background on
//! both sides, draws the basis match, and lets each side's click come from
//! a uniformly chosen photon among those that arrived.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::rayleigh;
use super::{batches, stream_rng, Adjudication, FovMode};
use crate::channel::DerivedChannel;
use crate::error::{non_negative, probability, ModelError, Result};
use crate::performance::{expected_eta_r, BASIS_MATCH};

/// Runs expected to sift fewer bits than this are refused unless forced.
pub const MIN_EXPECTED_SIFTED: f64 = 10.0;

/// Per-slot inputs with fixed survival probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotParams {
    pub mu_t: f64,
    /// Probability one photon of a pair is detected by Alice.
    pub eta_a: f64,
    pub eta_b: f64,
    pub mu_b_a: f64,
    pub mu_b_b: f64,
}

impl SlotParams {
    pub fn validate(&self) -> Result<()> {
        non_negative("mu_t", self.mu_t)?;
        probability("eta_a", self.eta_a)?;
        probability("eta_b", self.eta_b)?;
        non_negative("mu_b_a", self.mu_b_a)?;
        non_negative("mu_b_b", self.mu_b_b)?;
        Ok(())
    }

    /// Exact probability that both sides click in a slot.
    pub fn coincidence_probability(&self) -> f64 {
        let none_a = (-self.mu_t * self.eta_a - self.mu_b_a).exp();
        let none_b = (-self.mu_t * self.eta_b - self.mu_b_b).exp();
        let either = 1.0 - (1.0 - self.eta_a) * (1.0 - self.eta_b);
        let neither = (-self.mu_t * either - self.mu_b_a - self.mu_b_b).exp();
        (1.0 - none_a - none_b + neither).max(0.0)
    }

    /// Exact probability of a sifted bit per slot.
    pub fn sift_probability(&self) -> f64 {
        BASIS_MATCH * self.coincidence_probability()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_slots: u64,
    pub seed: u64,
    pub adjudication: Adjudication,
    pub fov_mode: FovMode,
    /// Run even when fewer than [`MIN_EXPECTED_SIFTED`] bits are expected.
    pub force: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_slots: 1_000_000,
            seed: 0,
            adjudication: Adjudication::default(),
            fov_mode: FovMode::default(),
            force: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
struct Counts {
    sifted: u64,
    errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub slots: u64,
    pub sifted: u64,
    pub errors: u64,
    /// `errors / sifted`; `None` if nothing was sifted.
    pub qber_hat: Option<f64>,
    pub stderr_qber: Option<f64>,
    /// Sifted bits per slot.
    pub rate_hat: f64,
    pub stderr_rate: f64,
}

impl Tally {
    fn from_counts(slots: u64, c: Counts) -> Self {
        let qber_hat = (c.sifted > 0).then(|| c.errors as f64 / c.sifted as f64);
        let stderr_qber = qber_hat.map(|q| (q * (1.0 - q) / c.sifted as f64).sqrt());
        let rate_hat = c.sifted as f64 / slots as f64;
        Tally {
            slots,
            sifted: c.sifted,
            errors: c.errors,
            qber_hat,
            stderr_qber,
            rate_hat,
            stderr_rate: (rate_hat * (1.0 - rate_hat) / slots as f64).sqrt(),
        }
    }
}

struct Sources {
    pairs: Option<Poisson<f64>>,
    bg_a: Option<Poisson<f64>>,
    bg_b: Option<Poisson<f64>>,
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("finite positive mean"))
}

fn draw<R: Rng + ?Sized>(d: &Option<Poisson<f64>>, rng: &mut R) -> u64 {
    d.as_ref().map_or(0, |p| p.sample(rng) as u64)
}

/// Scratch buffers reused across slots.
#[derive(Default)]
struct Scratch {
    at_a: Vec<u32>,
    at_b: Vec<u32>,
}

/// Plays one slot with survival probabilities `(surv_a, surv_b)`.
fn play_slot<R: Rng + ?Sized>(
    rng: &mut R,
    src: &Sources,
    surv_a: f64,
    surv_b: f64,
    adjudication: Adjudication,
    scratch: &mut Scratch,
    counts: &mut Counts,
) {
    let pairs = draw(&src.pairs, rng);
    scratch.at_a.clear();
    scratch.at_b.clear();
    for i in 0..pairs as u32 {
        if rng.random::<f64>() < surv_a {
            scratch.at_a.push(i);
        }
        if rng.random::<f64>() < surv_b {
            scratch.at_b.push(i);
        }
    }
    let bg_a = draw(&src.bg_a, rng);
    let bg_b = draw(&src.bg_b, rng);
    let basis_match = rng.random::<f64>() < BASIS_MATCH;
    let arrived_a = scratch.at_a.len() as u64 + bg_a;
    let arrived_b = scratch.at_b.len() as u64 + bg_b;
    if arrived_a == 0 || arrived_b == 0 || !basis_match {
        return;
    }
    let winner_a = rng.random_range(0..arrived_a) as usize;
    let winner_b = rng.random_range(0..arrived_b) as usize;
    let p_err = match (scratch.at_a.get(winner_a), scratch.at_b.get(winner_b)) {
        (Some(pa), Some(pb)) => adjudication.signal_error_probability(pairs, pa == pb),
        _ => 0.5,
    };
    counts.sifted += 1;
    if rng.random::<f64>() < p_err {
        counts.errors += 1;
    }
}

fn check_power(expected_sift: f64, n_slots: u64, force: bool) -> Result<()> {
    if n_slots == 0 {
        return Err(ModelError::InvalidParameter {
            name: "slots",
            value: 0.0,
            constraint: ">= 1",
        });
    }
    let expected = expected_sift * n_slots as f64;
    if expected < MIN_EXPECTED_SIFTED && !force {
        return Err(ModelError::Underpowered {
            expected,
            minimum: MIN_EXPECTED_SIFTED,
        });
    }
    Ok(())
}

fn run<F>(cfg: &SimConfig, per_batch: F) -> Tally
where
    F: Fn(u64, u64) -> Counts + Sync,
{
    let parts: Vec<Counts> = batches(cfg.n_slots)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(index, len)| per_batch(index, len))
        .collect();
    let total = parts.iter().fold(Counts::default(), |acc, c| Counts {
        sifted: acc.sifted + c.sifted,
        errors: acc.errors + c.errors,
    });
    Tally::from_counts(cfg.n_slots, total)
}

/// Simulates `cfg.n_slots` slots with fixed per-photon survival.
pub fn simulate_slots(cfg: &SimConfig, p: &SlotParams) -> Result<Tally> {
    p.validate()?;
    check_power(p.sift_probability(), cfg.n_slots, cfg.force)?;
    let src = Sources { pairs: poisson(p.mu_t), bg_a: poisson(p.mu_b_a), bg_b: poisson(p.mu_b_b) };
    Ok(run(cfg, |index, len| {
        let mut rng = stream_rng(cfg.seed, index);
        let (mut scratch, mut counts) = (Scratch::default(), Counts::default());
        for _ in 0..len {
            play_slot(&mut rng, &src, p.eta_a, p.eta_b, cfg.adjudication, &mut scratch, &mut counts);
        }
        counts
    }))
}

fn slot_survival<R: Rng + ?Sized>(ch: &DerivedChannel, normal: &Option<Normal<f64>>, fov: FovMode, rng: &mut R) -> f64 {
    let (tx, ty) = match normal {
        Some(n) => (n.sample(rng), n.sample(rng)),
        None => (0.0, 0.0),
    };
    let s = ch.photon_survival(tx, ty);
    match fov {
        FovMode::PerPhoton => s * ch.p_fov,
        FovMode::PerSlot => {
            if rayleigh(ch.fov_jitter_sigma, rng) <= ch.fov_angle {
                s
            } else {
                0.0
            }
        }
    }
}

/// Simulates a link pair: every slot draws fresh pointing errors for
/// both receivers, which set that slot's per-photon survival.
pub fn simulate_link_slots(cfg: &SimConfig, a: &DerivedChannel, b: &DerivedChannel) -> Result<Tally> {
    if a.mu_t != b.mu_t {
        return Err(ModelError::InvalidParameter {
            name: "mu_t",
            value: b.mu_t,
            constraint: "shared by both links",
        });
    }
    let mean_survival = |ch: &DerivedChannel| if ch.mu_t > 0.0 { (expected_eta_r(ch) / ch.mu_t).min(1.0) } else { 0.0 };
    let screen = SlotParams {
        mu_t: a.mu_t,
        eta_a: mean_survival(a),
        eta_b: mean_survival(b),
        mu_b_a: a.mu_b,
        mu_b_b: b.mu_b,
    };
    check_power(screen.sift_probability(), cfg.n_slots, cfg.force)?;
    let src = Sources { pairs: poisson(a.mu_t), bg_a: poisson(a.mu_b), bg_b: poisson(b.mu_b) };
    let jitter = |ch: &DerivedChannel| (ch.track_jitter_sigma > 0.0).then(|| Normal::new(0.0, ch.track_jitter_sigma).expect("finite sigma"));
    let (na, nb) = (jitter(a), jitter(b));
    Ok(run(cfg, |index, len| {
        let mut rng = stream_rng(cfg.seed, index);
        let (mut scratch, mut counts) = (Scratch::default(), Counts::default());
        for _ in 0..len {
            let sa = slot_survival(a, &na, cfg.fov_mode, &mut rng);
            let sb = slot_survival(b, &nb, cfg.fov_mode, &mut rng);
            play_slot(&mut rng, &src, sa, sb, cfg.adjudication, &mut scratch, &mut counts);
        }
        counts
    }))
}
