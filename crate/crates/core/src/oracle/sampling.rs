//! Reception-rate sampling and the Rao–Blackwellised outer averages.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{batches, stream_rng, FovMode};
use crate::channel::DerivedChannel;
use crate::error::{ModelError, Result};
use crate::performance::{conditional_key_rate, multi_pair_factor, ConditionalPoint, BASIS_MATCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `K u^(1/γ)` with `u` uniform.
    InverseTransform,
    /// Gaussian pointing error per axis pushed through the coupling law,
    /// with the field-of-view stop as a factor.
    Physical,
}

fn pointing<R: Rng + ?Sized>(ch: &DerivedChannel, rng: &mut R) -> (f64, f64) {
    let normal = Normal::new(0.0, ch.track_jitter_sigma).expect("validated sigma");
    (normal.sample(rng), normal.sample(rng))
}

/// One draw of the reception rate η_r.
pub fn sample_eta_r<R: Rng + ?Sized>(ch: &DerivedChannel, mode: SamplingMode, rng: &mut R) -> f64 {
    match mode {
        SamplingMode::InverseTransform => {
            let u: f64 = rng.random();
            ch.eta_r_quantile(u)
        }
        SamplingMode::Physical => {
            let (tx, ty) = pointing(ch, rng);
            ch.eta_r_at(tx, ty)
        }
    }
}

/// Radial receiver jitter, Rayleigh with parameter σ_FoV.
pub(crate) fn rayleigh<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    sigma * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Physical-mode draw with the field-of-view stop applied per `fov_mode`.
///
/// Per photon the stop is the factor `P_FoV`; per slot a single Rayleigh
/// draw either passes the whole slot or blocks it. Both have the same mean.
pub fn sample_eta_r_fov<R: Rng + ?Sized>(ch: &DerivedChannel, fov_mode: FovMode, rng: &mut R) -> f64 {
    let (tx, ty) = pointing(ch, rng);
    let collected = ch.c_factor * ch.aperture_coupling_approx(tx, ty);
    match fov_mode {
        FovMode::PerPhoton => collected * ch.p_fov,
        FovMode::PerSlot => {
            if rayleigh(ch.fov_jitter_sigma, rng) <= ch.fov_angle {
                collected
            } else {
                0.0
            }
        }
    }
}

/// Running mean and sum of squared deviations, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n / n;
        self.m2 += other.m2 + delta * delta * self.n * other.n / n;
        self.n = n;
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            return f64::NAN;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaoBlackwellEstimate {
    pub draws: u64,
    pub rate_per_slot: f64,
    pub rate_stderr: f64,
    pub qber: f64,
    pub qber_stderr: f64,
    /// Averages of `e1/sift`, `e2/sift`, `e3/sift`.
    pub components: [f64; 3],
}

/// Error terms over sift at one draw, `[b_A b_B, s_A b_B + b_A s_B, F s_A s_B]`
/// with `s = η / (η + μ_b)` and `b = 1 − s`. A background-free side whose
/// draw underflows takes the η → 0 limit `s = 1`.
fn ratio_components(a: &DerivedChannel, b: &DerivedChannel, eta_a: f64, eta_b: f64) -> Result<[f64; 3]> {
    let share = |ch: &DerivedChannel, eta: f64| {
        let t = eta + ch.mu_b;
        if t > 0.0 {
            Ok((eta / t, ch.mu_b / t))
        } else if ch.eta_r_max > 0.0 {
            Ok((1.0, 0.0))
        } else {
            Err(ModelError::UndefinedQber)
        }
    };
    let (sa, ba) = share(a, eta_a)?;
    let (sb, bb) = share(b, eta_b)?;
    let f = multi_pair_factor(a.mu_t);
    Ok([ba * bb, sa * bb + ba * sb, f * sa * sb])
}

/// Monte Carlo over the pointing jitter of both links: draws `(η_A, η_B)`
/// by inverse transform and averages the conditional key rate and QBER.
/// Requires at least 1000 draws.
pub fn rao_blackwell_average(a: &DerivedChannel, b: &DerivedChannel, n: u64, seed: u64) -> Result<RaoBlackwellEstimate> {
    if n < 1000 {
        return Err(ModelError::InvalidParameter {
            name: "draws",
            value: n as f64,
            constraint: ">= 1000",
        });
    }
    if a.mu_t != b.mu_t || a.slot != b.slot {
        return Err(ModelError::InvalidParameter {
            name: "mu_t",
            value: b.mu_t,
            constraint: "shared by both links",
        });
    }
    let per_batch: Vec<Result<(Moments, Moments, [Moments; 3])>> = batches(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(index, len)| {
            let mut rng = stream_rng(seed, index);
            let (mut rate, mut qber) = (Moments::default(), Moments::default());
            let mut comps = [Moments::default(); 3];
            for _ in 0..len {
                let eta_a = sample_eta_r(a, SamplingMode::InverseTransform, &mut rng);
                let eta_b = sample_eta_r(b, SamplingMode::InverseTransform, &mut rng);
                let p = ConditionalPoint { eta_r_a: eta_a, eta_r_b: eta_b, mu_b_a: a.mu_b, mu_b_b: b.mu_b, mu_t: a.mu_t };
                rate.push(conditional_key_rate(&p, BASIS_MATCH));
                let r = ratio_components(a, b, eta_a, eta_b)?;
                qber.push(r[0] + r[1] + r[2]);
                for (m, v) in comps.iter_mut().zip(r) {
                    m.push(v);
                }
            }
            Ok((rate, qber, comps))
        })
        .collect();

    let (mut rate, mut qber) = (Moments::default(), Moments::default());
    let mut comps = [Moments::default(); 3];
    for batch in per_batch {
        let (r, q, c) = batch?;
        rate.merge(&r);
        qber.merge(&q);
        for (m, o) in comps.iter_mut().zip(&c) {
            m.merge(o);
        }
    }
    Ok(RaoBlackwellEstimate {
        draws: n,
        rate_per_slot: rate.mean,
        rate_stderr: rate.stderr(),
        qber: qber.mean,
        qber_stderr: qber.stderr(),
        components: comps.map(|m| m.mean),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{derive_channel, LinkGeometry, ReceiverParams, SourceParams};
    use crate::performance::{average_key_rate, expected_eta_r};

    fn link(sigma: f64, phi: f64) -> DerivedChannel {
        derive_channel(
            &SourceParams { wavelength: 1.55e-6, waist: 0.08, mu_t: 0.05, slot: 1e-10 },
            &ReceiverParams {
                aperture_radius: 0.15,
                eta_det: 0.6,
                fov_angle: 1e-3,
                fov_jitter_sigma: 1e-4,
                background_flux: phi,
            },
            &LinkGeometry { distance: 500e3, track_jitter_sigma: sigma },
        )
        .unwrap()
    }

    #[test]
    fn no_jitter_pins_draws_to_the_peak() {
        let ch = link(1e-15, 1e7);
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let x = sample_eta_r(&ch, SamplingMode::Physical, &mut rng);
            assert!((x - ch.eta_r_max).abs() <= 1e-12 * ch.eta_r_max);
        }
    }

    #[test]
    fn inverse_transform_mean_matches_closed_form() {
        let ch = link(3e-6, 1e7);
        let mut rng = stream_rng(7, 0);
        let mut m = Moments::default();
        for _ in 0..100_000 {
            m.push(sample_eta_r(&ch, SamplingMode::InverseTransform, &mut rng));
        }
        let expected = expected_eta_r(&ch);
        assert!((m.mean - expected).abs() <= 3.0 * m.stderr(), "mean {} vs {}", m.mean, expected);
    }

    #[test]
    fn fov_modes_agree_on_the_mean() {
        let mut ch = link(3e-6, 1e7);
        // make the stop matter: P_FoV = 1 − e^(−0.5)
        ch.fov_jitter_sigma = ch.fov_angle;
        ch.p_fov = crate::channel::fov_acceptance(ch.fov_angle, ch.fov_jitter_sigma);
        let (mut photon, mut slot) = (Moments::default(), Moments::default());
        let mut rng = stream_rng(3, 0);
        for _ in 0..200_000 {
            photon.push(sample_eta_r_fov(&ch, FovMode::PerPhoton, &mut rng));
            slot.push(sample_eta_r_fov(&ch, FovMode::PerSlot, &mut rng));
        }
        let se = photon.stderr().hypot(slot.stderr());
        assert!((photon.mean - slot.mean).abs() <= 3.0 * se);
    }

    #[test]
    fn background_free_qber_has_zero_variance() {
        let ch = link(3e-6, 0.0);
        let est = rao_blackwell_average(&ch, &ch, 10_000, 11).unwrap();
        assert!((est.qber - multi_pair_factor(0.05)).abs() <= 1e-15);
        assert_eq!(est.qber_stderr, 0.0);
    }

    #[test]
    fn rate_agrees_with_closed_form() {
        let ch = link(3e-6, 1e7);
        let est = rao_blackwell_average(&ch, &ch, 200_000, 5).unwrap();
        let exact = average_key_rate(&ch, &ch).unwrap().per_slot;
        assert!((est.rate_per_slot - exact).abs() <= 3.0 * est.rate_stderr);
    }

    #[test]
    fn estimates_are_reproducible_and_thread_independent() {
        let ch = link(3e-6, 1e7);
        let a = rao_blackwell_average(&ch, &ch, 50_000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| rao_blackwell_average(&ch, &ch, 50_000, 42).unwrap());
        assert_eq!(a, b);
        let c = rao_blackwell_average(&ch, &ch, 50_000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_draws_are_rejected() {
        let ch = link(3e-6, 1e7);
        assert!(rao_blackwell_average(&ch, &ch, 999, 0).is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut left, mut right) = (Moments::default(), Moments::default());
        xs[..313].iter().for_each(|&x| left.push(x));
        xs[313..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert!((left.mean - whole.mean).abs() < 1e-12);
        assert!((left.m2 - whole.m2).abs() < 1e-9 * whole.m2);
    }
}
