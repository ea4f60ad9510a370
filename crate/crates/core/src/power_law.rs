//! The scaled power law `f(x) = γ K^(−γ) x^(γ−1)` on `[0, K]`.
//!
//! This is the law of the aperture coupling efficiency and of the photon
//! reception rate under Gaussian pointing jitter. The density used here is
//! the uniquely normalised one; its CDF is `(x/K)^γ` and its quantile
//! `K u^(1/γ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{positive, ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawDist {
    exponent: f64,
    upper: f64,
}

impl PowerLawDist {
    pub fn new(exponent: f64, upper: f64) -> Result<Self> {
        Ok(Self {
            exponent: positive("exponent", exponent)?,
            upper: positive("upper", upper)?,
        })
    }

    /// The shape parameter γ.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// The support bound K.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn check_support(&self, x: f64) -> Result<()> {
        if (0.0..=self.upper).contains(&x) {
            Ok(())
        } else {
            Err(ModelError::Domain {
                value: x,
                lo: 0.0,
                hi: self.upper,
            })
        }
    }

    /// Density at `x`. At `x = 0` this is the one-sided limit: `+∞` for
    /// γ < 1, `1/K` for γ = 1 and `0` for γ > 1.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        let (g, k) = (self.exponent, self.upper);
        if x == 0.0 {
            return Ok(match g.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => 1.0 / k,
                _ => 0.0,
            });
        }
        // γ/K · (x/K)^(γ−1) avoids overflow of K^(−γ) for tiny K
        Ok(g / k * (x / k).powf(g - 1.0))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok((x / self.upper).powf(self.exponent))
    }

    /// `(pdf, cdf)` at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        Ok((self.pdf(x)?, self.cdf(x)?))
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(ModelError::Domain {
                value: u,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(self.quantile_unchecked(u))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        (self.upper * u.powf(1.0 / self.exponent)).min(self.upper)
    }

    /// `K γ / (γ + 1)`.
    pub fn mean(&self) -> f64 {
        self.upper * self.exponent / (self.exponent + 1.0)
    }

    /// Inverse-transform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile_unchecked(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{composite_nodes, graded_unit_panels, GaussLegendre, NeumaierSum};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_evaluated_points() {
        let d = PowerLawDist::new(2.0, 1.0).unwrap();
        let (pdf, cdf) = d.eval(0.5).unwrap();
        assert_relative_eq!(pdf, 1.0, epsilon = 1e-15);
        assert_relative_eq!(cdf, 0.25, epsilon = 1e-15);

        let d = PowerLawDist::new(1.0, 0.5).unwrap();
        let (pdf, cdf) = d.eval(0.2).unwrap();
        assert_relative_eq!(pdf, 2.0, epsilon = 1e-15);
        assert_relative_eq!(cdf, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn endpoint_limits() {
        assert_eq!(PowerLawDist::new(0.5, 2.0).unwrap().pdf(0.0).unwrap(), f64::INFINITY);
        assert_eq!(PowerLawDist::new(1.0, 2.0).unwrap().pdf(0.0).unwrap(), 0.5);
        assert_eq!(PowerLawDist::new(3.0, 2.0).unwrap().pdf(0.0).unwrap(), 0.0);
        let d = PowerLawDist::new(1.057, 3.549e-5).unwrap();
        assert_eq!(d.cdf(0.0).unwrap(), 0.0);
        assert_eq!(d.cdf(d.upper()).unwrap(), 1.0);
    }

    #[test]
    fn quantile_endpoints_and_reference_value() {
        let d = PowerLawDist::new(1.057, 3.549e-5).unwrap();
        assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        assert_eq!(d.quantile(1.0).unwrap(), d.upper());
        // K * 0.5^(1/1.057), evaluated at 40 digits
        assert_relative_eq!(d.quantile(0.5).unwrap(), 1.842_083_910_698_69e-5, max_relative = 1e-12);
    }

    #[test]
    fn domain_errors() {
        let d = PowerLawDist::new(1.0, 1.0).unwrap();
        assert!(matches!(d.pdf(1.5), Err(ModelError::Domain { .. })));
        assert!(matches!(d.cdf(-0.1), Err(ModelError::Domain { .. })));
        assert!(matches!(d.quantile(1.01), Err(ModelError::Domain { .. })));
        assert!(PowerLawDist::new(0.0, 1.0).is_err());
        assert!(PowerLawDist::new(1.0, f64::NAN).is_err());
    }

    /// Quantile substitution `x = K u^(1/γ)`: the density times the Jacobian,
    /// both evaluated numerically, integrated by plain Gauss–Legendre on [0, 1].
    #[test]
    fn density_integrates_to_one_under_quantile_substitution() {
        let rule = GaussLegendre::new(64);
        for &g in &[0.25, 0.5, 1.0, 1.057, 4.0] {
            let d = PowerLawDist::new(g, 3.549e-5).unwrap();
            let k = d.upper();
            let total = rule.integrate(0.0, 1.0, |u| {
                let x = d.quantile(u).unwrap();
                let jacobian = k / g * u.powf(1.0 / g - 1.0);
                d.pdf(x).unwrap() * jacobian
            });
            assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    /// Same integral directly in x, graded toward the singular endpoint.
    #[test]
    fn density_integrates_to_one_on_graded_grid() {
        let rule = GaussLegendre::new(48);
        let nodes = composite_nodes(&rule, &graded_unit_panels(0.125, 60));
        for &g in &[0.25, 0.5, 1.0, 1.057, 4.0] {
            let k = 3.549e-5;
            let d = PowerLawDist::new(g, k).unwrap();
            let total: NeumaierSum = nodes
                .iter()
                .map(|&(t, w)| w * k * d.pdf(k * t).unwrap())
                .collect();
            assert_relative_eq!(total.value(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn mean_matches_quadrature_of_x_pdf() {
        let rule = GaussLegendre::new(48);
        let nodes = composite_nodes(&rule, &graded_unit_panels(0.125, 40));
        let d = PowerLawDist::new(1.057_239_512_589_92, 3.546_972_994_618_45e-5).unwrap();
        let k = d.upper();
        let m: NeumaierSum = nodes
            .iter()
            .map(|&(t, w)| w * k * (k * t) * d.pdf(k * t).unwrap())
            .collect();
        assert_relative_eq!(m.value(), d.mean(), max_relative = 1e-10);
        assert_relative_eq!(d.mean(), 1.822_831_020_428_45e-5, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(g in 0.05f64..20.0, k in 1e-9f64..1.0, u in 0.0f64..=1.0) {
            let d = PowerLawDist::new(g, k).unwrap();
            let x = d.quantile(u).unwrap();
            prop_assert!((d.cdf(x).unwrap() - u).abs() <= 1e-12);
        }

        #[test]
        fn cdf_is_monotone(g in 0.05f64..20.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let d = PowerLawDist::new(g, 1.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(d.cdf(lo).unwrap() <= d.cdf(hi).unwrap());
        }
    }

    #[test]
    fn dense_grid_round_trip() {
        for &g in &[0.25, 0.5, 1.0, 1.057, 4.0] {
            let d = PowerLawDist::new(g, 3.549e-5).unwrap();
            for i in 0..=10_000 {
                let u = i as f64 / 10_000.0;
                let back = d.cdf(d.quantile(u).unwrap()).unwrap();
                assert!((back - u).abs() <= 1e-12, "g={g} u={u} back={back}");
            }
        }
    }
}
