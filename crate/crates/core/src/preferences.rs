//! Epstein–Zin preferences with mortality.
//!
//! `α` controls risk aversion and `ρ` the satiation (intertemporal
//! substitution); `α = ρ` is the von Neumann–Morgenstern case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validity class of a preference triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// `α, ρ < 0` and `α ≤ ρ`.
    WellPosedNegative,
    /// `α, ρ > 0`.
    WellPosedPositive,
    /// Mixed signs, or negative exponents with `α > ρ`. Usable, but the
    /// value function may fail to exist.
    Suspect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub alpha: f64,
    pub rho: f64,
    #[serde(default)]
    pub delta: f64,
}

impl Preferences {
    pub fn new(alpha: f64, rho: f64, delta: f64) -> Result<Self> {
        let p = Self { alpha, rho, delta };
        p.validate()?;
        Ok(p)
    }

    /// Von Neumann–Morgenstern preferences `α = ρ` with `δ = 0`.
    pub fn vnm(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha, 0.0)
    }

    /// Check the hard constraints and classify.
    pub fn validate(&self) -> Result<Classification> {
        let Self { alpha, rho, delta } = *self;
        if !alpha.is_finite() || !rho.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidParameter("preferences must be finite".into()));
        }
        if alpha == 0.0 || alpha >= 1.0 {
            return Err(Error::InvalidParameter(format!("α = {alpha} must be non-zero and < 1")));
        }
        if rho == 0.0 || rho >= 1.0 {
            return Err(Error::InvalidParameter(format!("ρ = {rho} must be non-zero and < 1")));
        }
        if delta < 0.0 {
            return Err(Error::InvalidParameter(format!("δ = {delta} must be >= 0")));
        }
        Ok(self.classify())
    }

    pub fn classify(&self) -> Classification {
        let (a, r) = (self.alpha, self.rho);
        if a < 0.0 && r < 0.0 && a <= r {
            Classification::WellPosedNegative
        } else if a > 0.0 && r > 0.0 {
            Classification::WellPosedPositive
        } else {
            Classification::Suspect
        }
    }

    pub fn is_vnm(&self) -> bool {
        self.alpha == self.rho
    }

    /// Exponent `ξ = α(ρ−1)/ρ` of the terminal payoff `g = λ^ξ`.
    pub fn xi(&self) -> f64 {
        self.alpha * (self.rho - 1.0) / self.rho
    }

    /// Exponent `ρ/(α(ρ−1))` mapping `αg` to consumption per unit wealth.
    pub fn consumption_exponent(&self) -> f64 {
        self.rho / (self.alpha * (self.rho - 1.0))
    }

    /// Epstein–Zin aggregator
    /// `f(c, V, λ) = c^ρ (αV)^{1−ρ/α} / ρ − (αδ/ρ + λ) V`.
    ///
    /// Returns `−∞` for `c = 0` and `ρ < 0`.
    pub fn aggregator(&self, c: f64, v: f64, lambda: f64) -> Result<f64> {
        let Self { alpha, rho, delta } = *self;
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("consumption {c} must be >= 0")));
        }
        if !(alpha * v > 0.0) {
            return Err(Error::Domain(format!("αV = {} must be positive", alpha * v)));
        }
        if self.is_vnm() {
            return Ok(c.powf(rho) / rho - (delta + lambda) * v);
        }
        if c == 0.0 && rho < 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let felicity = c.powf(rho) * (alpha * v).powf(1.0 - rho / alpha) / rho;
        Ok(felicity - (alpha * delta / rho + lambda) * v)
    }

    /// One step of the discrete recursion
    /// `Z_t^ρ = c^ρ dt + e^{−(δ+ρλ/α)dt} E[Z^α]^{ρ/α}`.
    ///
    /// `z_alpha_moment` is `E[Z_{t+dt}^α]`.
    pub fn discrete_update(&self, c: f64, z_alpha_moment: f64, lambda: f64, dt: f64) -> Result<f64> {
        let Self { alpha, rho, delta } = *self;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("consumption {c} must be >= 0")));
        }
        if !(z_alpha_moment > 0.0) {
            return Err(Error::Domain(format!("E[Z^α] = {z_alpha_moment} must be positive")));
        }
        let carry = (-(delta + rho * lambda / alpha) * dt).exp() * z_alpha_moment.powf(rho / alpha);
        let z_rho = c.powf(rho) * dt + carry;
        Ok(z_rho.powf(1.0 / rho))
    }

    /// Value `V_t = Z_t^α/α` one step before a known value `v_next`.
    pub fn continuation_value(&self, c: f64, v_next: f64, lambda: f64, dt: f64) -> Result<f64> {
        let m = self.alpha * v_next;
        if !(m > 0.0) {
            return Err(Error::Domain(format!("αV = {m} must be positive")));
        }
        let z = self.discrete_update(c, m, lambda, dt)?;
        Ok(z.powf(self.alpha) / self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn vnm_examples() {
        let p = Preferences::vnm(-1.0).unwrap();
        assert_relative_eq!(p.aggregator(1.0, -1.0, 0.1).unwrap(), -0.9, max_relative = 1e-15);
        let q = Preferences::vnm(1.0 / 3.0).unwrap();
        assert_relative_eq!(q.aggregator(1.0, 3.0, 0.0).unwrap(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_consumption_is_infinitely_bad() {
        let p = Preferences::new(-3.0, -1.0, 0.0).unwrap();
        assert_eq!(p.aggregator(0.0, -0.5, 0.1).unwrap(), f64::NEG_INFINITY);
        let v = Preferences::vnm(-2.0).unwrap();
        assert_eq!(v.aggregator(0.0, -0.5, 0.1).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn aggregator_requires_positive_alpha_v() {
        let p = Preferences::new(-3.0, -1.0, 0.0).unwrap();
        assert!(matches!(p.aggregator(1.0, 1.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(p.aggregator(1.0, 0.0, 0.1), Err(Error::Domain(_))));
        assert!(p.aggregator(-1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn hard_errors() {
        assert!(Preferences::new(0.0, -1.0, 0.0).is_err());
        assert!(Preferences::new(-1.0, 0.0, 0.0).is_err());
        assert!(Preferences::new(1.0, 0.5, 0.0).is_err());
        assert!(Preferences::new(0.5, 1.0, 0.0).is_err());
        assert!(Preferences::new(-1.0, -1.0, -0.1).is_err());
    }

    #[test]
    fn classification() {
        let c = |a, r| Preferences::new(a, r, 0.0).unwrap().classify();
        assert_eq!(c(-3.0, -1.0), Classification::WellPosedNegative);
        assert_eq!(c(3.0 / 20.0, 1.0 / 3.0), Classification::WellPosedPositive);
        assert_eq!(c(0.5, -1.0), Classification::Suspect);
        assert_eq!(c(-1.0, -3.0), Classification::Suspect);
    }

    #[test]
    fn exponents() {
        let p = Preferences::vnm(-1.0).unwrap();
        assert_eq!(p.xi(), -2.0);
        assert_eq!(p.consumption_exponent(), -0.5);
        let q = Preferences::new(0.25, 1.0 / 3.0, 0.0).unwrap();
        assert_relative_eq!(q.xi(), -0.5, max_relative = 1e-15);
    }

    #[test]
    fn update_tends_to_identity() {
        let p = Preferences::new(-3.0, -1.0, 0.0).unwrap();
        let z: f64 = 2.0;
        let m = z.powf(p.alpha);
        let z1 = p.discrete_update(0.5, m, 0.05, 1e-9).unwrap();
        assert!((z1 - z).abs() < 1e-7);
    }

    #[test]
    fn pure_certainty_equivalent() {
        let p = Preferences::new(-2.0, 0.5, 0.0).unwrap();
        let m = 0.37;
        let z = p.discrete_update(0.0, m, 0.0, 0.1).unwrap();
        assert_relative_eq!(z, m.powf(1.0 / p.alpha), max_relative = 1e-14);
    }

    #[test]
    fn discrete_recursion_limit_single_point() {
        let p = Preferences::new(-3.0, -1.0, 0.02).unwrap();
        let (c, v, lam) = (0.5, -4.0, 0.04);
        let d = |dt: f64| (v - p.continuation_value(c, v, lam, dt).unwrap()) / dt;
        let rich = 2.0 * d(5e-4) - d(1e-3);
        let f = p.aggregator(c, v, lam).unwrap();
        assert_relative_eq!(rich, -f, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn vnm_reduction_exact(
            alpha in prop_oneof![-10.0f64..-0.05, 0.05f64..0.95],
            c in 0.01f64..10.0,
            mag in 0.01f64..10.0,
            lambda in 0.0f64..5.0,
            delta in 0.0f64..0.1,
        ) {
            let p = Preferences::new(alpha, alpha, delta).unwrap();
            let v = mag * alpha.signum();
            let f = p.aggregator(c, v, lambda).unwrap();
            prop_assert_eq!(f, c.powf(alpha) / alpha - (delta + lambda) * v);
        }

        #[test]
        fn aggregator_increasing_in_c(
            alpha in -8.0f64..-0.2,
            rho in prop_oneof![-4.0f64..-0.1, 0.1f64..0.9],
            c in 0.01f64..5.0,
            bump in 0.001f64..1.0,
            mag in 0.01f64..5.0,
        ) {
            let p = Preferences::new(alpha, rho, 0.0).unwrap();
            let v = -mag;
            prop_assert!(p.aggregator(c + bump, v, 0.1).unwrap() > p.aggregator(c, v, 0.1).unwrap());
        }
    }
}
