use crate::error::{Error, Result};
use crate::mortality::{survival_curve, McSettings, MortalityModel, SurvivalCurve};
use crate::pricing::MarketParams;

/// Survival probability below which the annuity integral is truncated.
pub const SURVIVAL_CUTOFF: f64 = 1e-8;
/// Longest horizon considered when pricing the annuity.
pub const MAX_HORIZON: f64 = 120.0;

/// `∫₀^∞ e^{−rt} S(t) dt` by the trapezoidal rule on the curve's grid,
/// truncated where `S` falls below [`SURVIVAL_CUTOFF`].
pub fn annuity_factor(curve: &SurvivalCurve, r: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..curve.times.len().saturating_sub(1) {
        let (t0, t1) = (curve.times[k], curve.times[k + 1]);
        let f0 = (-r * t0).exp() * curve.probs[k];
        let f1 = (-r * t1).exp() * curve.probs[k + 1];
        total += 0.5 * (f0 + f1) * (t1 - t0);
        if curve.probs[k + 1] < SURVIVAL_CUTOFF {
            break;
        }
    }
    total
}

/// Level lifetime income a pot buys at the actuarially fair price for a
/// member with current mortality rate `lambda0`.
pub fn annuity_rate(
    m: &MortalityModel,
    mkt: &MarketParams,
    pot: f64,
    lambda0: f64,
    mc: &McSettings,
) -> Result<f64> {
    if !(pot > 0.0) {
        return Err(Error::InvalidParameter(format!("pot {pot} must be positive")));
    }
    let curve = survival_curve(m, lambda0, MAX_HORIZON, mc)?;
    Ok(pot / annuity_factor(&curve, mkt.r))
}
