//! Insurance price set by the infinite fund, optimal controls of the finite
//! fund and market clearing.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::PdeSolution;
use crate::mortality::MortalityModel;
use crate::preferences::Preferences;

/// Black–Scholes market of a risk-free bond and one risky asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self { r: 0.027, mu: 0.062, sigma: 0.15 }
    }
}

impl MarketParams {
    /// Market with `r = μ = 0`, under which the stylised model is stationary.
    pub fn zero_rates() -> Self {
        Self { r: 0.0, mu: 0.0, sigma: 0.15 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.r.is_finite() || !self.mu.is_finite() || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("market needs finite r, μ and σ > 0: {self:?}")));
        }
        Ok(())
    }

    /// Merton fraction of wealth in the risky asset, `(μ−r)/((1−α)σ²)`.
    pub fn merton_fraction(&self, alpha: f64) -> f64 {
        (self.mu - self.r) / ((1.0 - alpha) * self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    /// Consumption rate.
    pub c: f64,
    /// Fraction of wealth in the risky asset.
    pub pi_a: f64,
    /// Insurance purchase rate in contracts per year; negative means selling.
    pub q_c: f64,
    /// Price per contract per year.
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Price {
    pub price: f64,
    /// Set when `λ` lies outside the lattice and the power-law fit was used.
    pub extrapolated: bool,
}

/// `∂_λ log g` from the lattice, or from the power-law fit outside it.
fn dlog_dlambda(g: &PdeSolution, lambda: f64, t: f64) -> Result<(f64, bool)> {
    match g.dlog_g_dlambda_at(lambda, t) {
        Ok(v) => Ok((v, false)),
        Err(Error::Domain(_)) if lambda > 0.0 => Ok((g.power_fit_at(t)?.b / lambda, true)),
        Err(e) => Err(e),
    }
}

/// Price charged by the infinite fund, `drift + vol² ∂_λ log g₂`.
pub fn insurance_price(m: &MortalityModel, g2: &PdeSolution, lambda: f64, t: f64) -> Result<Price> {
    let (d, v) = m.coefficients(lambda, t)?;
    let (phi, extrapolated) = dlog_dlambda(g2, lambda, t)?;
    Ok(Price { price: d + v * v * phi, extrapolated })
}

/// Price on every node of `g2`'s lattice, indexed `[time, L]`.
pub fn price_field(m: &MortalityModel, g2: &PdeSolution) -> Array2<f64> {
    let lam = g2.lambda_grid();
    Array2::from_shape_fn(g2.log_g.dim(), |(k, j)| {
        let (x, t) = (lam[j], g2.times[k]);
        let v = m.vol(x, t);
        m.drift(x, t) + v * v * g2.dlog_g_dl[[k, j]] / x
    })
}

/// Insurance demand of a fund with value `w^α g` facing an arbitrary price
/// `p`: `w (p − drift − vol² ∂_λ log g) / ((α−1) vol²)`.
pub fn insurance_demand(
    prefs: &Preferences,
    m: &MortalityModel,
    g: &PdeSolution,
    w: f64,
    lambda: f64,
    t: f64,
    price: f64,
) -> Result<f64> {
    let (d, v) = m.coefficients(lambda, t)?;
    if v == 0.0 {
        return Err(Error::Domain("demand is unbounded without mortality volatility".into()));
    }
    let (psi, _) = dlog_dlambda(g, lambda, t)?;
    Ok(w * (price - d - v * v * psi) / ((prefs.alpha - 1.0) * v * v))
}

/// Optimal controls of the finite fund at wealth `w`.
#[allow(clippy::too_many_arguments)]
pub fn optimal_controls(
    p1: &Preferences,
    mkt: &MarketParams,
    m: &MortalityModel,
    g1: &PdeSolution,
    g2: &PdeSolution,
    w: f64,
    lambda: f64,
    t: f64,
) -> Result<ControlSet> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("wealth {w} must be positive")));
    }
    let u1 = match g1.log_g_at(lambda, t) {
        Ok(u) => u,
        Err(Error::Domain(_)) => g1.power_fit_at(t)?.log_g(lambda),
        Err(e) => return Err(e),
    };
    let (psi, _) = dlog_dlambda(g1, lambda, t)?;
    let (phi, _) = dlog_dlambda(g2, lambda, t)?;
    let price = insurance_price(m, g2, lambda, t)?;
    Ok(ControlSet {
        c: w * (p1.consumption_exponent() * u1).exp(),
        pi_a: mkt.merton_fraction(p1.alpha),
        q_c: w * (phi - psi) / (p1.alpha - 1.0),
        p: price.price,
    })
}

/// Largest insurance demand per unit wealth of the infinite fund at the
/// posted prices over the lattice. Zero when the prices are its own no-trade
/// prices.
pub fn clearing_check(
    p2: &Preferences,
    m: &MortalityModel,
    g2: &PdeSolution,
    prices: &Array2<f64>,
) -> Result<f64> {
    if prices.dim() != g2.log_g.dim() {
        return Err(Error::LatticeMismatch("price field shape differs from the lattice".into()));
    }
    let lam = g2.lambda_grid();
    let mut worst = 0.0f64;
    for ((k, j), &p) in prices.indexed_iter() {
        let (x, t) = (lam[j], g2.times[k]);
        let v = m.vol(x, t);
        if v == 0.0 {
            continue;
        }
        let psi = g2.dlog_g_dl[[k, j]] / x;
        let q = (p - m.drift(x, t) - v * v * psi) / ((p2.alpha - 1.0) * v * v);
        worst = worst.max(q.abs());
    }
    Ok(worst)
}

/// Wealth derivatives of one fund's value function, evaluated at a point.
/// "Other" refers to the other fund's wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundPartials {
    /// `∂V/∂w_own`
    pub v_w: f64,
    /// `∂²V/∂w_own²`
    pub v_ww: f64,
    /// `∂²V/∂w_own∂w_other`
    pub v_w_other: f64,
    /// `∂²V/∂λ∂w_own`
    pub v_lambda_w: f64,
}

/// Market-clearing price between two funds of sizes `n1`, `n2`.
///
/// Obtained from the first-order conditions of both funds in their
/// insurance rates together with `n₁q₁ + n₂q₂ = 0`:
///
/// ```text
/// p = drift − vol² (E·V¹_λw − D·V²_λw) / (V²_w·D − E·V¹_w),
/// D = n V¹_ww − V¹_w,other,   E = n V²_w,other − V²_ww,   n = n₂/n₁.
/// ```
pub fn general_price_ansatz(
    f1: &FundPartials,
    f2: &FundPartials,
    n1: f64,
    n2: f64,
    drift: f64,
    vol: f64,
) -> Result<f64> {
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(Error::InvalidParameter("fund sizes must be positive".into()));
    }
    let n = n2 / n1;
    let d = n * f1.v_ww - f1.v_w_other;
    let e = n * f2.v_w_other - f2.v_ww;
    let den = f2.v_w * d - e * f1.v_w;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::IllPosed("clearing price denominator vanishes".into()));
    }
    Ok(drift - vol * vol * (e * f1.v_lambda_w - d * f2.v_lambda_w) / den)
}

/// Write `t,lambda,price,c_frac,pi_a,qc_per_wealth` on the lattice of `g1`,
/// keeping every `time_stride`-th stored time.
#[allow(clippy::too_many_arguments)]
pub fn write_control_csv<W: Write>(
    w: &mut W,
    p1: &Preferences,
    mkt: &MarketParams,
    m: &MortalityModel,
    g1: &PdeSolution,
    g2: &PdeSolution,
    time_stride: usize,
) -> Result<()> {
    writeln!(w, "t,lambda,price,c_frac,pi_a,qc_per_wealth")?;
    let stride = time_stride.max(1);
    let last = g1.times.len() - 1;
    for k in (0..g1.times.len()).filter(|k| k % stride == 0 || *k == last) {
        let t = g1.times[k];
        for l in &g1.l_grid {
            let x = l.exp();
            let c = optimal_controls(p1, mkt, m, g1, g2, 1.0, x, t)?;
            writeln!(w, "{t},{x:.10e},{:.10e},{:.10e},{:.10e},{:.10e}", c.p, c.c, c.pi_a, c.q_c)?;
        }
    }
    Ok(())
}
