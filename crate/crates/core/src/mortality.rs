//! Force-of-mortality models.
//!
//! Two one-factor models are provided:
//!
//! - the stylised model `dλ = aλ² dt + bλ^{3/2} dW`, which is time scale
//!   invariant and explodes in finite time;
//! - a continuous-time analogue of the two-factor Cairns–Blake–Dowd model,
//!   reduced to one factor by replacing the stochastic second factor with its
//!   deterministic trend. The rate is `λ = log(1 + eˣ)` where `x` is the
//!   logit of the one-year death probability.
//!
//! Both are exposed through [`MortalityModel`], which only answers drift and
//! volatility queries and is freely shareable between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to simulated mortality rates.
pub const SIM_LAMBDA_MIN: f64 = 1e-6;
/// Upper clamp applied to simulated mortality rates. A path reaching it is
/// treated as extinct.
pub const SIM_LAMBDA_MAX: f64 = 25.0;

/// Parameters of `dλ = aλ² dt + bλ^{3/2} dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylizedParams {
    pub a: f64,
    pub b: f64,
}

impl StylizedParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::InvalidParameter("stylized a, b must be finite".into()));
        }
        if self.b < 0.0 {
            return Err(Error::InvalidParameter(format!("stylized b = {} < 0", self.b)));
        }
        Ok(())
    }
}

/// Coefficients of the one-factor CBD rate SDE together with the factor
/// model they were assembled from.
///
/// `b[0]..b[7]` hold B₁..B₈. The factor fields (`mu1`, `mu2`, `c11`, `c12`,
/// `c22`, `a2_0`) describe `dA = μ dt + C dW` and are only used by
/// [`FactorSde::from_factors`] and [`CbdParams::from_factor_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbdParams {
    pub b: [f64; 8],
    pub x0: f64,
    pub a2_0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
}

impl CbdParams {
    /// Name of the embedded preset.
    pub const PRESET_2019: &'static str = "cbd-2019";

    /// Published coefficient table with retirement age 65.
    pub fn cbd_2019() -> Self {
        Self {
            b: [0.00118, 0.00317, 1.04e-5, 0.00125, 0.0773, 0.0782, 0.0393, 0.0166],
            x0: 65.0,
            a2_0: 0.1058,
            mu1: -0.00669,
            mu2: 0.000590,
            c11: 0.0782,
            c12: -0.00120,
            c22: 0.000257,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            Self::PRESET_2019 => Ok(Self::cbd_2019()),
            other => Err(Error::InvalidParameter(format!("unknown CBD preset '{other}'"))),
        }
    }

    /// Assemble B₁..B₈ from the factor drift `μ`, Cholesky factor `C`, the
    /// starting age and the initial level of the second factor, so that the
    /// rate SDE is exactly the Itô image of [`FactorSde::from_factors`].
    pub fn from_factor_model(
        mu1: f64,
        mu2: f64,
        c11: f64,
        c12: f64,
        c22: f64,
        x0: f64,
        a2_0: f64,
    ) -> Result<Self> {
        let v1 = c12 + x0 * c22;
        if c11 <= 0.0 || v1 == 0.0 {
            return Err(Error::InvalidParameter(
                "factor volatility must give C11 > 0 and C12 + x0 C22 != 0".into(),
            ));
        }
        let b6 = c11;
        let b7 = (v1 / c11).powi(2);
        let b8 = c22 / v1;
        let b2 = 0.5 * b6 * b6 * (1.0 + b7);
        let b3 = b7 * b8 * b8 / (1.0 + b7);
        let b4 = 2.0 * b7 * b8 / (1.0 + b7);
        let b1 = 2.0 * mu2;
        let b5 = mu1 + mu2 * x0 + a2_0;
        let p = Self {
            b: [b1, b2, b3, b4, b5, b6, b7, b8],
            x0,
            a2_0,
            mu1,
            mu2,
            c11,
            c12,
            c22,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("CBD coefficients must be finite".into()));
        }
        if self.b[5] <= 0.0 {
            return Err(Error::InvalidParameter("CBD requires B6 > 0".into()));
        }
        if self.b[6] < 0.0 {
            return Err(Error::InvalidParameter("CBD requires B7 >= 0".into()));
        }
        if self.x0 <= 0.0 {
            return Err(Error::InvalidParameter("CBD requires x0 > 0".into()));
        }
        if self.c11 <= 0.0 || self.c22 <= 0.0 {
            return Err(Error::InvalidParameter("CBD requires C11 > 0 and C22 > 0".into()));
        }
        Ok(())
    }
}

/// Gaussian SDE for the logit factor,
/// `dx = (m₀ + m₁ t) dt + sqrt(v₀² + (v₁ + v₂ t)²) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorSde {
    pub m0: f64,
    pub m1: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
}

impl FactorSde {
    /// Factor dynamics with the second factor frozen on its trend
    /// `A₂(t) = A₂⁰ + μ₂ t`.
    pub fn from_factors(p: &CbdParams) -> Self {
        Self {
            m0: p.mu1 + p.mu2 * p.x0 + p.a2_0,
            m1: 2.0 * p.mu2,
            v0: p.c11,
            v1: p.c12 + p.x0 * p.c22,
            v2: p.c22,
        }
    }

    /// Factor dynamics read back from B₁, B₅..B₈.
    pub fn implied_by_coefficients(p: &CbdParams) -> Self {
        let [b1, _, _, _, b5, b6, b7, b8] = p.b;
        let v1 = b6 * b7.sqrt();
        Self { m0: b5, m1: b1, v0: b6, v1, v2: v1 * b8 }
    }

    pub fn drift(&self, t: f64) -> f64 {
        self.m0 + self.m1 * t
    }

    pub fn vol(&self, t: f64) -> f64 {
        let lin = self.v1 + self.v2 * t;
        (self.v0 * self.v0 + lin * lin).sqrt()
    }
}

/// `λ = −log(1 − eˣ/(1+eˣ)) = log(1 + eˣ)`, evaluated without overflow.
pub fn rate_from_factor(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`rate_from_factor`]: `x = log(e^λ − 1)`.
pub fn factor_from_rate(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("mortality rate {lambda} must be positive")));
    }
    Ok(if lambda > 1.0 {
        lambda + (-(-lambda).exp_m1()).ln()
    } else {
        lambda.exp_m1().ln()
    })
}

/// Drift and volatility of `λ = log(1+eˣ)` obtained by Itô's lemma from a
/// factor SDE.
pub fn ito_rate_coefficients(sde: &FactorSde, x: f64, t: f64) -> (f64, f64) {
    // dλ/dx = s, d²λ/dx² = s(1 − s) with s the logistic function.
    let s = logistic(x);
    let one_minus_s = logistic(-x);
    let v = sde.vol(t);
    let drift = s * sde.drift(t) + 0.5 * s * one_minus_s * v * v;
    (drift, s * v)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A one-factor force-of-mortality model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MortalityModel {
    Stylized(StylizedParams),
    Cbd(CbdParams),
}

pub fn stylized_model(p: StylizedParams) -> Result<MortalityModel> {
    p.validate()?;
    Ok(MortalityModel::Stylized(p))
}

pub fn cbd_model(p: CbdParams) -> Result<MortalityModel> {
    p.validate()?;
    Ok(MortalityModel::Cbd(p))
}

impl MortalityModel {
    /// Drift of λ in rate per year². Callers must pass `λ > 0`.
    #[inline]
    pub fn drift(&self, lambda: f64, t: f64) -> f64 {
        match self {
            MortalityModel::Stylized(p) => p.a * lambda * lambda,
            MortalityModel::Cbd(p) => {
                // (e^λ−1)(B₁t e^λ + B₂(B₃t²+B₄t+1) + B₅e^λ) / e^{2λ}, with the
                // denominator (e^λ−1)² + 2e^λ − 1 collapsed to e^{2λ}.
                let [b1, b2, b3, b4, b5, ..] = p.b;
                let s = -(-lambda).exp_m1();
                s * (b1 * t + b5 + b2 * (b3 * t * t + b4 * t + 1.0) * (-lambda).exp())
            }
        }
    }

    /// Volatility of λ (non-negative). Callers must pass `λ > 0`.
    #[inline]
    pub fn vol(&self, lambda: f64, t: f64) -> f64 {
        match self {
            MortalityModel::Stylized(p) => p.b * lambda * lambda.sqrt(),
            MortalityModel::Cbd(p) => {
                // |B₆((e^λ−1)²e^{−2λ} − (e^λ−1)e^{−λ}) e^λ| = B₆(1 − e^{−λ})
                let [.., b6, b7, b8] = p.b;
                let s = -(-lambda).exp_m1();
                let lin = b8 * t + 1.0;
                b6 * s * (b7 * lin * lin + 1.0).sqrt()
            }
        }
    }

    /// Checked drift and volatility.
    pub fn coefficients(&self, lambda: f64, t: f64) -> Result<(f64, f64)> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("mortality rate {lambda} outside (0, ∞)")));
        }
        Ok((self.drift(lambda, t), self.vol(lambda, t)))
    }

    pub fn domain(&self) -> (f64, f64) {
        (SIM_LAMBDA_MIN, SIM_LAMBDA_MAX)
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            MortalityModel::Stylized(p) => p.b == 0.0,
            MortalityModel::Cbd(_) => false,
        }
    }

    /// Advance λ over one step of length `dt` with standard normal shock `z`.
    ///
    /// The stylised model is stepped by Euler–Maruyama in λ. The CBD model is
    /// stepped in the logit factor, whose increments are Gaussian, and mapped
    /// back through [`rate_from_factor`]. The result is clamped to the
    /// simulation domain.
    pub fn advance(&self, lambda: f64, t: f64, dt: f64, z: f64) -> f64 {
        let next = match self {
            MortalityModel::Stylized(_) => {
                lambda + self.drift(lambda, t) * dt + self.vol(lambda, t) * dt.sqrt() * z
            }
            MortalityModel::Cbd(p) => {
                let sde = FactorSde::implied_by_coefficients(p);
                let x = match factor_from_rate(lambda) {
                    Ok(x) => x,
                    Err(_) => return SIM_LAMBDA_MIN,
                };
                let tm = t + 0.5 * dt;
                rate_from_factor(x + sde.drift(tm) * dt + sde.vol(tm) * dt.sqrt() * z)
            }
        };
        if next.is_nan() {
            SIM_LAMBDA_MAX
        } else {
            next.clamp(SIM_LAMBDA_MIN, SIM_LAMBDA_MAX)
        }
    }
}

/// Deterministic (zero volatility) trajectory of the mortality rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    pub times: Vec<f64>,
    pub rates: Vec<f64>,
    /// First time the rate exceeded the domain maximum, if it did.
    pub blow_up: Option<f64>,
}

/// Integrate `dλ = drift(λ, t) dt` with classical RK4 from `lambda0`.
///
/// After the rate leaves the domain it is held at the upper clamp.
pub fn deterministic_rate_path(
    m: &MortalityModel,
    lambda0: f64,
    horizon: f64,
    dt: f64,
) -> Result<RatePath> {
    let (lo, hi) = m.domain();
    if !(lambda0 >= lo && lambda0 <= hi) {
        return Err(Error::Domain(format!("λ₀ = {lambda0} outside [{lo}, {hi}]")));
    }
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidParameter("need dt > 0 and horizon >= 0".into()));
    }
    let n = (horizon / dt).ceil() as usize;
    let h = if n == 0 { 0.0 } else { horizon / n as f64 };
    let mut times = Vec::with_capacity(n + 1);
    let mut rates = Vec::with_capacity(n + 1);
    let mut blow_up = None;
    let mut lam = lambda0;
    times.push(0.0);
    rates.push(lam);
    let f = |l: f64, t: f64| m.drift(l.max(lo), t);
    for k in 0..n {
        let t = k as f64 * h;
        if blow_up.is_none() {
            let k1 = f(lam, t);
            let k2 = f(lam + 0.5 * h * k1, t + 0.5 * h);
            let k3 = f(lam + 0.5 * h * k2, t + 0.5 * h);
            let k4 = f(lam + h * k3, t + h);
            let next = lam + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !next.is_finite() || next > hi {
                // linear interpolation of the crossing inside the step
                let frac = if next.is_finite() { (hi - lam) / (next - lam) } else { 0.5 };
                blow_up = Some(t + frac.clamp(0.0, 1.0) * h);
                lam = hi;
            } else {
                lam = next.max(lo);
            }
        }
        times.push(t + h);
        rates.push(lam);
    }
    Ok(RatePath { times, rates, blow_up })
}

/// Monte Carlo controls shared by the survival and annuity routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { paths: 20_000, dt: 1.0 / 12.0, seed: 2019 }
    }
}

/// Cohort survival curve `S(t) = E[exp(−∫₀ᵗ λ_s ds)]` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SurvivalCurve {
    pub fn at(&self, t: f64) -> f64 {
        interp_linear(&self.times, &self.probs, t)
    }
}

const BLOCK: usize = 512;

/// Survival curve to `horizon`, by Monte Carlo over rate paths or by the
/// deterministic integral when the model has no volatility.
pub fn survival_curve(
    m: &MortalityModel,
    lambda0: f64,
    horizon: f64,
    mc: &McSettings,
) -> Result<SurvivalCurve> {
    if !(horizon >= 0.0) || !(mc.dt > 0.0) {
        return Err(Error::InvalidParameter("need horizon >= 0 and dt > 0".into()));
    }
    let n = (horizon / mc.dt).ceil().max(1.0) as usize;
    let h = horizon / n as f64;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();

    if m.is_deterministic() {
        let path = deterministic_rate_path(m, lambda0, horizon, h)?;
        let mut integral = 0.0;
        let mut probs = Vec::with_capacity(n + 1);
        probs.push(1.0);
        for k in 0..n {
            if path.blow_up.is_some_and(|tb| tb <= path.times[k + 1]) {
                probs.push(0.0);
                continue;
            }
            integral += 0.5 * (path.rates[k] + path.rates[k + 1]) * h;
            probs.push((-integral).exp());
        }
        return Ok(SurvivalCurve { times, probs });
    }

    if mc.paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let (lo, hi) = m.domain();
    if !(lambda0 >= lo && lambda0 <= hi) {
        return Err(Error::Domain(format!("λ₀ = {lambda0} outside [{lo}, {hi}]")));
    }
    // fixed-size blocks summed in order keep the result independent of the
    // number of worker threads
    let n_blocks = mc.paths.div_ceil(BLOCK);
    let block_sums: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut sums = vec![0.0; n + 1];
            let start = blk * BLOCK;
            let end = (start + BLOCK).min(mc.paths);
            for path in start..end {
                let mut rng = path_rng(mc.seed, path as u64);
                let mut lam = lambda0;
                let mut integral = 0.0;
                sums[0] += 1.0;
                for k in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let next = m.advance(lam, times[k], h, z);
                    integral += 0.5 * (lam + next) * h;
                    lam = next;
                    sums[k + 1] += (-integral).exp();
                }
            }
            sums
        })
        .collect();
    let mut probs = vec![0.0; n + 1];
    for sums in &block_sums {
        for (p, s) in probs.iter_mut().zip(sums) {
            *p += s;
        }
    }
    let inv = 1.0 / mc.paths as f64;
    probs.iter_mut().for_each(|p| *p *= inv);
    Ok(SurvivalCurve { times, probs })
}

/// Probability that a member alive at rate `lambda0` survives `t` years.
pub fn survival_probability(
    m: &MortalityModel,
    lambda0: f64,
    t: f64,
    mc: &McSettings,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let curve = survival_curve(m, lambda0, t, mc)?;
    Ok(*curve.probs.last().unwrap())
}

/// Independent random stream for one path: ChaCha8 seeded with `seed` on
/// stream `path`.
pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] * (1.0 - w) + ys[i + 1] * w
}
