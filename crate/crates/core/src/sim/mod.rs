//! Euler–Maruyama simulation of a decumulating fund under its optimal
//! controls.
//!
//! Each path carries `(λ, w)` and the cumulative profit and loss of the
//! insurance position. The contract pays the realised increment `dλ`
//! against the premium `p dt`, so the insurance part of the wealth change
//! equals the P&L increment `q(Δλ − p dt)`.
//!
//! Paths draw from their own ChaCha8 stream (the run seed on stream `path`)
//! at a fixed word position per step, so results do not depend on how paths
//! are scheduled across threads.

mod annuity;
pub mod stats;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::PdeSolution;
use crate::mortality::{path_rng, MortalityModel, SIM_LAMBDA_MAX, SIM_LAMBDA_MIN};
use crate::preferences::Preferences;
use crate::pricing::{ControlSet, MarketParams};

pub use annuity::{annuity_factor, annuity_rate, MAX_HORIZON, SURVIVAL_CUTOFF};

/// Largest tolerated share of paths aborted on non-finite values.
pub const MAX_ABORTED_SHARE: f64 = 1e-3;

/// Where the simulated controls read `g₁` and `g₂` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlSource {
    /// Power-law fits `αg ≈ Aλ^B` at each stored time.
    #[default]
    PowerLaw,
    /// Bilinear interpolation on the lattice.
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    /// Years simulated.
    pub horizon: f64,
    pub seed: u64,
    pub initial_pot: f64,
    pub initial_lambda: f64,
    /// Percentile levels in percent.
    pub percentiles: Vec<f64>,
    /// Record statistics every this many steps.
    pub record_every: usize,
    pub controls: ControlSource,
    /// Trade insurance; otherwise the fund only invests and consumes.
    pub insurance: bool,
    /// Age at `t = 0`, used for labelling.
    pub start_age: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 1_000_000,
            dt: 1.0 / 12.0,
            horizon: 55.0,
            seed: 2019,
            initial_pot: 126_636.0,
            initial_lambda: 0.01,
            percentiles: vec![5.0, 25.0, 50.0, 75.0, 95.0],
            record_every: 12,
            controls: ControlSource::PowerLaw,
            insurance: true,
            start_age: 65.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_paths == 0 {
            return bad("need at least one path".into());
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return bad("dt and horizon must be positive".into());
        }
        if !(self.initial_pot > 0.0) {
            return bad(format!("initial pot {} must be positive", self.initial_pot));
        }
        if !(self.initial_lambda >= SIM_LAMBDA_MIN && self.initial_lambda <= SIM_LAMBDA_MAX) {
            return bad(format!("initial λ {} outside the simulation domain", self.initial_lambda));
        }
        if self.record_every == 0 {
            return bad("record_every must be positive".into());
        }
        if self.percentiles.is_empty()
            || self.percentiles.iter().any(|p| !(0.0..=100.0).contains(p))
            || self.percentiles.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("percentiles must be strictly increasing within [0, 100]".into());
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Controls as a function of the state.
pub trait ControlPolicy: Sync {
    /// Controls at step `step` (time `t`) for mortality `lambda` and wealth
    /// `w > 0`.
    fn controls(&self, step: usize, t: f64, lambda: f64, w: f64) -> ControlSet;
}

/// Optimal controls of the finite fund read from its PDE solutions.
pub struct PdePolicy<'a> {
    p1: Preferences,
    m: &'a MortalityModel,
    g1: &'a PdeSolution,
    g2: &'a PdeSolution,
    pi_a: f64,
    source: ControlSource,
    insurance: bool,
    /// `(log A₁, B₁, log A₂, B₂)` at each step when using power-law fits.
    fits: Vec<(f64, f64, f64, f64)>,
}

impl<'a> PdePolicy<'a> {
    pub fn new(
        p1: &Preferences,
        mkt: &MarketParams,
        m: &'a MortalityModel,
        g1: &'a PdeSolution,
        g2: &'a PdeSolution,
        cfg: &SimConfig,
    ) -> Result<Self> {
        let n = cfg.n_steps();
        let end = n as f64 * cfg.dt;
        for (name, g) in [("finite", g1), ("infinite", g2)] {
            if g.times[0] > 1e-9 || g.t_max() < end - 1e-9 {
                return Err(Error::LatticeMismatch(format!(
                    "{name} fund solution covers [{}, {}], simulation needs [0, {end}]",
                    g.times[0],
                    g.t_max()
                )));
            }
        }
        let fits = (0..=n)
            .map(|k| {
                let t = (k as f64 * cfg.dt).min(g1.t_max()).min(g2.t_max());
                let (f1, f2) = (g1.power_fit_at(t)?, g2.power_fit_at(t)?);
                Ok((f1.log_a, f1.b, f2.log_a, f2.b))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            p1: *p1,
            m,
            g1,
            g2,
            pi_a: mkt.merton_fraction(p1.alpha),
            source: cfg.controls,
            insurance: cfg.insurance,
            fits,
        })
    }

    /// `(log(α₁g₁), ∂_λ log g₁, ∂_λ log g₂)`.
    fn fields(&self, step: usize, t: f64, lambda: f64) -> (f64, f64, f64) {
        let (la1, b1, _, b2) = self.fits[step.min(self.fits.len() - 1)];
        let fit = (la1 + b1 * lambda.ln(), b1 / lambda, b2 / lambda);
        match self.source {
            ControlSource::PowerLaw => fit,
            ControlSource::Lattice => {
                let lat = (|| -> Result<(f64, f64, f64)> {
                    Ok((
                        self.g1.log_g_at(lambda, t)?,
                        self.g1.dlog_g_dlambda_at(lambda, t)?,
                        self.g2.dlog_g_dlambda_at(lambda, t)?,
                    ))
                })();
                lat.unwrap_or(fit)
            }
        }
    }
}

impl ControlPolicy for PdePolicy<'_> {
    fn controls(&self, step: usize, t: f64, lambda: f64, w: f64) -> ControlSet {
        let (u1, psi, phi) = self.fields(step, t, lambda);
        let v = self.m.vol(lambda, t);
        let q_c = if self.insurance { w * (phi - psi) / (self.p1.alpha - 1.0) } else { 0.0 };
        ControlSet {
            c: w * (self.p1.consumption_exponent() * u1).exp(),
            pi_a: self.pi_a,
            q_c,
            p: self.m.drift(lambda, t) + v * v * phi,
        }
    }
}

/// Percentile time series and per-path totals of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub percentiles: Vec<f64>,
    /// Recording times in years from the start.
    pub times: Vec<f64>,
    pub ages: Vec<f64>,
    /// `[record][percentile]` of the consumption rate.
    pub consumption: Vec<Vec<f64>>,
    /// Insurance spend `q·p` per year.
    pub insurance_spend: Vec<Vec<f64>>,
    /// Insurance purchase rate `q` in contracts per year.
    pub insurance_rate: Vec<Vec<f64>>,
    /// Cumulative insurance profit and loss.
    pub pnl: Vec<Vec<f64>>,
    /// Cumulative insurance profit and loss discounted at `r`.
    pub pnl_discounted: Vec<Vec<f64>>,
    pub wealth: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    /// Mean consumption rate at each record.
    pub mean_consumption: Vec<f64>,
    /// Total consumption `Σ c dt` of every path.
    pub total_consumption: Vec<f64>,
    /// Paths whose wealth reached zero.
    pub ruined: usize,
    /// Paths whose mortality rate reached the upper clamp.
    pub extinct: usize,
    /// Paths stopped on non-finite values.
    pub aborted: usize,
}

impl PathEnsemble {
    pub fn median_index(&self) -> Option<usize> {
        self.percentiles.iter().position(|&p| p == 50.0)
    }

    /// Series of one percentile level for a field.
    pub fn series(field: &[Vec<f64>], level: usize) -> Vec<f64> {
        field.iter().map(|row| row[level]).collect()
    }

    /// Fan CSV with columns
    /// `age,percentile,consumption,insurance_spend,insurance_rate,pnl,pnl_discounted,wealth,lambda`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from(
            "age,percentile,consumption,insurance_spend,insurance_rate,pnl,pnl_discounted,wealth,lambda\n",
        );
        for k in 0..self.times.len() {
            for (i, p) in self.percentiles.iter().enumerate() {
                writeln!(
                    s,
                    "{:.4},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                    self.ages[k],
                    p,
                    self.consumption[k][i],
                    self.insurance_spend[k][i],
                    self.insurance_rate[k][i],
                    self.pnl[k][i],
                    self.pnl_discounted[k][i],
                    self.wealth[k][i],
                    self.lambda[k][i]
                )
                .unwrap();
            }
        }
        s
    }

    pub fn mean_total_consumption(&self) -> f64 {
        let n = self.total_consumption.len().max(1) as f64;
        self.total_consumption.iter().sum::<f64>() / n
    }
}

/// Simulate the finite fund under the controls implied by `g1` and `g2`.
pub fn simulate(
    m: &MortalityModel,
    mkt: &MarketParams,
    p1: &Preferences,
    g1: &PdeSolution,
    g2: &PdeSolution,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    let policy = PdePolicy::new(p1, mkt, m, g1, g2, cfg)?;
    simulate_with_policy(m, mkt, &policy, cfg)
}

#[derive(Clone, Copy)]
struct PathState {
    lambda: f64,
    w: f64,
    pnl: f64,
    pnl_disc: f64,
    consumed: f64,
    status: Status,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Alive,
    Ruined,
    Extinct,
    Aborted,
}

/// Recorded quantities of one path at a record time.
#[derive(Clone, Copy, Default)]
struct Snapshot {
    c: f64,
    spend: f64,
    q: f64,
}

/// Two standard normals from exactly two 64-bit draws (Box–Muller).
fn normal_pair<R: RngCore>(rng: &mut R) -> (f64, f64) {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let rad = (-2.0 * u1.ln()).sqrt();
    let ang = std::f64::consts::TAU * u2;
    (rad * ang.cos(), rad * ang.sin())
}

/// 32-bit words consumed per step.
const WORDS_PER_STEP: u128 = 4;

/// Simulate with an arbitrary control policy.
pub fn simulate_with_policy<P: ControlPolicy>(
    m: &MortalityModel,
    mkt: &MarketParams,
    policy: &P,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    mkt.validate()?;
    let n = cfg.n_paths;
    let steps = cfg.n_steps();
    let dt = cfg.dt;
    let sdt = dt.sqrt();
    let mut state = vec![
        PathState {
            lambda: cfg.initial_lambda,
            w: cfg.initial_pot,
            pnl: 0.0,
            pnl_disc: 0.0,
            consumed: 0.0,
            status: Status::Alive,
        };
        n
    ];
    let mut snaps = vec![Snapshot::default(); n];
    let np = cfg.percentiles.len();
    let mut out = PathEnsemble {
        n_paths: n,
        percentiles: cfg.percentiles.clone(),
        times: Vec::new(),
        ages: Vec::new(),
        consumption: Vec::new(),
        insurance_spend: Vec::new(),
        insurance_rate: Vec::new(),
        pnl: Vec::new(),
        pnl_discounted: Vec::new(),
        wealth: Vec::new(),
        lambda: Vec::new(),
        mean_consumption: Vec::new(),
        total_consumption: Vec::new(),
        ruined: 0,
        extinct: 0,
        aborted: 0,
    };

    let controls_at = |step: usize, s: &PathState| -> ControlSet {
        if s.status != Status::Alive || s.w <= 0.0 {
            return ControlSet { c: 0.0, pi_a: 0.0, q_c: 0.0, p: 0.0 };
        }
        policy.controls(step, step as f64 * dt, s.lambda, s.w)
    };

    let mut step = 0;
    loop {
        // record the cross-section at `step`
        snaps.par_iter_mut().zip(state.par_iter()).for_each(|(snap, s)| {
            let c = controls_at(step, s);
            *snap = Snapshot { c: c.c, spend: c.q_c * c.p, q: c.q_c };
        });
        record(&mut out, &state, &snaps, step as f64 * dt, cfg, np);
        if step >= steps {
            break;
        }
        let until = (step + cfg.record_every).min(steps);
        state.par_iter_mut().enumerate().for_each(|(path, s)| {
            if s.status != Status::Alive {
                return;
            }
            let mut rng = path_rng(cfg.seed, path as u64);
            rng.set_word_pos(step as u128 * WORDS_PER_STEP);
            for k in step..until {
                let t = k as f64 * dt;
                let (z1, z2) = normal_pair(&mut rng);
                let c = policy.controls(k, t, s.lambda, s.w);
                let (d, v) = (m.drift(s.lambda, t), m.vol(s.lambda, t));
                let dlam = d * dt + v * sdt * z2;
                let risky = c.pi_a * s.w;
                let ins = c.q_c * (dlam - c.p * dt);
                let dw = (s.lambda * s.w + mkt.r * (s.w - risky) - c.c + risky * mkt.mu) * dt
                    + risky * mkt.sigma * sdt * z1
                    + ins;
                s.consumed += c.c * dt;
                s.pnl += ins;
                s.pnl_disc += (-mkt.r * t).exp() * ins;
                s.w += dw;
                s.lambda += dlam;
                if !s.w.is_finite() || !s.lambda.is_finite() || !c.c.is_finite() || !c.q_c.is_finite() {
                    s.status = Status::Aborted;
                    return;
                }
                if s.w <= 0.0 {
                    s.w = 0.0;
                    s.status = Status::Ruined;
                    return;
                }
                if s.lambda >= SIM_LAMBDA_MAX {
                    s.lambda = SIM_LAMBDA_MAX;
                    s.status = Status::Extinct;
                    return;
                }
                s.lambda = s.lambda.max(SIM_LAMBDA_MIN);
            }
        });
        step = until;
    }

    out.total_consumption = state.iter().map(|s| s.consumed).collect();
    for s in &state {
        match s.status {
            Status::Ruined => out.ruined += 1,
            Status::Extinct => out.extinct += 1,
            Status::Aborted => out.aborted += 1,
            Status::Alive => {}
        }
    }
    if out.aborted as f64 > MAX_ABORTED_SHARE * n as f64 {
        return Err(Error::TooManyAborted { aborted: out.aborted, total: n });
    }
    Ok(out)
}

fn record(out: &mut PathEnsemble, state: &[PathState], snaps: &[Snapshot], t: f64, cfg: &SimConfig, np: usize) {
    let live: Vec<usize> = (0..state.len()).filter(|&i| state[i].status != Status::Aborted).collect();
    let levels = &cfg.percentiles;
    let mut buf = vec![0.0; live.len()];
    let mut pct = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        for (b, &i) in buf.iter_mut().zip(&live) {
            *b = f(i);
        }
        let v = stats::percentiles(&mut buf, levels);
        debug_assert_eq!(v.len(), np);
        v
    };
    out.consumption.push(pct(&|i| snaps[i].c));
    out.insurance_spend.push(pct(&|i| snaps[i].spend));
    out.insurance_rate.push(pct(&|i| snaps[i].q));
    out.pnl.push(pct(&|i| state[i].pnl));
    out.pnl_discounted.push(pct(&|i| state[i].pnl_disc));
    out.wealth.push(pct(&|i| state[i].w));
    out.lambda.push(pct(&|i| state[i].lambda));
    let mean = live.iter().map(|&i| snaps[i].c).sum::<f64>() / live.len().max(1) as f64;
    out.mean_consumption.push(mean);
    out.times.push(t);
    out.ages.push(cfg.start_age + t);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsumptionShape {
    /// Rising towards the end of the horizon.
    LateRising,
    /// Rising to an interior peak, then falling away.
    HumpShaped,
    /// Neither pattern.
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub shape: ConsumptionShape,
    /// Whether the shape is the one expected for the sign of `α`.
    pub consistent: bool,
    pub peak_age: f64,
    pub peak: f64,
    /// Median consumption at the last record over its peak.
    pub final_over_peak: f64,
}

/// Classify the median consumption path.
pub fn consumption_shape_report(e: &PathEnsemble, p1: &Preferences) -> ShapeReport {
    let level = e.median_index().unwrap_or(e.percentiles.len() / 2);
    let med = PathEnsemble::series(&e.consumption, level);
    let (mut kmax, mut peak) = (0, f64::NEG_INFINITY);
    for (k, &v) in med.iter().enumerate() {
        if v > peak {
            peak = v;
            kmax = k;
        }
    }
    let lo = med.iter().copied().fold(f64::INFINITY, f64::min);
    let first = med[0];
    let last = *med.last().unwrap();
    let n = med.len();
    let flat = !(peak - lo > 1e-9 * peak.abs().max(1e-300));
    let shape = if flat || n < 3 {
        ConsumptionShape::Indeterminate
    } else if kmax + 1 >= n - n / 10 && last > first {
        ConsumptionShape::LateRising
    } else if kmax > 0 && kmax + 1 < n && peak > first && last < 0.5 * peak {
        ConsumptionShape::HumpShaped
    } else {
        ConsumptionShape::Indeterminate
    };
    let consistent = match shape {
        ConsumptionShape::LateRising => p1.alpha < 0.0,
        ConsumptionShape::HumpShaped => p1.alpha > 0.0,
        ConsumptionShape::Indeterminate => false,
    };
    ShapeReport {
        shape,
        consistent,
        peak_age: e.ages[kmax],
        peak,
        final_over_peak: if peak != 0.0 { last / peak } else { f64::NAN },
    }
}

#[cfg(test)]
mod tests;
