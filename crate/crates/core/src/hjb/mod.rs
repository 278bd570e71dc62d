//! Crank–Nicolson solver for the reduced HJB equations of the finite and
//! the infinite fund.
//!
//! With the ansatz `V = w^α g(λ, t)` the solver works with
//! `u = log(αg)` on a uniform grid in `L = log λ`, so `u` is real for either
//! sign of `α`. The terminal payoff is `αg = λ^ξ`, `ξ = α(ρ−1)/ρ`.
//!
//! Every full solve is preceded by a solve with the volatility switched off.
//! That first-order problem only needs the slope `ξ` at the upper boundary;
//! its boundary slopes at both ends then serve as Neumann data for the full
//! equation. The finite fund is solved last, reading the infinite fund's
//! `∂_L u₂` from its lattice and taking its Neumann data from its own
//! one-fund solve.

mod io;
mod scheme;
pub mod tridiag;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mortality::MortalityModel;
use crate::preferences::Preferences;
use crate::pricing::MarketParams;

use scheme::{Marched, Mode, Problem};

/// Mortality range of the power-law fit.
pub const FIT_RANGE: (f64, f64) = (0.01, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub l_min: f64,
    pub l_max: f64,
    pub n_l: usize,
    pub t_final: f64,
    pub n_t: usize,
    pub theta: f64,
    /// Keep every `store_every`-th time step on the lattice.
    pub store_every: usize,
    /// Relative tolerance of the nonlinear iteration in each step.
    pub tol: f64,
    pub max_iter: usize,
    /// Alternative terminal time for the finite fund.
    pub finite_horizon: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            l_min: 0.001f64.ln(),
            l_max: 20f64.ln(),
            n_l: 801,
            t_final: 150.0,
            n_t: 15_000,
            theta: 0.5,
            store_every: 10,
            tol: 1e-10,
            max_iter: 50,
            finite_horizon: None,
        }
    }
}

impl SolverConfig {
    /// Settings for the stylised model, whose stationary solution is only
    /// reached at small λ after a long backward run.
    pub fn stylized() -> Self {
        Self { t_final: 600.0, n_t: 60_000, store_every: 100, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.l_min < self.l_max) || !self.l_min.is_finite() || !self.l_max.is_finite() {
            return bad(format!("need L_min < L_max, got {} and {}", self.l_min, self.l_max));
        }
        if self.n_l < 5 {
            return bad(format!("need at least 5 grid points, got {}", self.n_l));
        }
        if self.n_t < 1 || !(self.t_final > 0.0) {
            return bad("need n_t >= 1 and T_final > 0".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta = {} outside [0, 1]", self.theta));
        }
        if self.store_every == 0 || self.max_iter == 0 || !(self.tol > 0.0) {
            return bad("store_every, max_iter and tol must be positive".into());
        }
        if let Some(h) = self.finite_horizon {
            if !(h > 0.0 && h <= self.t_final) {
                return bad(format!("finite horizon {h} outside (0, T_final]"));
            }
        }
        Ok(())
    }

    pub fn l_grid(&self) -> Vec<f64> {
        let h = (self.l_max - self.l_min) / (self.n_l - 1) as f64;
        (0..self.n_l).map(|j| self.l_min + j as f64 * h).collect()
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    /// Configuration of the finite fund's solves: the finite horizon, if
    /// set, with the time step kept.
    pub fn finite_config(&self) -> Self {
        match self.finite_horizon {
            Some(h) if h != self.t_final => {
                let n_t = ((self.n_t as f64) * h / self.t_final).round().max(1.0) as usize;
                Self { t_final: h, n_t, finite_horizon: None, ..*self }
            }
            _ => Self { finite_horizon: None, ..*self },
        }
    }
}

/// Least-squares fit `αg ≈ A λ^B` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub t: f64,
    pub log_a: f64,
    pub b: f64,
    /// Root mean square residual in `log(αg)`.
    pub rms_residual: f64,
}

impl PowerLawFit {
    pub fn a(&self) -> f64 {
        self.log_a.exp()
    }

    /// Fitted `log(αg)` at `λ`.
    pub fn log_g(&self, lambda: f64) -> f64 {
        self.log_a + self.b * lambda.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveKind {
    ZeroVolatility,
    OneFund,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub kind: SolveKind,
    pub steps: usize,
    pub iterations_total: usize,
    pub iterations_max: usize,
}

/// Solution lattice in `(t, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub l_grid: Vec<f64>,
    /// Stored times, ascending.
    pub times: Vec<f64>,
    /// `log(αg)`, indexed `[time, L]`.
    pub log_g: Array2<f64>,
    /// `∂_L log(αg)`, indexed `[time, L]`.
    pub dlog_g_dl: Array2<f64>,
    /// Boundary slopes `(u_L(L_min), u_L(L_max))` at every time step, ascending.
    pub boundary_slopes: Vec<(f64, f64)>,
    pub step_dt: f64,
    pub prefs: Preferences,
    /// Power-law fit at every stored time.
    pub fits: Vec<PowerLawFit>,
    /// Power-law fit at the earliest stored time.
    pub fitted_power: PowerLawFit,
    pub diagnostics: SolveDiagnostics,
}

impl PdeSolution {
    fn from_marched(m: Marched, l_grid: Vec<f64>, prefs: Preferences, kind: SolveKind) -> Result<Self> {
        let nl = l_grid.len();
        let ns = m.times.len();
        let dl = l_grid[1] - l_grid[0];
        let mut log_g = Array2::zeros((ns, nl));
        let mut dlog = Array2::zeros((ns, nl));
        let mut buf = vec![0.0; nl];
        for (k, snap) in m.snaps.iter().enumerate() {
            scheme::derivative(snap, dl, &mut buf);
            for j in 0..nl {
                log_g[[k, j]] = snap[j];
                dlog[[k, j]] = buf[j];
            }
        }
        let diagnostics = SolveDiagnostics {
            kind,
            steps: m.slopes.len() - 1,
            iterations_total: m.iterations_total,
            iterations_max: m.iterations_max,
        };
        Self::assemble(l_grid, m.times, log_g, dlog, m.slopes, m.step_dt, prefs, diagnostics)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        l_grid: Vec<f64>,
        times: Vec<f64>,
        log_g: Array2<f64>,
        dlog_g_dl: Array2<f64>,
        boundary_slopes: Vec<(f64, f64)>,
        step_dt: f64,
        prefs: Preferences,
        diagnostics: SolveDiagnostics,
    ) -> Result<Self> {
        let fits = (0..times.len())
            .map(|k| fit_row(&l_grid, log_g.row(k).as_slice().unwrap(), times[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fitted_power: fits[0],
            fits,
            l_grid,
            times,
            log_g,
            dlog_g_dl,
            boundary_slopes,
            step_dt,
            prefs,
            diagnostics,
        })
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        self.l_grid.iter().map(|l| l.exp()).collect()
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of a stored time equal to `t` up to rounding.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let k = self.times.partition_point(|&x| x < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }

    fn time_bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = (self.times[0], self.t_max());
        let tol = 1e-9 * t1.max(1.0);
        if t < t0 - tol || t > t1 + tol {
            return Err(Error::Domain(format!("t = {t} outside solved range [{t0}, {t1}]")));
        }
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let t = t.clamp(t0, t1);
        let k = (self.times.partition_point(|&x| x <= t).max(1) - 1).min(self.times.len() - 2);
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Ok((k, w))
    }

    fn l_bracket(&self, lambda: f64) -> Result<(usize, f64)> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("λ = {lambda} must be positive")));
        }
        let l = lambda.ln();
        let (lo, hi) = (self.l_grid[0], *self.l_grid.last().unwrap());
        let tol = 1e-12 * (hi - lo);
        if l < lo - tol || l > hi + tol {
            return Err(Error::Domain(format!(
                "λ = {lambda} outside lattice [{}, {}]",
                lo.exp(),
                hi.exp()
            )));
        }
        let dl = self.l_grid[1] - self.l_grid[0];
        let x = ((l.clamp(lo, hi) - lo) / dl).max(0.0);
        let j = (x.floor() as usize).min(self.l_grid.len() - 2);
        Ok((j, x - j as f64))
    }

    fn bilinear(&self, field: &Array2<f64>, lambda: f64, t: f64) -> Result<f64> {
        let (k, wt) = self.time_bracket(t)?;
        let (j, wl) = self.l_bracket(lambda)?;
        let row = |k: usize| field[[k, j]] * (1.0 - wl) + field[[k, j + 1]] * wl;
        if wt == 0.0 {
            Ok(row(k))
        } else {
            Ok(row(k) * (1.0 - wt) + row(k + 1) * wt)
        }
    }

    /// `log(αg)` by bilinear interpolation on the lattice.
    pub fn log_g_at(&self, lambda: f64, t: f64) -> Result<f64> {
        self.bilinear(&self.log_g, lambda, t)
    }

    /// `∂_L log(αg)` by bilinear interpolation on the lattice.
    pub fn dlog_g_dl_at(&self, lambda: f64, t: f64) -> Result<f64> {
        self.bilinear(&self.dlog_g_dl, lambda, t)
    }

    /// `∂_λ log g = ∂_L log(αg) / λ`.
    pub fn dlog_g_dlambda_at(&self, lambda: f64, t: f64) -> Result<f64> {
        Ok(self.dlog_g_dl_at(lambda, t)? / lambda)
    }

    /// Power-law fit at `t`, linear in time between stored fits.
    pub fn power_fit_at(&self, t: f64) -> Result<PowerLawFit> {
        let (k, w) = self.time_bracket(t)?;
        if w == 0.0 {
            return Ok(self.fits[k]);
        }
        let (a, b) = (&self.fits[k], &self.fits[k + 1]);
        Ok(PowerLawFit {
            t,
            log_a: a.log_a * (1.0 - w) + b.log_a * w,
            b: a.b * (1.0 - w) + b.b * w,
            rms_residual: a.rms_residual.max(b.rms_residual),
        })
    }

    /// Boundary slopes at `t`, linear between time steps.
    pub fn boundary_slopes_at(&self, t: f64) -> (f64, f64) {
        let n = self.boundary_slopes.len();
        let x = (t / self.step_dt).clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n.saturating_sub(2));
        let w = x - k as f64;
        if n == 1 || w == 0.0 {
            return self.boundary_slopes[k];
        }
        let (a, b) = (self.boundary_slopes[k], self.boundary_slopes[k + 1]);
        (a.0 * (1.0 - w) + b.0 * w, a.1 * (1.0 - w) + b.1 * w)
    }

    /// Fill `out` with `∂_L log(αg)` on the spatial grid at time `t`.
    pub fn dlog_g_dl_row(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (k, w) = self.time_bracket(t)?;
        let a = self.dlog_g_dl.row(k);
        if w == 0.0 {
            out.iter_mut().zip(a.iter()).for_each(|(o, x)| *o = *x);
        } else {
            let b = self.dlog_g_dl.row(k + 1);
            for j in 0..out.len() {
                out[j] = a[j] * (1.0 - w) + b[j] * w;
            }
        }
        Ok(())
    }

    /// Sub-lattice of the nodes with `λ ∈ [lambda_lo, lambda_hi]`.
    pub fn restrict(&self, lambda_lo: f64, lambda_hi: f64) -> Result<PdeSolution> {
        let keep: Vec<usize> = (0..self.l_grid.len())
            .filter(|&j| {
                let x = self.l_grid[j].exp();
                x >= lambda_lo * (1.0 - 1e-12) && x <= lambda_hi * (1.0 + 1e-12)
            })
            .collect();
        if keep.len() < 3 {
            return Err(Error::Domain(format!("fewer than 3 nodes in [{lambda_lo}, {lambda_hi}]")));
        }
        let ns = self.times.len();
        let mut log_g = Array2::zeros((ns, keep.len()));
        let mut dlog = Array2::zeros((ns, keep.len()));
        for k in 0..ns {
            for (jj, &j) in keep.iter().enumerate() {
                log_g[[k, jj]] = self.log_g[[k, j]];
                dlog[[k, jj]] = self.dlog_g_dl[[k, j]];
            }
        }
        let l_grid: Vec<f64> = keep.iter().map(|&j| self.l_grid[j]).collect();
        Self::assemble(
            l_grid,
            self.times.clone(),
            log_g,
            dlog,
            self.boundary_slopes.clone(),
            self.step_dt,
            self.prefs,
            self.diagnostics,
        )
    }

    /// Write the lattice as CSV with columns `t,L,lambda,log_g,dlogg_dL`,
    /// keeping every `time_stride`-th stored time.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W, time_stride: usize) -> Result<()> {
        io::write_csv(self, w, time_stride)
    }

    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        io::write_binary(self, w)
    }

    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<Self> {
        io::read_binary(r)
    }
}

fn fit_row(l_grid: &[f64], u: &[f64], t: f64) -> Result<PowerLawFit> {
    let (lo, hi) = (FIT_RANGE.0.ln() - 1e-12, FIT_RANGE.1.ln() + 1e-12);
    let pts: Vec<(f64, f64)> = l_grid
        .iter()
        .zip(u)
        .filter(|(l, _)| **l >= lo && **l <= hi)
        .map(|(l, v)| (*l, *v))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Domain("lattice has fewer than two nodes in the fit range".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let log_a = my - b * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - log_a - b * p.0).powi(2)).sum();
    Ok(PowerLawFit { t, log_a, b, rms_residual: (ss / n).sqrt() })
}

/// Least-squares fit of `log(αg)` against `L` over `λ ∈ [0.01, 10]` at a
/// stored time.
pub fn fit_power_law(sol: &PdeSolution, t: f64) -> Result<PowerLawFit> {
    let k = sol
        .time_index(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not a stored time")))?;
    Ok(sol.fits[k])
}

fn check_inputs(mkt: &MarketParams, prefs: &Preferences, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    mkt.validate()?;
    prefs.validate()?;
    Ok(())
}

/// Solve with the mortality volatility switched off.
pub fn solve_deterministic(
    m: &MortalityModel,
    mkt: &MarketParams,
    prefs: &Preferences,
    cfg: &SolverConfig,
) -> Result<PdeSolution> {
    check_inputs(mkt, prefs, cfg)?;
    let p = Problem::new(m, mkt, *prefs, cfg);
    let marched = scheme::march(&p, cfg, &Mode::ZeroVol)?;
    PdeSolution::from_marched(marched, p.l, *prefs, SolveKind::ZeroVolatility)
}

/// Solve the one-fund equation, which is the infinite fund's equation and
/// also the finite fund's equation without insurance.
pub fn solve_one_fund(
    m: &MortalityModel,
    mkt: &MarketParams,
    prefs: &Preferences,
    cfg: &SolverConfig,
) -> Result<PdeSolution> {
    let pre = solve_deterministic(m, mkt, prefs, cfg)?;
    let p = Problem::new(m, mkt, *prefs, cfg);
    let bc = |t: f64| pre.boundary_slopes_at(t);
    let marched = scheme::march(&p, cfg, &Mode::Neumann { bc: &bc })?;
    PdeSolution::from_marched(marched, p.l, *prefs, SolveKind::OneFund)
}

/// Solve the infinite fund's equation.
pub fn solve_infinite(
    m: &MortalityModel,
    mkt: &MarketParams,
    p2: &Preferences,
    cfg: &SolverConfig,
) -> Result<PdeSolution> {
    solve_one_fund(m, mkt, p2, cfg)
}

/// Solve the finite fund's equation when trading insurance with the
/// infinite fund described by `g2`.
///
/// The finite fund's horizon is `cfg.finite_horizon` when set.
pub fn solve_finite(
    m: &MortalityModel,
    mkt: &MarketParams,
    p1: &Preferences,
    g2: &PdeSolution,
    cfg: &SolverConfig,
) -> Result<PdeSolution> {
    let fcfg = cfg.finite_config();
    let alone = solve_one_fund(m, mkt, p1, &fcfg)?;
    solve_finite_given_alone(m, mkt, p1, g2, &alone, &fcfg)
}

/// As [`solve_finite`], reusing the finite fund's one-fund solution `alone`
/// for the Neumann data. `cfg` must be the configuration `alone` was solved
/// with.
pub fn solve_finite_given_alone(
    m: &MortalityModel,
    mkt: &MarketParams,
    p1: &Preferences,
    g2: &PdeSolution,
    alone: &PdeSolution,
    cfg: &SolverConfig,
) -> Result<PdeSolution> {
    check_inputs(mkt, p1, cfg)?;
    let grid = cfg.l_grid();
    for (name, sol) in [("infinite fund", g2), ("uninsured", alone)] {
        let same = sol.l_grid.len() == grid.len()
            && sol.l_grid.iter().zip(&grid).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if !same {
            return Err(Error::LatticeMismatch(format!("{name} solution is on a different L grid")));
        }
        if sol.times[0] > 1e-9 || sol.t_max() < cfg.t_final - 1e-9 {
            return Err(Error::LatticeMismatch(format!(
                "{name} solution covers [{}, {}], need [0, {}]",
                sol.times[0],
                sol.t_max(),
                cfg.t_final
            )));
        }
    }
    let p = Problem::new(m, mkt, *p1, cfg);
    let bc = |t: f64| alone.boundary_slopes_at(t);
    let phi = |t: f64, out: &mut [f64]| {
        g2.dlog_g_dl_row(t, out).expect("time range checked above");
    };
    let marched = scheme::march(&p, cfg, &Mode::Coupled { bc: &bc, phi: &phi })?;
    PdeSolution::from_marched(marched, p.l, *p1, SolveKind::Finite)
}

/// How `log(αg)` is read off a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// Bilinear interpolation on the lattice.
    #[default]
    Lattice,
    /// From the power-law fit over `λ ∈ [0.01, 10]`, as used for the
    /// simulated controls. Noticeably less accurate for the benefit when
    /// `g` bends away from a power law near `λ₀`.
    PowerLaw,
}

/// Insurance benefit in percent at `(λ₀, t₀)`: the increase in initial
/// wealth that makes the uninsured fund as well off as the insured one,
/// `(g_I/g_NI)^{1/α₁} − 1`.
pub fn benefit_numeric(
    g1_insured: &PdeSolution,
    g1_alone: &PdeSolution,
    p1: &Preferences,
    lambda0: f64,
    t0: f64,
    readout: Readout,
) -> Result<f64> {
    let read = |s: &PdeSolution| -> Result<f64> {
        match readout {
            Readout::PowerLaw => Ok(s.power_fit_at(t0)?.log_g(lambda0)),
            Readout::Lattice => s.log_g_at(lambda0, t0),
        }
    };
    let (ui, un) = (read(g1_insured)?, read(g1_alone)?);
    let b = ((ui - un) / p1.alpha).exp_m1() * 100.0;
    if !b.is_finite() {
        return Err(Error::IllPosed(format!("benefit ratio not finite: log ratio {}", ui - un)));
    }
    Ok(b)
}
