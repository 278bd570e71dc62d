//! Time marching for the reduced HJB equations in `u = log(αg)`, `L = log λ`:
//!
//! ```text
//! u_t + a u_L + β(u_LL + u_L²) + e(u_L − φ_L)² + s + c e^{κu} = 0
//! ```
//!
//! with `a = drift/λ − vol²/(2λ²)`, `β = vol²/(2λ²)`, `s = αr − α(μ−r)²/(2(α−1)σ²) + (α−1)λ`,
//! `c = α(1−ρ)/ρ` and `κ = ρ/(α(ρ−1))`. The coupling coefficient is
//! `e = −αβ/(α−1)` for the finite fund trading at the infinite fund's price
//! (`φ = log(α₂g₂)`) and `0` otherwise.

use crate::error::{Error, Result};
use crate::mortality::MortalityModel;
use crate::preferences::Preferences;
use crate::pricing::MarketParams;

use super::tridiag;
use super::SolverConfig;

/// Fixed data of one solve.
pub(crate) struct Problem<'a> {
    pub model: &'a MortalityModel,
    pub prefs: Preferences,
    pub l: Vec<f64>,
    pub lam: Vec<f64>,
    pub dl: f64,
    pub src: Vec<f64>,
    pub kappa: f64,
    pub cexp: f64,
    pub xi: f64,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a MortalityModel, mkt: &MarketParams, prefs: Preferences, cfg: &SolverConfig) -> Self {
        let l = cfg.l_grid();
        let lam: Vec<f64> = l.iter().map(|x| x.exp()).collect();
        let al = prefs.alpha;
        let premium = al * mkt.r - al * (mkt.mu - mkt.r).powi(2) / (2.0 * (al - 1.0) * mkt.sigma * mkt.sigma);
        let src = lam.iter().map(|&x| premium + (al - 1.0) * x).collect();
        Self {
            model,
            prefs,
            dl: l[1] - l[0],
            l,
            lam,
            src,
            kappa: prefs.consumption_exponent(),
            cexp: al * (1.0 - prefs.rho) / prefs.rho,
            xi: prefs.xi(),
        }
    }

    fn coefficients(&self, t: f64, zero_vol: bool, adv: &mut [f64], diff: &mut [f64]) {
        for j in 0..self.lam.len() {
            let x = self.lam[j];
            let d = self.model.drift(x, t) / x;
            if zero_vol {
                adv[j] = d;
                diff[j] = 0.0;
            } else {
                let v = self.model.vol(x, t) / x;
                let b = 0.5 * v * v;
                adv[j] = d - b;
                diff[j] = b;
            }
        }
    }
}

/// Per-step inputs of the coupled solve.
pub(crate) enum Mode<'s> {
    ZeroVol,
    /// Neumann data `(u_L(L_min), u_L(L_max))` at time `t`.
    Neumann { bc: &'s dyn Fn(f64) -> (f64, f64) },
    Coupled {
        bc: &'s dyn Fn(f64) -> (f64, f64),
        /// Fills `∂_L log(α₂g₂)` on the grid at time `t`.
        phi: &'s dyn Fn(f64, &mut [f64]),
    },
}

pub(crate) struct Marched {
    /// Snapshot times, ascending.
    pub times: Vec<f64>,
    /// Snapshots of `u`, same order as `times`.
    pub snaps: Vec<Vec<f64>>,
    /// `(u_L(L_min), u_L(L_max))` at every step, ascending in time.
    pub slopes: Vec<(f64, f64)>,
    pub step_dt: f64,
    pub iterations_total: usize,
    pub iterations_max: usize,
}

pub(crate) fn march(p: &Problem<'_>, cfg: &SolverConfig, mode: &Mode<'_>) -> Result<Marched> {
    let n = p.l.len();
    let nt = cfg.n_t;
    let dt = cfg.t_final / nt as f64;
    let theta = cfg.theta;

    let mut u: Vec<f64> = p.l.iter().map(|&x| p.xi * x).collect();
    let mut times = Vec::with_capacity(nt / cfg.store_every + 2);
    let mut snaps = Vec::with_capacity(nt / cfg.store_every + 2);
    let mut slopes = Vec::with_capacity(nt + 1);
    times.push(cfg.t_final);
    snaps.push(u.clone());
    slopes.push(match mode {
        Mode::ZeroVol => (p.xi, p.xi),
        Mode::Neumann { bc } | Mode::Coupled { bc, .. } => bc(cfg.t_final),
    });

    let mut ws = Workspace::new(n);
    let mut it_total = 0;
    let mut it_max = 0;
    for step in 0..nt {
        let t0 = cfg.t_final - step as f64 * dt;
        let t1 = if step + 1 == nt { 0.0 } else { cfg.t_final - (step + 1) as f64 * dt };
        let iters = match mode {
            Mode::ZeroVol => {
                let iters = zero_vol_step(p, &mut ws, &mut u, t0, t1, dt, theta, cfg)?;
                let g = one_sided_slopes(&u, p.dl);
                slopes.push(g);
                iters
            }
            Mode::Neumann { bc } => {
                let g = bc(t1);
                let iters = implicit_step(p, &mut ws, &mut u, t0, t1, dt, theta, g, false, cfg)?;
                slopes.push(g);
                iters
            }
            Mode::Coupled { bc, phi } => {
                let g = bc(t1);
                phi(t0, &mut ws.phi0);
                phi(t1, &mut ws.phi1);
                let iters = implicit_step(p, &mut ws, &mut u, t0, t1, dt, theta, g, true, cfg)?;
                slopes.push(g);
                iters
            }
        };
        it_total += iters;
        it_max = it_max.max(iters);
        if let Some(j) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { l: p.l[j], t: t1 });
        }
        if (step + 1) % cfg.store_every == 0 || step + 1 == nt {
            times.push(t1);
            snaps.push(u.clone());
        }
    }
    times.reverse();
    snaps.reverse();
    slopes.reverse();
    Ok(Marched { times, snaps, slopes, step_dt: dt, iterations_total: it_total, iterations_max: it_max })
}

struct Workspace {
    adv0: Vec<f64>,
    diff0: Vec<f64>,
    adv1: Vec<f64>,
    diff1: Vec<f64>,
    phi0: Vec<f64>,
    phi1: Vec<f64>,
    explicit: Vec<f64>,
    ub: Vec<f64>,
    next: Vec<f64>,
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    rhs: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self {
            adv0: z(),
            diff0: z(),
            adv1: z(),
            diff1: z(),
            phi0: z(),
            phi1: z(),
            explicit: z(),
            ub: z(),
            next: z(),
            lo: z(),
            di: z(),
            up: z(),
            rhs: z(),
        }
    }
}

/// Second-order one-sided slopes at both ends.
pub(crate) fn one_sided_slopes(u: &[f64], dl: f64) -> (f64, f64) {
    let n = u.len();
    let left = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dl);
    let right = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dl);
    (left, right)
}

/// Centred derivative in the interior, one-sided second order at the ends.
pub(crate) fn derivative(u: &[f64], dl: f64, out: &mut [f64]) {
    let n = u.len();
    for j in 1..n - 1 {
        out[j] = (u[j + 1] - u[j - 1]) / (2.0 * dl);
    }
    let (l, r) = one_sided_slopes(u, dl);
    out[0] = l;
    out[n - 1] = r;
}

fn converged(new: &[f64], old: &[f64], tol: f64) -> (bool, f64) {
    let mut worst = 0.0f64;
    let mut ok = true;
    for (a, b) in new.iter().zip(old) {
        let d = (a - b).abs();
        worst = worst.max(d);
        if d > tol * b.abs().max(1.0) {
            ok = false;
        }
    }
    (ok, worst)
}

/// θ-weighted step of the first-order equation obtained with zero
/// volatility. The advection is upwinded to second order from the right,
/// where the solution continues linearly with slope ξ, so each node is a
/// scalar equation solved by Newton's method from right to left.
#[allow(clippy::too_many_arguments)]
fn zero_vol_step(
    p: &Problem<'_>,
    ws: &mut Workspace,
    u: &mut [f64],
    t0: f64,
    t1: f64,
    dt: f64,
    theta: f64,
    cfg: &SolverConfig,
) -> Result<usize> {
    let n = u.len();
    let dl = p.dl;
    let xi = p.xi;
    p.coefficients(t0, true, &mut ws.adv0, &mut ws.diff0);
    p.coefficients(t1, true, &mut ws.adv1, &mut ws.diff1);
    if let Some(j) = ws.adv1.iter().chain(&ws.adv0).position(|&a| a < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "zero-volatility solve needs non-negative drift, violated at L = {}",
            p.l[j % n]
        )));
    }
    let upwind = |v: &[f64], j: usize, vj: f64| -> f64 {
        if j == n - 1 {
            xi
        } else if j == n - 2 {
            (-3.0 * vj + 3.0 * v[j + 1] - xi * dl) / (2.0 * dl)
        } else {
            (-3.0 * vj + 4.0 * v[j + 1] - v[j + 2]) / (2.0 * dl)
        }
    };
    for j in 0..n {
        let f = ws.adv0[j] * upwind(u, j, u[j]) + p.src[j] + p.cexp * (p.kappa * u[j]).exp();
        ws.explicit[j] = u[j] + (1.0 - theta) * dt * f;
    }
    let mut worst_iters = 0;
    ws.next.copy_from_slice(u);
    for j in (0..n).rev() {
        // g(v) = v − θdt(a·D(v) + s + c e^{κv}) − explicit, strictly increasing in v
        let (coef, known) = if j == n - 1 {
            (0.0, ws.adv1[j] * xi)
        } else if j == n - 2 {
            let k = ws.adv1[j] / (2.0 * dl);
            (3.0 * k, k * (3.0 * ws.next[j + 1] - xi * dl))
        } else {
            let k = ws.adv1[j] / (2.0 * dl);
            (3.0 * k, k * (4.0 * ws.next[j + 1] - ws.next[j + 2]))
        };
        let mut v = u[j];
        let mut iters = 0;
        loop {
            iters += 1;
            let e = p.cexp * (p.kappa * v).exp();
            let g = v - theta * dt * (known - coef * v + p.src[j] + e) - ws.explicit[j];
            let dg = 1.0 + theta * dt * (coef - p.kappa * e);
            let step = g / dg;
            v -= step;
            if step.abs() <= cfg.tol * v.abs().max(1.0) {
                break;
            }
            if iters >= cfg.max_iter {
                return Err(Error::NoConvergence { t: t1, delta: step.abs() });
            }
        }
        worst_iters = worst_iters.max(iters);
        ws.next[j] = v;
    }
    u.copy_from_slice(&ws.next);
    Ok(worst_iters)
}

/// θ-weighted step of the full equation with Neumann data eliminated into
/// the interior tridiagonal system. The quadratic gradient terms are lagged
/// on the current iterate and the exponential is linearised about it; the
/// iteration is repeated until the update falls below the tolerance.
#[allow(clippy::too_many_arguments)]
fn implicit_step(
    p: &Problem<'_>,
    ws: &mut Workspace,
    u: &mut [f64],
    t0: f64,
    t1: f64,
    dt: f64,
    theta: f64,
    (gl, gr): (f64, f64),
    couple: bool,
    cfg: &SolverConfig,
) -> Result<usize> {
    let n = u.len();
    let m = n - 2;
    let dl = p.dl;
    let dl2 = dl * dl;
    let al = p.prefs.alpha;
    p.coefficients(t0, false, &mut ws.adv0, &mut ws.diff0);
    p.coefficients(t1, false, &mut ws.adv1, &mut ws.diff1);

    for j in 1..n - 1 {
        let ul = (u[j + 1] - u[j - 1]) / (2.0 * dl);
        let ull = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / dl2;
        let b = ws.diff0[j];
        let mut f = ws.adv0[j] * ul + b * (ull + ul * ul) + p.src[j] + p.cexp * (p.kappa * u[j]).exp();
        if couple {
            let d = ul - ws.phi0[j];
            f += -al * b / (al - 1.0) * d * d;
        }
        ws.explicit[j] = u[j] + (1.0 - theta) * dt * f;
    }

    ws.ub.copy_from_slice(u);
    let mut iters = 0;
    loop {
        iters += 1;
        for j in 1..n - 1 {
            let ub = &ws.ub;
            let ul = (ub[j + 1] - ub[j - 1]) / (2.0 * dl);
            let e = p.cexp * (p.kappa * ub[j]).exp();
            let b = ws.diff1[j];
            let mut adv = ws.adv1[j] + b * ul;
            let mut src = p.src[j] + e * (1.0 - p.kappa * ub[j]);
            if couple {
                let ce = -al * b / (al - 1.0);
                let ph = ws.phi1[j];
                adv += ce * (ul - ph);
                src -= ce * (ul - ph) * ph;
            }
            let k = theta * dt;
            let r = j - 1;
            ws.lo[r] = -k * (-adv / (2.0 * dl) + b / dl2);
            ws.up[r] = -k * (adv / (2.0 * dl) + b / dl2);
            ws.di[r] = 1.0 - k * (-2.0 * b / dl2 + e * p.kappa);
            ws.rhs[r] = ws.explicit[j] + k * src;
        }
        // u₀ = (4u₁ − u₂ − 2dL gL)/3 and u_{N−1} = (4u_{N−2} − u_{N−3} + 2dL gR)/3
        let a0 = ws.lo[0];
        ws.di[0] += a0 * 4.0 / 3.0;
        ws.up[0] -= a0 / 3.0;
        ws.rhs[0] += a0 * 2.0 * dl * gl / 3.0;
        let cl = ws.up[m - 1];
        ws.di[m - 1] += cl * 4.0 / 3.0;
        ws.lo[m - 1] -= cl / 3.0;
        ws.rhs[m - 1] -= cl * 2.0 * dl * gr / 3.0;

        tridiag::solve_in_place(&ws.lo[..m], &mut ws.di[..m], &ws.up[..m], &mut ws.rhs[..m])?;
        ws.next[1..n - 1].copy_from_slice(&ws.rhs[..m]);
        ws.next[0] = (4.0 * ws.next[1] - ws.next[2] - 2.0 * dl * gl) / 3.0;
        ws.next[n - 1] = (4.0 * ws.next[n - 2] - ws.next[n - 3] + 2.0 * dl * gr) / 3.0;

        let (ok, worst) = converged(&ws.next, &ws.ub, cfg.tol);
        std::mem::swap(&mut ws.ub, &mut ws.next);
        if !worst.is_finite() {
            let j = ws.ub.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite { l: p.l[j], t: t1 });
        }
        if ok {
            break;
        }
        if iters >= cfg.max_iter {
            return Err(Error::NoConvergence { t: t1, delta: worst });
        }
    }
    u.copy_from_slice(&ws.ub);
    Ok(iters)
}
