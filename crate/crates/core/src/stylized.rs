//! Closed-form solutions under the stylised mortality model
//! `dλ = aλ² dt + bλ^{3/2} dW` with `r = μ = 0`.
//!
//! The model is time scale invariant, so the value functions are stationary
//! power laws
//!
//! ```text
//! V₁ = w^{α₁} (Aλ)^{ξ₁} / α₁,    V₂ = w^{α₂} (K₂λ)^{ξ₂} / α₂,    ξ = α(ρ−1)/ρ,
//! ```
//!
//! that is `g = (Aλ)^ξ/α`. A solution of this form exists only while the
//! bracketed coefficient is positive; otherwise only trivial solutions
//! (value `0` or `±∞`) remain and the case is reported as ill-posed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preferences::Preferences;
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StylizedStatus {
    WellPosed,
    /// The finite-fund coefficient `A` is not positive.
    IllPosedFinite,
    /// The infinite-fund coefficient `K₂` is not positive, so no price exists.
    IllPosedInfinite,
}

impl StylizedStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StylizedStatus::WellPosed => "well-posed",
            StylizedStatus::IllPosedFinite => "ill-posed-finite",
            StylizedStatus::IllPosedInfinite => "ill-posed-infinite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylizedSolution {
    pub xi1: f64,
    pub xi2: f64,
    /// Finite-fund coefficient `A` with insurance.
    pub a_coef: f64,
    /// Infinite-fund coefficient.
    pub k2: f64,
    /// Finite fund's own coefficient without insurance.
    pub k1_alone: f64,
    pub status: StylizedStatus,
}

/// One-fund coefficient `(α−1)ρ/(α(ρ−1)) + a + b²(α(ρ−1)−ρ)/(2ρ)`.
pub fn one_fund_coefficient(a: f64, b: f64, p: &Preferences) -> f64 {
    let (al, rh) = (p.alpha, p.rho);
    (al - 1.0) * rh / (al * (rh - 1.0)) + a + b * b * (al * (rh - 1.0) - rh) / (2.0 * rh)
}

/// Finite-fund coefficient when trading with a fund of preferences `p2`.
pub fn finite_fund_coefficient(a: f64, b: f64, p1: &Preferences, p2: &Preferences) -> f64 {
    let (x1, x2) = (p1.xi(), p2.xi());
    let al = p1.alpha;
    let num = a * x1 + 0.5 * b * b * x1 * (x1 - 1.0)
        - al * b * b * (x1 - x2).powi(2) / (2.0 * (al - 1.0))
        + al
        - 1.0;
    num / x1
}

pub fn solve_stylized(a: f64, b: f64, p1: &Preferences, p2: &Preferences) -> StylizedSolution {
    let k2 = one_fund_coefficient(a, b, p2);
    let a_coef = finite_fund_coefficient(a, b, p1, p2);
    let status = if !(k2 > 0.0) {
        StylizedStatus::IllPosedInfinite
    } else if !(a_coef > 0.0) {
        StylizedStatus::IllPosedFinite
    } else {
        StylizedStatus::WellPosed
    };
    StylizedSolution {
        xi1: p1.xi(),
        xi2: p2.xi(),
        a_coef,
        k2,
        k1_alone: one_fund_coefficient(a, b, p1),
        status,
    }
}

impl StylizedSolution {
    /// `log(α₁g₁) = ξ₁ log(Aλ)`.
    pub fn log_g1(&self, lambda: f64) -> f64 {
        self.xi1 * (self.a_coef * lambda).ln()
    }

    /// `log(α₂g₂) = ξ₂ log(K₂λ)`.
    pub fn log_g2(&self, lambda: f64) -> f64 {
        self.xi2 * (self.k2 * lambda).ln()
    }

    /// `log(α₁g₁)` of the finite fund when it cannot trade.
    pub fn log_g1_alone(&self, lambda: f64) -> f64 {
        self.xi1 * (self.k1_alone * lambda).ln()
    }
}

/// Insurance price `(a + b²ξ₂)λ²` charged by the infinite fund.
pub fn stylized_price(sol: &StylizedSolution, a: f64, b: f64, lambda: f64) -> Result<f64> {
    if sol.status == StylizedStatus::IllPosedInfinite {
        return Err(Error::IllPosed(format!("infinite fund coefficient {} <= 0", sol.k2)));
    }
    Ok((a + b * b * sol.xi2) * lambda * lambda)
}

/// Optimal insurance purchase rate of the finite fund; positive means buying.
pub fn stylized_insurance_rate(w: f64, lambda: f64, p1: &Preferences, p2: &Preferences) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("λ = {lambda} must be positive")));
    }
    let (a1, r1, a2, r2) = (p1.alpha, p1.rho, p2.alpha, p2.rho);
    Ok(w / (lambda * (a1 - 1.0)) * (a2 - a1 + a1 / r1 - a2 / r2))
}

/// Percentage increase in initial wealth that makes the uninsured finite
/// fund as well off as the insured one.
pub fn stylized_benefit(sol: &StylizedSolution, p1: &Preferences) -> Result<f64> {
    if sol.status != StylizedStatus::WellPosed {
        return Err(Error::IllPosed(format!("insured problem is {}", sol.status.as_str())));
    }
    if !(sol.k1_alone > 0.0) {
        return Err(Error::IllPosed(format!(
            "uninsured coefficient {} <= 0",
            sol.k1_alone
        )));
    }
    // (g_I/g_NI)^{1/α₁} = (A/K₁)^{ξ₁/α₁}
    let ratio = sol.a_coef / sol.k1_alone;
    Ok(100.0 * (ratio.powf((p1.rho - 1.0) / p1.rho) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure1Cell {
    pub alpha1: f64,
    pub alpha2: f64,
    pub status: StylizedStatus,
    /// `None` where either the insured or the uninsured problem is ill-posed.
    pub benefit_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure1Grid {
    pub a: f64,
    pub b: f64,
    /// Cell-centre values of α along each axis.
    pub alphas: Vec<f64>,
    /// Row-major over (α₁, α₂).
    pub cells: Vec<Figure1Cell>,
}

/// Benefit map over von Neumann–Morgenstern preferences `ρᵢ = αᵢ` on
/// `resolution` cells per axis spanning `[lo, hi]`. Cell centres equal to
/// zero are skipped.
pub fn figure1_grid(a: f64, b: f64, lo: f64, hi: f64, resolution: usize) -> Result<Figure1Grid> {
    if !(lo < hi) || hi > 1.0 || resolution == 0 {
        return Err(Error::InvalidParameter(format!(
            "need lo < hi <= 1 and resolution > 0, got [{lo}, {hi}] x {resolution}"
        )));
    }
    let h = (hi - lo) / resolution as f64;
    let alphas: Vec<f64> = (0..resolution)
        .map(|i| lo + (i as f64 + 0.5) * h)
        .filter(|&x| x != 0.0 && x < 1.0)
        .collect();
    let mut cells = Vec::with_capacity(alphas.len() * alphas.len());
    for &a1 in &alphas {
        let p1 = Preferences::vnm(a1)?;
        for &a2 in &alphas {
            let p2 = Preferences::vnm(a2)?;
            let sol = solve_stylized(a, b, &p1, &p2);
            let benefit_pct = stylized_benefit(&sol, &p1).ok();
            cells.push(Figure1Cell { alpha1: a1, alpha2: a2, status: sol.status, benefit_pct });
        }
    }
    Ok(Figure1Grid { a, b, alphas, cells })
}

impl Figure1Grid {
    pub fn cell(&self, i1: usize, i2: usize) -> &Figure1Cell {
        &self.cells[i1 * self.alphas.len() + i2]
    }

    /// CSV body with columns `alpha1,alpha2,status,benefit_pct`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha1,alpha2,status,benefit_pct\n");
        for c in &self.cells {
            let status = if c.benefit_pct.is_none() && c.status == StylizedStatus::WellPosed {
                "ill-posed-alone"
            } else {
                c.status.as_str()
            };
            let benefit = c.benefit_pct.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into());
            writeln!(s, "{:.4},{:.4},{},{}", c.alpha1, c.alpha2, status, benefit).unwrap();
        }
        s
    }

    /// Heatmap with α₁ on the horizontal axis and α₂ on the vertical axis.
    /// Benefits of 10% or less are drawn red, 50% or more blue, ill-posed
    /// cells black.
    pub fn to_svg(&self) -> String {
        let n = self.alphas.len();
        let cells: Vec<report::HeatCell> = self
            .cells
            .iter()
            .enumerate()
            .map(|(k, c)| report::HeatCell {
                ix: k / n,
                iy: k % n,
                color: figure1_color(c.benefit_pct),
            })
            .collect();
        let lo = self.alphas.first().copied().unwrap_or(0.0);
        let hi = self.alphas.last().copied().unwrap_or(0.0);
        report::heatmap_svg(
            &cells,
            n,
            n,
            (lo, hi),
            (lo, hi),
            &format!("Insurance benefit, a = {}, b = {}", self.a, self.b),
            "α₁",
            "α₂",
        )
    }
}

fn figure1_color(benefit: Option<f64>) -> (u8, u8, u8) {
    match benefit {
        None => (0, 0, 0),
        Some(v) => {
            let s = ((v - 10.0) / 40.0).clamp(0.0, 1.0);
            let lerp = |x: f64, y: f64| (x + (y - x) * s).round() as u8;
            (lerp(215.0, 40.0), lerp(48.0, 90.0), lerp(39.0, 200.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ez(a: f64, r: f64) -> Preferences {
        Preferences::new(a, r, 0.0).unwrap()
    }

    /// The published closed form of the finite-fund coefficient, transcribed
    /// literally.
    fn a_literal(a: f64, b: f64, p1: &Preferences, p2: &Preferences) -> f64 {
        let (a1, r1, a2, r2) = (p1.alpha, p1.rho, p2.alpha, p2.rho);
        let inner = a2 * a2 * r1 * r1 * (r2 - 1.0).powi(2)
            - 2.0 * a1 * a2 * (r1 - 1.0) * r1 * r2 * (r2 - 1.0)
            + (r1 - 1.0) * r2 * r2 * (a1 * (2.0 * r1 - 1.0) - r1);
        (a * (r1 - 1.0) + (a1 - 1.0) * r1 / a1 - b * b * inner / (2.0 * (a1 - 1.0) * r1 * r2 * r2))
            / (r1 - 1.0)
    }

    /// Residual of the finite-fund PDE in g for the power-law ansatz, relative
    /// to the size of the zeroth-order term.
    fn finite_residual(a: f64, b: f64, p1: &Preferences, sol: &StylizedSolution, lam: f64) -> f64 {
        let (a1, r1) = (p1.alpha, p1.rho);
        let g1 = (sol.a_coef * lam).powf(sol.xi1) / a1;
        let g1l = sol.xi1 * g1 / lam;
        let g1ll = sol.xi1 * (sol.xi1 - 1.0) * g1 / (lam * lam);
        let g2 = (sol.k2 * lam).powf(sol.xi2) / p1.alpha; // any scale
        let g2l = sol.xi2 * g2 / lam;
        let drift = a * lam * lam;
        let vol2 = b * b * lam.powi(3);
        let cons = (a1 * g1).powf(r1 / (a1 * (r1 - 1.0)));
        let res = (a1 - 1.0) * (2.0 * drift * g1l + vol2 * g1ll)
            + 2.0 * a1 * vol2 * g2l / g2 * g1l
            - a1 * vol2 / g1 * g1l * g1l
            + g1 * (2.0 * (a1 - 1.0) * (a1 * (r1 * lam + (1.0 - r1) * cons) - lam * r1) / r1
                - a1 * vol2 * (g2l / g2).powi(2));
        res / (g1 * lam).abs()
    }

    fn infinite_residual(a: f64, b: f64, p2: &Preferences, sol: &StylizedSolution, lam: f64) -> f64 {
        let (a2, r2) = (p2.alpha, p2.rho);
        let g = (sol.k2 * lam).powf(sol.xi2) / a2;
        let gl = sol.xi2 * g / lam;
        let gll = sol.xi2 * (sol.xi2 - 1.0) * g / (lam * lam);
        let res = a2 * g
            * ((a2 * g).powf(r2 / ((r2 - 1.0) * a2)) * (1.0 / r2 - 1.0) + lam * (1.0 - 1.0 / a2))
            + a * lam * lam * gl
            + 0.5 * b * b * lam.powi(3) * gll;
        res / (g * lam).abs()
    }

    const PAIRS: [(f64, f64, f64, f64); 6] = [
        (-1.0, -1.0, -1.0, -1.0),
        (-3.0, -1.0, -1.0, -1.0),
        (-2.0, -2.0, -1.0, -1.0),
        (-4.0, -1.0, -2.0, -1.0),
        (0.25, 1.0 / 3.0, 0.15, 1.0 / 3.0),
        (-0.5, -0.5, -3.0, -3.0),
    ];

    #[test]
    fn coefficient_matches_literal_form() {
        for &(a1, r1, a2, r2) in &PAIRS {
            let (p1, p2) = (ez(a1, r1), ez(a2, r2));
            for &(a, b) in &[(4.0, 1.0), (2.5, 0.3), (0.0, 1.7)] {
                assert_relative_eq!(
                    finite_fund_coefficient(a, b, &p1, &p2),
                    a_literal(a, b, &p1, &p2),
                    max_relative = 1e-12,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn ansatz_satisfies_both_pdes() {
        let mut state = 12345u64;
        let mut uniform = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for &(a1, r1, a2, r2) in &PAIRS {
            let (p1, p2) = (ez(a1, r1), ez(a2, r2));
            let sol = solve_stylized(4.0, 1.0, &p1, &p2);
            assert_eq!(sol.status, StylizedStatus::WellPosed);
            for _ in 0..100 {
                let lam = 0.01 * 1000f64.powf(uniform());
                assert!(finite_residual(4.0, 1.0, &p1, &sol, lam).abs() < 1e-9);
                assert!(infinite_residual(4.0, 1.0, &p2, &sol, lam).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equal_preferences_give_no_trade() {
        let p = ez(-3.0, -1.0);
        let sol = solve_stylized(4.0, 1.0, &p, &p);
        assert_relative_eq!(sol.a_coef, sol.k2, max_relative = 1e-14);
        assert_relative_eq!(stylized_benefit(&sol, &p).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(stylized_insurance_rate(1.0, 0.3, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn price_examples() {
        let p = Preferences::vnm(-1.0).unwrap();
        let sol = solve_stylized(4.0, 1.0, &p, &p);
        assert_relative_eq!(stylized_price(&sol, 4.0, 1.0, 0.3).unwrap(), 2.0 * 0.09, max_relative = 1e-14);
        let sol0 = solve_stylized(4.0, 0.0, &p, &p);
        assert_relative_eq!(stylized_price(&sol0, 4.0, 0.0, 0.3).unwrap(), 4.0 * 0.09, max_relative = 1e-14);
        let p1 = stylized_price(&sol, 4.0, 1.0, 0.2).unwrap();
        let p2 = stylized_price(&sol, 4.0, 1.0, 0.4).unwrap();
        assert_relative_eq!(p2, 4.0 * p1, max_relative = 1e-14);
    }

    #[test]
    fn price_requires_infinite_side() {
        let p1 = Preferences::vnm(-1.0).unwrap();
        let p2 = Preferences::vnm(-9.0).unwrap();
        let sol = solve_stylized(4.0, 1.0, &p1, &p2);
        assert_eq!(sol.status, StylizedStatus::IllPosedInfinite);
        assert!(stylized_price(&sol, 4.0, 1.0, 0.1).is_err());
        assert!(stylized_benefit(&sol, &p1).is_err());
    }

    #[test]
    fn insurance_rate_examples() {
        let q = stylized_insurance_rate(1.0, 1.0, &Preferences::vnm(-0.5).unwrap(), &Preferences::vnm(-1.0).unwrap())
            .unwrap();
        assert_relative_eq!(q, 1.0 / 3.0, max_relative = 1e-14);
        assert!(stylized_insurance_rate(1.0, 0.0, &ez(-1.0, -1.0), &ez(-2.0, -1.0)).is_err());
        let (p1, p2) = (ez(-3.0, -1.0), ez(-1.0, -1.0));
        let qs: Vec<f64> = [0.01, 0.1, 1.0, 5.0]
            .iter()
            .map(|&l| stylized_insurance_rate(1.0, l, &p1, &p2).unwrap())
            .collect();
        assert!(qs.iter().all(|q| *q < 0.0));
        // buying fund: q decreasing in λ
        let (b1, b2) = (ez(-1.0, -1.0), ez(-3.0, -1.0));
        let qb: Vec<f64> = [0.01, 0.1, 1.0, 5.0]
            .iter()
            .map(|&l| stylized_insurance_rate(1.0, l, &b1, &b2).unwrap())
            .collect();
        assert!(qb.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn benefit_matches_wealth_root() {
        // find k with (1+k)^{α} g_NI = g_I by bisection on the value functions
        let lam: f64 = 0.05;
        for &(a1, r1, a2, r2) in &PAIRS[1..] {
            let (p1, p2) = (ez(a1, r1), ez(a2, r2));
            let sol = solve_stylized(4.0, 1.0, &p1, &p2);
            let g_i = (sol.a_coef * lam).powf(sol.xi1) / a1;
            let g_ni = (sol.k1_alone * lam).powf(sol.xi1) / a1;
            let gap = |k: f64| (1.0 + k).powf(a1) * g_ni - g_i;
            let (mut lo, mut hi) = (-0.5, 100.0);
            let s_lo = gap(lo).signum();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid).signum() == s_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 100.0 * 0.5 * (lo + hi);
            assert_relative_eq!(stylized_benefit(&sol, &p1).unwrap(), root, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn sign_law() {
        let alphas = [-5.0, -3.0, -2.0, -1.0, -0.5];
        for &a1 in &alphas {
            for &a2 in &alphas {
                let q = stylized_insurance_rate(1.0, 0.1, &Preferences::vnm(a1).unwrap(), &Preferences::vnm(a2).unwrap())
                    .unwrap();
                if a1 == a2 {
                    assert_eq!(q, 0.0);
                } else {
                    assert_eq!(q.signum(), (a1 - a2).signum());
                }
            }
        }
        // with a common positive ρ the direction flips
        let q = stylized_insurance_rate(1.0, 0.1, &ez(-1.0, 0.5), &ez(-3.0, 0.5)).unwrap();
        assert!(q < 0.0);
    }

    #[test]
    fn figure1_grid_structure() {
        let grid = figure1_grid(4.0, 1.0, -10.0, 1.0, 110).unwrap();
        let n = grid.alphas.len();
        assert_eq!(n, 110);
        assert!(grid.alphas.iter().all(|&a| a != 0.0 && a < 1.0));
        // black region exists
        assert!(grid.cells.iter().any(|c| c.benefit_pct.is_none()));
        // diagonal: zero benefit wherever defined
        for i in 0..n {
            if let Some(v) = grid.cell(i, i).benefit_pct {
                assert!(v.abs() < 1e-9);
            }
        }
        // not symmetric off the diagonal
        let asym = (0..n).any(|i| {
            (0..n).any(|j| {
                let (x, y) = (grid.cell(i, j).benefit_pct, grid.cell(j, i).benefit_pct);
                matches!((x, y), (Some(x), Some(y)) if (x - y).abs() > 1e-6)
            })
        });
        assert!(asym);
        let csv = grid.to_csv();
        assert!(csv.starts_with("alpha1,alpha2,status,benefit_pct\n"));
        assert_eq!(csv.lines().count(), n * n + 1);
    }

    #[test]
    fn figure1_colors() {
        assert_eq!(figure1_color(None), (0, 0, 0));
        assert_eq!(figure1_color(Some(0.0)), figure1_color(Some(10.0)));
        assert_eq!(figure1_color(Some(50.0)), figure1_color(Some(400.0)));
        assert_ne!(figure1_color(Some(5.0)), figure1_color(Some(60.0)));
    }

    proptest! {
        #[test]
        fn benefit_non_negative(
            a1 in -10.0f64..-0.1, r1 in -4.0f64..-0.1,
            a2 in -10.0f64..-0.1, r2 in -4.0f64..-0.1,
            a in 0.0f64..6.0, b in 0.0f64..2.0,
        ) {
            let (p1, p2) = (ez(a1, r1), ez(a2, r2));
            let sol = solve_stylized(a, b, &p1, &p2);
            if let Ok(v) = stylized_benefit(&sol, &p1) {
                prop_assert!(v >= -1e-9, "benefit {v}");
            }
        }

        #[test]
        fn benefit_non_negative_positive_exponents(
            a1 in 0.05f64..0.95, r1 in 0.05f64..0.95,
            a2 in 0.05f64..0.95, r2 in 0.05f64..0.95,
        ) {
            let (p1, p2) = (ez(a1, r1), ez(a2, r2));
            let sol = solve_stylized(4.0, 1.0, &p1, &p2);
            if let Ok(v) = stylized_benefit(&sol, &p1) {
                prop_assert!(v >= -1e-9, "benefit {v}");
            }
        }
    }
}
