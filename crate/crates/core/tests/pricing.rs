use longevity::hjb::{solve_finite, solve_infinite, SolverConfig};
use longevity::mortality::{cbd_model, stylized_model, CbdParams, StylizedParams};
use longevity::pricing::{
    clearing_check, general_price_ansatz, insurance_demand, insurance_price, optimal_controls, price_field,
    FundPartials, MarketParams,
};
use longevity::stylized::{solve_stylized, stylized_price};
use longevity::Preferences;

fn short() -> SolverConfig {
    SolverConfig { t_final: 10.0, n_t: 1000, n_l: 201, store_every: 10, ..SolverConfig::default() }
}

#[test]
fn posted_prices_clear_the_infinite_fund() {
    let m = cbd_model(CbdParams::cbd_2019()).unwrap();
    let p2 = Preferences::vnm(-1.0).unwrap();
    let g2 = solve_infinite(&m, &MarketParams::default(), &p2, &short()).unwrap();
    let prices = price_field(&m, &g2);
    assert!(clearing_check(&p2, &m, &g2, &prices).unwrap() < 1e-12);

    // any other price makes the infinite fund want to trade
    let bumped = prices.mapv(|p| p * 1.01);
    assert!(clearing_check(&p2, &m, &g2, &bumped).unwrap() > 1e-6);
    let wrong_shape = prices.slice(ndarray::s![.., 1..]).to_owned();
    assert!(clearing_check(&p2, &m, &g2, &wrong_shape).is_err());
}

#[test]
fn demand_moves_against_the_price() {
    let m = cbd_model(CbdParams::cbd_2019()).unwrap();
    let p2 = Preferences::vnm(-1.0).unwrap();
    let g2 = solve_infinite(&m, &MarketParams::default(), &p2, &short()).unwrap();
    let fair = insurance_price(&m, &g2, 0.01, 0.0).unwrap().price;
    let at = |p: f64| insurance_demand(&p2, &m, &g2, 1.0, 0.01, 0.0, p).unwrap();
    assert!(at(fair).abs() < 1e-10);
    // α − 1 < 0: a dearer contract is sold, a cheaper one bought
    assert!(at(fair * 1.05) < 0.0);
    assert!(at(fair * 0.95) > 0.0);
}

#[test]
fn controls_scale_with_wealth() {
    let m = cbd_model(CbdParams::cbd_2019()).unwrap();
    let mkt = MarketParams::default();
    let p1 = Preferences::new(-3.0, -1.0, 0.0).unwrap();
    let p2 = Preferences::vnm(-1.0).unwrap();
    let g2 = solve_infinite(&m, &mkt, &p2, &short()).unwrap();
    let g1 = solve_finite(&m, &mkt, &p1, &g2, &short()).unwrap();
    let a = optimal_controls(&p1, &mkt, &m, &g1, &g2, 1.0, 0.02, 0.0).unwrap();
    let b = optimal_controls(&p1, &mkt, &m, &g1, &g2, 3.0, 0.02, 0.0).unwrap();
    assert!((b.c - 3.0 * a.c).abs() < 1e-12 * b.c.abs());
    assert!((b.q_c - 3.0 * a.q_c).abs() < 1e-12 * b.q_c.abs().max(1e-300));
    assert_eq!(a.pi_a, b.pi_a);
    assert_eq!(a.p, b.p);
    assert!((a.pi_a - mkt.merton_fraction(-3.0)).abs() < 1e-15);
    assert!(a.q_c < 0.0, "the more risk-averse fund sells");
    assert!(optimal_controls(&p1, &mkt, &m, &g1, &g2, 0.0, 0.02, 0.0).is_err());
}

#[test]
fn stylized_price_for_log_like_counterparty() {
    let p = Preferences::vnm(-1.0).unwrap();
    let sol = solve_stylized(4.0, 1.0, &p, &p);
    for x in [0.01, 0.3, 2.0] {
        assert!((stylized_price(&sol, 4.0, 1.0, x).unwrap() - 2.0 * x * x).abs() < 1e-14);
    }
    // the lattice price of the stylised model agrees with the closed form
    let m = stylized_model(StylizedParams::new(4.0, 1.0).unwrap()).unwrap();
    let cfg = SolverConfig { n_l: 201, n_t: 12_000, store_every: 1000, ..SolverConfig::stylized() };
    let g2 = solve_infinite(&m, &MarketParams::zero_rates(), &p, &cfg).unwrap();
    for x in [0.05, 0.5, 2.0] {
        let got = insurance_price(&m, &g2, x, 0.0).unwrap();
        assert!(!got.extrapolated);
        assert!((got.price / (2.0 * x * x) - 1.0).abs() < 1e-2, "λ={x}: {}", got.price);
    }
    let bad = Preferences::vnm(-10.0).unwrap();
    assert!(stylized_price(&solve_stylized(4.0, 1.0, &p, &bad), 4.0, 1.0, 0.1).is_err());
}

#[test]
fn general_ansatz_reduces_to_the_infinite_fund_price() {
    // With V² = w₂^α g₂/α and no cross terms, letting n₂/n₁ → ∞ must give
    // drift + vol² ∂_λ log g₂.
    let (alpha, w2, g2, g2_l) = (-1.0f64, 2.0f64, 0.7f64, -0.3f64);
    let f2 = FundPartials {
        v_w: w2.powf(alpha - 1.0) * g2,
        v_ww: (alpha - 1.0) * w2.powf(alpha - 2.0) * g2,
        v_w_other: 0.0,
        v_lambda_w: w2.powf(alpha - 1.0) * g2_l,
    };
    let f1 = FundPartials { v_w: 1.3, v_ww: -0.8, v_w_other: 0.0, v_lambda_w: 0.2 };
    let (drift, vol) = (0.05, 0.02);
    let p = general_price_ansatz(&f1, &f2, 1.0, 1e12, drift, vol).unwrap();
    let want = drift + vol * vol * g2_l / g2;
    assert!((p - want).abs() < 1e-9, "{p} vs {want}");
    assert!(general_price_ansatz(&f1, &f2, 0.0, 1.0, drift, vol).is_err());
}
