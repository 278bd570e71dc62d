use super::*;
use crate::mortality::{cbd_model, stylized_model, CbdParams, StylizedParams};

/// Consume a fixed fraction of wealth, hold no risky asset, and buy a fixed
/// number of contracts at the actuarially fair rate.
struct Fixed {
    m: MortalityModel,
    c_frac: f64,
    /// Add the longevity credit `λw` to consumption.
    eat_credit: bool,
    q: f64,
}

impl ControlPolicy for Fixed {
    fn controls(&self, _step: usize, t: f64, lambda: f64, w: f64) -> ControlSet {
        let credit = if self.eat_credit { lambda * w } else { 0.0 };
        ControlSet { c: self.c_frac * w + credit, pi_a: 0.0, q_c: self.q, p: self.m.drift(lambda, t) }
    }
}

fn constant_lambda() -> MortalityModel {
    stylized_model(StylizedParams::new(0.0, 0.0).unwrap()).unwrap()
}

fn cbd() -> MortalityModel {
    cbd_model(CbdParams::cbd_2019()).unwrap()
}

fn small(n_paths: usize) -> SimConfig {
    SimConfig { n_paths, horizon: 20.0, ..SimConfig::default() }
}

#[test]
fn config_validation() {
    assert!(SimConfig::default().validate().is_ok());
    assert!(SimConfig { n_paths: 0, ..Default::default() }.validate().is_err());
    assert!(SimConfig { dt: 0.0, ..Default::default() }.validate().is_err());
    assert!(SimConfig { initial_lambda: 30.0, ..Default::default() }.validate().is_err());
    assert!(SimConfig { percentiles: vec![50.0, 5.0], ..Default::default() }.validate().is_err());
    assert!(SimConfig { percentiles: vec![], ..Default::default() }.validate().is_err());
    assert_eq!(SimConfig::default().n_steps(), 660);
}

#[test]
fn riskless_wealth_follows_the_euler_product() {
    let m = constant_lambda();
    let mkt = MarketParams::default();
    let policy = Fixed { m: m.clone(), c_frac: 0.06, eat_credit: false, q: 0.0 };
    let cfg = SimConfig { n_paths: 7, ..small(7) };
    let e = simulate_with_policy(&m, &mkt, &policy, &cfg).unwrap();
    let growth = 1.0 + (cfg.initial_lambda + mkt.r - 0.06) * cfg.dt;
    for (k, row) in e.wealth.iter().enumerate() {
        let expect = cfg.initial_pot * growth.powi((k * cfg.record_every) as i32);
        for w in row {
            assert!((w / expect - 1.0).abs() < 1e-12, "record {k}: {w} vs {expect}");
        }
    }
    assert_eq!(e.times.len(), 21);
    assert_eq!(e.ages[20], 85.0);
}

#[test]
fn riskless_wealth_converges_at_first_order() {
    let m = constant_lambda();
    let mkt = MarketParams::default();
    let policy = Fixed { m: m.clone(), c_frac: 0.06, eat_credit: false, q: 0.0 };
    let exact = 126_636.0 * ((0.01 + mkt.r - 0.06) * 20.0f64).exp();
    let err = |dt: f64| {
        let cfg = SimConfig { dt, record_every: (1.0 / dt).round() as usize, ..small(1) };
        let e = simulate_with_policy(&m, &mkt, &policy, &cfg).unwrap();
        (e.wealth.last().unwrap()[0] - exact).abs()
    };
    let ratio = err(1.0 / 12.0) / err(1.0 / 24.0);
    assert!((ratio - 2.0).abs() < 0.05, "error ratio {ratio}");
}

#[test]
fn wealth_change_is_the_insurance_pnl_when_nothing_else_moves() {
    let m = cbd();
    let mkt = MarketParams { r: 0.0, ..Default::default() };
    let policy = Fixed { m: m.clone(), c_frac: 0.0, eat_credit: true, q: 5e5 };
    let cfg = SimConfig { percentiles: vec![5.0, 50.0, 95.0], ..small(2000) };
    let e = simulate_with_policy(&m, &mkt, &policy, &cfg).unwrap();
    assert_eq!(e.ruined, 0);
    for (w, pnl) in e.wealth.iter().zip(&e.pnl) {
        for (wi, pi) in w.iter().zip(pnl) {
            assert!((wi - cfg.initial_pot - pi).abs() < 1e-6 * cfg.initial_pot, "{wi} vs {pi}");
        }
    }
    // with r = 0 discounting changes nothing
    assert_eq!(e.pnl, e.pnl_discounted);
    // the fair premium leaves the median P&L small against the spread
    let last = e.pnl.last().unwrap();
    assert!(last[1].abs() < 0.25 * (last[2] - last[0]));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let m = cbd();
    let mkt = MarketParams::default();
    let policy = Fixed { m: m.clone(), c_frac: 0.05, eat_credit: false, q: 1e4 };
    let cfg = small(3001);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_with_policy(&m, &mkt, &policy, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one.to_csv(), run(2).to_csv());
    let other_seed = {
        let cfg = SimConfig { seed: 7, ..cfg.clone() };
        simulate_with_policy(&m, &mkt, &policy, &cfg).unwrap()
    };
    assert_ne!(one.lambda, other_seed.lambda);
}

#[test]
fn percentiles_are_ordered() {
    let m = cbd();
    let mkt = MarketParams::default();
    let policy = Fixed { m: m.clone(), c_frac: 0.05, eat_credit: false, q: 1e4 };
    let e = simulate_with_policy(&m, &mkt, &policy, &small(500)).unwrap();
    for field in [&e.consumption, &e.pnl, &e.wealth, &e.lambda, &e.insurance_spend] {
        for row in field.iter() {
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
        }
    }
    let csv = e.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "age,percentile,consumption,insurance_spend,insurance_rate,pnl,pnl_discounted,wealth,lambda");
    assert_eq!(lines.len(), 1 + e.times.len() * 5);
}

#[test]
fn ruin_is_absorbing() {
    let m = constant_lambda();
    let mkt = MarketParams::default();
    let policy = Fixed { m: m.clone(), c_frac: 30.0, eat_credit: false, q: 0.0 };
    let e = simulate_with_policy(&m, &mkt, &policy, &small(10)).unwrap();
    assert_eq!(e.ruined, 10);
    let last = e.times.len() - 1;
    assert!(e.wealth[last].iter().all(|&w| w == 0.0));
    assert!(e.consumption[last].iter().all(|&c| c == 0.0));
}

struct Broken;

impl ControlPolicy for Broken {
    fn controls(&self, _: usize, _: f64, _: f64, _: f64) -> ControlSet {
        ControlSet { c: f64::NAN, pi_a: 0.0, q_c: 0.0, p: 0.0 }
    }
}

#[test]
fn non_finite_controls_abort_the_run() {
    let m = constant_lambda();
    let r = simulate_with_policy(&m, &MarketParams::default(), &Broken, &small(10));
    assert!(matches!(r, Err(Error::TooManyAborted { aborted: 10, total: 10 })));
}

fn synthetic(median: &[f64]) -> PathEnsemble {
    let rows = |f: &dyn Fn(f64) -> Vec<f64>| median.iter().map(|&v| f(v)).collect::<Vec<_>>();
    let fan = |v: f64| vec![0.5 * v, v, 1.5 * v];
    PathEnsemble {
        n_paths: 1,
        percentiles: vec![5.0, 50.0, 95.0],
        times: (0..median.len()).map(|k| k as f64).collect(),
        ages: (0..median.len()).map(|k| 65.0 + k as f64).collect(),
        consumption: rows(&fan),
        insurance_spend: rows(&fan),
        insurance_rate: rows(&fan),
        pnl: rows(&fan),
        pnl_discounted: rows(&fan),
        wealth: rows(&fan),
        lambda: rows(&fan),
        mean_consumption: median.to_vec(),
        total_consumption: vec![median.iter().sum()],
        ruined: 0,
        extinct: 0,
        aborted: 0,
    }
}

#[test]
fn shape_classification() {
    let neg = Preferences::new(-3.0, -3.0, 0.0).unwrap();
    let pos = Preferences::new(0.15, 0.15, 0.0).unwrap();

    let rising: Vec<f64> = (0..40).map(|k| 1.0 + 0.01 * (k as f64).powi(2)).collect();
    let r = consumption_shape_report(&synthetic(&rising), &neg);
    assert_eq!(r.shape, ConsumptionShape::LateRising);
    assert!(r.consistent);
    assert_eq!(r.peak_age, 65.0 + 39.0);

    let hump: Vec<f64> = (0..40).map(|k| (-((k as f64 - 12.0) / 6.0).powi(2)).exp()).collect();
    let h = consumption_shape_report(&synthetic(&hump), &pos);
    assert_eq!(h.shape, ConsumptionShape::HumpShaped);
    assert!(h.consistent);
    assert_eq!(h.peak_age, 77.0);
    assert!(h.final_over_peak < 0.01);
    assert!(!consumption_shape_report(&synthetic(&hump), &neg).consistent);

    let flat = consumption_shape_report(&synthetic(&[2.0; 30]), &neg);
    assert_eq!(flat.shape, ConsumptionShape::Indeterminate);
    assert!(!flat.consistent);
}
