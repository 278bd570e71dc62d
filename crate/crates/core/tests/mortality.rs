use longevity::mortality::*;
use proptest::prelude::*;

#[test]
fn rate_sde_is_the_ito_image_of_the_factor_sde() {
    let base = CbdParams::cbd_2019();
    let p = CbdParams::from_factor_model(base.mu1, base.mu2, base.c11, base.c12, base.c22, base.x0, base.a2_0)
        .unwrap();
    let m = cbd_model(p).unwrap();
    let sde = FactorSde::from_factors(&p);
    for &lam in &[1e-3, 0.01, 0.05, 0.2, 1.0, 5.0, 20.0] {
        for &t in &[0.0, 10.0, 35.0, 80.0] {
            let x = factor_from_rate(lam).unwrap();
            let (d, v) = ito_rate_coefficients(&sde, x, t);
            let (dm, vm) = m.coefficients(lam, t).unwrap();
            assert!((dm - d).abs() <= 1e-8 * d.abs().max(1e-12), "drift at λ={lam}, t={t}: {dm} vs {d}");
            assert!((vm - v).abs() <= 1e-8 * v.abs(), "vol at λ={lam}, t={t}: {vm} vs {v}");
        }
    }
}

#[test]
fn published_table_is_close_to_its_factor_model() {
    // B₅ is published rounded and with a different A₂ origin, so only the
    // shape of the drift is compared
    let p = CbdParams::cbd_2019();
    let fitted = FactorSde::implied_by_coefficients(&p);
    let direct = FactorSde::from_factors(&p);
    for (a, b) in [(fitted.m1, direct.m1), (fitted.v0, direct.v0), (fitted.v1, direct.v1), (fitted.v2, direct.v2)] {
        assert!((a - b).abs() <= 0.01 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn preset_lookup() {
    assert_eq!(CbdParams::preset("cbd-2019").unwrap(), CbdParams::cbd_2019());
    assert!(CbdParams::preset("cbd-1999").is_err());
}

#[test]
fn stylized_paths_stay_positive() {
    let m = stylized_model(StylizedParams::new(4.0, 1.0).unwrap()).unwrap();
    let dt = 1.0 / 12.0;
    for z in [-8.0, -3.0, 0.0, 3.0, 8.0] {
        let mut lam = 0.01;
        for k in 0..600 {
            lam = m.advance(lam, k as f64 * dt, dt, z);
            assert!(lam >= SIM_LAMBDA_MIN && lam <= SIM_LAMBDA_MAX);
        }
    }
}

proptest! {
    #[test]
    fn factor_round_trip(lam in 1e-6f64..25.0) {
        let x = factor_from_rate(lam).unwrap();
        let back = rate_from_factor(x);
        prop_assert!((back - lam).abs() <= 1e-12 * lam, "{} -> {} -> {}", lam, x, back);
    }

    #[test]
    fn rate_is_increasing_in_the_factor(x in -40.0f64..40.0, dx in 1e-6f64..1.0) {
        prop_assert!(rate_from_factor(x + dx) > rate_from_factor(x));
    }

    #[test]
    fn stylized_euler_step_keeps_rates_in_domain(
        lam in 1e-6f64..25.0,
        z in -10.0f64..10.0,
        a in 0.0f64..8.0,
        b in 0.0f64..3.0,
    ) {
        let m = stylized_model(StylizedParams::new(a, b).unwrap()).unwrap();
        let next = m.advance(lam, 0.0, 1.0 / 12.0, z);
        prop_assert!(next >= SIM_LAMBDA_MIN && next <= SIM_LAMBDA_MAX);
    }

    #[test]
    fn cbd_coefficients_are_positive(lam in 1e-4f64..20.0, t in 0.0f64..100.0) {
        let m = cbd_model(CbdParams::cbd_2019()).unwrap();
        let (d, v) = m.coefficients(lam, t).unwrap();
        prop_assert!(v > 0.0);
        prop_assert!(d.is_finite());
    }
}
