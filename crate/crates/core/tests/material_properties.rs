use hygro::material::{
    approx_factor_b, evaporation_enthalpy, liquid_conduction, moisture_capacity, moisture_content,
    saturation_pressure, saturation_pressure_slope, thermal_conductivity, vapour_permeability,
    Coefficients, LocalState, MaterialError, MaterialParams,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = MaterialParams> {
    (
        50.0..400.0f64,
        0.05..0.78f64,
        0.05..2.0f64,
        0.0..20.0f64,
        1.0..100.0f64,
        0.01..1.5f64,
        500.0..1500.0f64,
        500.0..2500.0f64,
    )
        .prop_map(|(w_f, ratio, lambda_0, b_tcs, mu, a, c_s, rho_s)| MaterialParams {
            w_f,
            w_80: ratio * w_f,
            lambda_0,
            b_tcs,
            mu,
            a,
            c_s,
            rho_s,
        })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn coefficients_finite_and_positive(p in params(), theta in -20.0..50.0f64, u in 0.0..1.0f64) {
        let b = approx_factor_b(&p).unwrap();
        let phi = u * 0.99f64.min(b - 1e-6);
        let s = LocalState::new(theta, phi);
        let c = Coefficients::evaluate(&p, s).unwrap();
        for v in [
            c.conductivity,
            c.vapour_permeability,
            c.saturation_pressure,
            c.liquid_conduction,
            c.heat_capacity,
            c.moisture_capacity,
            c.evaporation_enthalpy,
            c.saturation_pressure_slope,
        ] {
            prop_assert!(v.is_finite() && v > 0.0, "{c:?}");
        }
    }

    #[test]
    fn bundle_matches_individual_laws(p in params(), theta in -20.0..50.0f64, phi in 0.0..0.95f64) {
        let s = LocalState::new(theta, phi);
        let c = Coefficients::evaluate(&p, s).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-13 * b.abs();
        prop_assert!(close(c.conductivity, thermal_conductivity(&p, s).unwrap()));
        prop_assert!(close(c.liquid_conduction, liquid_conduction(&p, s).unwrap()));
        prop_assert!(close(c.moisture_capacity, moisture_capacity(&p, s).unwrap()));
        prop_assert!(close(c.vapour_permeability, vapour_permeability(&p, s)));
        prop_assert!(close(c.saturation_pressure, saturation_pressure(s)));
    }

    #[test]
    fn isotherm_monotone_and_anchored(p in params()) {
        let b = approx_factor_b(&p).unwrap();
        let top = 0.99f64.min(b - 1e-6);
        let mut prev = moisture_content(&p, 0.0).unwrap();
        prop_assert_eq!(prev, 0.0);
        for k in 1..1000 {
            let w = moisture_content(&p, top * k as f64 / 999.0).unwrap();
            prop_assert!(w > prev);
            prev = w;
        }
        let w80 = moisture_content(&p, 0.8).unwrap();
        prop_assert!((w80 - p.w_80).abs() <= 1e-10 * p.w_80);
    }

    #[test]
    fn dry_conductivity_is_lambda_0(p in params(), theta in -20.0..50.0f64) {
        prop_assert_eq!(thermal_conductivity(&p, LocalState::new(theta, 0.0)).unwrap(), p.lambda_0);
    }

    #[test]
    fn capacity_is_derivative_of_isotherm(p in params(), phi in 0.05..0.9f64) {
        let h = 1e-6;
        let fd = (moisture_content(&p, phi + h).unwrap() - moisture_content(&p, phi - h).unwrap()) / (2.0 * h);
        let exact = moisture_capacity(&p, LocalState::new(20.0, phi)).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn pressure_slope_is_derivative(theta in -20.0..50.0f64) {
        let h = 1e-5;
        let fd = (saturation_pressure(LocalState::new(theta + h, 0.5))
            - saturation_pressure(LocalState::new(theta - h, 0.5)))
            / (2.0 * h);
        let exact = saturation_pressure_slope(LocalState::new(theta, 0.5));
        prop_assert!((fd - exact).abs() <= 1e-7 * exact);
    }
}

#[test]
fn saturation_pressure_monotone_on_grid() {
    let mut prev = 0.0;
    for k in 0..1000 {
        let p = saturation_pressure(LocalState::new(-30.0 + 90.0 * k as f64 / 999.0, 0.5));
        assert!(p > prev);
        prev = p;
    }
}

#[test]
fn closed_form_values() {
    let m = MaterialParams::MASONRY_MEAN;
    assert!((approx_factor_b(&m).unwrap() - 4.0 / 3.0).abs() < 1e-14);
    let other = MaterialParams { w_f: 150.0, ..m };
    assert!((approx_factor_b(&other).unwrap() - 2.0).abs() < 1e-14);

    let s = LocalState::new(20.0, 0.5);
    let lambda = 0.3 * (1.0 + 10.0 * 200.0 * (1.0 / 3.0) * 0.5 / (1650.0 * (4.0 / 3.0 - 0.5)));
    assert!((thermal_conductivity(&m, s).unwrap() - lambda).abs() < 1e-14);
    assert!((lambda - 0.37273).abs() < 1e-5);

    assert_eq!(evaporation_enthalpy(LocalState::new(0.0, 0.5)), 2.5008e6);
    assert_eq!(saturation_pressure(LocalState::new(0.0, 0.5)), 611.0);
    let dp = vapour_permeability(&MaterialParams { mu: 1.0, ..m }, LocalState::new(0.0, 0.5));
    assert!((dp - 1.9446e-12 * 273.15f64.powf(0.81)).abs() < 1e-25);

    let b: f64 = 4.0 / 3.0;
    let dry = 3.8 * 0.36 / 200.0 * b * (b - 1.0) / (b * b);
    assert!((liquid_conduction(&m, LocalState::new(20.0, 0.0)).unwrap() - dry).abs() < 1e-16);
    assert_eq!(liquid_conduction(&MaterialParams { a: 0.0, ..m }, s).unwrap(), 0.0);
    assert!((moisture_capacity(&m, LocalState::new(20.0, 0.0)).unwrap() - 200.0 * (b - 1.0) / b).abs() < 1e-12);
}

#[test]
fn degenerate_and_singular_inputs() {
    let m = MaterialParams::MASONRY_MEAN;
    let flat = MaterialParams { w_80: 160.0, ..m };
    assert!(matches!(approx_factor_b(&flat), Err(MaterialError::Degenerate(_))));
    let s = LocalState::new(20.0, 4.0 / 3.0);
    assert!(matches!(thermal_conductivity(&m, s), Err(MaterialError::Singularity { .. })));
    assert!(matches!(liquid_conduction(&m, s), Err(MaterialError::Singularity { .. })));
    let unit = MaterialParams { w_f: 1.0, w_80: 0.5, ..m };
    assert!(liquid_conduction(&unit, LocalState::new(20.0, 0.5)).is_err());
}
