use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use proptest::prelude::*;

use condsqz_core::model::*;
use condsqz_core::spectrum::{hz_to_rad, SHOT_NOISE};
use condsqz_core::{DetectionConfig, EprParams, SpinParams};

fn spin_strategy() -> impl Strategy<Value = SpinParams> {
    (
        prop_oneof![Just(1.0), Just(-1.0)],
        5e3..60e3f64,
        1e3..20e3f64,
        50.0..2e3f64,
        0.0..200e3f64,
        20e3..300e3f64,
        0.0..10.0f64,
        0.0..10.0f64,
    )
        .prop_map(|(sign, w, g, d, gbb, dbb, nth, nbb)| {
            let mut s = SpinParams::from_hz(sign * w, g, d, gbb, dbb, nth);
            s.n_bb = nbb;
            s
        })
}

fn epr_strategy() -> impl Strategy<Value = EprParams> {
    (0.0..2.0f64, 0.3..=1.0f64, 0.3..=1.0f64, 0.3..=1.0f64).prop_map(|(r, a, b, c)| EprParams::new(r, a, b, c))
}

fn setup() -> impl Strategy<Value = (Model, f64, f64)> {
    (spin_strategy(), epr_strategy(), 0.0..180.0f64, -40.0..40.0f64, 100.0..100e3f64).prop_filter_map(
        "virtual rigidity outside its domain",
        |(spin, epr, th, dt, f)| {
            let m = Model::new(spin, epr, DetectionConfig::from_degrees(th, dt)).ok()?;
            Some((m, th.to_radians(), hz_to_rad(f)))
        },
    )
}

fn residual(m: &Model, t: &BinTerms, theta: f64, h: Complex64) -> f64 {
    let c = m.cross(t, theta);
    m.signal() + h.norm_sqr() * m.idler(t) + 2.0 * (h.conj() * c).re
}

proptest! {
    #[test]
    fn wiener_gain_minimizes_residual((m, theta, w) in setup(), dre in -1.0..1.0f64, dim in -1.0..1.0f64) {
        let t = m.terms(w).unwrap();
        let g = m.wiener_gain(&t, theta).unwrap();
        let best = residual(&m, &t, theta, g);
        let delta = Complex64::new(dre, dim);
        let other = residual(&m, &t, theta, g + delta);
        let expected = best + delta.norm_sqr() * m.idler(&t);
        prop_assert!((other - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        prop_assert!((best / SHOT_NOISE - m.conditional(&t, theta)).abs() <= 1e-9 * m.signal() / SHOT_NOISE);
    }

    #[test]
    fn conditional_between_floor_and_signal((m, theta, w) in setup()) {
        let t = m.terms(w).unwrap();
        let e = m.epr;
        let s = m.conditional(&t, theta);
        let floor = 1.0 - e.eta_s + e.eta_s / m.cosh2r();
        let ceiling = m.signal() / SHOT_NOISE;
        prop_assert!(s >= floor * (1.0 - 1e-12), "{s} < {floor}");
        prop_assert!(s <= ceiling * (1.0 + 1e-12), "{s} > {ceiling}");
        prop_assert!(m.conditional_optimal(&t) <= s * (1.0 + 1e-12));
    }

    #[test]
    fn mass_sign_mirrors_angles((m, theta, w) in setup()) {
        let d = m.det;
        let mut spin = m.spin;
        spin.larmor = -spin.larmor;
        let mirror = Model::new(spin, m.epr, DetectionConfig::new(std::f64::consts::PI - theta, -d.delta_theta_i())).unwrap();
        let (t, tm) = (m.terms(w).unwrap(), mirror.terms(w).unwrap());
        let a = m.conditional(&t, theta);
        let b = mirror.conditional(&tm, std::f64::consts::PI - theta);
        prop_assert!((a - b).abs() <= 1e-10 * a);
        prop_assert!((m.idler(&t) - mirror.idler(&tm)).abs() <= 1e-10 * m.idler(&t));
    }

    #[test]
    fn entanglement_level_matches_covariance_oracle(epr in epr_strategy()) {
        // quadrature order (x_s, p_s, x_i, p_i), vacuum variance 1/2
        let (c, s) = ((2.0 * epr.r).cosh() / 2.0, (2.0 * epr.r).sinh() / 2.0);
        let v = Matrix4::new(
            c, 0.0, s, 0.0,
            0.0, c, 0.0, -s,
            s, 0.0, c, 0.0,
            0.0, -s, 0.0, c,
        );
        let (es, ei) = (epr.eta_s, epr.eta_i());
        let l = Matrix4::from_diagonal(&Vector4::new(es.sqrt(), es.sqrt(), ei.sqrt(), ei.sqrt()));
        let noise = Matrix4::from_diagonal(&Vector4::new(1.0 - es, 1.0 - es, 1.0 - ei, 1.0 - ei)) * 0.5;
        let lossy = l * v * l + noise;
        let u = Vector4::new(1.0, 0.0, -1.0, 0.0);
        let q = Vector4::new(0.0, 1.0, 0.0, 1.0);
        let total = (u.transpose() * lossy * u)[0] + (q.transpose() * lossy * q)[0];
        let level = duan_simon_level(&epr).unwrap();
        prop_assert!((level - total / 2.0).abs() <= 1e-12 * level.max(1.0));
    }
}
