use muskat::diagnostics::{physical_energy, physical_energy_excess, slobodeckij_seminorm_sq};
use muskat::dynamics::{evaluate, Reference};
use muskat::io::format::fmt_f64;
use muskat::remainder::{d2z1_r, d2z2_r, d2z2dz1_r, d3z2_r, dz1_r, dz1dz2_r, dz2_r, r, ratios};
use muskat::{GridFn1D, PhysParams, VesselGeometry};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn reference() -> &'static Reference {
    static R: OnceLock<Reference> = OnceLock::new();
    R.get_or_init(|| {
        let p = PhysParams::new(1.0, 1.0, 0.3, 4.0).unwrap();
        Reference::new(p, &VesselGeometry::flat(-1.0, 16).unwrap(), 16, 4).unwrap()
    })
}

fn surface(amps: &[f64]) -> Vec<f64> {
    GridFn1D::from_fn(16, |x| {
        amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * PI * (x + 1.0) / 2.0).cos()).sum()
    })
    .into_values()
}

fn close(exact: f64, approx: f64, tol: f64) -> bool {
    (exact - approx).abs() <= tol * exact.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn remainder_derivatives_match_differences(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let h = 1e-4;
        let d2 = |f: fn(f64, f64) -> f64| (f(a, b + h) - f(a, b - h)) / (2.0 * h);
        let d1 = |f: fn(f64, f64) -> f64| (f(a + h, b) - f(a - h, b)) / (2.0 * h);
        prop_assert!(close(dz2_r(a, b), d2(r), 1e-6));
        prop_assert!(close(d2z2_r(a, b), d2(dz2_r), 1e-6));
        prop_assert!(close(d3z2_r(a, b), d2(d2z2_r), 1e-6));
        prop_assert!(close(dz1_r(a, b), d1(r), 1e-6));
        prop_assert!(close(d2z1_r(a, b), d1(dz1_r), 1e-6));
        prop_assert!(close(dz1dz2_r(a, b), d1(dz2_r), 1e-6));
        prop_assert!(close(d2z2dz1_r(a, b), d1(d2z2_r), 1e-6));
    }

    #[test]
    fn remainder_quotients_are_finite(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        prop_assert!(ratios(a, b).iter().all(|v| v.is_finite()));
        prop_assert!(ratios(a, b * 1e-9).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn slobodeckij_ignores_constants(vals in prop::collection::vec(-1.0f64..1.0, 9..40), c in -3.0f64..3.0, theta in 0.05f64..0.95) {
        let h = 2.0 / (vals.len() - 1) as f64;
        let s = slobodeckij_seminorm_sq(&vals, h, theta);
        let shifted: Vec<f64> = vals.iter().map(|v| v + c).collect();
        prop_assert!(s >= 0.0);
        prop_assert!((slobodeckij_seminorm_sq(&shifted, h, theta) - s).abs() <= 1e-10 * s.max(1.0));
    }

    #[test]
    fn csv_numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn coefficients_are_unimodular(amps in prop::collection::vec(-0.03f64..0.03, 1..5)) {
        let r = reference();
        let c = r.coeffs(&surface(&amps)).unwrap();
        for (a, (s, d)) in c.a_q.iter().chain(&c.a_n).zip(c.sigma_q.iter().chain(&c.sigma_n).zip(c.detj_q.iter().chain(&c.detj_n))) {
            prop_assert!((a[0] * a[2] - a[1] * a[1] - 1.0).abs() <= 1e-13);
            let sts = [s[0] * s[0] + s[2] * s[2], s[0] * s[1] + s[2] * s[3], s[1] * s[1] + s[3] * s[3]];
            for k in 0..3 {
                prop_assert!((a[k] - d * sts[k]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn evaluation_conserves_mass_and_dissipates(amps in prop::collection::vec(-0.03f64..0.03, 1..5)) {
        let r = reference();
        let eta = surface(&amps);
        let e = evaluate(r, &eta).unwrap();
        let flux: f64 = r.weights.iter().zip(&e.v).map(|(w, v)| w * v).sum();
        let scale = e.v.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        prop_assert!(flux.abs() <= 1e-12 * scale);
        let ones = e.dn.apply(&vec![1.0; 17]);
        prop_assert!(ones.iter().all(|v| v.abs() < 1e-10));
        let sym = e.dn.s.clone().symmetric_eigenvalues();
        prop_assert!(sym.iter().all(|l| *l > -1e-10 * sym.amax()));
    }

    #[test]
    fn energy_excess_matches_the_physical_energy(amps in prop::collection::vec(-0.03f64..0.03, 1..5)) {
        let r = reference();
        let eta = surface(&amps);
        let h = GridFn1D::new(r.h_s().values().iter().zip(&eta).map(|(a, b)| a + b).collect()).unwrap();
        let direct = physical_energy(&h, &r.params) - physical_energy(r.h_s(), &r.params);
        prop_assert!((physical_energy_excess(r, &eta) - direct).abs() <= 1e-12);
    }
}
