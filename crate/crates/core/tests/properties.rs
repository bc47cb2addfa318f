use std::f64::consts::{PI, TAU};

use ecoupler::geometry::{build_region_map, CouplerSpec, Polarity, RegionTag};
use ecoupler::materials::{russell_norsworthy, BhCurve, PmProps, Reluctivity, MU_0, NU_0};
use ecoupler::mesh::{generate_mesh, mesh_quality, refine_uniform, MeshDensity};
use ecoupler::Error;
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = CouplerSpec> {
    (1usize..5, 2.0f64..8.0, 0.3f64..2.0, 0.5f64..3.0, 10.0f64..30.0, 5.0f64..15.0, 8.0f64..25.0).prop_map(
        |(pairs, h_m, g, l_cs, l_yp, l_ys, r_sh)| CouplerSpec {
            h_m: h_m * 1e-3,
            g: g * 1e-3,
            l_cs: l_cs * 1e-3,
            l_yp: l_yp * 1e-3,
            l_ys: l_ys * 1e-3,
            r_sh: r_sh * 1e-3,
            n_pm: 2 * pairs,
            ..CouplerSpec::table_i()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sectors_tile_every_annulus(spec in spec_strategy()) {
        prop_assume!(spec.validate().is_ok());
        let map = build_region_map(&spec).unwrap();
        for ann in &map.annuli {
            let total: f64 = ann.sectors.iter().map(|s| s.width).sum();
            prop_assert!((total - TAU).abs() < 1e-12);
            for w in ann.sectors.windows(2) {
                prop_assert!((w[0].end() - w[1].start).abs() < 1e-12);
                prop_assert!(w[0].width > 0.0);
            }
        }
    }

    #[test]
    fn regions_repeat_every_pole_pair(spec in spec_strategy(), rho in 0.0f64..1.0, theta in 0.0f64..TAU) {
        prop_assume!(spec.validate().is_ok());
        let map = build_region_map(&spec).unwrap();
        let r = rho * spec.r_outer();
        let here = map.region_at(r, theta).unwrap();
        let pitch = spec.pole_pitch();
        let next_pair = map.region_at(r, theta + 2.0 * pitch).unwrap();
        let next_pole = map.region_at(r, theta + pitch).unwrap();
        prop_assert_eq!(here.code(), next_pair.code());
        prop_assert_eq!(here.code(), next_pole.code());
        if let (RegionTag::Pm { polarity: a, .. }, RegionTag::Pm { polarity: b, .. }, RegionTag::Pm { polarity: c, .. }) =
            (here, next_pair, next_pole)
        {
            prop_assert_eq!(a, b);
            prop_assert_ne!(a, c);
        }
    }

    #[test]
    fn points_outside_the_rotor_are_rejected(spec in spec_strategy(), excess in 1e-6f64..1.0) {
        prop_assume!(spec.validate().is_ok());
        let map = build_region_map(&spec).unwrap();
        let err = map.region_at(spec.r_outer() * (1.0 + excess), 0.3).unwrap_err();
        prop_assert!(matches!(err, Error::OutOfDomain { .. }), "{err}");
    }

    #[test]
    fn reluctivity_derivative_matches_finite_differences(b in 0.02f64..2.6) {
        let iron = Reluctivity::Nonlinear(std::sync::Arc::new(BhCurve::default_lamination()));
        let b2 = b * b;
        let step = 1e-6 * b2;
        let (nu, dnu) = iron.evaluate(b2);
        let fd = (iron.evaluate(b2 + step).0 - iron.evaluate(b2 - step).0) / (2.0 * step);
        prop_assert!(nu > 0.0 && nu <= NU_0);
        prop_assert!((dnu - fd).abs() <= 1e-4 * fd.abs().max(1e-3 * nu / b2), "b {b}: {dnu} vs {fd}");
    }

    #[test]
    fn magnetization_curve_is_monotone_and_invertible(b1 in 0.0f64..3.0, b2 in 0.0f64..3.0) {
        let curve = BhCurve::default_lamination();
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(curve.h_of_b(lo) < curve.h_of_b(hi));
        let h = curve.h_of_b(hi);
        prop_assert!((curve.b_of_h(h) - hi).abs() <= 1e-9 * hi.max(1e-3));
        prop_assert_eq!(curve.b_of_h(-h), -curve.b_of_h(h));
    }

    #[test]
    fn end_factor_grows_with_overhang_and_length(
        l_ax in 5e-3f64..0.2, tau_p in 5e-3f64..0.1, h_ov in 0.0f64..0.05, d in 1e-4f64..0.01,
    ) {
        let k = russell_norsworthy(l_ax, tau_p, h_ov);
        prop_assert!(k > 0.0 && k < 1.0);
        prop_assert!(russell_norsworthy(l_ax, tau_p, h_ov + d) >= k);
        prop_assert!(russell_norsworthy(l_ax + d, tau_p, h_ov) > k);
    }

    #[test]
    fn remanence_follows_the_recoil_line(h_c in 1e5f64..2e6, mu_r in 1.0f64..1.3) {
        let pm = PmProps::new(h_c, mu_r).unwrap();
        prop_assert!((pm.b_r - MU_0 * mu_r * h_c).abs() <= 1e-14 * pm.b_r);
    }
}

#[test]
fn reversed_polarity_order() {
    assert_eq!(Polarity::of_magnet(0).sign(), -Polarity::of_magnet(1).sign());
}

#[test]
fn mesh_covers_the_disk_and_refines_region_by_region() {
    let spec = CouplerSpec::table_i();
    let map = build_region_map(&spec).unwrap();
    let density = MeshDensity { n_theta: 48, shaft: 2, inner_yoke: 3, air_gap: 3, cs: 1, outer_yoke: 2, ..MeshDensity::default() };
    let mesh = generate_mesh(&map, density).unwrap();
    let q = mesh_quality(&mesh);
    let disk = PI * spec.r_outer().powi(2);
    let r = spec.r_outer();
    let mut rim: Vec<f64> = mesh
        .nodes
        .iter()
        .filter(|p| (p[0].hypot(p[1]) - r).abs() < 1e-12 * r)
        .map(|p| p[1].atan2(p[0]))
        .collect();
    rim.sort_by(f64::total_cmp);
    assert_eq!(rim.len(), density.n_theta);
    let polygon: f64 = (0..rim.len())
        .map(|i| {
            let next = if i + 1 == rim.len() { rim[0] + TAU } else { rim[i + 1] };
            0.5 * r * r * (next - rim[i]).sin()
        })
        .sum();
    assert!((q.total_area - polygon).abs() <= 1e-12 * disk);

    let fine = refine_uniform(&mesh);
    let qf = mesh_quality(&fine);
    for (name, count) in &q.region_counts {
        assert_eq!(qf.region_counts[name], 4 * count, "{name}");
    }
    assert!(qf.total_area > q.total_area && qf.total_area < disk);
    assert!(qf.inverted.is_empty() && qf.degenerate.is_empty());
}
