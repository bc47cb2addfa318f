use ecoupler::fem::SolverOptions;
use ecoupler::geometry::CouplerSpec;
use ecoupler::materials::{MaterialMap, MaterialSet};
use ecoupler::mec::{build_network, mec_torque_curve, BranchKind, MagneticNetwork, MecOptions, Permeance};
use proptest::prelude::*;

fn network(spec: &CouplerSpec) -> MagneticNetwork {
    let mats = MaterialMap::new(spec, MaterialSet::default()).unwrap();
    build_network(spec, &mats, MecOptions::default()).unwrap()
}

fn b_g0(spec: &CouplerSpec) -> f64 {
    let net = network(spec);
    let sol = net.solve(&SolverOptions::default()).unwrap();
    net.airgap_fundamental(&sol)
}

fn with_gap_scaled(net: &MagneticNetwork, s: f64) -> MagneticNetwork {
    let mut net = net.clone();
    for b in &mut net.branches {
        if b.kind == BranchKind::AirGap {
            if let Permeance::Linear(r) = &mut b.permeance {
                *r *= s;
            }
        }
    }
    net
}

#[test]
fn smaller_gap_reluctance_passes_more_flux_but_less_than_proportionally() {
    let base = network(&CouplerSpec::table_i());
    let opts = SolverOptions::default();
    let flux = |s: f64| {
        let net = with_gap_scaled(&base, s);
        let sol = net.solve(&opts).unwrap();
        net.gap_flux(&sol)
    };
    let scan: Vec<(f64, f64)> = (0..=10).map(|i| 1.0 - 0.05 * i as f64).map(|s| (s, flux(s))).collect();
    for w in scan.windows(2) {
        assert!(w[1].1 > w[0].1, "scale {} → {}: {} vs {}", w[0].0, w[1].0, w[0].1, w[1].1);
    }
    let (full, half) = (scan[0].1, scan[10].1);
    assert!(half < 2.0 * full, "{half} vs {full}");
}

#[test]
fn thicker_magnets_raise_the_gap_field_less_than_proportionally() {
    let at = |h_m: f64| b_g0(&CouplerSpec { h_m, ..CouplerSpec::table_i() });
    let (thin, nominal, thick) = (at(2.5e-3), at(5e-3), at(10e-3));
    assert!(thin < nominal && nominal < thick, "{thin} {nominal} {thick}");
    assert!(nominal < 2.0 * thin && thick < 2.0 * nominal, "{thin} {nominal} {thick}");
}

#[test]
fn vanishing_pole_iron_starves_the_gap() {
    let at = |pm_embrace: f64| b_g0(&CouplerSpec { pm_embrace, ..CouplerSpec::table_i() });
    let scan: Vec<f64> = [0.2, 0.05, 0.01, 0.001].iter().map(|&e| at(e)).collect();
    for w in scan.windows(2) {
        assert!(w[1] < w[0], "{scan:?}");
    }
    assert!(scan[3] < 0.01 * at(1.0), "{scan:?}");
}

#[test]
fn torque_is_linear_at_small_slip_and_falls_off_as_one_over_slip() {
    let spec = CouplerSpec::table_i();
    let mats = MaterialMap::new(&spec, MaterialSet::default()).unwrap();
    let curve = mec_torque_curve(0.3, &spec, &mats, &[1e-3, 2e-3, 1e5, 2e5]).unwrap();
    let t: Vec<f64> = curve.rows.iter().map(|r| r.torque).collect();
    assert!((t[1] / t[0] - 2.0).abs() < 1e-4, "{t:?}");
    assert!((t[3] / t[2] - 0.5).abs() < 1e-3, "{t:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_node_balances(
        pairs in 1usize..5, h_m in 2.0f64..8.0, g in 0.3f64..2.0, l_yp in 10.0f64..30.0, embrace in 0.2f64..1.0,
    ) {
        let spec = CouplerSpec {
            n_pm: 2 * pairs, h_m: h_m * 1e-3, g: g * 1e-3, l_yp: l_yp * 1e-3, pm_embrace: embrace,
            ..CouplerSpec::table_i()
        };
        prop_assume!(spec.validate().is_ok());
        let net = network(&spec);
        let sol = net.solve(&SolverOptions::default()).unwrap();
        let (net_flux, _) = net.node_balance(&sol.potentials);
        let scale = net.flux_scale();
        for (i, f) in net_flux.iter().enumerate() {
            prop_assert!(f.abs() <= 1e-10 * scale, "node {i}: {f} of {scale}");
        }
        prop_assert!(net.airgap_fundamental(&sol) > 0.0);
    }

    #[test]
    fn torque_curve_is_odd(w in 0.1f64..2000.0, b in 0.05f64..1.2) {
        let spec = CouplerSpec::table_i();
        let mats = MaterialMap::new(&spec, MaterialSet::default()).unwrap();
        let c = mec_torque_curve(b, &spec, &mats, &[-w, w]).unwrap();
        prop_assert_eq!(c.rows[0].torque, -c.rows[1].torque);
        prop_assert_eq!(c.rows[0].loss, c.rows[1].loss);
        prop_assert!(c.rows[1].torque > 0.0);
    }
}
