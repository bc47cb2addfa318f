use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use ecoupler::config::{parse_slip, RunConfig};
use ecoupler::mec::{run_mec, MecOptions};
use ecoupler::mesh::mesh_quality;
use ecoupler::model::CouplerModel;
use ecoupler::oracles::{cylinder_comparison, mms_base_mesh, mms_study, observed_orders, slab_eddy_force, MmsCase, SlabCase};
use ecoupler::postprocess::{
    airgap_band, airgap_br_harmonic, evaluate, sweep_torque_speed, OperatingPoint, SweepOptions, TorqueSpeedCurve,
};
use ecoupler::{vtk, Error};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_THRESHOLD: u8 = 4;

#[derive(Parser)]
#[command(name = "ecoupler", version, about = "Field, torque and demagnetization analysis of IPM eddy-current couplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; built-in prototype defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Slip speed, e.g. `200rpm` or `20.9rad/s`; bare numbers are rad/s.
    #[arg(long, value_name = "VALUE[unit]", allow_hyphen_values = true)]
    slip: Option<String>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1, value_name = "N")]
    jobs: usize,
    /// Exit with status 4 when a configured threshold is violated.
    #[arg(long)]
    strict: bool,
    /// Output directory, overriding the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Uniform mesh refinements, overriding the config.
    #[arg(long, value_name = "K")]
    refine: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one slip speed and write the field dump.
    Solve(Common),
    /// Torque-speed sweep over the configured slips.
    Sweep(Common),
    /// Magnet reverse-field margins over the sweep, or at `--slip`.
    Demag(Common),
    /// Fast equivalent-circuit torque curve.
    Mec(Common),
    /// Analytical checks against the field solver.
    Oracle(Common),
    /// Mesh statistics and element quality.
    MeshInfo(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c)
            | Command::Sweep(c)
            | Command::Demag(c)
            | Command::Mec(c)
            | Command::Oracle(c)
            | Command::MeshInfo(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Sweep(_) => "sweep",
            Command::Demag(_) => "demag",
            Command::Mec(_) => "mec",
            Command::Oracle(_) => "oracle",
            Command::MeshInfo(_) => "mesh-info",
        }
    }
}

/// What a finished command hands back for the report and exit status.
#[derive(Default)]
struct Outcome {
    report: String,
    violations: Vec<String>,
    failed_points: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = &cli.command;
    let common = command.common();
    let out_dir = common.out.clone();

    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(e) => return fail(out_dir.as_deref().unwrap_or(Path::new("out")), command, &e),
    };
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::FAILURE;
    }

    let result = match command {
        Command::Solve(_) => solve(&cfg, common, &out),
        Command::Sweep(_) => sweep(&cfg, common, &out),
        Command::Demag(_) => demag(&cfg, common, &out),
        Command::Mec(_) => mec(&cfg, &out),
        Command::Oracle(_) => oracle(&cfg, &out),
        Command::MeshInfo(_) => mesh_info(&cfg),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => return fail(&out, command, &e),
    };

    let mut report = header(command);
    report.push_str(&outcome.report);
    if !outcome.violations.is_empty() {
        report.push_str("\nthreshold violations:\n");
        for v in &outcome.violations {
            let _ = writeln!(report, "  {v}");
        }
    }
    print!("{report}");
    if let Err(e) = std::fs::write(out.join("report.txt"), &report) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::FAILURE;
    }
    if outcome.failed_points > 0 {
        ExitCode::from(EXIT_NONCONVERGENCE)
    } else if common.strict && !outcome.violations.is_empty() {
        ExitCode::from(EXIT_THRESHOLD)
    } else {
        ExitCode::SUCCESS
    }
}

fn load_config(common: &Common) -> ecoupler::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(k) = common.refine {
        cfg.mesh.refine = k;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    if common.jobs == 0 {
        return Err(Error::Validation { field: "jobs".into(), reason: "must be at least 1".into() });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::NonConvergence { .. } | Error::Singular(_) | Error::NonFiniteReluctivity { .. } => {
            ExitCode::from(EXIT_NONCONVERGENCE)
        }
        Error::Io { .. } => ExitCode::FAILURE,
        _ => ExitCode::from(EXIT_VALIDATION),
    }
}

fn fail(out: &Path, command: &Command, e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let mut report = format!("{}error: {e}\n", header(command));
    if let Error::NonConvergence { residual_history, .. } = e {
        report.push_str("residual history:\n");
        for (i, r) in residual_history.iter().enumerate() {
            let _ = writeln!(report, "  {i:3} {r:.6e}");
        }
    }
    if std::fs::create_dir_all(out).is_ok() {
        let _ = std::fs::write(out.join("report.txt"), report);
    }
    exit_code(e)
}

fn header(command: &Command) -> String {
    let config = command.common().config.as_ref().map_or("built-in defaults".to_string(), |p| p.display().to_string());
    format!("ecoupler {}\nconfig: {config}\n\n", command.name())
}

fn build_model(cfg: &RunConfig) -> ecoupler::Result<CouplerModel> {
    let model = CouplerModel::new(&cfg.spec()?, cfg.material_set()?, cfg.mesh.density, cfg.mesh.refine)?;
    info!("mesh: {} nodes, {} elements", model.mesh().n_nodes(), model.mesh().n_elements());
    Ok(model)
}

fn slip_arg(common: &Common) -> ecoupler::Result<Option<f64>> {
    common.slip.as_deref().map(parse_slip).transpose()
}

fn rpm(w: f64) -> f64 {
    w * 30.0 / std::f64::consts::PI
}

/// Threshold checks shared by every command that produces operating points.
fn check_thresholds(cfg: &RunConfig, rows: &[OperatingPoint]) -> Vec<String> {
    let t = &cfg.thresholds;
    let mut v = Vec::new();
    for r in rows {
        if r.avg_j > t.thermal_j_a_mm2 {
            v.push(format!(
                "slip {:.6} rad/s: average |J| {:.3} A/mm² exceeds the thermal limit {} A/mm²",
                r.omega_slip, r.avg_j, t.thermal_j_a_mm2
            ));
        }
        if r.demag.margin < t.min_demag_margin_ka_m * 1e3 {
            v.push(format!(
                "slip {:.6} rad/s: demagnetization margin {:.3} kA/m (element {}) below {} kA/m",
                r.omega_slip,
                r.demag.margin / 1e3,
                r.demag.worst_element,
                t.min_demag_margin_ka_m
            ));
        }
    }
    v
}

fn sorted_slips(cfg: &RunConfig) -> ecoupler::Result<Vec<f64>> {
    let mut slips = cfg.slips()?;
    slips.sort_by(f64::total_cmp);
    Ok(slips)
}

fn run_sweep(cfg: &RunConfig, model: &CouplerModel, jobs: usize) -> ecoupler::Result<TorqueSpeedCurve> {
    // Cold starts keep every point independent of the thread count.
    sweep_torque_speed(model, &sorted_slips(cfg)?, &cfg.solver, SweepOptions { warm_start: false, jobs })
}

fn solve(cfg: &RunConfig, common: &Common, out: &Path) -> ecoupler::Result<Outcome> {
    let slip = slip_arg(common)?.ok_or_else(|| Error::Validation { field: "slip".into(), reason: "`solve` needs --slip".into() })?;
    let model = build_model(cfg)?;
    let sol = model.solve(slip, &cfg.solver, None)?;
    let p = evaluate(&model, &sol)?;
    let path = out.join(format!("fields_{slip:.4}.vtk"));
    vtk::write(&model, &sol, &path)?;

    let mut r = String::new();
    let _ = writeln!(r, "mesh: {} nodes, {} elements", model.mesh().n_nodes(), model.mesh().n_elements());
    let _ = writeln!(r, "slip: {:.6} rad/s ({:.3} rpm)", slip, rpm(slip));
    let _ = writeln!(r, "newton iterations: {}", sol.iterations);
    let _ = writeln!(r, "peclet number: {:.4}", sol.peclet);
    let _ = writeln!(r, "torque (stress tensor): {:.9e} N·m", p.torque);
    let _ = writeln!(r, "torque (Lorentz): {:.9e} N·m", p.torque_lorentz);
    let _ = writeln!(r, "ohmic loss: {:.9e} W", p.loss);
    let _ = writeln!(r, "power balance error: {:.4e}", p.power_balance_error());
    let _ = writeln!(r, "average |J|: {:.6} A/mm²", p.avg_j);
    let _ = writeln!(r, "maximum |J|: {:.6} A/mm²", p.max_j);
    let _ = writeln!(r, "asymmetry ratio: {:.6}", p.asymmetry);
    let _ = writeln!(
        r,
        "demagnetization margin: {:.3} kA/m (worst element {})",
        p.demag.margin / 1e3,
        p.demag.worst_element
    );
    let _ = writeln!(r, "field dump: {}", path.display());
    Ok(Outcome { report: r, violations: check_thresholds(cfg, &[p]), failed_points: 0 })
}

fn curve_table(curve: &TorqueSpeedCurve) -> String {
    let mut r = String::from(
        "  omega_rad_s       rpm     torque_Nm    lorentz_Nm        loss_W  pwr_err  mth_err   avgJ    maxJ  asym  margin_kA_m  it\n",
    );
    for p in &curve.rows {
        let _ = writeln!(
            r,
            "{:13.6} {:9.2} {:13.6e} {:13.6e} {:13.6e} {:8.2e} {:8.2e} {:6.2} {:7.2} {:5.3} {:12.3} {:3}",
            p.omega_slip,
            rpm(p.omega_slip),
            p.torque,
            p.torque_lorentz,
            p.loss,
            p.power_balance_error(),
            p.torque_method_error(),
            p.avg_j,
            p.max_j,
            p.asymmetry,
            p.demag.margin / 1e3,
            p.iterations
        );
    }
    r
}

fn curve_summary(cfg: &RunConfig, curve: &TorqueSpeedCurve) -> String {
    let mut r = String::new();
    if let Some(p) = curve.peak() {
        let _ = writeln!(r, "peak torque: {:.6} N·m at {:.6} rad/s ({:.1} rpm)", p.torque, p.omega_slip, rpm(p.omega_slip));
    }
    let _ = writeln!(r, "interior torque maxima: {}", curve.interior_maxima());
    let limit = cfg.thresholds.thermal_j_a_mm2;
    match curve.thermal_limit_slip(limit) {
        Some(w) => {
            let _ = writeln!(r, "thermal-limit slip (average |J| = {limit} A/mm²): {w:.6} rad/s ({:.1} rpm)", rpm(w));
        }
        None => {
            let best = curve.rows.iter().max_by(|a, b| a.avg_j.total_cmp(&b.avg_j));
            let _ = match best {
                Some(b) => writeln!(
                    r,
                    "thermal-limit slip (average |J| = {limit} A/mm²): not reached; highest average |J| {:.3} A/mm² at {:.6} rad/s",
                    b.avg_j, b.omega_slip
                ),
                None => writeln!(r, "thermal-limit slip: no solved points"),
            };
        }
    }
    if let Some(w) = curve.rows.iter().min_by(|a, b| a.demag.margin.total_cmp(&b.demag.margin)) {
        let _ = writeln!(
            r,
            "smallest demagnetization margin: {:.3} kA/m at {:.6} rad/s (element {})",
            w.demag.margin / 1e3,
            w.omega_slip,
            w.demag.worst_element
        );
    }
    r.push_str(
        "\nasymmetry ratio: each pole pitch of the sheet is split at the pole centre; the ratio is the\n\
         peak |J| in the half the sheet moves into, relative to the magnets, over the peak |J| in the\n\
         other half. It is 1 at zero slip.\n",
    );
    if !curve.failures.is_empty() {
        r.push_str("\nfailed points:\n");
        for f in &curve.failures {
            let _ = writeln!(r, "  {:.6} rad/s: {}", f.omega_slip, f.reason);
        }
    }
    r
}

fn sweep(cfg: &RunConfig, common: &Common, out: &Path) -> ecoupler::Result<Outcome> {
    let model = build_model(cfg)?;
    let curve = run_sweep(cfg, &model, common.jobs)?;
    write(&out.join("curve.csv"), &curve.to_csv())?;
    let mut r = String::new();
    let _ = writeln!(r, "mesh: {} nodes, {} elements\n", model.mesh().n_nodes(), model.mesh().n_elements());
    r.push_str(&curve_table(&curve));
    r.push('\n');
    r.push_str(&curve_summary(cfg, &curve));
    Ok(Outcome { report: r, violations: check_thresholds(cfg, &curve.rows), failed_points: curve.failures.len() })
}

fn demag(cfg: &RunConfig, common: &Common, out: &Path) -> ecoupler::Result<Outcome> {
    let model = build_model(cfg)?;
    let (rows, failed, focus) = match slip_arg(common)? {
        Some(w) => {
            let sol = model.solve(w, &cfg.solver, None)?;
            (vec![evaluate(&model, &sol)?], 0, Some(w))
        }
        None => {
            let curve = run_sweep(cfg, &model, common.jobs)?;
            let peak = curve.peak().map(|p| p.omega_slip);
            (curve.rows, curve.failures.len(), peak)
        }
    };
    let mut csv = String::from("omega_slip_rad_s, h_rev_max_A_m, demag_margin_A_m, worst_element\n");
    let mut r = String::from("  omega_rad_s       rpm   h_rev_max_kA_m  margin_kA_m  element\n");
    for p in &rows {
        let _ = writeln!(csv, "{:.6}, {:.6}, {:.6}, {}", p.omega_slip, p.demag.h_rev_max, p.demag.margin, p.demag.worst_element);
        let _ = writeln!(
            r,
            "{:13.6} {:9.2} {:16.3} {:12.3} {:8}",
            p.omega_slip,
            rpm(p.omega_slip),
            p.demag.h_rev_max / 1e3,
            p.demag.margin / 1e3,
            p.demag.worst_element
        );
    }
    write(&out.join("demag.csv"), &csv)?;
    let h_c = cfg.materials.pm_h_c_ka_m;
    let _ = writeln!(r, "\ncoercivity: {h_c} kA/m");
    if let Some(p) = focus.and_then(|w| rows.iter().find(|p| p.omega_slip == w)) {
        let label = if common.slip.is_some() { "requested slip" } else { "peak-torque slip" };
        let _ = writeln!(
            r,
            "{label} {:.6} rad/s: margin {:.3} kA/m ({:.1}% of coercivity)",
            p.omega_slip,
            p.demag.margin / 1e3,
            100.0 * p.demag.margin / (h_c * 1e3)
        );
    }
    let t = &cfg.thresholds;
    let violations = rows
        .iter()
        .filter(|p| p.demag.margin < t.min_demag_margin_ka_m * 1e3)
        .map(|p| {
            format!(
                "slip {:.6} rad/s: margin {:.3} kA/m (element {}) below {} kA/m",
                p.omega_slip,
                p.demag.margin / 1e3,
                p.demag.worst_element,
                t.min_demag_margin_ka_m
            )
        })
        .collect();
    Ok(Outcome { report: r, violations, failed_points: failed })
}

fn mec(cfg: &RunConfig, out: &Path) -> ecoupler::Result<Outcome> {
    let spec = cfg.spec()?;
    let materials = ecoupler::materials::MaterialMap::new(&spec, cfg.material_set()?)?;
    let result = run_mec(&spec, &materials, MecOptions::default(), &sorted_slips(cfg)?)?;
    write(&out.join("curve_mec.csv"), &result.curve.to_csv())?;
    let mut r = String::new();
    let _ = writeln!(r, "network: {} nodes, {} branches", result.network.n_nodes, result.network.branches.len());
    let _ = writeln!(r, "newton iterations: {}", result.solution.iterations);
    let _ = writeln!(r, "no-load air-gap fundamental: {:.6} T\n", result.b_g0);
    r.push_str(&curve_table(&result.curve));
    r.push('\n');
    r.push_str(&curve_summary(cfg, &result.curve));
    Ok(Outcome { report: r, violations: check_thresholds(cfg, &result.curve.rows), failed_points: 0 })
}

fn oracle(cfg: &RunConfig, out: &Path) -> ecoupler::Result<Outcome> {
    let spec = cfg.spec()?;
    let mut r = String::new();

    // Linear cylinder: FEM against the closed-form multilayer solution.
    let (mu_iron, k_sheet) = (1000.0, 1e4);
    let cyl = cylinder_comparison(&spec, cfg.mesh.density, cfg.mesh.refine, mu_iron, k_sheet)?;
    let mut csv = String::from("mu_r_iron, sheet_A_m, r_in_m, r_out_m, fem_Br1_T, oracle_Br1_T, relative_error\n");
    let _ = writeln!(
        csv,
        "{mu_iron}, {k_sheet}, {:.9e}, {:.9e}, {:.9e}, {:.9e}, {:.6e}",
        cyl.r_band.0, cyl.r_band.1, cyl.fem_br1, cyl.oracle_br1, cyl.relative_error
    );
    write(&out.join("oracle_cylinder.csv"), &csv)?;
    let _ = writeln!(
        r,
        "linear cylinder: FEM B_r1 {:.6e} T, oracle {:.6e} T, relative error {:.3e}",
        cyl.fem_br1, cyl.oracle_br1, cyl.relative_error
    );

    // Manufactured solutions on the coupler geometry.
    let base = mms_base_mesh(&spec)?;
    let radius = base.r_outer();
    let mut csv = String::from("case, k, sigma_omega, level, nodes, h_m, l2_error, order\n");
    for (name, k, so) in [("diffusion", 1u32, 0.0), ("convection", 3, 30.0 / (radius * radius))] {
        let case = MmsCase::new(k, 1.0, so, radius);
        let levels = mms_study(&case, &base, 4)?;
        let orders = observed_orders(&levels);
        for (i, l) in levels.iter().enumerate() {
            let order = if i == 0 { String::new() } else { format!("{:.6}", orders[i - 1]) };
            let _ = writeln!(csv, "{name}, {k}, {so:.6e}, {i}, {}, {:.6e}, {:.6e}, {order}", l.n_nodes, l.h, l.l2_error);
        }
        let shown: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
        let _ = writeln!(r, "manufactured solution ({name}, k = {k}): observed orders {}", shown.join(", "));
    }
    write(&out.join("oracle_mms.csv"), &csv)?;

    // Travelling-field slab model driven by the solver's own no-load field.
    let model = build_model(cfg)?;
    let band = airgap_band(&model)?;
    let p = spec.pole_pairs();
    let zero = model.solve(0.0, &cfg.solver, None)?;
    let b1 = airgap_br_harmonic(&model, &zero, &band, p);
    let curve = run_sweep(cfg, &model, 1)?;
    let radius = spec.r_cs_mean();
    let area = 2.0 * std::f64::consts::PI * radius * spec.l_ax;
    let sigma_s = model.materials.sigma_eff() * spec.l_cs;
    let mut csv = String::from("omega_slip_rad_s, fem_torque_Nm, slab_torque_Nm, fem_loss_W, slab_loss_W\n");
    for row in &curve.rows {
        let case = SlabCase { b0: b1, tau_p: spec.tau_p(), v: row.omega_slip * radius, sigma_s, gap: spec.g + spec.l_cs };
        let f = slab_eddy_force(&case)?;
        let _ = writeln!(
            csv,
            "{:.6}, {:.9e}, {:.9e}, {:.9e}, {:.9e}",
            row.omega_slip,
            row.torque,
            f.stress * area * radius,
            row.loss,
            f.loss * area
        );
    }
    write(&out.join("oracle_slab.csv"), &csv)?;
    let _ = writeln!(r, "slab model: driven by FEM no-load B_r1 = {b1:.6} T; table in oracle_slab.csv");
    Ok(Outcome { report: r, violations: Vec::new(), failed_points: curve.failures.len() })
}

fn mesh_info(cfg: &RunConfig) -> ecoupler::Result<Outcome> {
    let model = build_model(cfg)?;
    let mesh = model.mesh();
    let q = mesh_quality(mesh);
    let mut r = String::new();
    let _ = writeln!(r, "nodes: {}", mesh.n_nodes());
    let _ = writeln!(r, "elements: {}", mesh.n_elements());
    let _ = writeln!(r, "refinement: {}", mesh.refinement);
    let _ = writeln!(r, "total area: {:.9e} m²", q.total_area);
    let _ = writeln!(r, "min area: {:.6e} m²", q.min_area);
    let _ = writeln!(r, "element quality: min {:.4}, mean {:.4}", q.min_quality, q.mean_quality);
    let _ = writeln!(r, "inverted elements: {}", q.inverted.len());
    let _ = writeln!(r, "degenerate elements: {}", q.degenerate.len());
    r.push_str("elements per region:\n");
    for (name, n) in &q.region_counts {
        let _ = writeln!(r, "  {name:<12} {n}");
    }
    r.push_str("characteristic element size per region (m):\n");
    for (name, h) in mesh.characteristic_sizes() {
        let _ = writeln!(r, "  {name:<12} {h:.4e}");
    }
    let band = airgap_band(&model)?;
    let _ = writeln!(
        r,
        "torque band: {} elements between r = {:.6e} and {:.6e} m",
        band.elements.len(),
        band.r_in,
        band.r_out
    );
    if let Some(&e) = q.inverted.first().or(q.degenerate.first()) {
        return Err(Error::Validation { field: "mesh".into(), reason: format!("element {e} is inverted or degenerate") });
    }
    Ok(Outcome { report: r, ..Outcome::default() })
}

fn write(path: &Path, text: &str) -> ecoupler::Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
