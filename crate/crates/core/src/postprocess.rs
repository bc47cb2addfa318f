//! Quantities derived from a converged field: flux density, eddy currents,
//! torque by two independent routes, loss, magnet demagnetization margin and
//! torque–speed sweeps.
//!
//! Sign conventions: torques are reported in the direction of positive slip,
//! so that the transmitted torque is odd in the slip speed and positive for
//! positive slip on a conventional coupler.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SolverOptions;
use crate::geometry::{annulus, RegionTag};
use crate::materials::MU_0;
use crate::model::{CouplerModel, FieldSolution};

/// Header of every torque–speed CSV.
pub const CURVE_HEADER: &str = "omega_slip_rad_s, torque_Nm, loss_W, avgJ_A_mm2, maxJ_A_mm2, demag_margin_A_m";

/// Default average current density marking the thermal limit (A/mm²).
pub const THERMAL_LIMIT_A_MM2: f64 = 45.0;

/// Per-element field quantities.
#[derive(Debug, Clone)]
pub struct ElementFields {
    pub b: Vec<[f64; 2]>,
    pub h: Vec<[f64; 2]>,
    /// Eddy-current density at the element centroid (A/m²).
    pub jz: Vec<f64>,
    /// Field component opposing the magnetization, zero outside magnets (A/m).
    pub h_rev: Vec<f64>,
}

impl ElementFields {
    pub fn b_magnitude(&self, e: usize) -> f64 {
        self.b[e][0].hypot(self.b[e][1])
    }
}

fn nodal(model: &CouplerModel, sol: &FieldSolution, e: usize) -> [f64; 3] {
    let t = model.mesh().elements[e];
    [sol.a[t[0]], sol.a[t[1]], sol.a[t[2]]]
}

fn element_nodes(model: &CouplerModel, e: usize) -> [[f64; 2]; 3] {
    let mesh = model.mesh();
    let t = mesh.elements[e];
    [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]]
}

/// Unit magnetization direction of a magnet element.
fn magnet_direction(model: &CouplerModel, e: usize) -> Option<[f64; 2]> {
    match model.tag(e) {
        RegionTag::Pm { index, .. } => Some(model.spec.magnetization_direction(index)),
        _ => None,
    }
}

pub fn element_fields(model: &CouplerModel, sol: &FieldSolution) -> ElementFields {
    let sys = &model.system;
    let n = model.mesh().n_elements();
    let mut fields = ElementFields {
        b: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        jz: Vec::with_capacity(n),
        h_rev: Vec::with_capacity(n),
    };
    for e in 0..n {
        let g = &sys.geom[e];
        let a = nodal(model, sol, e);
        let grad = g.gradient(a);
        let b = [grad[1], -grad[0]];
        let m = sys.material(e);
        let nu = m.reluctivity.evaluate(b[0] * b[0] + b[1] * b[1]).0;
        let mut h = [nu * b[0], nu * b[1]];
        if let Some(mag) = m.magnetization {
            h[0] -= mag[0];
            h[1] -= mag[1];
        }
        let jz = if m.sigma > 0.0 { -m.sigma * sol.omega * g.d_theta(a) } else { 0.0 };
        let h_rev = magnet_direction(model, e).map(|d| -(h[0] * d[0] + h[1] * d[1])).unwrap_or(0.0);
        fields.b.push(b);
        fields.h.push(h);
        fields.jz.push(jz);
        fields.h_rev.push(h_rev);
    }
    fields
}

/// The air-gap elements used for stress-tensor torque and air-gap harmonics:
/// the element layers centred in the middle third of the gap, or the layers
/// nearest the gap centre when none is.
#[derive(Debug, Clone)]
pub struct AirGapBand {
    pub elements: Vec<usize>,
    pub r_in: f64,
    pub r_out: f64,
}

pub fn airgap_band(model: &CouplerModel) -> Result<AirGapBand> {
    let mesh = model.mesh();
    let r0 = model.spec.r_inner_yoke();
    let g = model.spec.g;
    let (lo, hi, centre) = (r0 + g / 3.0, r0 + 2.0 * g / 3.0, r0 + 0.5 * g);
    // Whole element layers are taken together, so the band is always a closed
    // annulus: every element is classified by the middle of its radial extent.
    let layer_mid = |e: usize| {
        let (mut a, mut b) = (f64::INFINITY, 0.0f64);
        for t in mesh.elements[e] {
            let r = mesh.nodes[t][0].hypot(mesh.nodes[t][1]);
            a = a.min(r);
            b = b.max(r);
        }
        0.5 * (a + b)
    };
    let gap: Vec<(usize, f64)> =
        (0..mesh.n_elements()).filter(|&e| mesh.annulus[e] == annulus::AIR_GAP).map(|e| (e, layer_mid(e))).collect();
    let mut elements: Vec<usize> = gap.iter().filter(|(_, m)| *m > lo && *m < hi).map(|(e, _)| *e).collect();
    if elements.is_empty() {
        let nearest = gap.iter().map(|(_, m)| (m - centre).abs()).fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * g;
        elements = gap.iter().filter(|(_, m)| (m - centre).abs() <= nearest + tol).map(|(e, _)| *e).collect();
    }
    if elements.is_empty() {
        return Err(Error::Config("mesh has no air-gap elements".into()));
    }
    let mut r_in = f64::INFINITY;
    let mut r_out: f64 = 0.0;
    for &e in &elements {
        for t in mesh.elements[e] {
            let p = mesh.nodes[t];
            let r = p[0].hypot(p[1]);
            r_in = r_in.min(r);
            r_out = r_out.max(r);
        }
    }
    Ok(AirGapBand { elements, r_in, r_out })
}

fn edge_midpoints(p: [[f64; 2]; 3]) -> [[f64; 2]; 3] {
    std::array::from_fn(|k| {
        let q = p[(k + 1) % 3];
        [0.5 * (p[k][0] + q[0]), 0.5 * (p[k][1] + q[1])]
    })
}

/// Torque from the Maxwell stress averaged over the air-gap band.
pub fn torque_arkkio(model: &CouplerModel, sol: &FieldSolution) -> Result<f64> {
    let band = airgap_band(model)?;
    Ok(torque_arkkio_in(model, sol, &band))
}

pub fn torque_arkkio_in(model: &CouplerModel, sol: &FieldSolution, band: &AirGapBand) -> f64 {
    let sys = &model.system;
    let mut integral = 0.0;
    for &e in &band.elements {
        let g = &sys.geom[e];
        let grad = g.gradient(nodal(model, sol, e));
        let b = [grad[1], -grad[0]];
        let mut sum = 0.0;
        for m in edge_midpoints(element_nodes(model, e)) {
            let r = m[0].hypot(m[1]);
            // r·B_r·B_θ = (B·p)(B·t)/r with p = (x, y), t = (−y, x).
            let bp = b[0] * m[0] + b[1] * m[1];
            let bt = -b[0] * m[1] + b[1] * m[0];
            sum += bp * bt / r;
        }
        integral += g.area * sum / 3.0;
    }
    let torque_on_magnets = model.spec.l_ax * integral / (MU_0 * (band.r_out - band.r_in));
    model.spec.slip_direction.sign() * torque_on_magnets
}

/// `∬ σ (∂A/∂θ)²` over conducting elements, integrated exactly.
fn swirl_energy(model: &CouplerModel, sol: &FieldSolution) -> f64 {
    let sys = &model.system;
    let mut total = 0.0;
    for e in 0..model.mesh().n_elements() {
        let sigma = sys.material(e).sigma;
        if sigma == 0.0 {
            continue;
        }
        let d = sys.geom[e].d_theta_midpoints(nodal(model, sol, e), element_nodes(model, e));
        total += sigma * sys.geom[e].area * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / 3.0;
    }
    total
}

/// Torque from the Lorentz force density `J × B` on the sheet.
pub fn torque_lorentz(model: &CouplerModel, sol: &FieldSolution) -> f64 {
    // With J_z = −σω∂A/∂θ and r·B_r = ∂A/∂θ, the torque on the sheet is
    // −Lσω∬(∂A/∂θ)²; the magnets feel the opposite.
    let torque_on_magnets = model.spec.l_ax * sol.omega * swirl_energy(model, sol);
    model.spec.slip_direction.sign() * torque_on_magnets
}

/// Joule loss in the sheet, `L ∬ J²/σ` (W).
pub fn ohmic_loss(model: &CouplerModel, sol: &FieldSolution) -> f64 {
    model.spec.l_ax * sol.omega * sol.omega * swirl_energy(model, sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemagReport {
    /// `H_c − max H_rev` (A/m); positive is safe.
    pub margin: f64,
    pub worst_element: usize,
    pub h_rev_max: f64,
}

pub fn demag_margin(model: &CouplerModel, sol: &FieldSolution) -> DemagReport {
    demag_from_fields(model, &element_fields(model, sol))
}

pub fn demag_from_fields(model: &CouplerModel, fields: &ElementFields) -> DemagReport {
    let mut worst = (usize::MAX, f64::NEG_INFINITY);
    for e in 0..fields.h_rev.len() {
        if matches!(model.tag(e), RegionTag::Pm { .. }) && fields.h_rev[e] > worst.1 {
            worst = (e, fields.h_rev[e]);
        }
    }
    DemagReport { margin: model.materials.pm().h_c - worst.1, worst_element: worst.0, h_rev_max: worst.1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentStats {
    /// Area-weighted mean of |J_z| over the sheet (A/mm²).
    pub avg: f64,
    /// Largest element |J_z| (A/mm²).
    pub max: f64,
    /// Peak |J| on the downstream half of each pole over the upstream half.
    pub asymmetry: f64,
}

/// Which half of a pole pitch an angle falls in, measured from the pole
/// centres. `true` for the half the sheet moves towards.
fn downstream_half(model: &CouplerModel, theta: f64, omega: f64) -> bool {
    let pitch = model.spec.pole_pitch();
    // Pole centres sit halfway between magnet centres.
    let offset = (theta - 0.5 * pitch).rem_euclid(pitch);
    let ahead = offset < 0.5 * pitch;
    if omega >= 0.0 {
        ahead
    } else {
        !ahead
    }
}

/// Current-density statistics over the sheet.
///
/// The asymmetry ratio splits every pole pitch at the pole centre. The
/// downstream half is the one the sheet moves into relative to the magnets;
/// the ratio is its peak |J| divided by that of the upstream half, and 1 at
/// zero slip.
pub fn current_density_stats(model: &CouplerModel, sol: &FieldSolution) -> CurrentStats {
    current_stats_from_fields(model, sol, &element_fields(model, sol))
}

pub fn current_stats_from_fields(model: &CouplerModel, sol: &FieldSolution, fields: &ElementFields) -> CurrentStats {
    let mesh = model.mesh();
    let (mut area, mut weighted, mut max) = (0.0, 0.0, 0.0f64);
    let (mut down, mut up) = (0.0f64, 0.0f64);
    for e in 0..mesh.n_elements() {
        if model.tag(e) != RegionTag::Cs {
            continue;
        }
        let a = model.system.geom[e].area;
        let j = fields.jz[e].abs();
        area += a;
        weighted += a * j;
        max = max.max(j);
        let c = mesh.centroid(e);
        if downstream_half(model, c[1].atan2(c[0]), sol.omega) {
            down = down.max(j);
        } else {
            up = up.max(j);
        }
    }
    let asymmetry = if up > 0.0 { down / up } else { 1.0 };
    CurrentStats { avg: weighted / area * 1e-6, max: max * 1e-6, asymmetry }
}

/// `(Σ J_z·area, Σ |J_z|·area)` over the sheet (A).
pub fn net_sheet_current(model: &CouplerModel, sol: &FieldSolution) -> (f64, f64) {
    let sys = &model.system;
    let mut net = 0.0;
    let mut abs = 0.0;
    for e in 0..model.mesh().n_elements() {
        let sigma = sys.material(e).sigma;
        if sigma == 0.0 {
            continue;
        }
        let j = -sigma * sol.omega * sys.geom[e].d_theta(nodal(model, sol, e));
        net += j * sys.geom[e].area;
        abs += j.abs() * sys.geom[e].area;
    }
    (net, abs)
}

/// Amplitude of the `p`-th angular harmonic of `B_r` averaged over the band (T).
pub fn airgap_br_harmonic(model: &CouplerModel, sol: &FieldSolution, band: &AirGapBand, p: usize) -> f64 {
    let sys = &model.system;
    let (mut cos_sum, mut sin_sum, mut area) = (0.0, 0.0, 0.0);
    for &e in &band.elements {
        let g = &sys.geom[e];
        let grad = g.gradient(nodal(model, sol, e));
        let b = [grad[1], -grad[0]];
        for m in edge_midpoints(element_nodes(model, e)) {
            let r = m[0].hypot(m[1]);
            let theta = m[1].atan2(m[0]);
            let br = (b[0] * m[0] + b[1] * m[1]) / r;
            let w = g.area / 3.0;
            cos_sum += w * br * (p as f64 * theta).cos();
            sin_sum += w * br * (p as f64 * theta).sin();
        }
        area += g.area;
    }
    2.0 * cos_sum.hypot(sin_sum) / area
}

/// Peak |B| in the outer yoke within a narrow window around the inter-pole
/// positions (over the magnets) and around the pole centres.
pub fn outer_yoke_probe(model: &CouplerModel, fields: &ElementFields) -> (f64, f64) {
    let mesh = model.mesh();
    let pitch = model.spec.pole_pitch();
    let window = 0.1 * pitch;
    let (mut inter, mut mid) = (0.0f64, 0.0f64);
    for e in 0..mesh.n_elements() {
        if model.tag(e) != RegionTag::OuterYoke {
            continue;
        }
        let c = mesh.centroid(e);
        let offset = c[1].atan2(c[0]).rem_euclid(pitch);
        let b = fields.b_magnitude(e);
        if offset < window || offset > pitch - window {
            inter = inter.max(b);
        } else if (offset - 0.5 * pitch).abs() < window {
            mid = mid.max(b);
        }
    }
    (inter, mid)
}

/// All reported quantities at one slip speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub omega_slip: f64,
    /// Stress-tensor torque (N·m).
    pub torque: f64,
    pub torque_lorentz: f64,
    pub loss: f64,
    pub avg_j: f64,
    pub max_j: f64,
    pub asymmetry: f64,
    pub demag: DemagReport,
    pub iterations: usize,
    pub peclet: f64,
}

impl OperatingPoint {
    /// `|T·ω − P| / P`, zero when both vanish.
    pub fn power_balance_error(&self) -> f64 {
        let tw = self.torque * self.omega_slip;
        if self.loss == 0.0 {
            tw.abs()
        } else {
            (tw - self.loss).abs() / self.loss
        }
    }

    /// Relative difference between the two torque routes, absolute when the
    /// Lorentz torque vanishes.
    pub fn torque_method_error(&self) -> f64 {
        let diff = (self.torque - self.torque_lorentz).abs();
        if self.torque_lorentz == 0.0 {
            diff
        } else {
            diff / self.torque_lorentz.abs()
        }
    }
}

pub fn evaluate(model: &CouplerModel, sol: &FieldSolution) -> Result<OperatingPoint> {
    let fields = element_fields(model, sol);
    let stats = current_stats_from_fields(model, sol, &fields);
    Ok(OperatingPoint {
        omega_slip: sol.omega_slip,
        torque: torque_arkkio(model, sol)?,
        torque_lorentz: torque_lorentz(model, sol),
        loss: ohmic_loss(model, sol),
        avg_j: stats.avg,
        max_j: stats.max,
        asymmetry: stats.asymmetry,
        demag: demag_from_fields(model, &fields),
        iterations: sol.iterations,
        peclet: sol.peclet,
    })
}

/// A slip point that did not produce a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub omega_slip: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TorqueSpeedCurve {
    pub rows: Vec<OperatingPoint>,
    pub failures: Vec<FailedPoint>,
}

impl TorqueSpeedCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{:.6}, {:.9e}, {:.9e}, {:.6}, {:.6}, {:.6}",
                r.omega_slip, r.torque, r.loss, r.avg_j, r.max_j, r.demag.margin
            )
            .expect("writing to a String");
        }
        out
    }

    /// Row with the largest torque.
    pub fn peak(&self) -> Option<&OperatingPoint> {
        self.rows.iter().max_by(|a, b| a.torque.total_cmp(&b.torque))
    }

    /// First slip at which the mean sheet current density reaches
    /// `threshold` (A/mm²), linearly interpolated between rows.
    pub fn thermal_limit_slip(&self, threshold: f64) -> Option<f64> {
        let rows: Vec<&OperatingPoint> = self.rows.iter().filter(|r| r.omega_slip >= 0.0).collect();
        if let Some(first) = rows.first() {
            if first.avg_j >= threshold {
                return Some(first.omega_slip);
            }
        }
        rows.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            (a.avg_j < threshold && b.avg_j >= threshold)
                .then(|| a.omega_slip + (threshold - a.avg_j) / (b.avg_j - a.avg_j) * (b.omega_slip - a.omega_slip))
        })
    }

    /// Number of strict interior local maxima of the torque column.
    pub fn interior_maxima(&self) -> usize {
        self.rows.windows(3).filter(|w| w[1].torque > w[0].torque && w[1].torque > w[2].torque).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Start every point from the previous converged one. Forces sequential
    /// execution.
    pub warm_start: bool,
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { warm_start: true, jobs: 1 }
    }
}

/// Solve every slip in `slips` (ascending, rad/s) on one mesh.
pub fn sweep_torque_speed(
    model: &CouplerModel,
    slips: &[f64],
    opts: &SolverOptions,
    sweep: SweepOptions,
) -> Result<TorqueSpeedCurve> {
    if slips.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("slips", "must be strictly ascending"));
    }
    let mut results: Vec<Result<OperatingPoint>> = Vec::with_capacity(slips.len());
    if sweep.warm_start || sweep.jobs <= 1 {
        let mut previous: Option<FieldSolution> = None;
        for &w in slips {
            let warm = if sweep.warm_start { previous.as_ref() } else { None };
            match model.solve(w, opts, warm) {
                Ok(sol) => {
                    results.push(evaluate(model, &sol));
                    previous = Some(sol);
                }
                Err(e) => results.push(Err(e)),
            }
        }
    } else {
        let jobs = sweep.jobs.min(slips.len()).max(1);
        let mut slots: Vec<Option<Result<OperatingPoint>>> = (0..slips.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    scope.spawn(move || {
                        (j..slips.len())
                            .step_by(jobs)
                            .map(|i| (i, model.solve(slips[i], opts, None).and_then(|s| evaluate(model, &s))))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("sweep worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        results = slots.into_iter().map(|r| r.expect("every slip assigned")).collect();
    }
    let mut curve = TorqueSpeedCurve::default();
    for (w, r) in slips.iter().zip(results) {
        match r {
            Ok(p) => curve.rows.push(p),
            Err(e) if matches!(e, Error::NonConvergence { .. } | Error::Singular(_)) => {
                warn!("slip {w} rad/s failed: {e}");
                curve.failures.push(FailedPoint { omega_slip: *w, reason: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(curve)
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Convert rpm to rad/s.
pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * PI / 30.0
}
