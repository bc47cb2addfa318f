//! Closed-form reference solutions and the FEM comparisons built on them.
//!
//! * [`slab_eddy_force`]: a travelling field over a thin conducting sheet
//!   between two ideal-iron half spaces.
//! * [`HarmonicCylinder`]: a `p`-pole current sheet inside concentric linear
//!   annuli, exact in `r^{±p}` harmonics.
//! * [`MmsCase`]: a manufactured solution of the full convective operator.

use std::sync::Arc;

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FieldSystem, SolverOptions};
use crate::geometry::{build_region_map, CouplerSpec, RegionTag};
use crate::materials::{MaterialSet, Reluctivity, MU_0, NU_0};
use crate::mesh::{generate_mesh, refine_uniform, Mesh, MeshDensity};
use crate::model::CouplerModel;
use crate::postprocess::{airgap_band, airgap_br_harmonic};

/// Travelling-field layer problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabCase {
    /// Normal flux density amplitude without sheet currents (T).
    pub b0: f64,
    /// Pole pitch (m).
    pub tau_p: f64,
    /// Sheet velocity relative to the field (m/s).
    pub v: f64,
    /// Sheet conductance `σ·thickness` (S).
    pub sigma_s: f64,
    /// Iron-to-iron clearance (m).
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabForce {
    /// Time-averaged shear stress on the sheet, along `v` (N/m²).
    pub stress: f64,
    /// Time-averaged Joule loss per unit sheet area (W/m²).
    pub loss: f64,
}

impl SlabCase {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_p > 0.0) {
            return Err(Error::validation("tau_p", "pole pitch must be positive"));
        }
        if !(self.sigma_s >= 0.0) {
            return Err(Error::validation("sigma_s", "sheet conductance must be non-negative"));
        }
        if !(self.gap > 0.0) {
            return Err(Error::validation("gap", "clearance must be positive"));
        }
        Ok(())
    }

    fn wavenumber(&self) -> f64 {
        std::f64::consts::PI / self.tau_p
    }

    /// Magnetic Reynolds number of the sheet, `μ0 σ_s v coth(kG)`.
    pub fn reynolds(&self) -> f64 {
        let kg = self.wavenumber() * self.gap;
        MU_0 * self.sigma_s * self.v / kg.tanh()
    }

    /// Slip velocity of maximum stress.
    pub fn peak_velocity(&self) -> f64 {
        (self.wavenumber() * self.gap).tanh() / (MU_0 * self.sigma_s)
    }

    /// Largest attainable stress, reached at [`SlabCase::peak_velocity`].
    pub fn peak_stress(&self) -> f64 {
        self.b0 * self.b0 * (self.wavenumber() * self.gap).tanh() / (4.0 * MU_0)
    }
}

/// Stress and loss of the layer model.
///
/// With sheet current `K = σ_s v B_y` and Ampère's law across the gap, the
/// normal field seen by the sheet is `B0 / (1 + jε)`, `ε = μ0 σ_s v coth(kG)`.
pub fn slab_eddy_force(case: &SlabCase) -> Result<SlabForce> {
    case.validate()?;
    let eps = case.reynolds();
    let by2 = case.b0 * case.b0 / (1.0 + eps * eps);
    let stress = 0.5 * case.sigma_s * case.v * by2;
    Ok(SlabForce { stress, loss: stress * case.v })
}

/// `p`-pole current sheet `K cos pθ` (A/m) on one interface of a stack of
/// linear annuli, with `A = 0` on the outermost radius.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCylinder {
    pub p: usize,
    pub k: f64,
    /// Outer radius of every annulus; the first annulus contains the axis.
    pub radii: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub sheet: usize,
    // A = (a (r/R)^p + b (R/r)^p) cos pθ in annulus i.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl HarmonicCylinder {
    /// `sheet` is the index into `radii` of the interface carrying the current.
    pub fn new(p: usize, k: f64, radii: &[f64], mu_r: &[f64], sheet: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::validation("p", "pole-pair count must be positive"));
        }
        if radii.len() < 2 || mu_r.len() != radii.len() {
            return Err(Error::validation("radii", "need at least two annuli and one permeability per annulus"));
        }
        if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("radii", "radii must be positive and strictly increasing"));
        }
        if sheet + 1 >= radii.len() {
            return Err(Error::validation("sheet", "the current sheet must lie on an interior interface"));
        }
        if mu_r.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::validation("mu_r", "permeabilities must be positive"));
        }
        let n = radii.len();
        let big_r = radii[n - 1];
        let pf = p as f64;
        // Unknowns: a_0, then (a_i, b_i) for i >= 1.
        let col_a = |i: usize| if i == 0 { 0 } else { 2 * i - 1 };
        let col_b = |i: usize| 2 * i;
        let size = 2 * n - 1;
        let mut m = Mat::<f64>::zeros(size, size);
        let mut rhs = Mat::<f64>::zeros(size, 1);
        let mut row = 0;
        for j in 0..n - 1 {
            let r = radii[j];
            let (up, down) = ((r / big_r).powf(pf), (big_r / r).powf(pf));
            // A continuous.
            m[(row, col_a(j))] += up;
            if j > 0 {
                m[(row, col_b(j))] += down;
            }
            m[(row, col_a(j + 1))] -= up;
            m[(row, col_b(j + 1))] -= down;
            row += 1;
            // (1/μ_in) ∂A/∂r|in − (1/μ_out) ∂A/∂r|out = μ0 K.
            let (g_in, g_out) = (1.0 / mu_r[j], 1.0 / mu_r[j + 1]);
            m[(row, col_a(j))] += g_in * pf / r * up;
            if j > 0 {
                m[(row, col_b(j))] -= g_in * pf / r * down;
            }
            m[(row, col_a(j + 1))] -= g_out * pf / r * up;
            m[(row, col_b(j + 1))] += g_out * pf / r * down;
            if j == sheet {
                rhs[(row, 0)] = MU_0 * k;
            }
            row += 1;
        }
        m[(row, col_a(n - 1))] = 1.0;
        m[(row, col_b(n - 1))] = 1.0;
        let x = m.partial_piv_lu().solve(&rhs);
        let a = (0..n).map(|i| x[(col_a(i), 0)]).collect();
        let b = (0..n).map(|i| if i == 0 { 0.0 } else { x[(col_b(i), 0)] }).collect();
        Ok(HarmonicCylinder { p, k, radii: radii.to_vec(), mu_r: mu_r.to_vec(), sheet, a, b })
    }

    fn annulus_of(&self, r: f64) -> usize {
        self.radii.iter().position(|&x| r <= x).unwrap_or(self.radii.len() - 1)
    }

    /// Radial profile `f(r)` and `df/dr` in `A = f(r) cos pθ`, evaluated in annulus `i`.
    fn profile_in(&self, i: usize, r: f64) -> (f64, f64) {
        let big_r = *self.radii.last().expect("non-empty");
        let pf = self.p as f64;
        let (up, down) = ((r / big_r).powf(pf), if r > 0.0 { (big_r / r).powf(pf) } else { 0.0 });
        let f = self.a[i] * up + self.b[i] * down;
        let df = if r > 0.0 { pf / r * (self.a[i] * up - self.b[i] * down) } else { 0.0 };
        (f, df)
    }

    pub fn potential(&self, r: f64, theta: f64) -> f64 {
        self.profile_in(self.annulus_of(r), r).0 * (self.p as f64 * theta).cos()
    }

    /// `(B_r, B_θ)` at a point.
    pub fn flux_density(&self, r: f64, theta: f64) -> [f64; 2] {
        let (f, df) = self.profile_in(self.annulus_of(r), r);
        let pt = self.p as f64 * theta;
        [-(self.p as f64) * f / r * pt.sin(), -df * pt.cos()]
    }

    /// Amplitude of `B_r` at radius `r`.
    pub fn br_amplitude(&self, r: f64) -> f64 {
        (self.p as f64 * self.profile_in(self.annulus_of(r), r).0 / r).abs()
    }

    /// Area-weighted mean of [`HarmonicCylinder::br_amplitude`] over `[r0, r1]`.
    pub fn br_amplitude_band(&self, r0: f64, r1: f64) -> f64 {
        let n = 400;
        let h = (r1 - r0) / n as f64;
        let mut num = 0.0;
        for i in 0..=n {
            let r = r0 + h * i as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            num += w * self.br_amplitude(r) * r;
        }
        num * h / 3.0 / (0.5 * (r1 * r1 - r0 * r0))
    }

    /// Residuals of the interface conditions at interface `j`:
    /// `(A jump, H_θ jump − K)`, per unit `cos pθ`.
    pub fn interface_residual(&self, j: usize) -> (f64, f64) {
        let r = self.radii[j];
        let (f_in, df_in) = self.profile_in(j, r);
        let (f_out, df_out) = self.profile_in(j + 1, r);
        let h_in = -df_in / (MU_0 * self.mu_r[j]);
        let h_out = -df_out / (MU_0 * self.mu_r[j + 1]);
        let k = if j == self.sheet { self.k } else { 0.0 };
        (f_out - f_in, h_out - h_in - k)
    }
}

/// Nodal load of the sheet `K cos pθ` on the mesh edges lying on radius `r`.
pub fn ring_sheet_load(mesh: &Mesh, r: f64, p: usize, k: f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_nodes()];
    let on_ring = |i: usize| {
        let q = mesh.nodes[i];
        (q[0].hypot(q[1]) - r).abs() <= 1e-9 * r
    };
    let mut seen = std::collections::HashSet::new();
    for t in &mesh.elements {
        for s in 0..3 {
            let (i, j) = (t[s], t[(s + 1) % 3]);
            if !(on_ring(i) && on_ring(j)) || !seen.insert((i.min(j), i.max(j))) {
                continue;
            }
            let (pi, pj) = (mesh.nodes[i], mesh.nodes[j]);
            let len = (pj[0] - pi[0]).hypot(pj[1] - pi[1]);
            let kf = |q: [f64; 2]| k * (p as f64 * q[1].atan2(q[0])).cos();
            let mid = [0.5 * (pi[0] + pj[0]), 0.5 * (pi[1] + pj[1])];
            // Simpson's rule on K·φ along the chord.
            load[i] += len * (kf(pi) / 6.0 + kf(mid) / 3.0);
            load[j] += len * (kf(pj) / 6.0 + kf(mid) / 3.0);
        }
    }
    load
}

/// Linear comparison case: the coupler mesh with magnets and iron replaced by
/// one linear material, the sheet region made non-conducting, and a current
/// sheet on the gap/sheet interface.
#[derive(Debug, Clone)]
pub struct CylinderComparison {
    pub fem_br1: f64,
    pub oracle_br1: f64,
    pub relative_error: f64,
    pub r_band: (f64, f64),
}

pub fn cylinder_comparison(
    spec: &CouplerSpec,
    density: MeshDensity,
    refine: usize,
    mu_iron: f64,
    k: f64,
) -> Result<CylinderComparison> {
    let mut model = CouplerModel::new(spec, MaterialSet::default(), density, refine)?;
    let iron_nu = NU_0 / mu_iron;
    for (m, tag) in model.system.materials.iter_mut().zip(&model.material_tags) {
        m.magnetization = None;
        m.sigma = 0.0;
        m.reluctivity = match tag {
            RegionTag::AirGap | RegionTag::Cs => Reluctivity::air(),
            _ => Reluctivity::Linear(iron_nu),
        };
    }
    let p = spec.pole_pairs();
    let r_sheet = spec.r_gap_outer();
    model.system.source = ring_sheet_load(model.mesh(), r_sheet, p, k);
    let opts = SolverOptions::default();
    let newton = model.system.solve(0.0, &opts, None)?;
    let sol = model.solution_from_potential(newton.a, 0.0);
    let band = airgap_band(&model)?;
    let fem = airgap_br_harmonic(&model, &sol, &band, p);

    let radii = [spec.r_inner_yoke(), r_sheet, spec.r_cs_outer(), spec.r_outer()];
    let oracle = HarmonicCylinder::new(p, k, &radii, &[mu_iron, 1.0, 1.0, mu_iron], 1)?;
    let exact = oracle.br_amplitude_band(band.r_in, band.r_out);
    Ok(CylinderComparison {
        fem_br1: fem,
        oracle_br1: exact,
        relative_error: (fem - exact).abs() / exact,
        r_band: (band.r_in, band.r_out),
    })
}

/// Manufactured solution `A = r^k (1 − (r/R)²) cos kθ` of
/// `−ν ΔA + σω ∂A/∂θ = f` on the disk of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmsCase {
    pub k: u32,
    pub nu: f64,
    pub sigma_omega: f64,
    pub radius: f64,
}

impl MmsCase {
    /// `k = 0` is the trivial case: zero solution and zero source.
    pub fn new(k: u32, nu: f64, sigma_omega: f64, radius: f64) -> Self {
        MmsCase { k, nu, sigma_omega, radius }
    }

    fn amplitude(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            // Normalised so that the peak of r^k (1 − (r/R)²) is O(1).
            self.radius.powi(-(self.k as i32))
        }
    }

    pub fn exact(&self, p: [f64; 2]) -> f64 {
        let (r, theta) = (p[0].hypot(p[1]), p[1].atan2(p[0]));
        let kf = self.k as f64;
        self.amplitude() * r.powi(self.k as i32) * (1.0 - (r / self.radius).powi(2)) * (kf * theta).cos()
    }

    pub fn source(&self, p: [f64; 2]) -> f64 {
        let (r, theta) = (p[0].hypot(p[1]), p[1].atan2(p[0]));
        let kf = self.k as f64;
        let rk = r.powi(self.k as i32);
        let r2 = self.radius * self.radius;
        // Δ(r^k cos kθ) = 0 and Δ(r^{k+2} cos kθ) = (4k+4) r^k cos kθ.
        let diffusion = self.nu * (4.0 * kf + 4.0) / r2 * rk * (kf * theta).cos();
        let convection = -self.sigma_omega * kf * rk * (1.0 - r * r / r2) * (kf * theta).sin();
        self.amplitude() * (diffusion + convection)
    }
}

// Degree-5 seven-point triangle rule (barycentric point, weight).
const STRANG_FIX: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W1: f64 = 0.132_394_152_788_506;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

fn quad_points(p: [[f64; 2]; 3]) -> impl Iterator<Item = ([f64; 3], [f64; 2], f64)> {
    STRANG_FIX.into_iter().map(move |(l, w)| {
        let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
        let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
        (l, [x, y], w)
    })
}

/// Discretization error of one manufactured-solution solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmsLevel {
    pub n_nodes: usize,
    pub h: f64,
    pub l2_error: f64,
}

/// Solve the manufactured problem on `mesh` with uniform coefficients.
pub fn mms_solve(case: &MmsCase, mesh: Mesh) -> Result<MmsLevel> {
    let n_e = mesh.n_elements();
    let material = crate::materials::RegionMaterial {
        reluctivity: Reluctivity::Linear(case.nu),
        sigma: case.sigma_omega,
        magnetization: None,
    };
    let mut system = FieldSystem::new(Arc::new(mesh), vec![material], vec![0; n_e])?;
    let mesh = system.mesh.clone();
    let mut load = vec![0.0; mesh.n_nodes()];
    for (e, t) in mesh.elements.iter().enumerate() {
        let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
        let area = system.geom[e].area;
        for (l, x, w) in quad_points(p) {
            let f = case.source(x) * w * area;
            for i in 0..3 {
                load[t[i]] += f * l[i];
            }
        }
    }
    system.source = load;
    // ω = 1 so that σ carries the prescribed σω.
    let newton = system.solve(1.0, &SolverOptions::default(), None)?;
    let mut err2 = 0.0;
    let mut h: f64 = 0.0;
    for (e, t) in mesh.elements.iter().enumerate() {
        let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
        let area = system.geom[e].area;
        h = h.max((2.0 * area).sqrt());
        for (l, x, w) in quad_points(p) {
            let ah = l[0] * newton.a[t[0]] + l[1] * newton.a[t[1]] + l[2] * newton.a[t[2]];
            err2 += w * area * (ah - case.exact(x)).powi(2);
        }
    }
    Ok(MmsLevel { n_nodes: mesh.n_nodes(), h, l2_error: err2.sqrt() })
}

/// Errors on `levels` successive uniform refinements of `mesh`.
pub fn mms_study(case: &MmsCase, mesh: &Mesh, levels: usize) -> Result<Vec<MmsLevel>> {
    let mut out = Vec::with_capacity(levels);
    let mut current = mesh.clone();
    for level in 0..levels {
        if level > 0 {
            current = refine_uniform(&current);
        }
        out.push(mms_solve(case, current.clone())?);
    }
    Ok(out)
}

/// Coarse coupler-geometry mesh used as the first level of convergence
/// studies. Its layers are thick enough that the error is in the asymptotic
/// range from the first refinement on.
pub fn mms_base_mesh(spec: &CouplerSpec) -> Result<Mesh> {
    let density = MeshDensity { n_theta: 48, shaft: 2, inner_yoke: 3, air_gap: 1, cs: 1, outer_yoke: 2, ..MeshDensity::default() };
    generate_mesh(&build_region_map(spec)?, density)
}

/// Observed orders `log2(e_i / e_{i+1})` between successive halvings.
pub fn observed_orders(levels: &[MmsLevel]) -> Vec<f64> {
    levels.windows(2).map(|w| (w[0].l2_error / w[1].l2_error).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_slab(v: f64) -> SlabCase {
        SlabCase { b0: 0.4, tau_p: 0.0377, v, sigma_s: 0.66 * 5.8e7 * 1e-3, gap: 1.5e-3 }
    }

    #[test]
    fn slab_limits_and_power_balance() {
        let zero = slab_eddy_force(&table_slab(0.0)).unwrap();
        assert_eq!(zero.stress, 0.0);
        assert_eq!(zero.loss, 0.0);
        let open = slab_eddy_force(&SlabCase { sigma_s: 0.0, ..table_slab(10.0) }).unwrap();
        assert_eq!(open.stress, 0.0);
        for v in [0.1, 1.0, 7.0, 40.0] {
            let f = slab_eddy_force(&table_slab(v)).unwrap();
            assert!((f.stress - f.loss / v).abs() <= 1e-12 * f.stress);
            let g = slab_eddy_force(&table_slab(-v)).unwrap();
            assert_eq!(g.stress, -f.stress);
            assert_eq!(g.loss, f.loss);
        }
    }

    #[test]
    fn slab_peak_matches_closed_form() {
        let case = table_slab(1.0);
        let vp = case.peak_velocity();
        let fp = slab_eddy_force(&SlabCase { v: vp, ..case }).unwrap().stress;
        assert!((fp - case.peak_stress()).abs() < 1e-12 * fp);
        for s in [0.9, 0.99, 1.01, 1.1] {
            assert!(slab_eddy_force(&SlabCase { v: vp * s, ..case }).unwrap().stress < fp);
        }
        let doubled = SlabCase { sigma_s: 2.0 * case.sigma_s, ..case };
        assert!((doubled.peak_velocity() - 0.5 * vp).abs() < 1e-12 * vp);
    }

    #[test]
    fn slab_rejects_bad_input() {
        assert!(slab_eddy_force(&SlabCase { tau_p: 0.0, ..table_slab(1.0) }).is_err());
        assert!(slab_eddy_force(&SlabCase { sigma_s: -1.0, ..table_slab(1.0) }).is_err());
    }

    #[test]
    fn cylinder_interfaces_hold() {
        let c = HarmonicCylinder::new(3, 1e4, &[0.035, 0.0355, 0.0365, 0.0445], &[1000.0, 1.0, 1.0, 1000.0], 1).unwrap();
        for j in 0..3 {
            let (da, dh) = c.interface_residual(j);
            assert!(da.abs() < 1e-12 * c.potential(0.0355, 0.0).abs(), "A jump at {j}: {da}");
            assert!(dh.abs() < 1e-12 * c.k, "H jump at {j}: {dh}");
        }
        assert!(c.potential(0.0445, 0.3).abs() < 1e-15);
    }

    #[test]
    fn cylinder_free_space_sheet() {
        let c = HarmonicCylinder::new(2, 5e3, &[0.02, 0.05], &[1.0, 1.0], 0).unwrap();
        let (eps, r) = (1e-9, 0.02);
        let bt_in = c.flux_density(r - eps, 0.0)[1];
        let bt_out = c.flux_density(r + eps, 0.0)[1];
        assert!(((bt_out - bt_in) - MU_0 * 5e3).abs() < 1e-6 * MU_0 * 5e3);
        assert!((c.potential(r - eps, 0.4) - c.potential(r + eps, 0.4)).abs() < 1e-6 * c.potential(r, 0.0).abs());
        let zero = HarmonicCylinder::new(2, 0.0, &[0.02, 0.05], &[1.0, 1.0], 0).unwrap();
        assert_eq!(zero.potential(0.03, 0.1), 0.0);
    }

    #[test]
    fn cylinder_rejects_bad_radii() {
        assert!(HarmonicCylinder::new(3, 1.0, &[0.03, 0.02], &[1.0, 1.0], 0).is_err());
        assert!(HarmonicCylinder::new(3, 1.0, &[0.02, 0.03], &[1.0], 0).is_err());
        assert!(HarmonicCylinder::new(3, 1.0, &[0.02, 0.03], &[1.0, 1.0], 1).is_err());
    }

    #[test]
    fn mms_trivial_case() {
        let case = MmsCase::new(0, 1.0, 5.0, 0.04);
        assert_eq!(case.exact([0.01, 0.02]), 0.0);
        assert_eq!(case.source([0.01, 0.02]), 0.0);
    }
}
