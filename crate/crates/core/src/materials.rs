//! Constitutive data: lamination B–H curves, magnets, the conductive sheet.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{CouplerSpec, RegionTag};

/// Permeability of free space (H/m).
pub const MU_0: f64 = 4.0e-7 * PI;

/// Reluctivity of free space (m/H).
pub const NU_0: f64 = 1.0 / MU_0;

const DEFAULT_LAMINATION_CSV: &str = include_str!("../data/m_grade_lamination.csv");

/// Single-valued magnetization curve of a soft magnetic material.
///
/// Reluctivity `ν = H/B` is interpolated as a monotone cubic in `B²` through
/// the samples. Past the last sample the material is treated as fully
/// saturated, `dH/dB = 1/μ0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BhCurve {
    b: Vec<f64>,
    h: Vec<f64>,
    // Knots of the ν(B²) spline.
    b2: Vec<f64>,
    nu: Vec<f64>,
    slope: Vec<f64>,
}

impl BhCurve {
    /// Build from `(B, H)` samples. `(0, 0)` is prepended when missing.
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = samples.to_vec();
        if pts.first().map(|p| p.0 != 0.0).unwrap_or(true) {
            pts.insert(0, (0.0, 0.0));
        }
        if pts[0].1 != 0.0 {
            return Err(Error::validation("bh_curve", "H(0) must be 0"));
        }
        if pts.len() < 3 {
            return Err(Error::validation("bh_curve", "need at least two non-zero samples"));
        }
        for w in pts.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::validation(
                    "bh_curve",
                    format!("B and H must increase strictly (at B = {} T)", w[1].0),
                ));
            }
        }
        let b: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let h: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
        let mut nu: Vec<f64> = b.iter().zip(&h).skip(1).map(|(b, h)| h / b).collect();
        nu.insert(0, h[1] / b[1]);

        let n = b2.len();
        let (b_last, h_last) = (b[n - 1], h[n - 1]);
        let tail_slope = (b_last * NU_0 - h_last) / (2.0 * b_last.powi(3));
        let slope = pchip_slopes(&b2, &nu, tail_slope.max(0.0));
        Ok(BhCurve { b, h, b2, nu, slope })
    }

    /// Two-column CSV, `B` (T) then `H` (A/m), with a header row.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::validation("bh_curve", "empty CSV"))?;
        if header.split(',').any(|f| f.trim().parse::<f64>().is_ok()) {
            return Err(Error::validation("bh_curve", "CSV header row is required"));
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: Option<&&str>| -> Result<f64> {
                s.and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::validation("bh_curve", format!("bad number on data row {}", i + 1)))
            };
            if fields.len() != 2 {
                return Err(Error::validation("bh_curve", format!("data row {} needs 2 columns", i + 1)));
            }
            samples.push((parse(fields.first())?, parse(fields.get(1))?));
        }
        Self::new(&samples)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    /// Bundled silicon-steel lamination curve (initial μr = 4000, knee ~1.7–1.8 T).
    pub fn default_lamination() -> Self {
        Self::from_csv_str(DEFAULT_LAMINATION_CSV).expect("bundled B-H data is valid")
    }

    pub fn initial_relative_permeability(&self) -> f64 {
        NU_0 / self.nu[0]
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.b.iter().copied().zip(self.h.iter().copied())
    }

    /// `(ν, dν/dB²)` at squared flux density `b2`.
    pub fn reluctivity(&self, b2: f64) -> (f64, f64) {
        let b2 = b2.max(0.0);
        let n = self.b2.len();
        if b2 >= self.b2[n - 1] {
            let (b_last, h_last) = (self.b[n - 1], self.h[n - 1]);
            let b = b2.sqrt();
            let nu = (h_last + (b - b_last) * NU_0) / b;
            let dnu = (b_last * NU_0 - h_last) / (2.0 * b * b2);
            return (nu, dnu);
        }
        let k = match self.b2.partition_point(|&x| x <= b2) {
            0 => 0,
            i => i - 1,
        };
        hermite(self.b2[k], self.b2[k + 1], self.nu[k], self.nu[k + 1], self.slope[k], self.slope[k + 1], b2)
    }

    /// `H` magnitude for flux density magnitude `b`.
    pub fn h_of_b(&self, b: f64) -> f64 {
        let b = b.abs();
        self.reluctivity(b * b).0 * b
    }

    /// Differential permeability's inverse `dH/dB` at flux density `b`.
    pub fn dh_db(&self, b: f64) -> f64 {
        let (nu, dnu) = self.reluctivity(b * b);
        nu + 2.0 * b * b * dnu
    }

    /// Inverse of [`BhCurve::h_of_b`], odd in `h`.
    pub fn b_of_h(&self, h: f64) -> f64 {
        let target = h.abs();
        if target == 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, target / self.nu[0]);
        while self.h_of_b(hi) < target {
            lo = hi;
            hi *= 2.0;
        }
        let mut b = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.h_of_b(b) - target;
            if f.abs() <= 1e-13 * target {
                break;
            }
            if f > 0.0 {
                hi = b;
            } else {
                lo = b;
            }
            let newton = b - f / self.dh_db(b);
            b = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        b.copysign(h)
    }
}

/// Fritsch–Carlson slopes for a monotone piecewise cubic; the right end slope
/// is prescribed so the saturated tail joins with a continuous derivative.
fn pchip_slopes(x: &[f64], y: &[f64], right: f64) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    // Left end: one-sided shape-preserving estimate.
    let d0 = ((2.0 * h[0] + h.get(1).copied().unwrap_or(0.0)) * delta[0]
        - h[0] * delta.get(1).copied().unwrap_or(delta[0]))
        / (h[0] + h.get(1).copied().unwrap_or(0.0));
    d[0] = if d0 * delta[0] <= 0.0 { 0.0 } else { d0.min(3.0 * delta[0]) };
    d[n - 1] = right;
    // Keep the last interval monotone by shrinking its interior slope if needed.
    let last = delta[n - 2];
    if last > 0.0 {
        let (a, b) = (d[n - 2] / last, d[n - 1] / last);
        let r = a * a + b * b;
        if r > 9.0 && b < 3.0 {
            d[n - 2] = last * (9.0 - b * b).sqrt();
        }
    }
    d
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let y = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dy = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * h * d0 + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * h * d1)
        / h;
    (y, dy)
}

/// Reluctivity law of one region.
#[derive(Debug, Clone, PartialEq)]
pub enum Reluctivity {
    Linear(f64),
    Nonlinear(Arc<BhCurve>),
}

impl Reluctivity {
    pub fn air() -> Self {
        Reluctivity::Linear(NU_0)
    }

    pub fn evaluate(&self, b2: f64) -> (f64, f64) {
        match self {
            Reluctivity::Linear(nu) => (*nu, 0.0),
            Reluctivity::Nonlinear(curve) => curve.reluctivity(b2),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Reluctivity::Linear(_))
    }
}

/// `(ν, dν/dB²)` of a material at `b2`.
pub fn reluctivity(material: &Reluctivity, b2: f64) -> (f64, f64) {
    material.evaluate(b2)
}

/// Linear-recoil permanent magnet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmProps {
    /// Normal coercivity (A/m).
    pub h_c: f64,
    pub mu_r: f64,
    /// Remanence (T), always `μ0·μr·Hc`.
    pub b_r: f64,
}

impl PmProps {
    pub fn new(h_c: f64, mu_r: f64) -> Result<Self> {
        if !(h_c.is_finite() && h_c > 0.0) {
            return Err(Error::validation("H_c", format!("coercivity must be positive, got {h_c}")));
        }
        if !(mu_r.is_finite() && mu_r >= 1.0) {
            return Err(Error::validation("mu_r", format!("recoil permeability must be >= 1, got {mu_r}")));
        }
        Ok(PmProps { h_c, mu_r, b_r: MU_0 * mu_r * h_c })
    }

    /// N35 NdFeB at room temperature.
    pub fn n35() -> Self {
        PmProps::new(870e3, 1.05).expect("valid defaults")
    }

    pub fn nu(&self) -> f64 {
        NU_0 / self.mu_r
    }

    /// Magnetization magnitude entering the source term, `Br/(μ0·μr)` (A/m).
    pub fn source_magnetization(&self) -> f64 {
        self.b_r * self.nu()
    }
}

/// `Hc`/`μr` pair to full magnet properties.
pub fn pm_properties(h_c: f64, mu_r: f64) -> Result<PmProps> {
    PmProps::new(h_c, mu_r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductorProps {
    /// Bulk conductivity (S/m).
    pub sigma: f64,
    /// End-effect factor in (0, 1].
    pub k_end: f64,
}

impl ConductorProps {
    pub fn new(sigma: f64, k_end: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::validation("sigma", format!("conductivity must be non-negative, got {sigma}")));
        }
        if !(k_end > 0.0 && k_end <= 1.0) {
            return Err(Error::validation("k_end", format!("must lie in (0, 1], got {k_end}")));
        }
        Ok(ConductorProps { sigma, k_end })
    }

    pub fn sigma_eff(&self) -> f64 {
        self.sigma * self.k_end
    }
}

pub const COPPER_SIGMA: f64 = 5.8e7;

/// Russell–Norsworthy conductivity factor for a sheet of active length
/// `l_ax` with overhang `h_ov` at each end, under a field of pole pitch `tau_p`.
pub fn russell_norsworthy(l_ax: f64, tau_p: f64, h_ov: f64) -> f64 {
    let x = PI * l_ax / (2.0 * tau_p);
    let tx = x.tanh();
    let to = (PI * h_ov / tau_p).tanh();
    1.0 - tx / (x * (1.0 + tx * to))
}

/// Material choices for a coupler; region-level data is derived by [`MaterialMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSet {
    pub iron: Arc<BhCurve>,
    /// Shaft follows the lamination curve when true, air otherwise.
    pub shaft_magnetic: bool,
    pub pm: PmProps,
    /// Bulk conductivity of the sheet (S/m).
    pub cs_sigma: f64,
    /// Overrides the Russell–Norsworthy factor when set.
    pub k_end_override: Option<f64>,
}

impl Default for MaterialSet {
    fn default() -> Self {
        MaterialSet {
            iron: Arc::new(BhCurve::default_lamination()),
            shaft_magnetic: true,
            pm: PmProps::n35(),
            cs_sigma: COPPER_SIGMA,
            k_end_override: None,
        }
    }
}

/// Per-region constitutive data for one coupler.
#[derive(Debug, Clone)]
pub struct RegionMaterial {
    pub reluctivity: Reluctivity,
    /// Effective conductivity for the motional term (S/m).
    pub sigma: f64,
    /// Source magnetization `Br/(μ0μr)·m̂` (A/m), magnets only.
    pub magnetization: Option<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct MaterialMap {
    pub spec: CouplerSpec,
    pub set: MaterialSet,
    pub conductor: ConductorProps,
}

impl MaterialMap {
    pub fn new(spec: &CouplerSpec, set: MaterialSet) -> Result<Self> {
        spec.validate()?;
        let k_end = match set.k_end_override {
            Some(k) => k,
            None => russell_norsworthy(spec.l_ax, spec.tau_p(), spec.h_ov),
        };
        let conductor = ConductorProps::new(set.cs_sigma, k_end)?;
        Ok(MaterialMap { spec: spec.clone(), set, conductor })
    }

    pub fn pm(&self) -> &PmProps {
        &self.set.pm
    }

    pub fn sigma_eff(&self) -> f64 {
        self.conductor.sigma_eff()
    }

    pub fn region(&self, tag: RegionTag) -> RegionMaterial {
        let iron = || Reluctivity::Nonlinear(self.set.iron.clone());
        match tag {
            RegionTag::Shaft if self.set.shaft_magnetic => RegionMaterial { reluctivity: iron(), sigma: 0.0, magnetization: None },
            RegionTag::PoleIron | RegionTag::OuterYoke => {
                RegionMaterial { reluctivity: iron(), sigma: 0.0, magnetization: None }
            }
            RegionTag::Pm { index, .. } => {
                let m = self.set.pm.source_magnetization();
                let dir = self.spec.magnetization_direction(index);
                RegionMaterial {
                    reluctivity: Reluctivity::Linear(self.set.pm.nu()),
                    sigma: 0.0,
                    magnetization: Some([m * dir[0], m * dir[1]]),
                }
            }
            RegionTag::Cs => RegionMaterial { reluctivity: Reluctivity::air(), sigma: self.sigma_eff(), magnetization: None },
            RegionTag::Shaft | RegionTag::AirGap => {
                RegionMaterial { reluctivity: Reluctivity::air(), sigma: 0.0, magnetization: None }
            }
        }
    }
}
