//! JSON run configuration.
//!
//! Lengths are given in millimetres and converted to metres on load; speeds
//! carry an explicit unit. Omitted sections fall back to the prototype device.
//!
//! ```
//! use ecoupler::config::RunConfig;
//!
//! let cfg = RunConfig::from_json_str(r#"{
//!     "coupler": { "h_m_mm": 6.0 },
//!     "sweep": { "unit": "rpm", "list": [100, 200] }
//! }"#).unwrap();
//! assert_eq!(cfg.spec().unwrap().h_m, 6e-3);
//! assert!((cfg.slips().unwrap()[0] - 10.471975511965976).abs() < 1e-12);
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SolverOptions;
use crate::geometry::{CouplerSpec, SlipDirection};
use crate::materials::{BhCurve, MaterialSet, PmProps};
use crate::mesh::MeshDensity;
use crate::postprocess::THERMAL_LIMIT_A_MM2;

const MM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub coupler: CouplerConfig,
    pub materials: MaterialsConfig,
    pub mesh: MeshConfig,
    pub solver: SolverOptions,
    pub sweep: SweepConfig,
    pub output_dir: Option<PathBuf>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplerConfig {
    pub h_m_mm: f64,
    pub g_mm: f64,
    pub l_cs_mm: f64,
    pub l_yp_mm: f64,
    pub l_ys_mm: f64,
    pub r_sh_mm: f64,
    pub h_ov_mm: f64,
    pub l_ax_mm: f64,
    pub n_pm: usize,
    pub pm_grade: String,
    pub pm_embrace: f64,
    pub slip_direction: SlipDirection,
}

impl Default for CouplerConfig {
    fn default() -> Self {
        let s = CouplerSpec::table_i();
        CouplerConfig {
            h_m_mm: s.h_m / MM,
            g_mm: s.g / MM,
            l_cs_mm: s.l_cs / MM,
            l_yp_mm: s.l_yp / MM,
            l_ys_mm: s.l_ys / MM,
            r_sh_mm: s.r_sh / MM,
            h_ov_mm: s.h_ov / MM,
            l_ax_mm: s.l_ax / MM,
            n_pm: s.n_pm,
            pm_grade: s.pm_grade,
            pm_embrace: s.pm_embrace,
            slip_direction: s.slip_direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialsConfig {
    /// Sheet conductivity (S/m).
    pub cs_sigma_s_m: f64,
    /// Magnet coercivity (kA/m).
    pub pm_h_c_ka_m: f64,
    pub pm_mu_r: f64,
    /// Two-column B (T), H (A/m) table with a header row. Relative paths are
    /// resolved against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bh_curve_csv: Option<PathBuf>,
    pub shaft_magnetic: bool,
    /// Replaces the computed end-effect factor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_end: Option<f64>,
}

impl Default for MaterialsConfig {
    fn default() -> Self {
        let m = MaterialSet::default();
        MaterialsConfig {
            cs_sigma_s_m: m.cs_sigma,
            pm_h_c_ka_m: m.pm.h_c / 1e3,
            pm_mu_r: m.pm.mu_r,
            bh_curve_csv: None,
            shaft_magnetic: m.shaft_magnetic,
            k_end: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(flatten)]
    pub density: MeshDensity,
    /// Uniform refinements applied after meshing.
    pub refine: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[serde(rename = "rpm")]
    Rpm,
    #[serde(rename = "rad/s")]
    RadPerSec,
}

impl SpeedUnit {
    pub fn to_rad_s(self, v: f64) -> f64 {
        match self {
            SpeedUnit::Rpm => v * PI / 30.0,
            SpeedUnit::RadPerSec => v,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rpm" => Some(SpeedUnit::Rpm),
            "rad/s" | "rad_s" | "rads" => Some(SpeedUnit::RadPerSec),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub unit: SpeedUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<SlipRange>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { unit: SpeedUnit::Rpm, list: None, range: Some(SlipRange { start: 0.0, stop: 4800.0, points: 25 }) }
    }
}

impl SweepConfig {
    /// Slip speeds in rad/s, in the order given.
    pub fn slips(&self) -> Result<Vec<f64>> {
        let raw = match (&self.list, &self.range) {
            (Some(list), None) => {
                if list.is_empty() {
                    return Err(Error::validation("sweep.list", "is empty"));
                }
                list.clone()
            }
            (None, Some(r)) => {
                if r.points == 0 {
                    return Err(Error::validation("sweep.range.points", "must be at least 1"));
                }
                if r.points == 1 {
                    vec![r.start]
                } else {
                    let step = (r.stop - r.start) / (r.points - 1) as f64;
                    (0..r.points).map(|i| r.start + step * i as f64).collect()
                }
            }
            _ => return Err(Error::validation("sweep", "give exactly one of `list` and `range`")),
        };
        raw.iter()
            .map(|&v| {
                if v.is_finite() {
                    Ok(self.unit.to_rad_s(v))
                } else {
                    Err(Error::validation("sweep", format!("slip {v} is not finite")))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Average sheet current density regarded as the thermal limit (A/mm²).
    pub thermal_j_a_mm2: f64,
    /// Smallest acceptable demagnetization margin (kA/m).
    pub min_demag_margin_ka_m: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { thermal_j_a_mm2: THERMAL_LIMIT_A_MM2, min_demag_margin_ka_m: 0.0 }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file; a relative B–H path is made relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json_str(&text)?;
        if let (Some(csv), Some(dir)) = (&cfg.materials.bh_curve_csv, path.parent()) {
            if csv.is_relative() {
                cfg.materials.bh_curve_csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.solver.validate()?;
        self.mesh.density.validate(self.coupler.n_pm)?;
        self.sweep.slips()?;
        let m = &self.materials;
        if !(m.cs_sigma_s_m.is_finite() && m.cs_sigma_s_m > 0.0) {
            return Err(Error::validation("materials.cs_sigma_s_m", "must be positive"));
        }
        PmProps::new(m.pm_h_c_ka_m * 1e3, m.pm_mu_r)?;
        if let Some(k) = m.k_end {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::validation("materials.k_end", format!("must lie in (0, 1], got {k}")));
            }
        }
        let t = &self.thresholds;
        if !(t.thermal_j_a_mm2.is_finite() && t.thermal_j_a_mm2 > 0.0) {
            return Err(Error::validation("thresholds.thermal_j_a_mm2", "must be positive"));
        }
        if !t.min_demag_margin_ka_m.is_finite() {
            return Err(Error::validation("thresholds.min_demag_margin_ka_m", "must be finite"));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<CouplerSpec> {
        let c = &self.coupler;
        let spec = CouplerSpec {
            h_m: c.h_m_mm * MM,
            g: c.g_mm * MM,
            l_cs: c.l_cs_mm * MM,
            l_yp: c.l_yp_mm * MM,
            l_ys: c.l_ys_mm * MM,
            r_sh: c.r_sh_mm * MM,
            h_ov: c.h_ov_mm * MM,
            l_ax: c.l_ax_mm * MM,
            n_pm: c.n_pm,
            pm_grade: c.pm_grade.clone(),
            pm_embrace: c.pm_embrace,
            slip_direction: c.slip_direction,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Material set, reading the B–H table from disk if one is configured.
    pub fn material_set(&self) -> Result<MaterialSet> {
        let m = &self.materials;
        let iron = match &m.bh_curve_csv {
            Some(path) => Arc::new(BhCurve::from_csv_path(path)?),
            None => MaterialSet::default().iron,
        };
        Ok(MaterialSet {
            iron,
            shaft_magnetic: m.shaft_magnetic,
            pm: PmProps::new(m.pm_h_c_ka_m * 1e3, m.pm_mu_r)?,
            cs_sigma: m.cs_sigma_s_m,
            k_end_override: m.k_end,
        })
    }

    pub fn slips(&self) -> Result<Vec<f64>> {
        self.sweep.slips()
    }
}

/// Parse a slip such as `200rpm`, `20.9rad/s` or `15` (rad/s) into rad/s.
pub fn parse_slip(text: &str) -> Result<f64> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (num, unit) = match ["rad/s", "rad_s", "rads", "rpm"].iter().find(|u| lower.ends_with(*u)) {
        Some(u) => (&t[..t.len() - u.len()], SpeedUnit::parse(u).expect("listed units parse")),
        None => (t, SpeedUnit::RadPerSec),
    };
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::validation("slip", format!("`{text}` is not a number with an optional rpm or rad/s unit")))?;
    if !value.is_finite() {
        return Err(Error::validation("slip", format!("`{text}` is not finite")));
    }
    Ok(unit.to_rad_s(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_prototype() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.spec().unwrap(), CouplerSpec::table_i());
        let m = cfg.material_set().unwrap();
        assert_eq!(m.pm, PmProps::n35());
        assert_eq!(m.cs_sigma, 5.8e7);
        assert_eq!(cfg.slips().unwrap().len(), 25);
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.materials.k_end = Some(0.7);
        cfg.sweep = SweepConfig { unit: SpeedUnit::RadPerSec, list: Some(vec![0.0, 1.5, -3.25]), range: None };
        cfg.output_dir = Some("out".into());
        let again = RunConfig::from_json_str(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), cfg.to_json());
    }

    #[test]
    fn sweep_needs_exactly_one_source() {
        let both = r#"{"sweep": {"unit": "rpm", "list": [1], "range": {"start": 0, "stop": 1, "points": 2}}}"#;
        assert!(RunConfig::from_json_str(both).is_err());
        let neither = r#"{"sweep": {"unit": "rpm"}}"#;
        assert!(RunConfig::from_json_str(neither).is_err());
        let bad_unit = r#"{"sweep": {"unit": "Hz", "list": [1]}}"#;
        assert!(RunConfig::from_json_str(bad_unit).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json_str(r#"{"coupler": {"hm": 5}}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"mesh": {"n_theta": 360, "foo": 1}}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"solver": {"newton_tolerance": 1e-6}}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"materials": {"sigma": 1e6}}"#).is_err());
    }

    #[test]
    fn invalid_values_are_reported_with_their_key() {
        let err = RunConfig::from_json_str(r#"{"materials": {"cs_sigma_s_m": -1}}"#).unwrap_err();
        assert!(err.to_string().contains("cs_sigma"), "{err}");
        assert!(RunConfig::from_json_str(r#"{"mesh": {"n_theta": 100}}"#).is_err());
    }

    #[test]
    fn slip_strings() {
        assert!((parse_slip("200rpm").unwrap() - 200.0 * PI / 30.0).abs() < 1e-12);
        assert_eq!(parse_slip("20.9rad/s").unwrap(), 20.9);
        assert_eq!(parse_slip(" -3 ").unwrap(), -3.0);
        assert_eq!(parse_slip("1e2 RPM").unwrap(), 100.0 * PI / 30.0);
        assert!(parse_slip("fast").is_err());
        assert!(parse_slip("10 furlongs").is_err());
    }
}
