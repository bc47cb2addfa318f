//! Parametric region map of the coupler cross-section.
//!
//! The cross-section is a stack of concentric annuli, from the axis outwards:
//! shaft, inner yoke (pole iron with embedded spoke magnets), air gap,
//! conductive sheet and outer yoke. Only the inner-yoke annulus is split
//! angularly; every other annulus holds a single region.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign convention for the relative motion of the conductive sheet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SlipDirection {
    /// Sheet moves counterclockwise relative to the magnets for positive slip.
    #[default]
    Positive,
    Negative,
}

impl SlipDirection {
    pub fn sign(self) -> f64 {
        match self {
            SlipDirection::Positive => 1.0,
            SlipDirection::Negative => -1.0,
        }
    }
}

/// Geometric and magnet parameters of the coupler, in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplerSpec {
    /// Tangential magnet thickness (m).
    pub h_m: f64,
    /// Air-gap length (m).
    pub g: f64,
    /// Conductive sheet thickness (m).
    pub l_cs: f64,
    /// Radial thickness of the inner (magnet) yoke (m).
    pub l_yp: f64,
    /// Radial thickness of the outer yoke (m).
    pub l_ys: f64,
    /// Shaft radius (m).
    pub r_sh: f64,
    /// Axial overhang of the sheet beyond the active length, each end (m).
    pub h_ov: f64,
    /// Active axial length (m).
    pub l_ax: f64,
    /// Number of magnets.
    pub n_pm: usize,
    pub pm_grade: String,
    /// Fraction of the space between neighbouring magnets filled by pole iron.
    pub pm_embrace: f64,
    pub slip_direction: SlipDirection,
}

impl CouplerSpec {
    /// The prototype device: 6 N35 spoke magnets on a 15 mm shaft.
    pub fn table_i() -> Self {
        CouplerSpec {
            h_m: 5e-3,
            g: 0.5e-3,
            l_cs: 1e-3,
            l_yp: 20e-3,
            l_ys: 8e-3,
            r_sh: 15e-3,
            h_ov: 10e-3,
            l_ax: 40e-3,
            n_pm: 6,
            pm_grade: "N35".to_string(),
            pm_embrace: 1.0,
            slip_direction: SlipDirection::Positive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("h_m", self.h_m),
            ("g", self.g),
            ("L_cs", self.l_cs),
            ("L_yp", self.l_yp),
            ("L_ys", self.l_ys),
            ("R_sh", self.r_sh),
            ("L_ax", self.l_ax),
        ];
        for (name, value) in lengths {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(name, format!("length must be positive, got {value}")));
            }
        }
        if !(self.h_ov.is_finite() && self.h_ov >= 0.0) {
            return Err(Error::validation("H", format!("overhang must be non-negative, got {}", self.h_ov)));
        }
        if self.n_pm < 2 || self.n_pm % 2 != 0 {
            return Err(Error::validation("N_pm", format!("must be even and at least 2, got {}", self.n_pm)));
        }
        if !(self.pm_embrace > 0.0 && self.pm_embrace <= 1.0) {
            return Err(Error::validation("pm_embrace", format!("must lie in (0, 1], got {}", self.pm_embrace)));
        }
        let (magnet_arc, pole_pitch) = (self.magnet_arc(), self.pole_pitch());
        if magnet_arc >= pole_pitch {
            return Err(Error::GeometryInfeasible { magnet_arc, pole_pitch });
        }
        Ok(())
    }

    pub fn pole_pairs(&self) -> usize {
        self.n_pm / 2
    }

    /// Angular pitch between neighbouring magnets (rad).
    pub fn pole_pitch(&self) -> f64 {
        TAU / self.n_pm as f64
    }

    /// Angular width of one magnet sector, taken at the mean inner-yoke radius (rad).
    pub fn magnet_arc(&self) -> f64 {
        self.h_m / (self.r_sh + 0.5 * self.l_yp)
    }

    /// Angular width of one pole piece (rad).
    pub fn pole_arc(&self) -> f64 {
        self.pm_embrace * (self.pole_pitch() - self.magnet_arc())
    }

    pub fn r_inner_yoke(&self) -> f64 {
        self.r_sh + self.l_yp
    }

    pub fn r_gap_outer(&self) -> f64 {
        self.r_inner_yoke() + self.g
    }

    pub fn r_cs_outer(&self) -> f64 {
        self.r_gap_outer() + self.l_cs
    }

    pub fn r_outer(&self) -> f64 {
        self.r_cs_outer() + self.l_ys
    }

    /// Mean radius of the conductive sheet.
    pub fn r_cs_mean(&self) -> f64 {
        self.r_gap_outer() + 0.5 * self.l_cs
    }

    /// Pole pitch as an arc length at the sheet mean radius (m).
    pub fn tau_p(&self) -> f64 {
        self.r_cs_mean() * self.pole_pitch()
    }

    /// Angular position of the centre of magnet `k`.
    pub fn magnet_center(&self, k: usize) -> f64 {
        k as f64 * self.pole_pitch()
    }

    /// Unit magnetization of magnet `k`: tangential at the magnet centre,
    /// alternating in sign from one magnet to the next.
    pub fn magnetization_direction(&self, k: usize) -> [f64; 2] {
        let theta = self.magnet_center(k);
        let s = Polarity::of_magnet(k).sign();
        [-s * theta.sin(), s * theta.cos()]
    }
}

/// Interface radii of the annular stack:
/// `[R_sh, R_sh+L_yp, +g, +L_cs, +L_ys]`.
pub fn radial_build(spec: &CouplerSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(vec![spec.r_sh, spec.r_inner_yoke(), spec.r_gap_outer(), spec.r_cs_outer(), spec.r_outer()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn of_magnet(k: usize) -> Self {
        if k % 2 == 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionTag {
    Shaft,
    PoleIron,
    Pm { index: usize, polarity: Polarity },
    /// Non-magnetic, non-conducting space: the mechanical gap, and any filler
    /// left beside the pole pieces when the embrace is below one.
    AirGap,
    Cs,
    OuterYoke,
}

impl RegionTag {
    pub fn name(self) -> &'static str {
        match self {
            RegionTag::Shaft => "shaft",
            RegionTag::PoleIron => "pole_iron",
            RegionTag::Pm { .. } => "pm",
            RegionTag::AirGap => "air_gap",
            RegionTag::Cs => "cs",
            RegionTag::OuterYoke => "outer_yoke",
        }
    }

    /// Small integer code used in VTK exports.
    pub fn code(self) -> i32 {
        match self {
            RegionTag::Shaft => 0,
            RegionTag::PoleIron => 1,
            RegionTag::Pm { .. } => 2,
            RegionTag::AirGap => 3,
            RegionTag::Cs => 4,
            RegionTag::OuterYoke => 5,
        }
    }
}

/// Half-open angular arc `[start, start + width)`; `start` may be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub start: f64,
    pub width: f64,
    pub tag: RegionTag,
}

impl Sector {
    pub fn end(&self) -> f64 {
        self.start + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub r_in: f64,
    pub r_out: f64,
    pub sectors: Vec<Sector>,
}

/// Index of each annulus in [`RegionMap::annuli`].
pub mod annulus {
    pub const SHAFT: usize = 0;
    pub const INNER_YOKE: usize = 1;
    pub const AIR_GAP: usize = 2;
    pub const CS: usize = 3;
    pub const OUTER_YOKE: usize = 4;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub spec: CouplerSpec,
    pub interfaces: Vec<f64>,
    pub annuli: Vec<Annulus>,
    pub pole_pairs: usize,
}

pub fn build_region_map(spec: &CouplerSpec) -> Result<RegionMap> {
    let interfaces = radial_build(spec)?;
    let whole = |tag| vec![Sector { start: 0.0, width: TAU, tag }];
    let mut annuli = Vec::with_capacity(5);
    annuli.push(Annulus { r_in: 0.0, r_out: interfaces[0], sectors: whole(RegionTag::Shaft) });
    annuli.push(Annulus { r_in: interfaces[0], r_out: interfaces[1], sectors: inner_yoke_sectors(spec) });
    for (i, tag) in [RegionTag::AirGap, RegionTag::Cs, RegionTag::OuterYoke].into_iter().enumerate() {
        annuli.push(Annulus { r_in: interfaces[i + 1], r_out: interfaces[i + 2], sectors: whole(tag) });
    }
    Ok(RegionMap { spec: spec.clone(), interfaces, annuli, pole_pairs: spec.pole_pairs() })
}

/// Magnet `k` is centred on `k·pitch`, so the sequence starts half a magnet
/// before zero.
fn inner_yoke_sectors(spec: &CouplerSpec) -> Vec<Sector> {
    let alpha = spec.magnet_arc();
    let pitch = spec.pole_pitch();
    let gap = pitch - alpha;
    let pole = spec.pole_arc();
    let filler = 0.5 * (gap - pole);
    let mut sectors = Vec::new();
    for k in 0..spec.n_pm {
        let mut start = spec.magnet_center(k) - 0.5 * alpha;
        let mut push = |width: f64, tag| {
            if width > 0.0 {
                sectors.push(Sector { start, width, tag });
                start += width;
            }
        };
        push(alpha, RegionTag::Pm { index: k, polarity: Polarity::of_magnet(k) });
        push(filler, RegionTag::AirGap);
        push(pole, RegionTag::PoleIron);
        push(filler, RegionTag::AirGap);
    }
    sectors
}

impl RegionMap {
    pub fn r_outer(&self) -> f64 {
        *self.interfaces.last().expect("region map has interfaces")
    }

    /// Region at polar point `(r, theta)`. Points on an interface radius belong
    /// to the inner annulus; points on a sector edge belong to the sector that
    /// starts there.
    pub fn region_at(&self, r: f64, theta: f64) -> Result<RegionTag> {
        let r_out = self.r_outer();
        if !(r >= 0.0 && r <= r_out * (1.0 + 1e-12)) {
            return Err(Error::OutOfDomain { r, r_out });
        }
        let annulus = self
            .annuli
            .iter()
            .find(|a| r <= a.r_out)
            .unwrap_or_else(|| self.annuli.last().expect("non-empty"));
        Ok(sector_at(&annulus.sectors, theta).tag)
    }
}

/// Free-function form of [`RegionMap::region_at`].
pub fn region_at(map: &RegionMap, r: f64, theta: f64) -> Result<RegionTag> {
    map.region_at(r, theta)
}

fn sector_at(sectors: &[Sector], theta: f64) -> &Sector {
    let origin = sectors[0].start;
    let t = (theta - origin).rem_euclid(TAU) + origin;
    sectors
        .iter()
        .find(|s| t >= s.start && t < s.end())
        // Rounding can push `t` past the last end by an ulp.
        .unwrap_or_else(|| sectors.last().expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn table_i_interface_radii() {
        let radii = radial_build(&CouplerSpec::table_i()).unwrap();
        let expected = [0.015, 0.035, 0.0355, 0.0365, 0.0445];
        for (r, e) in radii.iter().zip(expected) {
            assert!(close(*r, e, 1e-15), "{r} vs {e}");
        }
    }

    #[test]
    fn zero_gap_is_rejected_by_name() {
        let spec = CouplerSpec { g: 0.0, ..CouplerSpec::table_i() };
        match radial_build(&spec) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "g"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn doubling_thicknesses_doubles_gaps() {
        let a = CouplerSpec::table_i();
        let b = CouplerSpec {
            h_m: 2.0 * a.h_m,
            g: 2.0 * a.g,
            l_cs: 2.0 * a.l_cs,
            l_yp: 2.0 * a.l_yp,
            l_ys: 2.0 * a.l_ys,
            r_sh: 2.0 * a.r_sh,
            ..a.clone()
        };
        let ra = radial_build(&a).unwrap();
        let rb = radial_build(&b).unwrap();
        for i in 1..ra.len() {
            assert!(close(rb[i] - rb[i - 1], 2.0 * (ra[i] - ra[i - 1]), 1e-15));
        }
    }

    #[test]
    fn odd_magnet_count_rejected() {
        let spec = CouplerSpec { n_pm: 5, ..CouplerSpec::table_i() };
        assert!(matches!(spec.validate(), Err(Error::Validation { .. })));
    }

    #[test]
    fn oversized_magnets_report_arcs() {
        let spec = CouplerSpec { h_m: 30e-3, ..CouplerSpec::table_i() };
        match build_region_map(&spec) {
            Err(Error::GeometryInfeasible { magnet_arc, pole_pitch }) => {
                assert!(magnet_arc > pole_pitch);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_i_has_six_alternating_magnets() {
        let map = build_region_map(&CouplerSpec::table_i()).unwrap();
        let sectors = &map.annuli[annulus::INNER_YOKE].sectors;
        let magnets: Vec<_> = sectors
            .iter()
            .filter_map(|s| match s.tag {
                RegionTag::Pm { index, polarity } => Some((index, polarity)),
                _ => None,
            })
            .collect();
        assert_eq!(magnets.len(), 6);
        assert_eq!(sectors.iter().filter(|s| s.tag == RegionTag::PoleIron).count(), 6);
        for w in magnets.windows(2) {
            assert_ne!(w[0].1, w[1].1);
        }
        let total: f64 = sectors.iter().map(|s| s.width).sum();
        assert!(close(total, TAU, 1e-12));
    }

    #[test]
    fn two_pole_partition() {
        let spec = CouplerSpec { n_pm: 2, ..CouplerSpec::table_i() };
        let map = build_region_map(&spec).unwrap();
        let sectors = &map.annuli[annulus::INNER_YOKE].sectors;
        assert_eq!(sectors.len(), 4);
        for s in sectors.iter().filter(|s| s.tag == RegionTag::PoleIron) {
            assert!(close(s.width, PI - spec.magnet_arc(), 1e-12));
        }
    }

    #[test]
    fn region_queries() {
        let map = build_region_map(&CouplerSpec::table_i()).unwrap();
        assert_eq!(map.region_at(0.010, 0.0).unwrap(), RegionTag::Shaft);
        for k in 0..16 {
            let theta = k as f64 * 0.4;
            assert_eq!(map.region_at(0.0352, theta).unwrap(), RegionTag::AirGap);
        }
        assert_eq!(map.region_at(0.036, 0.0).unwrap(), RegionTag::Cs);
        assert_eq!(map.region_at(0.040, 1.0).unwrap(), RegionTag::OuterYoke);
        assert!(matches!(map.region_at(0.05, 0.0), Err(Error::OutOfDomain { .. })));
        // interface radius belongs to the inner annulus
        assert_eq!(map.region_at(0.035, 0.5).unwrap(), RegionTag::PoleIron);
        assert_eq!(map.region_at(0.025, 0.0).unwrap(), RegionTag::Pm { index: 0, polarity: Polarity::Positive });
        assert_eq!(map.region_at(0.025, -0.01).unwrap(), RegionTag::Pm { index: 0, polarity: Polarity::Positive });
        // sector edge resolves counterclockwise
        let edge = 0.5 * CouplerSpec::table_i().magnet_arc();
        assert_eq!(map.region_at(0.025, edge).unwrap(), RegionTag::PoleIron);
    }

    #[test]
    fn reduced_embrace_leaves_filler() {
        let spec = CouplerSpec { pm_embrace: 0.5, ..CouplerSpec::table_i() };
        let map = build_region_map(&spec).unwrap();
        let sectors = &map.annuli[annulus::INNER_YOKE].sectors;
        assert_eq!(sectors.len(), 24);
        let total: f64 = sectors.iter().map(|s| s.width).sum();
        assert!(close(total, TAU, 1e-12));
        let mid = 0.5 * spec.pole_pitch();
        assert_eq!(map.region_at(0.025, mid).unwrap(), RegionTag::PoleIron);
        assert_eq!(map.region_at(0.025, mid - 0.4 * (spec.pole_pitch() - spec.magnet_arc())).unwrap(), RegionTag::AirGap);
    }
}
