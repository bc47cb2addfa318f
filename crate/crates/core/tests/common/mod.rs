#![allow(dead_code)]

use ecoupler::geometry::CouplerSpec;
use ecoupler::materials::MaterialSet;
use ecoupler::mesh::MeshDensity;
use ecoupler::model::CouplerModel;

/// Coarse but complete prototype mesh; solves in a few milliseconds.
pub fn coarse_density() -> MeshDensity {
    MeshDensity { n_theta: 72, shaft: 2, inner_yoke: 4, air_gap: 3, cs: 2, outer_yoke: 2, ..MeshDensity::default() }
}

pub fn coarse_model() -> CouplerModel {
    coarse_with(MaterialSet::default())
}

pub fn coarse_with(set: MaterialSet) -> CouplerModel {
    CouplerModel::new(&CouplerSpec::table_i(), set, coarse_density(), 0).unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn rpm(n: f64) -> f64 {
    n * std::f64::consts::PI / 30.0
}
