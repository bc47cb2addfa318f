//! A meshed coupler with its material assignment, and the solutions it produces.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FieldSystem, SolverOptions};
use crate::geometry::{build_region_map, CouplerSpec, RegionMap, RegionTag};
use crate::materials::{MaterialMap, MaterialSet};
use crate::mesh::{generate_mesh, refine_uniform, Mesh, MeshDensity};

#[derive(Debug, Clone)]
pub struct CouplerModel {
    pub spec: CouplerSpec,
    pub map: RegionMap,
    pub materials: MaterialMap,
    pub density: MeshDensity,
    pub system: FieldSystem,
    /// Region of each entry of `system.materials`.
    pub material_tags: Vec<RegionTag>,
}

impl CouplerModel {
    /// Mesh the coupler at `density`, refine uniformly `refine` times and
    /// assign materials.
    pub fn new(spec: &CouplerSpec, set: MaterialSet, density: MeshDensity, refine: usize) -> Result<Self> {
        let map = build_region_map(spec)?;
        let mut mesh = generate_mesh(&map, density)?;
        for _ in 0..refine {
            mesh = refine_uniform(&mesh);
        }
        let materials = MaterialMap::new(spec, set)?;
        Self::from_mesh(map, materials, density, mesh)
    }

    pub fn table_i() -> Result<Self> {
        Self::new(&CouplerSpec::table_i(), MaterialSet::default(), MeshDensity::default(), 0)
    }

    pub fn from_mesh(map: RegionMap, materials: MaterialMap, density: MeshDensity, mesh: Mesh) -> Result<Self> {
        let mut index: HashMap<RegionTag, usize> = HashMap::new();
        let mut material_tags = Vec::new();
        let mut region_materials = Vec::new();
        let element_material = mesh
            .tags
            .iter()
            .map(|tag| {
                *index.entry(*tag).or_insert_with(|| {
                    material_tags.push(*tag);
                    region_materials.push(materials.region(*tag));
                    region_materials.len() - 1
                })
            })
            .collect();
        if !mesh.tags.contains(&RegionTag::Cs) {
            return Err(Error::Config("mesh has no conductive-sheet elements".into()));
        }
        let system = FieldSystem::new(Arc::new(mesh), region_materials, element_material)?;
        Ok(CouplerModel { spec: map.spec.clone(), map, materials, density, system, material_tags })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.system.mesh
    }

    pub fn tag(&self, e: usize) -> RegionTag {
        self.material_tags[self.system.element_material[e]]
    }

    /// Solve at slip speed `omega_slip` (rad/s), optionally warm-started.
    pub fn solve(&self, omega_slip: f64, opts: &SolverOptions, warm: Option<&FieldSolution>) -> Result<FieldSolution> {
        if !omega_slip.is_finite() || omega_slip.abs() > opts.max_slip {
            return Err(Error::validation(
                "slip",
                format!("|{omega_slip}| rad/s exceeds the configured maximum of {} rad/s", opts.max_slip),
            ));
        }
        let omega = self.spec.slip_direction.sign() * omega_slip;
        let newton = self.system.solve(omega, opts, warm.map(|w| w.a.as_slice()))?;
        Ok(FieldSolution {
            nu: self.element_reluctivity(&newton.a),
            a: newton.a,
            omega_slip,
            omega,
            residual_history: newton.residual_history,
            iterations: newton.iterations,
            peclet: newton.peclet,
        })
    }

    /// Wrap an arbitrary potential as a solution, for post-processing tests.
    pub fn solution_from_potential(&self, a: Vec<f64>, omega_slip: f64) -> FieldSolution {
        FieldSolution {
            nu: self.element_reluctivity(&a),
            a,
            omega_slip,
            omega: self.spec.slip_direction.sign() * omega_slip,
            residual_history: Vec::new(),
            iterations: 0,
            peclet: 0.0,
        }
    }

    fn element_reluctivity(&self, a: &[f64]) -> Vec<f64> {
        self.system
            .element_b2(a)
            .iter()
            .enumerate()
            .map(|(e, b2)| self.system.material(e).reluctivity.evaluate(*b2).0)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FieldSolution {
    /// Nodal vector potential (Wb/m).
    pub a: Vec<f64>,
    /// Slip speed as requested (rad/s).
    pub omega_slip: f64,
    /// Signed speed of the sheet relative to the magnets used by the solver.
    pub omega: f64,
    /// Converged reluctivity of every element.
    pub nu: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub peclet: f64,
}
