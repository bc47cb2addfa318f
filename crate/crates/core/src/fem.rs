//! Nonlinear steady-state magneto-quasistatic solver.
//!
//! Unknown is the out-of-plane vector potential `A` on first-order triangles,
//! in the frame of the magnets. The governing equation is
//!
//! ```text
//! ∇·(ν(|B|²) ∇A) − σ ω ∂A/∂θ + Jₘ = 0,    A = 0 on the outer radius,
//! ```
//!
//! where `ω` is the angular velocity of the conducting regions relative to
//! the magnets and `Jₘ` the equivalent current of the magnetization. The
//! Galerkin residual is linearized exactly (including the `dν/dB²` term) and
//! solved by Newton iteration with backtracking on the residual norm.

use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{RegionMaterial, MU_0};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Stabilization {
    #[default]
    None,
    /// Streamline diffusion along the direction of motion.
    StreamlineUpwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LinearSolver {
    #[default]
    SparseLu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Convergence threshold on `‖R‖ / ‖f‖`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    pub stabilization: Stabilization,
    pub linear_solver: LinearSolver,
    /// Largest accepted |slip| (rad/s).
    pub max_slip: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            newton_tol: 1e-8,
            max_newton_iters: 40,
            backtrack_factor: 0.5,
            max_halvings: 8,
            stabilization: Stabilization::None,
            linear_solver: LinearSolver::SparseLu,
            max_slip: 1000.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::validation("newton_tol", "must be positive"));
        }
        if self.max_newton_iters < 1 {
            return Err(Error::validation("max_newton_iters", "must be at least 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::validation("backtrack_factor", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Precomputed first-order triangle data.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeom {
    pub area: f64,
    /// Basis gradients `∇φᵢ`.
    pub grad: [[f64; 2]; 3],
    pub centroid: [f64; 2],
    /// `∫ φᵢ (−y, x) dS`, the moment of each basis function against the
    /// rotational velocity field.
    pub swirl: [[f64; 2]; 3],
}

impl ElementGeom {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let mut grad = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            grad[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
        }
        let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        let mut swirl = [[0.0; 2]; 3];
        for i in 0..3 {
            let mx = area * (p[i][0] + 3.0 * centroid[0]) / 12.0;
            let my = area * (p[i][1] + 3.0 * centroid[1]) / 12.0;
            swirl[i] = [-my, mx];
        }
        ElementGeom { area, grad, centroid, swirl }
    }

    /// Constant gradient of the interpolant with nodal values `a`.
    pub fn gradient(&self, a: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += a[i] * self.grad[i][0];
            g[1] += a[i] * self.grad[i][1];
        }
        g
    }

    /// Circumferential derivative `∂A/∂θ = (−y, x)·∇A` at the centroid.
    pub fn d_theta(&self, a: [f64; 3]) -> f64 {
        let g = self.gradient(a);
        -self.centroid[1] * g[0] + self.centroid[0] * g[1]
    }

    /// Values of `(−y, x)·∇A` at the three edge midpoints; the midpoint rule
    /// on these integrates quadratics exactly.
    pub fn d_theta_midpoints(&self, a: [f64; 3], nodes: [[f64; 2]; 3]) -> [f64; 3] {
        let g = self.gradient(a);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let (p, q) = (nodes[k], nodes[(k + 1) % 3]);
            let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            out[k] = -m[1] * g[0] + m[0] * g[1];
        }
        out
    }

    fn size(&self) -> f64 {
        (2.0 * self.area).sqrt()
    }
}

/// A mesh with per-element materials and a fixed nodal source, ready for
/// Newton solves at any slip.
#[derive(Debug, Clone)]
pub struct FieldSystem {
    pub mesh: Arc<Mesh>,
    pub materials: Vec<RegionMaterial>,
    /// Index into `materials` for each element.
    pub element_material: Vec<usize>,
    pub geom: Vec<ElementGeom>,
    /// Free-DOF number of each node, `None` on the Dirichlet boundary.
    pub dof: Vec<Option<usize>>,
    pub n_free: usize,
    /// Nodal source vector (magnet sheets plus any extra load).
    pub source: Vec<f64>,
}

impl FieldSystem {
    /// `material_of` returns the index into `materials` of each element.
    pub fn new(mesh: Arc<Mesh>, materials: Vec<RegionMaterial>, element_material: Vec<usize>) -> Result<Self> {
        if element_material.len() != mesh.n_elements() {
            return Err(Error::Config("one material index per element is required".into()));
        }
        let geom: Vec<ElementGeom> = mesh
            .elements
            .iter()
            .map(|t| ElementGeom::new([mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]]))
            .collect();
        let mut n_free = 0;
        let dof = mesh
            .boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    n_free += 1;
                    Some(n_free - 1)
                }
            })
            .collect();
        let mut system = FieldSystem {
            source: vec![0.0; mesh.n_nodes()],
            mesh,
            materials,
            element_material,
            geom,
            dof,
            n_free,
        };
        system.source = system.magnet_sheet_load();
        Ok(system)
    }

    pub fn material(&self, e: usize) -> &RegionMaterial {
        &self.materials[self.element_material[e]]
    }

    pub fn has_conductor(&self) -> bool {
        self.materials.iter().any(|m| m.sigma > 0.0)
    }

    /// Equivalent surface currents `K = M × n̂` on the edges bounding each
    /// uniformly magnetized region, lumped to the edge end nodes.
    pub fn magnet_sheet_load(&self) -> Vec<f64> {
        let mesh = &self.mesh;
        let mut load = vec![0.0; mesh.n_nodes()];
        let mut owner: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
        for (e, t) in mesh.elements.iter().enumerate() {
            if self.material(e).magnetization.is_none() {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                owner.insert((a, b), e);
            }
        }
        for (e, t) in mesh.elements.iter().enumerate() {
            let Some(m) = self.material(e).magnetization else { continue };
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if let Some(&other) = owner.get(&(b, a)) {
                    if self.element_material[other] == self.element_material[e] {
                        continue;
                    }
                }
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                // K·|edge| with outward normal of a counterclockwise edge a→b.
                let k_len = -(m[0] * (pb[0] - pa[0]) + m[1] * (pb[1] - pa[1]));
                load[a] += 0.5 * k_len;
                load[b] += 0.5 * k_len;
            }
        }
        load
    }

    /// The same source written as a volume integral of `M·curl φᵢ`.
    pub fn magnet_volume_load(&self) -> Vec<f64> {
        let mut load = vec![0.0; self.mesh.n_nodes()];
        for (e, t) in self.mesh.elements.iter().enumerate() {
            if let Some(m) = self.material(e).magnetization {
                let g = &self.geom[e];
                for i in 0..3 {
                    load[t[i]] += g.area * (m[0] * g.grad[i][1] - m[1] * g.grad[i][0]);
                }
            }
        }
        load
    }

    pub fn add_source(&mut self, extra: &[f64]) {
        for (s, x) in self.source.iter_mut().zip(extra) {
            *s += x;
        }
    }

    fn nodal(&self, e: usize, a: &[f64]) -> [f64; 3] {
        let t = self.mesh.elements[e];
        [a[t[0]], a[t[1]], a[t[2]]]
    }

    /// `B²` of every element.
    pub fn element_b2(&self, a: &[f64]) -> Vec<f64> {
        (0..self.geom.len())
            .map(|e| {
                let g = self.geom[e].gradient(self.nodal(e, a));
                g[0] * g[0] + g[1] * g[1]
            })
            .collect()
    }

    /// Largest mesh Péclet number `σ μ ω r h / 2` over conducting elements.
    pub fn peclet(&self, omega: f64) -> f64 {
        (0..self.geom.len())
            .filter(|&e| self.material(e).sigma > 0.0)
            .map(|e| {
                let g = &self.geom[e];
                let r = g.centroid[0].hypot(g.centroid[1]);
                self.material(e).sigma * MU_0 * omega.abs() * r * g.size() / 2.0
            })
            .fold(0.0, f64::max)
    }

    fn streamline_coefficient(&self, e: usize, omega: f64) -> f64 {
        let g = &self.geom[e];
        let m = self.material(e);
        let nu = m.reluctivity.evaluate(0.0).0;
        let r = g.centroid[0].hypot(g.centroid[1]);
        let speed = m.sigma * omega.abs() * r;
        if speed == 0.0 {
            return 0.0;
        }
        let h = g.size();
        let pe = speed * h / (2.0 * nu);
        let xi = if pe > 1e-3 { 1.0 / pe.tanh() - 1.0 / pe } else { pe / 3.0 };
        h / (2.0 * speed) * xi
    }

    /// Residual over free DOFs, without the Jacobian.
    pub fn residual(&self, a: &[f64], omega: f64, stab: Stabilization) -> Result<Vec<f64>> {
        Ok(self.assemble_impl(a, omega, stab, false)?.0)
    }

    /// Residual and Newton Jacobian over free DOFs.
    pub fn assemble(&self, a: &[f64], omega: f64, stab: Stabilization) -> Result<(Vec<f64>, SparseColMat<usize, f64>)> {
        let (r, j) = self.assemble_impl(a, omega, stab, true)?;
        Ok((r, j.expect("jacobian requested")))
    }

    fn assemble_impl(
        &self,
        a: &[f64],
        omega: f64,
        stab: Stabilization,
        with_jacobian: bool,
    ) -> Result<(Vec<f64>, Option<SparseColMat<usize, f64>>)> {
        let mut res = vec![0.0; self.n_free];
        for (node, d) in self.dof.iter().enumerate() {
            if let Some(i) = d {
                res[*i] = -self.source[node];
            }
        }
        let mut triplets = if with_jacobian { Vec::with_capacity(9 * self.geom.len()) } else { Vec::new() };
        for (e, t) in self.mesh.elements.iter().enumerate() {
            let g = &self.geom[e];
            let m = self.material(e);
            let av = self.nodal(e, a);
            let grad_a = g.gradient(av);
            let b2 = grad_a[0] * grad_a[0] + grad_a[1] * grad_a[1];
            let (nu, dnu) = m.reluctivity.evaluate(b2);
            if !nu.is_finite() || !dnu.is_finite() {
                return Err(Error::NonFiniteReluctivity { element: e });
            }
            let mut ke = [[0.0; 3]; 3];
            let mut je = [[0.0; 3]; 3];
            let gdot: [f64; 3] = std::array::from_fn(|i| grad_a[0] * g.grad[i][0] + grad_a[1] * g.grad[i][1]);
            for i in 0..3 {
                for j in 0..3 {
                    let gg = g.grad[i][0] * g.grad[j][0] + g.grad[i][1] * g.grad[j][1];
                    ke[i][j] = nu * g.area * gg;
                    je[i][j] = ke[i][j] + 2.0 * dnu * g.area * gdot[i] * gdot[j];
                }
            }
            if m.sigma > 0.0 && omega != 0.0 {
                let so = m.sigma * omega;
                for i in 0..3 {
                    for j in 0..3 {
                        let c = so * (g.swirl[i][0] * g.grad[j][0] + g.swirl[i][1] * g.grad[j][1]);
                        ke[i][j] += c;
                        je[i][j] += c;
                    }
                }
                if stab == Stabilization::StreamlineUpwind {
                    let delta = self.streamline_coefficient(e, omega);
                    let c = g.centroid;
                    let beta = [-so * c[1], so * c[0]];
                    let bg: [f64; 3] = std::array::from_fn(|i| beta[0] * g.grad[i][0] + beta[1] * g.grad[i][1]);
                    for i in 0..3 {
                        for j in 0..3 {
                            let s = delta * g.area * bg[i] * bg[j];
                            ke[i][j] += s;
                            je[i][j] += s;
                        }
                    }
                }
            }
            for i in 0..3 {
                let Some(di) = self.dof[t[i]] else { continue };
                res[di] += ke[i][0] * av[0] + ke[i][1] * av[1] + ke[i][2] * av[2];
                if with_jacobian {
                    for j in 0..3 {
                        if let Some(dj) = self.dof[t[j]] {
                            triplets.push(Triplet::new(di, dj, je[i][j]));
                        }
                    }
                }
            }
        }
        let jac = if with_jacobian {
            Some(
                SparseColMat::try_new_from_triplets(self.n_free, self.n_free, &triplets)
                    .map_err(|e| Error::Singular(format!("Jacobian construction failed: {e:?}")))?,
            )
        } else {
            None
        };
        Ok((res, jac))
    }

    /// Newton solve at relative angular velocity `omega` (rad/s).
    pub fn solve(&self, omega: f64, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<NewtonResult> {
        opts.validate()?;
        let n = self.mesh.n_nodes();
        if self.n_free == n {
            return Err(Error::Singular("no Dirichlet nodes: the potential is only defined up to a constant".into()));
        }
        let mut a = match initial {
            Some(x) if x.len() == n => x.to_vec(),
            Some(x) => {
                return Err(Error::Config(format!("initial guess has {} entries, mesh has {n} nodes", x.len())))
            }
            None => vec![0.0; n],
        };
        for (ai, d) in a.iter_mut().zip(&self.dof) {
            if d.is_none() {
                *ai = 0.0;
            }
        }
        let scale = self
            .dof
            .iter()
            .zip(&self.source)
            .filter(|(d, _)| d.is_some())
            .map(|(_, s)| s * s)
            .sum::<f64>()
            .sqrt();
        let stab = opts.stabilization;
        let peclet = self.peclet(omega);
        debug!("mesh Péclet number {peclet:.3e} at ω = {omega} rad/s");

        let mut res = self.residual(&a, omega, stab)?;
        let mut norm = l2(&res);
        let relative = |r: f64| if scale > 0.0 { r / scale } else { r };
        let mut history = vec![relative(norm)];
        if norm == 0.0 || (scale == 0.0 && norm == 0.0) {
            return Ok(NewtonResult { a, residual_history: history, iterations: 0, peclet });
        }
        for it in 1..=opts.max_newton_iters {
            let (r, jac) = self.assemble(&a, omega, stab)?;
            res = r;
            let lu = jac.sp_lu().map_err(|e| {
                Error::Singular(format!("LU factorization failed ({e:?}); check that the outer boundary is constrained"))
            })?;
            let rhs = Mat::<f64>::from_fn(self.n_free, 1, |i, _| -res[i]);
            let step = lu.solve(&rhs);
            if (0..self.n_free).any(|i| !step[(i, 0)].is_finite()) {
                return Err(Error::Singular("Newton step is not finite".into()));
            }

            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let mut trial = a.clone();
                for (node, d) in self.dof.iter().enumerate() {
                    if let Some(i) = d {
                        trial[node] += lambda * step[(*i, 0)];
                    }
                }
                let r_trial = self.residual(&trial, omega, stab)?;
                let n_trial = l2(&r_trial);
                if n_trial < norm {
                    accepted = Some((trial, r_trial, n_trial));
                    break;
                }
                lambda *= opts.backtrack_factor;
            }
            let Some((trial, r_trial, n_trial)) = accepted else {
                return Err(Error::NonConvergence {
                    iterations: it,
                    last: relative(norm),
                    residual_history: history,
                });
            };
            a = trial;
            res = r_trial;
            norm = n_trial;
            history.push(relative(norm));
            debug!("Newton {it}: relative residual {:.3e}, step {lambda}", relative(norm));
            if relative(norm) <= opts.newton_tol {
                info!("converged in {it} Newton iterations (ω = {omega} rad/s, Péclet {peclet:.2e})");
                return Ok(NewtonResult { a, residual_history: history, iterations: it, peclet });
            }
        }
        let _ = res;
        Err(Error::NonConvergence { iterations: opts.max_newton_iters, last: relative(norm), residual_history: history })
    }
}

/// Converged potential and iteration record of a Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub a: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub peclet: f64,
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_region_map, CouplerSpec};
    use crate::materials::{MaterialMap, MaterialSet, Reluctivity};
    use crate::mesh::{generate_mesh, MeshDensity};

    fn small_system(linear: bool) -> FieldSystem {
        let spec = CouplerSpec::table_i();
        let map = build_region_map(&spec).unwrap();
        let density = MeshDensity { n_theta: 48, shaft: 1, inner_yoke: 3, air_gap: 2, cs: 2, outer_yoke: 2, ..MeshDensity::default() };
        let mesh = Arc::new(generate_mesh(&map, density).unwrap());
        let mats = MaterialMap::new(&spec, MaterialSet::default()).unwrap();
        let mut materials = Vec::new();
        let mut index = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for tag in &mesh.tags {
            let next = materials.len();
            let i = *seen.entry(*tag).or_insert_with(|| {
                let mut m = mats.region(*tag);
                if linear && !m.reluctivity.is_linear() {
                    m.reluctivity = Reluctivity::Linear(1.0 / (MU_0 * 1000.0));
                }
                materials.push(m);
                next
            });
            index.push(i);
        }
        FieldSystem::new(mesh, materials, index).unwrap()
    }

    #[test]
    fn sheet_and_volume_magnet_loads_agree() {
        let sys = small_system(true);
        let sheet = sys.magnet_sheet_load();
        let vol = sys.magnet_volume_load();
        let scale = l2(&vol);
        assert!(scale > 0.0);
        let diff: Vec<f64> = sheet.iter().zip(&vol).map(|(a, b)| a - b).collect();
        assert!(l2(&diff) < 1e-12 * scale);
    }

    #[test]
    fn linear_static_jacobian_is_symmetric() {
        let sys = small_system(true);
        let a: Vec<f64> = (0..sys.mesh.n_nodes()).map(|i| 1e-3 * ((i as f64) * 0.37).sin()).collect();
        let (_, jac) = sys.assemble(&a, 0.0, Stabilization::None).unwrap();
        let dense = jac.to_dense();
        let mut asym: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for i in 0..sys.n_free {
            for j in 0..sys.n_free {
                asym = asym.max((dense[(i, j)] - dense[(j, i)]).abs());
                norm = norm.max(dense[(i, j)].abs());
            }
        }
        assert!(asym < 1e-12 * norm, "{asym} vs {norm}");
    }

    #[test]
    fn jacobian_columns_match_finite_differences() {
        let sys = small_system(false);
        let omega = 150.0;
        // A field strong enough to drive the iron into saturation.
        let a: Vec<f64> = sys
            .mesh
            .nodes
            .iter()
            .map(|p| 0.02 * p[1].atan2(p[0]).mul_add(3.0, 0.3).cos() * (p[0].hypot(p[1]) / 0.0445) * (1.0 - p[0].hypot(p[1]) / 0.0445))
            .collect();
        let (r0, jac) = sys.assemble(&a, omega, Stabilization::None).unwrap();
        let dense = jac.to_dense();
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let delta = 1e-8 * scale;
        let free_nodes: Vec<usize> = (0..sys.mesh.n_nodes()).filter(|&n| sys.dof[n].is_some()).collect();
        for k in 0..10 {
            let node = free_nodes[(k * 7919 + 13) % free_nodes.len()];
            let col = sys.dof[node].unwrap();
            let mut ap = a.clone();
            ap[node] += delta;
            let r1 = sys.residual(&ap, omega, Stabilization::None).unwrap();
            let fd: Vec<f64> = r1.iter().zip(&r0).map(|(x, y)| (x - y) / delta).collect();
            let jcol: Vec<f64> = (0..sys.n_free).map(|i| dense[(i, col)]).collect();
            let diff: Vec<f64> = fd.iter().zip(&jcol).map(|(x, y)| x - y).collect();
            assert!(l2(&diff) <= 1e-5 * l2(&jcol), "column {col}: {} vs {}", l2(&diff), l2(&jcol));
        }
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        let sys = small_system(true);
        let sol = sys.solve(0.0, &SolverOptions::default(), None).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(*sol.residual_history.last().unwrap() <= 1e-8);
    }

    #[test]
    fn nonlinear_residual_is_monotone() {
        let sys = small_system(false);
        let sol = sys.solve(200.0, &SolverOptions::default(), None).unwrap();
        for w in sol.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(*sol.residual_history.last().unwrap() <= 1e-8);
        for (a, d) in sol.a.iter().zip(&sys.dof) {
            if d.is_none() {
                assert_eq!(*a, 0.0);
            }
        }
    }

    #[test]
    fn non_convergence_carries_history() {
        let sys = small_system(false);
        let opts = SolverOptions { max_newton_iters: 1, newton_tol: 1e-14, ..SolverOptions::default() };
        match sys.solve(50.0, &opts, None) {
            Err(Error::NonConvergence { residual_history, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(residual_history.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unconstrained_system_is_singular() {
        let mut sys = small_system(true);
        let mut mesh = (*sys.mesh).clone();
        mesh.boundary.iter_mut().for_each(|b| *b = false);
        let mesh = Arc::new(mesh);
        sys = FieldSystem::new(mesh, sys.materials.clone(), sys.element_material.clone()).unwrap();
        let out = sys.solve(0.0, &SolverOptions::default(), None);
        assert!(matches!(out, Err(Error::Singular(_))), "{out:?}");
    }
}
