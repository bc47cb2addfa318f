//! Magnetic equivalent circuit of the magnet rotor and a first-harmonic
//! torque model built on it.
//!
//! Every pole contributes four nodes: the pole body `P` at mid-height, the
//! pole face at the gap `G`, the pole root on the shaft `S` and the outer yoke
//! above it `Y`. Magnet `k` sits between poles `k − 1` and `k`; the shaft
//! joins neighbouring pole roots beneath each magnet.
//! Node potentials are magnetic scalar potentials (A) and branch fluxes are
//! per full axial length (Wb).

use std::f64::consts::PI;
use std::sync::Arc;

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SolverOptions;
use crate::geometry::{CouplerSpec, Polarity};
use crate::materials::{BhCurve, MaterialMap, MU_0};
use crate::oracles::{slab_eddy_force, SlabCase};
use crate::postprocess::{DemagReport, OperatingPoint, TorqueSpeedCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    Magnet,
    PoleIron,
    AirGap,
    OuterYoke,
    ShaftLeakage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Permeance {
    /// Constant reluctance (A/Wb).
    Linear(f64),
    /// Flux tube of `length` and `area` through a soft magnetic material.
    Iron { curve: Arc<BhCurve>, length: f64, area: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub from: usize,
    pub to: usize,
    /// Source MMF driving flux from `from` to `to` (A).
    pub mmf: f64,
    pub permeance: Permeance,
}

impl Branch {
    /// Flux from `from` to `to` for potential drop `u` and its derivative.
    fn flux(&self, u: f64) -> (f64, f64) {
        let drive = u + self.mmf;
        match &self.permeance {
            Permeance::Linear(r) => (drive / r, 1.0 / r),
            Permeance::Iron { curve, length, area } => {
                let b = curve.b_of_h(drive / length);
                (area * b, area / (length * curve.dh_db(b.abs())))
            }
        }
    }

    /// Reluctance at the given flux, `u/φ`.
    pub fn reluctance_at(&self, flux: f64) -> f64 {
        match &self.permeance {
            Permeance::Linear(r) => *r,
            Permeance::Iron { curve, length, area } => {
                let b = (flux / area).abs();
                let nu = curve.reluctivity(b * b).0;
                nu * length / area
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MecOptions {
    /// Share of the air-gap flux that reaches the active sheet after axial
    /// end leakage.
    pub flux_utilization: f64,
    pub shaft_leakage: bool,
}

impl Default for MecOptions {
    fn default() -> Self {
        MecOptions { flux_utilization: 0.9, shaft_leakage: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagneticNetwork {
    pub n_nodes: usize,
    /// Node held at zero potential.
    pub ground: usize,
    pub branches: Vec<Branch>,
    pub poles: usize,
    /// Pole-face area of every air-gap branch (m²).
    pub gap_area: f64,
    /// Pole arc over pole pitch.
    pub pole_fraction: f64,
    pub options: MecOptions,
    /// Magnet cross-section normal to the magnetization (m²).
    pub magnet_area: f64,
    pub mu_r_magnet: f64,
}

/// Node numbering: pole body, pole face, yoke and pole root of pole `k`.
pub fn pole_nodes(k: usize) -> [usize; 4] {
    [4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3]
}

pub fn build_network(spec: &CouplerSpec, materials: &MaterialMap, options: MecOptions) -> Result<MagneticNetwork> {
    spec.validate()?;
    let n = spec.n_pm;
    let pitch = spec.pole_pitch();
    let pole_arc = spec.pole_arc();
    let iron = materials.set.iron.clone();
    let pm = materials.pm();

    let magnet_area = spec.l_yp * spec.l_ax;
    let r_magnet = spec.h_m / (MU_0 * pm.mu_r * magnet_area);
    // Each half of the pole piece, at its own mean radius.
    let pole_outer_area = pole_arc * (spec.r_sh + 0.75 * spec.l_yp) * spec.l_ax;
    let pole_inner_area = pole_arc * (spec.r_sh + 0.25 * spec.l_yp) * spec.l_ax;
    let clearance = spec.g + spec.l_cs;
    let gap_area = pole_arc * (spec.r_inner_yoke() + 0.5 * clearance) * spec.l_ax;
    let yoke_length = (spec.r_cs_outer() + 0.5 * spec.l_ys) * pitch;
    let yoke_area = spec.l_ys * spec.l_ax;
    let shaft_length = pitch * 0.5 * spec.r_sh;
    let shaft_area = 0.5 * spec.r_sh * spec.l_ax;
    for (name, v) in [("pole area", pole_inner_area), ("gap area", gap_area), ("yoke area", yoke_area), ("shaft area", shaft_area)] {
        if !(v > 0.0) {
            return Err(Error::validation("mec", format!("{name} is degenerate ({v})")));
        }
    }

    let mut branches = Vec::with_capacity(6 * n);
    for k in 0..n {
        let [p, g, y, root] = pole_nodes(k);
        let [p_prev, ..] = pole_nodes((k + n - 1) % n);
        let [_, _, y_next, root_next] = pole_nodes((k + 1) % n);
        let s = Polarity::of_magnet(k).sign();
        branches.push(Branch {
            kind: BranchKind::Magnet,
            from: p_prev,
            to: p,
            mmf: s * pm.h_c * spec.h_m,
            permeance: Permeance::Linear(r_magnet),
        });
        branches.push(Branch {
            kind: BranchKind::PoleIron,
            from: p,
            to: g,
            mmf: 0.0,
            permeance: Permeance::Iron { curve: iron.clone(), length: 0.5 * spec.l_yp, area: pole_outer_area },
        });
        branches.push(Branch {
            kind: BranchKind::PoleIron,
            from: p,
            to: root,
            mmf: 0.0,
            permeance: Permeance::Iron { curve: iron.clone(), length: 0.5 * spec.l_yp, area: pole_inner_area },
        });
        branches.push(Branch {
            kind: BranchKind::AirGap,
            from: g,
            to: y,
            mmf: 0.0,
            permeance: Permeance::Linear(clearance / (MU_0 * gap_area)),
        });
        branches.push(Branch {
            kind: BranchKind::OuterYoke,
            from: y,
            to: y_next,
            mmf: 0.0,
            permeance: Permeance::Iron { curve: iron.clone(), length: yoke_length, area: yoke_area },
        });
        if options.shaft_leakage {
            let permeance = if materials.set.shaft_magnetic {
                Permeance::Iron { curve: iron.clone(), length: shaft_length, area: shaft_area }
            } else {
                Permeance::Linear(shaft_length / (MU_0 * shaft_area))
            };
            branches.push(Branch { kind: BranchKind::ShaftLeakage, from: root, to: root_next, mmf: 0.0, permeance });
        }
    }
    Ok(MagneticNetwork {
        n_nodes: 4 * n,
        ground: pole_nodes(0)[2],
        branches,
        poles: n,
        gap_area,
        pole_fraction: pole_arc / pitch,
        options,
        magnet_area,
        mu_r_magnet: pm.mu_r,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    pub potentials: Vec<f64>,
    pub fluxes: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

impl MagneticNetwork {
    /// Set the magnet MMF of every magnet to `scale` times its nominal value.
    pub fn scale_sources(&mut self, scale: f64) {
        for b in &mut self.branches {
            b.mmf *= scale;
        }
    }

    fn unknown(&self, node: usize) -> Option<usize> {
        match node.cmp(&self.ground) {
            std::cmp::Ordering::Less => Some(node),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(node - 1),
        }
    }

    /// Net flux leaving every node, and the branch fluxes.
    pub fn node_balance(&self, potentials: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut net = vec![0.0; self.n_nodes];
        let fluxes: Vec<f64> = self
            .branches
            .iter()
            .map(|b| {
                let phi = b.flux(potentials[b.from] - potentials[b.to]).0;
                net[b.from] += phi;
                net[b.to] -= phi;
                phi
            })
            .collect();
        (net, fluxes)
    }

    fn residual(&self, potentials: &[f64]) -> Vec<f64> {
        let (net, _) = self.node_balance(potentials);
        (0..self.n_nodes).filter(|&i| i != self.ground).map(|i| net[i]).collect()
    }

    /// Flux scale used for the convergence test: magnet remanent flux.
    pub fn flux_scale(&self) -> f64 {
        let f = self.branches.iter().filter(|b| b.kind == BranchKind::Magnet).map(|b| b.mmf.abs()).fold(0.0, f64::max);
        let r = self
            .branches
            .iter()
            .find(|b| b.kind == BranchKind::Magnet)
            .map(|b| b.reluctance_at(0.0))
            .unwrap_or(1.0);
        f / r
    }

    /// Newton iteration on node potentials with the FEM solver's damping policy.
    pub fn solve(&self, opts: &SolverOptions) -> Result<NetworkSolution> {
        opts.validate()?;
        let m = self.n_nodes - 1;
        let scale = self.flux_scale();
        let mut psi = vec![0.0; self.n_nodes];
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut res = self.residual(&psi);
        let mut current = norm(&res);
        let tol = 1e-10 * scale;
        let mut history = vec![current];
        let mut iterations = 0;
        while current > tol {
            iterations += 1;
            if iterations > opts.max_newton_iters {
                return Err(Error::NonConvergence {
                    iterations: opts.max_newton_iters,
                    last: current / scale.max(f64::MIN_POSITIVE),
                    residual_history: history,
                });
            }
            let mut jac = Mat::<f64>::zeros(m, m);
            for b in &self.branches {
                let d = b.flux(psi[b.from] - psi[b.to]).1;
                let (i, j) = (self.unknown(b.from), self.unknown(b.to));
                if let Some(i) = i {
                    jac[(i, i)] += d;
                }
                if let Some(j) = j {
                    jac[(j, j)] += d;
                }
                if let (Some(i), Some(j)) = (i, j) {
                    jac[(i, j)] -= d;
                    jac[(j, i)] -= d;
                }
            }
            let rhs = Mat::<f64>::from_fn(m, 1, |i, _| -res[i]);
            let step = jac.partial_piv_lu().solve(&rhs);
            if (0..m).any(|i| !step[(i, 0)].is_finite()) {
                return Err(Error::Singular("magnetic network is not connected to ground".into()));
            }
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let mut trial = psi.clone();
                for node in 0..self.n_nodes {
                    if let Some(i) = self.unknown(node) {
                        trial[node] += lambda * step[(i, 0)];
                    }
                }
                let r = self.residual(&trial);
                let n = norm(&r);
                if n < current {
                    accepted = Some((trial, r, n));
                    break;
                }
                lambda *= opts.backtrack_factor;
            }
            let Some((trial, r, n)) = accepted else {
                return Err(Error::NonConvergence {
                    iterations,
                    last: current / scale.max(f64::MIN_POSITIVE),
                    residual_history: history,
                });
            };
            psi = trial;
            res = r;
            current = n;
            history.push(current);
        }
        let (_, fluxes) = self.node_balance(&psi);
        let scale = scale.max(f64::MIN_POSITIVE);
        Ok(NetworkSolution {
            potentials: psi,
            fluxes,
            residual_history: history.into_iter().map(|r| r / scale).collect(),
            iterations,
        })
    }

    /// Mean |flux| through the pole faces (Wb).
    pub fn gap_flux(&self, sol: &NetworkSolution) -> f64 {
        let gaps: Vec<f64> = self
            .branches
            .iter()
            .zip(&sol.fluxes)
            .filter(|(b, _)| b.kind == BranchKind::AirGap)
            .map(|(_, f)| f.abs())
            .collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    }

    /// Fundamental amplitude of the no-load air-gap flux density (T).
    ///
    /// The pole-face field is taken as a rectangular wave of height
    /// `φ_gap / A_g` spanning the pole arc, whose first harmonic is
    /// `(4/π)·sin(βπ/2)` times the height for pole fraction `β`.
    pub fn airgap_fundamental(&self, sol: &NetworkSolution) -> f64 {
        let height = self.gap_flux(sol) / self.gap_area;
        self.options.flux_utilization * 4.0 / PI * height * (0.5 * PI * self.pole_fraction).sin()
    }

    /// No-load demagnetization report from the mean magnet flux.
    pub fn demag(&self, sol: &NetworkSolution, h_c: f64) -> DemagReport {
        let mut worst = (usize::MAX, f64::NEG_INFINITY);
        for (i, (b, f)) in self.branches.iter().zip(&sol.fluxes).enumerate() {
            if b.kind != BranchKind::Magnet {
                continue;
            }
            // Along the magnetization: B = μ0 μr (H + Hc).
            let b_m = f * b.mmf.signum() / self.magnet_area;
            let h_rev = h_c - b_m / (MU_0 * self.mu_r_magnet);
            if h_rev > worst.1 {
                worst = (i, h_rev);
            }
        }
        DemagReport { margin: h_c - worst.1, worst_element: worst.0, h_rev_max: worst.1 }
    }
}

/// Torque of a travelling field of amplitude `b_g0` over the sheet, one row
/// per slip (rad/s).
pub fn mec_torque_curve(b_g0: f64, spec: &CouplerSpec, materials: &MaterialMap, slips: &[f64]) -> Result<TorqueSpeedCurve> {
    mec_torque_curve_with(b_g0, spec, materials, slips, None)
}

pub fn mec_torque_curve_with(
    b_g0: f64,
    spec: &CouplerSpec,
    materials: &MaterialMap,
    slips: &[f64],
    demag: Option<DemagReport>,
) -> Result<TorqueSpeedCurve> {
    if !(b_g0 > 0.0) {
        return Err(Error::validation("b_g0", "air-gap field must be positive"));
    }
    let r = spec.r_cs_mean();
    let area = 2.0 * PI * r * spec.l_ax;
    let sigma_s = materials.sigma_eff() * spec.l_cs;
    let demag = demag.unwrap_or(DemagReport { margin: f64::NAN, worst_element: usize::MAX, h_rev_max: f64::NAN });
    let mut curve = TorqueSpeedCurve::default();
    for &w in slips {
        let case = SlabCase { b0: b_g0, tau_p: spec.tau_p(), v: w * r, sigma_s, gap: spec.g + spec.l_cs };
        let force = slab_eddy_force(&case)?;
        let torque = force.stress * area * r;
        // Sheet current amplitude σ_s·v·|B_y| over the sheet thickness.
        let by = b_g0 / (1.0 + case.reynolds().powi(2)).sqrt();
        let j_peak = (sigma_s * case.v * by).abs() / spec.l_cs * 1e-6;
        curve.rows.push(OperatingPoint {
            omega_slip: w,
            torque,
            torque_lorentz: torque,
            loss: force.loss * area,
            avg_j: 2.0 / PI * j_peak,
            max_j: j_peak,
            asymmetry: 1.0,
            demag,
            iterations: 0,
            peclet: 0.0,
        });
    }
    Ok(curve)
}

/// Everything the fast model produces for one design.
#[derive(Debug, Clone)]
pub struct MecResult {
    pub network: MagneticNetwork,
    pub solution: NetworkSolution,
    pub b_g0: f64,
    pub curve: TorqueSpeedCurve,
}

pub fn run_mec(spec: &CouplerSpec, materials: &MaterialMap, options: MecOptions, slips: &[f64]) -> Result<MecResult> {
    let network = build_network(spec, materials, options)?;
    let solution = network.solve(&SolverOptions::default())?;
    let b_g0 = network.airgap_fundamental(&solution);
    let demag = network.demag(&solution, materials.pm().h_c);
    let curve = mec_torque_curve_with(b_g0, spec, materials, slips, Some(demag))?;
    Ok(MecResult { network, solution, b_g0, curve })
}
