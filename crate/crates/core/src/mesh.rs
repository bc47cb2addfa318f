//! Structured polar triangulation of the coupler cross-section.
//!
//! Rings of nodes are joined by quad layers split into triangles with
//! alternating diagonals. Every full-resolution ring uses spoke angles graded
//! so that every magnet edge falls on a spoke. Inside the shaft the angular
//! count is reduced in symmetric transition layers down to two nodes per
//! pole, closed by a fan at the axis.
//!
//! The triangulation is mirror-symmetric about every magnet centre and every
//! pole centre, and periodic under rotation by one pole pitch.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{annulus, RegionMap, RegionTag};

/// Discretization controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshDensity {
    /// Angular divisions of every full-resolution ring.
    pub n_theta: usize,
    /// Full-resolution layers just inside the shaft surface, before the core
    /// is coarsened towards the axis.
    pub shaft: usize,
    pub inner_yoke: usize,
    pub air_gap: usize,
    pub cs: usize,
    pub outer_yoke: usize,
    /// Radial spacing exponent of the inner-yoke rings: 1 is uniform, larger
    /// values crowd the rings towards the magnet tips at the air gap.
    pub inner_yoke_grading: f64,
}

impl Default for MeshDensity {
    fn default() -> Self {
        MeshDensity { n_theta: 360, shaft: 4, inner_yoke: 10, air_gap: 3, cs: 4, outer_yoke: 6, inner_yoke_grading: 1.0 }
    }
}

impl MeshDensity {
    pub fn validate(&self, n_pm: usize) -> Result<()> {
        if self.n_theta == 0 || self.n_theta % n_pm != 0 || (self.n_theta / n_pm) % 2 != 0 {
            return Err(Error::validation(
                "n_theta",
                format!("must be a positive multiple of 2·N_pm = {}, got {}", 2 * n_pm, self.n_theta),
            ));
        }
        for (name, n) in [
            ("inner_yoke", self.inner_yoke),
            ("air_gap", self.air_gap),
            ("cs", self.cs),
            ("outer_yoke", self.outer_yoke),
        ] {
            if n == 0 {
                return Err(Error::validation(name, "a region of non-zero thickness needs at least one layer"));
            }
        }
        if !(self.inner_yoke_grading.is_finite() && self.inner_yoke_grading >= 1.0) {
            return Err(Error::validation("inner_yoke_grading", "must be a finite exponent >= 1"));
        }
        Ok(())
    }

    /// Angular coarsening ratios used in the shaft core, outermost first.
    pub fn core_ratios(&self, n_pm: usize) -> Vec<usize> {
        let mut per_pole = self.n_theta / n_pm;
        let mut ratios = Vec::new();
        while per_pole > 2 {
            let half = per_pole / 2;
            let f = (2..=half).find(|f| half % f == 0).expect("half >= 2 has a factor");
            ratios.push(f);
            per_pole /= f;
        }
        ratios
    }

    /// Exact element count of [`generate_mesh`] for `n_pm` magnets.
    pub fn expected_element_count(&self, n_pm: usize) -> usize {
        let full_layers = self.shaft + self.inner_yoke + self.air_gap + self.cs + self.outer_yoke;
        let mut count = 2 * self.n_theta * full_layers;
        let mut n = self.n_theta;
        for f in self.core_ratios(n_pm) {
            count += n + n / f;
            n /= f;
        }
        count + n
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node triples.
    pub elements: Vec<[usize; 3]>,
    pub tags: Vec<RegionTag>,
    /// Annulus index (see [`crate::geometry::annulus`]) of every element.
    pub annulus: Vec<usize>,
    /// Nodes on the outer radius.
    pub boundary: Vec<bool>,
    /// Interface radii copied from the region map.
    pub interfaces: Vec<f64>,
    pub n_pm: usize,
    pub refinement: usize,
}

struct Ring {
    r: f64,
    n: usize,
    graded: bool,
    annulus: usize,
}

/// Spoke angles for one full-resolution graded ring.
fn graded_angles(map: &RegionMap, n_theta: usize) -> Result<Vec<f64>> {
    let spec = &map.spec;
    let pitch = spec.pole_pitch();
    let alpha = spec.magnet_arc();
    let gap = pitch - alpha;
    let pole = spec.pole_arc();
    let filler = 0.5 * (gap - pole);
    // Half a pitch, from the magnet centre to the pole centre.
    let segments: Vec<f64> = [0.5 * alpha, filler, 0.5 * pole].into_iter().filter(|w| *w > 0.0).collect();
    let half = n_theta / spec.n_pm / 2;
    if half < segments.len() {
        return Err(Error::validation(
            "n_theta",
            format!("{n_theta} divisions cannot resolve the {} arcs of each half pole", segments.len()),
        ));
    }
    let counts = apportion(&segments, half);

    let mut one_pole = Vec::with_capacity(2 * half);
    let mut theta = 0.0;
    for (w, c) in segments.iter().zip(&counts) {
        for _ in 0..*c {
            one_pole.push(theta);
            theta += w / *c as f64;
        }
    }
    let mirrored: Vec<f64> = one_pole.iter().map(|t| pitch - t).collect();
    one_pole.push(0.5 * pitch);
    one_pole.extend(mirrored.into_iter().rev().take(half - 1));
    debug_assert_eq!(one_pole.len(), 2 * half);

    Ok((0..spec.n_pm)
        .flat_map(|k| one_pole.iter().map(move |t| t + k as f64 * pitch))
        .collect())
}

/// Split `total` divisions over segments by length, at least one each.
fn apportion(lengths: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    let free = total.saturating_sub(lengths.len());
    let ideal: Vec<f64> = lengths.iter().map(|l| (total as f64 * l / sum - 1.0).max(0.0)).collect();
    let scale = free as f64 / ideal.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let scaled: Vec<f64> = ideal.iter().map(|x| x * scale).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|x| x.floor() as usize).collect();
    let mut rest = free - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

fn build_rings(map: &RegionMap, density: &MeshDensity) -> Vec<Ring> {
    let spec = &map.spec;
    let n = density.n_theta;
    let r_sh = spec.r_sh;

    // Shaft core, built from the shaft surface inwards.
    let mut core = Vec::new();
    let mut r = r_sh;
    let mut count = n;
    for _ in 0..density.shaft {
        r *= count as f64 / (count as f64 + TAU);
        core.push(Ring { r, n: count, graded: false, annulus: annulus::SHAFT });
    }
    for f in density.core_ratios(spec.n_pm) {
        r -= f as f64 * TAU * r / (count as f64 + f as f64 * TAU);
        count /= f;
        core.push(Ring { r, n: count, graded: false, annulus: annulus::SHAFT });
    }
    core.reverse();

    let mut rings = core;
    rings.push(Ring { r: r_sh, n, graded: true, annulus: annulus::SHAFT });
    // Every full-resolution ring shares the magnet-aligned spokes; mixing them
    // with uniform spokes shears the thin gap layers at coarse n_theta.
    let bands = [
        (annulus::INNER_YOKE, density.inner_yoke),
        (annulus::AIR_GAP, density.air_gap),
        (annulus::CS, density.cs),
        (annulus::OUTER_YOKE, density.outer_yoke),
    ];
    for (a, layers) in bands {
        let (r0, r1) = (map.annuli[a].r_in, map.annuli[a].r_out);
        for l in 1..=layers {
            let t = l as f64 / layers as f64;
            let t = if a == annulus::INNER_YOKE { t.powf(density.inner_yoke_grading) } else { t };
            let r = if l == layers { r1 } else { r0 + (r1 - r0) * t };
            rings.push(Ring { r, n, graded: true, annulus: a });
        }
    }
    rings
}

pub fn generate_mesh(map: &RegionMap, density: MeshDensity) -> Result<Mesh> {
    let spec = &map.spec;
    density.validate(spec.n_pm)?;
    let rings = build_rings(map, &density);
    let graded = graded_angles(map, density.n_theta)?;

    let mut nodes = vec![[0.0, 0.0]];
    let mut offsets = Vec::with_capacity(rings.len());
    for ring in &rings {
        offsets.push(nodes.len());
        for j in 0..ring.n {
            let t = if ring.graded { graded[j] } else { TAU * j as f64 / ring.n as f64 };
            nodes.push([ring.r * t.cos(), ring.r * t.sin()]);
        }
    }
    let r_out = map.r_outer();
    let mut boundary = vec![false; nodes.len()];
    let last = rings.len() - 1;
    for b in boundary.iter_mut().skip(offsets[last]) {
        *b = true;
    }

    let mut elements = Vec::new();
    let mut annuli = Vec::new();
    let mut push = |tri: [usize; 3], a: usize, elements: &mut Vec<[usize; 3]>| {
        elements.push(tri);
        annuli.push(a);
    };

    // Axis fan.
    let first = &rings[0];
    for j in 0..first.n {
        let a = offsets[0] + j;
        let b = offsets[0] + (j + 1) % first.n;
        push([0, a, b], first.annulus, &mut elements);
    }

    for li in 0..last {
        let (inner, outer) = (&rings[li], &rings[li + 1]);
        let (oi, oo) = (offsets[li], offsets[li + 1]);
        let ring_a = outer.annulus;
        let id = |off: usize, n: usize, j: usize| off + j % n;
        if inner.n == outer.n {
            let n = inner.n;
            for j in 0..n {
                let a = id(oi, n, j);
                let b = id(oi, n, j + 1);
                let c = id(oo, n, j + 1);
                let d = id(oo, n, j);
                if (li + j) % 2 == 0 {
                    push([a, b, c], ring_a, &mut elements);
                    push([a, c, d], ring_a, &mut elements);
                } else {
                    push([a, b, d], ring_a, &mut elements);
                    push([b, c, d], ring_a, &mut elements);
                }
            }
        } else {
            let f = outer.n / inner.n;
            let s = f / 2;
            for k in 0..inner.n {
                let ik = id(oi, inner.n, k);
                let ik1 = id(oi, inner.n, k + 1);
                let o = |j: usize| id(oo, outer.n, f * k + j);
                for j in 0..s {
                    push([ik, o(j), o(j + 1)], ring_a, &mut elements);
                }
                let upper = if f % 2 == 0 {
                    push([ik, o(s), ik1], ring_a, &mut elements);
                    s
                } else {
                    if k % 2 == 0 {
                        push([ik, o(s), o(s + 1)], ring_a, &mut elements);
                        push([ik, o(s + 1), ik1], ring_a, &mut elements);
                    } else {
                        push([ik, o(s), ik1], ring_a, &mut elements);
                        push([ik1, o(s), o(s + 1)], ring_a, &mut elements);
                    }
                    s + 1
                };
                for j in upper..f {
                    push([ik1, o(j), o(j + 1)], ring_a, &mut elements);
                }
            }
        }
    }

    for tri in elements.iter_mut() {
        if signed_area(&nodes, tri) < 0.0 {
            tri.swap(1, 2);
        }
    }

    let tags = elements
        .iter()
        .zip(&annuli)
        .map(|(tri, &a)| tag_element(map, &nodes, tri, a))
        .collect::<Result<Vec<_>>>()?;

    debug_assert!((nodes[offsets[last]][0].hypot(nodes[offsets[last]][1]) - r_out).abs() < 1e-12 * r_out);
    Ok(Mesh {
        nodes,
        elements,
        tags,
        annulus: annuli,
        boundary,
        interfaces: map.interfaces.clone(),
        n_pm: spec.n_pm,
        refinement: 0,
    })
}

fn tag_element(map: &RegionMap, nodes: &[[f64; 2]], tri: &[usize; 3], a: usize) -> Result<RegionTag> {
    let sectors = &map.annuli[a].sectors;
    if sectors.len() == 1 {
        return Ok(sectors[0].tag);
    }
    let c = centroid(nodes, tri);
    let r = c[0].hypot(c[1]);
    map.region_at(r.clamp(map.annuli[a].r_in, map.annuli[a].r_out), c[1].atan2(c[0]))
}

pub(crate) fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn centroid(nodes: &[[f64; 2]], tri: &[usize; 3]) -> [f64; 2] {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn r_outer(&self) -> f64 {
        *self.interfaces.last().expect("mesh has interfaces")
    }

    pub fn area(&self, e: usize) -> f64 {
        signed_area(&self.nodes, &self.elements[e])
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        centroid(&self.nodes, &self.elements[e])
    }

    /// Number of elements sharing each undirected edge.
    pub fn edge_use(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::with_capacity(self.elements.len() * 2);
        for tri in &self.elements {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Mean element size `sqrt(2·area)` per region kind.
    pub fn characteristic_sizes(&self) -> BTreeMap<&'static str, f64> {
        let mut acc: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
        for e in 0..self.n_elements() {
            let entry = acc.entry(self.tags[e].name()).or_insert((0.0, 0));
            entry.0 += (2.0 * self.area(e)).sqrt();
            entry.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Map from each node to its mirror image `(x, -y)`, if the mesh is symmetric.
    pub fn mirror_map(&self) -> Option<Vec<usize>> {
        let scale = 1e9 / self.r_outer();
        let key = |p: [f64; 2]| ((p[0] * scale).round() as i64, (p[1] * scale).round() as i64);
        let index: HashMap<(i64, i64), usize> = self.nodes.iter().enumerate().map(|(i, p)| (key(*p), i)).collect();
        self.nodes.iter().map(|p| index.get(&key([p[0], -p[1]])).copied()).collect()
    }
}

/// Red refinement: every triangle is split into four through its edge midpoints.
/// Midpoints are taken in polar coordinates (mean radius, bisecting angle), so
/// edges on a circle keep their new node on it and ring interfaces and the
/// outer boundary stay round. Edges through the axis split at their chord
/// midpoint.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut nodes = mesh.nodes.clone();
    let mut boundary = mesh.boundary.clone();
    let tol = 1e-12 * mesh.r_outer();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(mesh.elements.len() * 2);
    let mut mid = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>, boundary: &mut Vec<bool>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let (pa, pb) = (nodes[a], nodes[b]);
            let (ra, rb) = (pa[0].hypot(pa[1]), pb[0].hypot(pb[1]));
            let m = if ra > tol && rb > tol {
                let u = [pa[0] / ra + pb[0] / rb, pa[1] / ra + pb[1] / rb];
                let scale = 0.5 * (ra + rb) / u[0].hypot(u[1]);
                [u[0] * scale, u[1] * scale]
            } else {
                [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
            };
            nodes.push(m);
            boundary.push(boundary[a] && boundary[b]);
            nodes.len() - 1
        })
    };

    let mut elements = Vec::with_capacity(4 * mesh.elements.len());
    let mut tags = Vec::with_capacity(4 * mesh.elements.len());
    let mut annuli = Vec::with_capacity(4 * mesh.elements.len());
    for (e, &[a, b, c]) in mesh.elements.iter().enumerate() {
        let ab = mid(a, b, &mut nodes, &mut boundary);
        let bc = mid(b, c, &mut nodes, &mut boundary);
        let ca = mid(c, a, &mut nodes, &mut boundary);
        for tri in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
            elements.push(tri);
            tags.push(mesh.tags[e]);
            annuli.push(mesh.annulus[e]);
        }
    }
    Mesh {
        nodes,
        elements,
        tags,
        annulus: annuli,
        boundary,
        interfaces: mesh.interfaces.clone(),
        n_pm: mesh.n_pm,
        refinement: mesh.refinement + 1,
    }
}

/// Mesh statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub min_quality: f64,
    pub mean_quality: f64,
    pub min_area: f64,
    pub total_area: f64,
    pub region_counts: BTreeMap<String, usize>,
    /// Elements with negative signed area.
    pub inverted: Vec<usize>,
    /// Elements with zero area.
    pub degenerate: Vec<usize>,
}

/// `2·inradius/circumradius`: 1 for an equilateral triangle, 0 when degenerate.
pub fn triangle_quality(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let la = (b[0] - c[0]).hypot(b[1] - c[1]);
    let lb = (a[0] - c[0]).hypot(a[1] - c[1]);
    let lc = (a[0] - b[0]).hypot(a[1] - b[1]);
    let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    let denom = (la + lb + lc) * la * lb * lc;
    if denom == 0.0 {
        return 0.0;
    }
    (16.0 * area * area / denom).min(1.0)
}

pub fn mesh_quality(mesh: &Mesh) -> QualityReport {
    let mut min_quality = f64::INFINITY;
    let mut sum_quality = 0.0;
    let mut min_area = f64::INFINITY;
    let mut total_area = 0.0;
    let mut region_counts = BTreeMap::new();
    let mut inverted = Vec::new();
    let mut degenerate = Vec::new();
    for (e, tri) in mesh.elements.iter().enumerate() {
        let area = signed_area(&mesh.nodes, tri);
        let q = triangle_quality(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
        if area < 0.0 {
            inverted.push(e);
        } else if area == 0.0 || q == 0.0 {
            degenerate.push(e);
        }
        min_quality = min_quality.min(q);
        sum_quality += q;
        min_area = min_area.min(area);
        total_area += area;
        *region_counts.entry(mesh.tags[e].name().to_string()).or_insert(0) += 1;
    }
    let n = mesh.elements.len().max(1) as f64;
    QualityReport {
        min_quality,
        mean_quality: sum_quality / n,
        min_area,
        total_area,
        region_counts,
        inverted,
        degenerate,
    }
}
