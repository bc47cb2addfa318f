//! Legacy ASCII VTK export of a solved field.
//!
//! Output depends only on the mesh and the solution, so repeated runs write
//! identical bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CouplerModel, FieldSolution};
use crate::postprocess::element_fields;

const VTK_TRIANGLE: u8 = 5;

/// Render the mesh with per-cell Bx, By, |B| (T), Jz (A/m²), H_rev (A/m) and
/// the region code.
pub fn render(model: &CouplerModel, sol: &FieldSolution) -> String {
    let mesh = model.mesh();
    let fields = element_fields(model, sol);
    let n = mesh.n_elements();
    let mut s = String::with_capacity(64 * (mesh.nodes.len() + 8 * n));
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "coupler field at slip {} rad/s", fmt(sol.omega_slip));
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    let _ = writeln!(s, "POINTS {} double", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} 0", fmt(p[0]), fmt(p[1]));
    }
    let _ = writeln!(s, "CELLS {} {}", n, 4 * n);
    for el in &mesh.elements {
        let _ = writeln!(s, "3 {} {} {}", el[0], el[1], el[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "{VTK_TRIANGLE}");
    }

    let _ = writeln!(s, "CELL_DATA {n}");
    let mut scalar = |name: &str, values: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(s, "{}", fmt(v));
        }
    };
    scalar("Bx", &mut fields.b.iter().map(|b| b[0]));
    scalar("By", &mut fields.b.iter().map(|b| b[1]));
    scalar("|B|", &mut (0..n).map(|e| fields.b_magnitude(e)));
    scalar("Jz", &mut fields.jz.iter().copied());
    scalar("H_rev", &mut fields.h_rev.iter().copied());
    let _ = writeln!(s, "SCALARS region int 1\nLOOKUP_TABLE default");
    for e in 0..n {
        let _ = writeln!(s, "{}", model.tag(e).code());
    }
    s
}

pub fn write(model: &CouplerModel, sol: &FieldSolution, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(render(model, sol).as_bytes()).map_err(|e| Error::io(path, e))
}

/// Shortest exact representation, with `-0` folded into `0`.
fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:e}")
    }
}
