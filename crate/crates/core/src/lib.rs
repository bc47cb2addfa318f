pub mod config;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod materials;
pub mod mec;
pub mod mesh;
pub mod model;
pub mod oracles;
pub mod postprocess;
pub mod vtk;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/materials.md")]
    struct Materials;
    #[doc = include_str!("../../../book/src/mesh.md")]
    struct Mesh;
    #[doc = include_str!("../../../book/src/solver.md")]
    struct Solver;
    #[doc = include_str!("../../../book/src/torque.md")]
    struct Torque;
    #[doc = include_str!("../../../book/src/demag.md")]
    struct Demag;
    #[doc = include_str!("../../../book/src/mec.md")]
    struct Mec;
    #[doc = include_str!("../../../book/src/verification.md")]
    struct Verification;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
