//! Triangulation, finite element spaces, assembly, and linear solves on the
//! fixed hold-all domain.

pub mod assembly;
pub mod field;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod sparse;

pub use assembly::{
    assemble_b1, assemble_c1, assemble_load, assemble_stiffness, assemble_stiffness_full,
    assemble_weighted_mass,
};
pub use field::FeField;
pub use mesh::{Rect, Triangulation};
pub use solver::DirichletSolver;
pub use space::FeSpace;
pub use sparse::CsrMatrix;
