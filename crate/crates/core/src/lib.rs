//! Tangential MINI finite elements for the surface Stokes problem on
//! triangulated closed surfaces.

pub mod analysis;
pub mod assembly;
pub mod checks;
pub mod dofmap;
pub mod dual;
pub mod element;
pub mod geometry;
pub mod manufactured;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod study;
