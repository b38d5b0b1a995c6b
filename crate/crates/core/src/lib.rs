//! Topology optimization of heat sinks cooled by natural convection, using a
//! Darcy flow model coupled to the energy equation on structured hexahedral
//! grids.

pub mod app;
pub mod error;
pub mod fem;
pub mod filter;
pub mod materials;
pub mod mesh;
pub mod optimizer;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result, SolverError};
