//! Q1 finite elements on the structured grid: DOF numbering with doubled
//! interface unknowns, sparse assembly, and SPD solves.

pub mod assembly;
pub mod dofmap;
pub mod element;
pub mod solve;
pub mod sparse;

use thiserror::Error;

pub use assembly::{
    affine_load, apply_stiffness, assemble_interface_mass, assemble_stiffness, flux_integral, lumped_mass, project_zero_mean,
    region_integral, region_mean, Region,
};
pub use dofmap::{DofLayout, DofMap};
pub use solve::{solve_spd, solve_spd_from, LinearSolveReport, PreparedSystem, SolveMethod, SolveOptions};
pub use sparse::{SparseOperator, TripletBuilder};

/// Conductivity tensor. Only the leading `dim x dim` block is read.
pub type Tensor = nalgebra::Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("coefficient tensor in cell {cell} is not symmetric")]
    NonSymmetricCoefficient { cell: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("region has zero measure")]
    EmptyRegion,
    #[error("incompatible Neumann data: component {component} sums to {sum:e} (|b| = {norm:e})")]
    IncompatibleNeumann { component: usize, sum: f64, norm: f64 },
    #[error("CG did not converge: residual {:.3e} after {} iterations", .0.relative_residual, .0.iterations)]
    NotConverged(LinearSolveReport),
    #[error("system with {0} unknowns is too large for the dense solver")]
    DirectTooLarge(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}
