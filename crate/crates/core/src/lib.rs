//! Data-driven finite element building blocks: element grids and layouts,
//! full-order solvers, snapshot sampling, POD bases, reduced assembly and
//! solvers, and evaluation helpers.
//!
//! The numerical core is generic over [`Real`]; `f64` aliases for the common
//! types are re-exported at the crate root.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod archive;
pub mod assembly;
pub mod basis;
pub mod error;
pub mod eval;
pub mod fom;
pub mod grid;
pub mod linalg;
pub mod reduced_solver;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the generic types.
pub type Matrix = linalg::Matrix<f64>;
pub type ElementGrid = grid::ElementGrid<f64>;
pub type SnapshotSet = sampler::SnapshotSet<f64>;
pub type PodBasis = basis::PodBasis<f64>;
pub type ElementBasis = basis::ElementBasis<f64>;
pub type ComponentLibrary = assembly::ComponentLibrary<f64>;
pub type ReducedSystem = assembly::ReducedSystem<f64>;
pub type StateField = fom::StateField<f64>;
pub type StudyConfig = eval::StudyConfig<f64>;

/// `f32` instantiations of the generic types.
pub mod f32 {
    pub type Matrix = crate::linalg::Matrix<f32>;
    pub type ElementGrid = crate::grid::ElementGrid<f32>;
    pub type SnapshotSet = crate::sampler::SnapshotSet<f32>;
    pub type PodBasis = crate::basis::PodBasis<f32>;
    pub type ElementBasis = crate::basis::ElementBasis<f32>;
    pub type ComponentLibrary = crate::assembly::ComponentLibrary<f32>;
    pub type ReducedSystem = crate::assembly::ReducedSystem<f32>;
    pub type StateField = crate::fom::StateField<f32>;
    pub type StudyConfig = crate::eval::StudyConfig<f32>;
}
