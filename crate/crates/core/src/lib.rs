//! Time-stepping and fixed-point solver for a viscoelastic free-surface flow
//! in a periodic strip, written in Lagrangian coordinates.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision. The harness and the norm diagnostics are `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constitutive;
pub mod error;
pub mod fixed_point;
pub mod geometry;
pub mod harness;
pub mod norms;
pub mod scalar;
pub mod scaling;
pub mod spectral;
pub mod stokes_solver;
pub mod tensor;

pub use error::{Result, SolverError};
pub use scalar::Scalar;

pub type Mesh64 = geometry::Mesh<f64>;
pub type Mesh32 = geometry::Mesh<f32>;
pub type DomainProfile64 = geometry::DomainProfile<f64>;
pub type DomainProfile32 = geometry::DomainProfile<f32>;
pub type GeometryState64 = geometry::GeometryState<f64>;
pub type GeometryState32 = geometry::GeometryState<f32>;
pub type PhysicalParams64 = scaling::PhysicalParams<f64>;
pub type PhysicalParams32 = scaling::PhysicalParams<f32>;
pub type DimensionlessParams64 = scaling::DimensionlessParams<f64>;
pub type DimensionlessParams32 = scaling::DimensionlessParams<f32>;
pub type ConstitutiveLaw64 = constitutive::ConstitutiveLaw<f64>;
pub type ConstitutiveLaw32 = constitutive::ConstitutiveLaw<f32>;
pub type StressField64 = constitutive::StressField<f64>;
pub type StressField32 = constitutive::StressField<f32>;
pub type StokesSolution64 = stokes_solver::StokesSolution<f64>;
pub type StokesSolution32 = stokes_solver::StokesSolution<f32>;
pub type FlowState64 = fixed_point::FlowState<f64>;
pub type FlowState32 = fixed_point::FlowState<f32>;
pub type RHSData64 = fixed_point::RHSData<f64>;
pub type RHSData32 = fixed_point::RHSData<f32>;
