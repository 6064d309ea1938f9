//! Numerical laboratory for Yamabe flow on spaces with incomplete edge
//! singularities.
//!
//! The crate models rigid edge metrics `g0 = dx^2 + h~ + x^2 kappa` near a
//! singular stratum, audits them for flow solvability (spectral gap of the
//! link, perturbation decay, Hoelder-exponent ceiling), evaluates the heat
//! kernel of the model cone through its Bessel mode expansion, measures
//! parabolic Hoelder norms on space-time grids, and solves the conformal
//! flow equation
//! `d/dt u + Delta u = B(u) + Q(u), u(0) = 0`
//! by Picard iteration on the Duhamel form, cross-checked against an
//! implicit time-stepping solver.
//!
//! All numerics are generic over the floating scalar via [`scalar::Scalar`];
//! the `*64` aliases at the crate root fix `f64` for ordinary use.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod holder;
pub mod kernel;
pub mod linalg;
pub mod scalar;
pub mod solver;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the central types.
pub type EdgeConfig64 = geometry::EdgeConfig<f64>;
pub type LinkSpec64 = geometry::LinkSpec<f64>;
pub type BaseSpec64 = geometry::BaseSpec<f64>;
pub type EdgePoint64 = geometry::EdgePoint<f64>;
pub type FeasibilityReport64 = spectral::FeasibilityReport<f64>;
pub type LinkSpectrum64 = spectral::LinkSpectrum<f64>;
pub type ConeKernel64 = kernel::ConeKernel<f64>;
pub type CompletenessReport64 = kernel::CompletenessReport<f64>;
pub type HolderReport64 = holder::HolderReport<f64>;
pub type SpaceTimeField64 = grid::SpaceTimeField<f64>;
pub type Grid64 = grid::Grid<f64>;
pub type GridParams64 = grid::GridParams<f64>;
pub type SolverParams64 = solver::SolverParams<f64>;
pub type FlowState64 = solver::FlowState<f64>;
pub type EstimateAuditReport64 = solver::EstimateAuditReport<f64>;

pub use solver::Backend;
