//! Flow solvers: the discrete Laplacian with its exact heat semigroup, the
//! Picard iteration on the Duhamel form of the conformal flow equation, and
//! the independent implicit time-stepping oracle.

pub mod flow;
pub mod laplacian;

pub use flow::{
    ball_samples, constant_curvature, estimate_audit, flow_pde_residual,
    implicit_oracle_solve, picard_map, picard_solve, picard_solve_scaled, radial_bump,
    sample_scal0, yamabe_flow_run, Backend, EstimateAuditReport, FlowState, IterationRecord,
    QuotientStat, SolverParams,
};
pub use laplacian::{build_laplacian, DiscreteLaplacian};
