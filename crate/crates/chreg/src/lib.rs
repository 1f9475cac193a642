//! Solver library for nonlinear diffusion problems of the form
//! `u_t + (-Δ+1)β(u) = g` with Neumann boundary conditions, together with
//! their Cahn–Hilliard-type regularization
//! `u_t + (-Δ+1)(ε(-Δ+1)u + β(u) + π_ε(u) - f) = 0` on truncated
//! one-dimensional and radially symmetric exterior domains.
//!
//! The crate provides the spatial discretization (`domain`), the monotone
//! nonlinearity catalog (`nonlinearity`), dual-norm machinery (`dual`),
//! implicit time stepping with semismooth Newton (`evolution`), a posteriori
//! monitors and convergence studies (`analysis`), and a batch CLI front end
//! (`config`, `runner`).

pub mod analysis;
pub mod config;
pub mod domain;
pub mod dual;
pub mod evolution;
pub mod linalg;
pub mod nonlinearity;
pub mod runner;
pub mod sampling;

pub use analysis::{
    cauchy_bound_rhs, cauchy_gap_lhs, energy_monitors, error_vs_reference, rate_fit,
    truncation_study, ConvergenceReport, MonitorSet,
};
pub use config::{parse_config, ExperimentConfig};
pub use domain::{
    assemble_operator, build_grid, EllipticOperator, Field, Grid, GridConfig, GridKind,
};
pub use dual::DualEngine;
pub use evolution::{
    phi_eps_energy, prepare_initial_data, solve_trajectory, InitialData, SolveMode, SolverConfig,
    Trajectory,
};
pub use nonlinearity::{validate_conditions, ConditionReport, MonotoneGraph, Perturbation};
