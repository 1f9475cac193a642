//! A posteriori monitors and convergence studies: the uniform-in-ε energy
//! monitors, both sides of the Cauchy-criterion inequality, dual-norm error
//! curves against a reference trajectory, log–log rate fits, and the domain
//! truncation study.
//!
//! Discrete time integrals are per-step sums: step k contributes dt times the
//! quantities it produced (u^{k+1}, mu^{k+1}, and the backward difference
//! quotient of that step), matching the backward Euler structure.

use crate::domain::{build_grid, DomainError, Field, Grid, GridConfig, GridKind};
use crate::dual::DualEngine;
use crate::evolution::{
    prepare_initial_data, solve_trajectory, EvolutionError, InitialData, SolveMode, SolverConfig,
    Trajectory,
};
use crate::nonlinearity::{MonotoneGraph, Perturbation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error("trajectories are not comparable: {reason}")]
    TrajectoryMismatch { reason: String },
    #[error("rate fit needs at least two points with positive abscissae and values, got {reason}")]
    RateFitDomain { reason: String },
    #[error("truncation radii must be strictly increasing")]
    RadiiNotIncreasing,
    #[error("radius {radius} does not extend the base grid by whole elements (spacing {spacing})")]
    NonNestedGrids { radius: f64, spacing: f64 },
}

/// Discrete analogues of the four uniform a priori estimates.
#[derive(Debug, Clone, Copy)]
pub struct MonitorSet {
    /// max_n [ |u^n|_H^2 + eps * sum_{k<=n} dt |A u^k|_H^2 ]
    pub m0: f64,
    /// sum_k dt |(u^{k+1}-u^k)/dt|_{V*}^2 + max_n eps |u^n|_V^2
    pub m1: f64,
    /// sum_k dt |mu^{k+1}|_V^2
    pub m2: f64,
    /// sum_k dt |beta(u^k)|_H^2
    pub m3: f64,
}

impl MonitorSet {
    pub fn observed_max(&self) -> f64 {
        self.m0.max(self.m1).max(self.m2).max(self.m3)
    }
}

pub fn energy_monitors(
    engine: &DualEngine,
    traj: &Trajectory,
    graph: &MonotoneGraph,
    epsilon: f64,
) -> Result<MonitorSet, AnalysisError> {
    let dt = traj.dt;
    let steps = traj.steps();

    let mut m0 = 0.0f64;
    let mut a_integral = 0.0;
    let mut v_max = 0.0f64;
    for n in 0..=steps {
        if n > 0 {
            let au = engine.operator().apply_operator(&traj.u[n])?;
            a_integral += dt * engine.h_norm(&au).powi(2);
        }
        m0 = m0.max(engine.h_norm(&traj.u[n]).powi(2) + epsilon * a_integral);
        v_max = v_max.max(epsilon * engine.v_norm(&traj.u[n]).powi(2));
    }

    let mut rate_integral = 0.0;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for k in 0..steps {
        let rate = Field::from_values(
            traj.u[k + 1]
                .values
                .iter()
                .zip(&traj.u[k].values)
                .map(|(a, b)| (a - b) / dt)
                .collect(),
        );
        rate_integral += dt * engine.vstar_norm(&rate)?.powi(2);
        m2 += dt * engine.v_norm(&traj.mu[k]).powi(2);
        let beta = Field::from_values(
            traj.u[k + 1]
                .values
                .iter()
                .map(|&x| graph.eval(x))
                .collect(),
        );
        m3 += dt * engine.h_norm(&beta).powi(2);
    }

    Ok(MonitorSet {
        m0,
        m1: rate_integral + v_max,
        m2,
        m3,
    })
}

fn check_comparable(a: &Trajectory, b: &Trajectory) -> Result<(), AnalysisError> {
    if a.u[0].len() != b.u[0].len() {
        return Err(AnalysisError::TrajectoryMismatch {
            reason: format!("grids differ: {} vs {} nodes", a.u[0].len(), b.u[0].len()),
        });
    }
    if a.steps() != b.steps() || (a.dt - b.dt).abs() > 1e-14 * a.dt.max(b.dt) {
        return Err(AnalysisError::TrajectoryMismatch {
            reason: format!(
                "time grids differ: {} steps of {} vs {} steps of {}",
                a.steps(),
                a.dt,
                b.steps(),
                b.dt
            ),
        });
    }
    Ok(())
}

/// Left-hand side of the Cauchy-criterion inequality for two trajectories on
/// the same grid: the squared sup of the V* distance plus twice the time
/// integral of the beta-monotonicity pairing. Nonnegative by monotonicity.
pub fn cauchy_gap_lhs(
    engine: &DualEngine,
    traj_a: &Trajectory,
    traj_b: &Trajectory,
    graph: &MonotoneGraph,
) -> Result<f64, AnalysisError> {
    check_comparable(traj_a, traj_b)?;
    let dt = traj_a.dt;
    let mass = engine.operator().mass();
    let mut sup_sq = 0.0f64;
    let mut pairing = 0.0;
    for n in 0..=traj_a.steps() {
        let diff = Field::from_values(
            traj_a.u[n]
                .values
                .iter()
                .zip(&traj_b.u[n].values)
                .map(|(x, y)| x - y)
                .collect(),
        );
        sup_sq = sup_sq.max(engine.vstar_norm(&diff)?.powi(2));
        if n > 0 {
            let mut s = 0.0;
            for i in 0..diff.len() {
                s += mass[i]
                    * (graph.eval(traj_a.u[n].values[i]) - graph.eval(traj_b.u[n].values[i]))
                    * (traj_a.u[n].values[i] - traj_b.u[n].values[i]);
            }
            pairing += dt * s;
        }
    }
    Ok(sup_sq + 2.0 * pairing)
}

/// Right-hand side of the Cauchy-criterion inequality:
/// d0^2 + 2M(eps^{1/2} + gamma^{1/2}) + 2MT(eps^{1/2} + gamma^{1/2} + 2 c1 (sigma(eps) + sigma(gamma))).
pub fn cauchy_bound_rhs(
    eps: f64,
    gamma: f64,
    m_observed: f64,
    horizon: f64,
    c1: f64,
    sigma: impl Fn(f64) -> f64,
    d0: f64,
) -> f64 {
    let roots = eps.sqrt() + gamma.sqrt();
    d0 * d0
        + 2.0 * m_observed * roots
        + 2.0 * m_observed * horizon * (roots + 2.0 * c1 * (sigma(eps) + sigma(gamma)))
}

/// e(eps) = max_n |u_eps^n - u_ref^n|_{V*}.
pub fn error_vs_reference(
    engine: &DualEngine,
    traj: &Trajectory,
    reference: &Trajectory,
) -> Result<f64, AnalysisError> {
    check_comparable(traj, reference)?;
    let mut sup = 0.0f64;
    for n in 0..=traj.steps() {
        let diff = Field::from_values(
            traj.u[n]
                .values
                .iter()
                .zip(&reference.u[n].values)
                .map(|(x, y)| x - y)
                .collect(),
        );
        sup = sup.max(engine.vstar_norm(&diff)?);
    }
    Ok(sup)
}

/// Least-squares fit of value = C * eps^p in log-log coordinates; returns (C, p).
pub fn rate_fit(points: &[(f64, f64)]) -> Result<(f64, f64), AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::RateFitDomain {
            reason: format!("{} point(s)", points.len()),
        });
    }
    for &(e, v) in points {
        if !(e > 0.0) || !(v > 0.0) {
            return Err(AnalysisError::RateFitDomain {
                reason: format!("point ({e}, {v})"),
            });
        }
    }
    let n = points.len() as f64;
    let mean_x: f64 = points.iter().map(|&(e, _)| e.ln()).sum::<f64>() / n;
    let mean_y: f64 = points.iter().map(|&(_, v)| v.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(e, v) in points {
        let dx = e.ln() - mean_x;
        sxx += dx * dx;
        sxy += dx * (v.ln() - mean_y);
    }
    if sxx == 0.0 {
        return Err(AnalysisError::RateFitDomain {
            reason: "all abscissae coincide".to_string(),
        });
    }
    let p = sxy / sxx;
    let c = (mean_y - p * mean_x).exp();
    Ok((c, p))
}

/// One consecutive-radius comparison of the truncation study.
#[derive(Debug, Clone, Copy)]
pub struct TruncationRow {
    pub r_small: f64,
    pub r_large: f64,
    pub sup_diff: f64,
}

/// Problem description driving [`truncation_study`]: everything but the outer
/// radius, whose influence the study measures. The base grid fixes the mesh
/// spacing; larger radii extend it node for node.
pub struct TruncationProblem<'a> {
    pub kind: GridKind,
    pub inner: f64,
    pub dimension: usize,
    pub base_radius: f64,
    pub base_nodes: usize,
    pub graph: &'a MonotoneGraph,
    pub pert: Option<&'a Perturbation>,
    pub mode: SolveMode,
    pub solver: &'a SolverConfig,
    pub initial: &'a (dyn Fn(f64) -> f64 + Sync),
    pub forcing: &'a (dyn Fn(f64, f64) -> f64 + Sync),
}

impl<'a> TruncationProblem<'a> {
    fn grid_for(&self, radius: f64) -> Result<Grid, AnalysisError> {
        let spacing = (self.base_radius - self.inner) / (self.base_nodes - 1) as f64;
        let elements = (radius - self.inner) / spacing;
        if (elements - elements.round()).abs() > 1e-9 * elements.max(1.0) {
            return Err(AnalysisError::NonNestedGrids { radius, spacing });
        }
        let nodes = elements.round() as usize + 1;
        let cfg = GridConfig {
            kind: self.kind,
            a: self.inner,
            b: radius,
            nodes,
            dimension: self.dimension,
        };
        Ok(build_grid(&cfg)?)
    }

    fn final_state(&self, radius: f64) -> Result<Field, AnalysisError> {
        let grid = self.grid_for(radius)?;
        let op = crate::domain::assemble_operator(&grid);
        let engine = DualEngine::new(op);
        let u0 = Field::from_fn(&grid, self.initial);
        let init = match (self.mode, self.pert) {
            (SolveMode::CahnHilliard, Some(p)) => prepare_initial_data(&engine, &u0, p.epsilon())?,
            _ => InitialData::from_raw(u0),
        };
        let forcing = self.forcing;
        let g = |t: f64| Field::from_fn(&grid, |x| forcing(x, t));
        let traj = solve_trajectory(
            &engine,
            self.graph,
            self.pert,
            self.solver,
            &init,
            g,
            self.mode,
        )?;
        Ok(traj.final_state().clone())
    }
}

/// Solve the same problem on nested domains of growing outer radius and
/// report, for each consecutive pair, the sup-norm difference of the final
/// states on the common (smaller) node set.
pub fn truncation_study(
    problem: &TruncationProblem,
    radii: &[f64],
) -> Result<Vec<TruncationRow>, AnalysisError> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::RadiiNotIncreasing);
    }
    if radii.len() < 2 {
        return Ok(Vec::new());
    }
    let mut rows = Vec::with_capacity(radii.len() - 1);
    let mut prev = problem.final_state(radii[0])?;
    for w in radii.windows(2) {
        let next = problem.final_state(w[1])?;
        let sup = prev
            .values
            .iter()
            .zip(&next.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        rows.push(TruncationRow {
            r_small: w[0],
            r_large: w[1],
            sup_diff: sup,
        });
        prev = next;
    }
    Ok(rows)
}

/// Aggregated study results as assembled by the experiment runner.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceReport {
    /// Strictly decreasing regularization ladder.
    pub ladder: Vec<f64>,
    pub m_observed: Option<f64>,
    pub cauchy: Vec<CauchyPair>,
    pub rate: Vec<RatePoint>,
    pub c_star: Option<f64>,
    pub p: Option<f64>,
    pub truncation: Vec<TruncationRow>,
}

/// One (eps, gamma) entry of the Cauchy study.
#[derive(Debug, Clone, Copy)]
pub struct CauchyPair {
    pub eps: f64,
    pub gamma: f64,
    pub d0_sq: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl CauchyPair {
    pub fn passes(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// One point of the rate study.
#[derive(Debug, Clone, Copy)]
pub struct RatePoint {
    pub eps: f64,
    pub error: f64,
}
