//! Implicit Euler time stepping for both the regularized Cahn–Hilliard
//! system and the limit diffusion problem, with semismooth Newton solves and
//! resolvent-regularized initial data.
//!
//! Each backward Euler step of the regularized system solves the coupled
//! pair of equations
//!
//! ```text
//! M (u - u_n)/dt + (K+M) mu = 0,
//! M mu = eps (K+M) u + M(beta(u) + pi_eps(u) - f_n)   (nodal beta, pi)
//! ```
//!
//! for (u, mu) = (u_{n+1}, mu_{n+1}), which is exactly the optimality system
//! of one minimizing movement of the convex energy [`phi_eps_energy`] in the
//! discrete V* metric. Newton iterates on the interleaved (u, mu) state; the
//! Jacobian is banded (three off-diagonals) and solved by LU with partial
//! pivoting. Keeping both equations first-order in K+M matters: it keeps the
//! f64 evaluation floor of the residual far below newton_tol, which an
//! elimination of mu would not (its residual applies (K+M)M^{-1}(K+M)).
//! Where the generalized derivative of beta degenerates (fast diffusion near
//! the origin) the Jacobian optionally uses the derivative of the Yosida
//! approximation beta_lambda while residuals always use the true beta; a
//! stalled step retries once with that smoothing before failing.

use crate::domain::{DomainError, Field};
use crate::dual::DualEngine;
use crate::linalg::{BandMatrix, LinalgError};
use crate::nonlinearity::{MonotoneGraph, NonlinearityError, Perturbation, DEFAULT_DERIVATIVE_CAP};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid solver configuration: {key}: {message}")]
    InvalidConfig { key: &'static str, message: String },
    #[error(
        "Newton did not converge at step {step} (t = {time}): residual {residual:e} after {iters} iterations; history {history:?}"
    )]
    NewtonFailed {
        step: usize,
        time: f64,
        iters: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("non-finite iterate detected at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
    #[error(
        "initial data invariant violated beyond slack: {name} = {actual:e} exceeds bound {bound:e}; this indicates an assembly bug"
    )]
    InitialDataInconsistent {
        name: &'static str,
        actual: f64,
        bound: f64,
    },
}

/// Which problem the stepper advances: the Cahn–Hilliard regularization or
/// the limit diffusion problem itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    CahnHilliard,
    Direct,
}

/// Time-stepping parameters. The horizon is resolved into
/// `steps = round(T/dt)` uniform implicit Euler steps.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Jacobian smoothing parameter; 0 disables smoothing.
    pub yosida_lambda: f64,
    pub derivative_cap: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64) -> Result<Self, EvolutionError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EvolutionError::InvalidConfig {
                key: "time.dt",
                message: format!("time step must be positive, got {dt}"),
            });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(EvolutionError::InvalidConfig {
                key: "time.horizon",
                message: format!("horizon must be positive, got {horizon}"),
            });
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(EvolutionError::InvalidConfig {
                key: "time.dt",
                message: format!("horizon {horizon} is not an integer multiple of dt {dt}"),
            });
        }
        Ok(Self {
            dt,
            horizon,
            newton_tol: 1e-10,
            newton_max_iters: 50,
            yosida_lambda: 0.0,
            derivative_cap: DEFAULT_DERIVATIVE_CAP,
        })
    }

    pub fn with_newton_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    pub fn with_yosida_lambda(mut self, lambda: f64) -> Self {
        self.yosida_lambda = lambda;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Raw and resolvent-regularized initial data u_0, u_{0eps} = J_eps u_0.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub raw: Field,
    pub regularized: Field,
    pub epsilon: Option<f64>,
    /// |u_{0eps} - u_0|_{V*}, reported for Cauchy studies.
    pub vstar_gap: f64,
}

impl InitialData {
    /// Use the raw field unregularized (direct solves of the limit problem).
    pub fn from_raw(raw: Field) -> Self {
        Self {
            regularized: raw.clone(),
            raw,
            epsilon: None,
            vstar_gap: 0.0,
        }
    }

    /// The field a trajectory in the given mode starts from.
    pub fn start_field(&self, mode: SolveMode) -> &Field {
        match mode {
            SolveMode::CahnHilliard => &self.regularized,
            SolveMode::Direct => &self.raw,
        }
    }
}

/// Regularize initial data through the resolvent: solve
/// (M + eps(K+M)) u_{0eps} = M u_0, then verify the contraction bound
/// |u_{0eps}|_H <= |u_0|_H and the dual-norm gap
/// |u_{0eps} - u_0|_{V*} <= eps^{1/2} |u_0|_H.
pub fn prepare_initial_data(
    engine: &DualEngine,
    u0: &Field,
    epsilon: f64,
) -> Result<InitialData, EvolutionError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(EvolutionError::InvalidConfig {
            key: "model.epsilon",
            message: format!("epsilon must lie in (0, 1], got {epsilon}"),
        });
    }
    let op = engine.operator();
    if u0.len() != op.len() {
        return Err(DomainError::DimensionMismatch {
            field: u0.len(),
            grid: op.len(),
        }
        .into());
    }
    let factor = op.shifted_tridiag(epsilon).ldlt()?;
    let rhs: Vec<f64> = op
        .mass()
        .iter()
        .zip(&u0.values)
        .map(|(&m, &x)| m * x)
        .collect();
    let regularized = Field::from_values(factor.solve(&rhs));

    let h_raw = engine.h_norm(u0);
    let h_reg = engine.h_norm(&regularized);
    if h_reg > h_raw + 1e-8 {
        return Err(EvolutionError::InitialDataInconsistent {
            name: "|J_eps u0|_H <= |u0|_H",
            actual: h_reg,
            bound: h_raw,
        });
    }
    let diff = Field::from_values(
        regularized
            .values
            .iter()
            .zip(&u0.values)
            .map(|(a, b)| a - b)
            .collect(),
    );
    let vstar_gap = engine.vstar_norm(&diff)?;
    let gap_bound = epsilon.sqrt() * h_raw;
    if vstar_gap > gap_bound + 1e-8 {
        return Err(EvolutionError::InitialDataInconsistent {
            name: "|u0eps - u0|_{V*} <= eps^{1/2} |u0|_H",
            actual: vstar_gap,
            bound: gap_bound,
        });
    }
    Ok(InitialData {
        raw: u0.clone(),
        regularized,
        epsilon: Some(epsilon),
        vstar_gap,
    })
}

/// Completed discrete evolution with per-step Newton diagnostics. `u` holds
/// the states u^0..u^M; `mu` and `f` hold one entry per step, so `mu[k]` is
/// the chemical potential produced together with `u[k+1]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: SolveMode,
    pub epsilon: Option<f64>,
    pub dt: f64,
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub mu: Vec<Field>,
    pub f: Vec<Field>,
    pub newton_iters: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.mu.len()
    }

    pub fn final_state(&self) -> &Field {
        self.u
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

struct StepOutcome {
    u: Field,
    mu: Field,
    iters: usize,
    residual: f64,
}

/// Shared per-grid context for the Newton solves.
///
/// Direct mode iterates on u alone (tridiagonal Jacobian). Cahn–Hilliard mode
/// iterates on the coupled state (u, mu), interleaved node by node, so both
/// step equations are enforced as written and the residual never squares the
/// operator: the achievable residual floor stays far below newton_tol.
struct Stepper<'a> {
    engine: &'a DualEngine,
    graph: &'a MonotoneGraph,
    pert: Option<&'a Perturbation>,
    cfg: &'a SolverConfig,
    mode: SolveMode,
}

impl<'a> Stepper<'a> {
    fn new(
        engine: &'a DualEngine,
        graph: &'a MonotoneGraph,
        pert: Option<&'a Perturbation>,
        cfg: &'a SolverConfig,
        mode: SolveMode,
    ) -> Self {
        Self {
            engine,
            graph,
            pert,
            cfg,
            mode,
        }
    }

    /// Chemical potential evaluated from the mu-equation: the Newton starting
    /// guess in Cahn–Hilliard mode.
    fn chemical_potential(&self, u: &Field, f: &Field) -> Field {
        let op = self.engine.operator();
        let pert = self
            .pert
            .expect("Cahn-Hilliard mode carries a perturbation");
        let eps = pert.epsilon();
        let au = op.apply_operator(u).expect("dimensions fixed by caller");
        let vals = (0..u.len())
            .map(|i| {
                eps * au.values[i] + self.graph.eval(u.values[i]) + pert.eval(u.values[i])
                    - f.values[i]
            })
            .collect();
        Field::from_values(vals)
    }

    fn initial_state(&self, prev: &Field, data: &Field) -> Vec<f64> {
        match self.mode {
            SolveMode::Direct => prev.values.clone(),
            SolveMode::CahnHilliard => {
                let mu = self.chemical_potential(prev, data);
                let mut z = Vec::with_capacity(2 * prev.len());
                for i in 0..prev.len() {
                    z.push(prev.values[i]);
                    z.push(mu.values[i]);
                }
                z
            }
        }
    }

    /// Residual of the step equations at the given state.
    fn residual_state(&self, z: &[f64], prev: &Field, data: &Field) -> Vec<f64> {
        let op = self.engine.operator();
        let m = op.mass();
        let dt = self.cfg.dt;
        let n = prev.len();
        match self.mode {
            SolveMode::Direct => {
                let beta: Vec<f64> = z.iter().map(|&x| self.graph.eval(x)).collect();
                let bb = op.apply_stiffness(&beta);
                (0..n)
                    .map(|i| {
                        m[i] * (z[i] - prev.values[i]) / dt + bb[i] + m[i] * beta[i]
                            - m[i] * data.values[i]
                    })
                    .collect()
            }
            SolveMode::CahnHilliard => {
                let pert = self.pert.expect("checked at entry");
                let eps = pert.epsilon();
                let u: Vec<f64> = (0..n).map(|i| z[2 * i]).collect();
                let mu: Vec<f64> = (0..n).map(|i| z[2 * i + 1]).collect();
                let ku = op.apply_stiffness(&u);
                let kmu = op.apply_stiffness(&mu);
                let mut res = vec![0.0; 2 * n];
                for i in 0..n {
                    // mass balance: M(u - u^n)/dt + (K+M)mu = 0
                    res[2 * i] = m[i] * (u[i] - prev.values[i]) / dt + kmu[i] + m[i] * mu[i];
                    // potential identity: M mu - eps(K+M)u - M(beta + pi - f) = 0
                    res[2 * i + 1] = m[i] * mu[i]
                        - eps * (ku[i] + m[i] * u[i])
                        - m[i] * (self.graph.eval(u[i]) + pert.eval(u[i]) - data.values[i]);
                }
                res
            }
        }
    }

    /// Selected derivative of the nodal nonlinearity, optionally smoothed.
    fn nodal_derivative(&self, x: f64, lambda: f64) -> f64 {
        if lambda > 0.0 {
            self.graph
                .yosida_derivative(lambda, x, self.cfg.derivative_cap)
        } else {
            self.graph.derivative(x, self.cfg.derivative_cap)
        }
    }

    /// Newton matrix at the given state with the given smoothing parameter.
    fn jacobian_state(&self, z: &[f64], lambda: f64) -> BandMatrix {
        let op = self.engine.operator();
        let t = op.a_form_tridiag();
        let m = op.mass();
        let n = op.len();
        let dt = self.cfg.dt;
        let a_entry = |i: usize, j: usize| -> f64 {
            if i == j {
                t.diag[i]
            } else if i + 1 == j {
                t.off[i]
            } else {
                t.off[j]
            }
        };
        match self.mode {
            SolveMode::Direct => {
                let mut jac = BandMatrix::zeros(n, 1, 1);
                let d: Vec<f64> = z
                    .iter()
                    .map(|&x| self.nodal_derivative(x, lambda))
                    .collect();
                for i in 0..n {
                    jac.set(i, i, m[i] / dt + t.diag[i] * d[i]);
                    if i + 1 < n {
                        jac.set(i, i + 1, t.off[i] * d[i + 1]);
                        jac.set(i + 1, i, t.off[i] * d[i]);
                    }
                }
                jac
            }
            SolveMode::CahnHilliard => {
                let pert = self.pert.expect("checked at entry");
                let eps = pert.epsilon();
                let mut jac = BandMatrix::zeros(2 * n, 3, 3);
                for i in 0..n {
                    let du = self.nodal_derivative(z[2 * i], lambda) + pert.derivative();
                    // row 2i: mass balance
                    jac.set(2 * i, 2 * i, m[i] / dt);
                    // row 2i+1: potential identity
                    jac.set(2 * i + 1, 2 * i + 1, m[i]);
                    jac.add(2 * i + 1, 2 * i, -m[i] * du);
                    let lo = i.saturating_sub(1);
                    let hi = (i + 1).min(n - 1);
                    for j in lo..=hi {
                        let b = a_entry(i, j);
                        jac.add(2 * i, 2 * j + 1, b);
                        jac.add(2 * i + 1, 2 * j, -eps * b);
                    }
                }
                jac
            }
        }
    }

    fn extract_outcome(&self, z: Vec<f64>, iters: usize, residual: f64) -> StepOutcome {
        match self.mode {
            SolveMode::Direct => {
                let beta = z.iter().map(|&x| self.graph.eval(x)).collect();
                StepOutcome {
                    u: Field::from_values(z),
                    mu: Field::from_values(beta),
                    iters,
                    residual,
                }
            }
            SolveMode::CahnHilliard => {
                let n = z.len() / 2;
                let u = (0..n).map(|i| z[2 * i]).collect();
                let mu = (0..n).map(|i| z[2 * i + 1]).collect();
                StepOutcome {
                    u: Field::from_values(u),
                    mu: Field::from_values(mu),
                    iters,
                    residual,
                }
            }
        }
    }

    /// One implicit Euler step from `prev`. `data` is f_n in Cahn–Hilliard
    /// mode and g_n in direct mode.
    fn step(
        &self,
        prev: &Field,
        data: &Field,
        step_index: usize,
        time: f64,
    ) -> Result<StepOutcome, EvolutionError> {
        let tol = self.cfg.newton_tol * (1.0 + self.engine.h_norm(prev));
        let mut attempt_lambda = self.cfg.yosida_lambda;
        let mut last_error = None;
        for attempt in 0..2 {
            match self.newton_loop(prev, data, tol, attempt_lambda, step_index, time) {
                Ok(out) => return Ok(out),
                Err(e) => {
                    // retry once with a smoothed Jacobian before giving up
                    last_error = Some(e);
                    if attempt == 0 {
                        attempt_lambda = (10.0 * attempt_lambda).max(1e-6);
                    }
                }
            }
        }
        Err(last_error.expect("two attempts recorded an error"))
    }

    fn newton_loop(
        &self,
        prev: &Field,
        data: &Field,
        tol: f64,
        lambda: f64,
        step_index: usize,
        time: f64,
    ) -> Result<StepOutcome, EvolutionError> {
        let mut z = self.initial_state(prev, data);
        let mut res = self.residual_state(&z, prev, data);
        let mut res_norm = norm2(&res);
        let mut history = vec![res_norm];
        for iter in 0..self.cfg.newton_max_iters {
            if !res_norm.is_finite() {
                return Err(EvolutionError::NonFinite {
                    step: step_index,
                    time,
                });
            }
            if res_norm <= tol {
                return Ok(self.extract_outcome(z, iter, res_norm));
            }
            let jac = self.jacobian_state(&z, lambda);
            let lu = jac.clone().lu()?;
            let mut delta = lu.solve(&res)?;
            // one pass of iterative refinement keeps the correction accurate
            // when the first residual is many orders above newton_tol
            let jd = jac.matvec(&delta);
            let corr: Vec<f64> = res.iter().zip(&jd).map(|(r, p)| r - p).collect();
            let fix = lu.solve(&corr)?;
            for (d, f) in delta.iter_mut().zip(&fix) {
                *d += f;
            }
            // step halving on residual increase
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let candidate: Vec<f64> = (0..z.len()).map(|i| z[i] - alpha * delta[i]).collect();
                if candidate.iter().all(|v| v.is_finite()) {
                    let cres = self.residual_state(&candidate, prev, data);
                    let cnorm = norm2(&cres);
                    if cnorm.is_finite() && (cnorm < res_norm || cnorm <= tol) {
                        z = candidate;
                        res = cres;
                        res_norm = cnorm;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            history.push(res_norm);
            if !accepted {
                return Err(EvolutionError::NewtonFailed {
                    step: step_index,
                    time,
                    iters: iter + 1,
                    residual: res_norm,
                    history,
                });
            }
        }
        if res_norm <= tol {
            let iters = self.cfg.newton_max_iters;
            return Ok(self.extract_outcome(z, iters, res_norm));
        }
        Err(EvolutionError::NewtonFailed {
            step: step_index,
            time,
            iters: self.cfg.newton_max_iters,
            residual: res_norm,
            history,
        })
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One Cahn–Hilliard step; returns (u_{n+1}, mu_{n+1}).
pub fn step_cahn_hilliard(
    engine: &DualEngine,
    graph: &MonotoneGraph,
    pert: &Perturbation,
    cfg: &SolverConfig,
    prev: &Field,
    f_n: &Field,
) -> Result<(Field, Field), EvolutionError> {
    let stepper = Stepper::new(engine, graph, Some(pert), cfg, SolveMode::CahnHilliard);
    let out = stepper.step(prev, f_n, 0, 0.0)?;
    Ok((out.u, out.mu))
}

/// One direct step of the limit problem; returns u_{n+1}.
pub fn step_direct(
    engine: &DualEngine,
    graph: &MonotoneGraph,
    cfg: &SolverConfig,
    prev: &Field,
    g_n: &Field,
) -> Result<Field, EvolutionError> {
    let stepper = Stepper::new(engine, graph, None, cfg, SolveMode::Direct);
    Ok(stepper.step(prev, g_n, 0, 0.0)?.u)
}

/// March the full trajectory. The forcing g is sampled at the left endpoint
/// of each step interval; in Cahn–Hilliard mode f_n is recovered from g_n by
/// the (C2) solve each step, and in direct mode mu is recorded as
/// beta(u) - f per the weak-solution definition of the limit problem.
pub fn solve_trajectory(
    engine: &DualEngine,
    graph: &MonotoneGraph,
    pert: Option<&Perturbation>,
    cfg: &SolverConfig,
    init: &InitialData,
    g: impl Fn(f64) -> Field,
    mode: SolveMode,
) -> Result<Trajectory, EvolutionError> {
    if mode == SolveMode::CahnHilliard && pert.is_none() {
        return Err(EvolutionError::InvalidConfig {
            key: "model.epsilon",
            message: "Cahn-Hilliard mode requires a perturbation (epsilon)".to_string(),
        });
    }
    let start = init.start_field(mode);
    if start.len() != engine.len() {
        return Err(DomainError::DimensionMismatch {
            field: start.len(),
            grid: engine.len(),
        }
        .into());
    }
    let stepper = Stepper::new(engine, graph, pert, cfg, mode);
    let steps = cfg.steps();
    let mut traj = Trajectory {
        mode,
        epsilon: pert.map(|p| p.epsilon()),
        dt: cfg.dt,
        times: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        mu: Vec::with_capacity(steps),
        f: Vec::with_capacity(steps),
        newton_iters: Vec::with_capacity(steps),
        residuals: Vec::with_capacity(steps),
    };
    traj.times.push(0.0);
    traj.u.push(start.clone());
    for k in 0..steps {
        let t_left = k as f64 * cfg.dt;
        let g_n = g(t_left);
        if g_n.len() != engine.len() {
            return Err(DomainError::DimensionMismatch {
                field: g_n.len(),
                grid: engine.len(),
            }
            .into());
        }
        let f_n = engine.compute_f(&g_n)?;
        let prev = traj.u.last().expect("initialized with u0");
        let out = match mode {
            SolveMode::CahnHilliard => stepper.step(prev, &f_n, k, t_left)?,
            SolveMode::Direct => {
                let mut out = stepper.step(prev, &g_n, k, t_left)?;
                // mu = beta(u) - f in the limit problem
                out.mu = Field::from_values(
                    out.mu
                        .values
                        .iter()
                        .zip(&f_n.values)
                        .map(|(b, f)| b - f)
                        .collect(),
                );
                out
            }
        };
        traj.times.push((k + 1) as f64 * cfg.dt);
        traj.u.push(out.u);
        traj.mu.push(out.mu);
        traj.f.push(f_n);
        traj.newton_iters.push(out.iters);
        traj.residuals.push(out.residual);
    }
    Ok(traj)
}

/// The convex energy driving the regularized flow:
/// phi_eps(u) = (eps/2)|u|_V^2 + sum_i m_i beta_hat(u_i) + sum_i m_i pi_hat_eps(u_i).
pub fn phi_eps_energy(
    engine: &DualEngine,
    graph: &MonotoneGraph,
    pert: &Perturbation,
    u: &Field,
) -> f64 {
    let op = engine.operator();
    let eps = pert.epsilon();
    let mut e = 0.5 * eps * op.v_inner(u, u);
    for (i, &m) in op.mass().iter().enumerate() {
        e += m * (graph.potential(u.values[i]) + pert.primitive(u.values[i]));
    }
    e
}

/// The beta-potential part alone, sum_i m_i beta_hat(u_i); the natural
/// energy readout for direct trajectories.
pub fn beta_energy(engine: &DualEngine, graph: &MonotoneGraph, u: &Field) -> f64 {
    engine
        .operator()
        .mass()
        .iter()
        .enumerate()
        .map(|(i, &m)| m * graph.potential(u.values[i]))
        .sum()
}
