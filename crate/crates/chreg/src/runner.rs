//! Experiment orchestration: solve runs, Cauchy studies, rate studies,
//! truncation studies and model validation, with deterministic CSV output.
//!
//! Ladder members run concurrently (one trajectory per worker); all file
//! assembly happens single-threaded afterwards, sorted by (eps, t), so
//! identical inputs yield byte-identical files. Output files are built in
//! memory and written only once the whole study has succeeded, so a failed
//! run leaves no partial outputs behind.

use crate::analysis::{
    cauchy_bound_rhs, cauchy_gap_lhs, energy_monitors, error_vs_reference, rate_fit,
    truncation_study, AnalysisError, CauchyPair, ConvergenceReport, MonitorSet, RatePoint,
    TruncationProblem,
};
use crate::config::ExperimentConfig;
use crate::domain::{assemble_operator, build_grid, DomainError, Field, Grid};
use crate::dual::DualEngine;
use crate::evolution::{
    beta_energy, phi_eps_energy, prepare_initial_data, solve_trajectory, EvolutionError,
    InitialData, SolveMode, SolverConfig, Trajectory,
};
use crate::nonlinearity::{validate_conditions, NonlinearityError, Perturbation};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("need {need} ladder entries for this study, got {got} (key model.epsilon)")]
    LadderTooShort { need: usize, got: usize },
    #[error("truncation study needs study.radii")]
    MissingRadii,
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// What a study produced: written files, the rendered report, and whether
/// every inequality check passed.
#[derive(Debug)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub report: String,
    pub checks_passed: bool,
    pub convergence: ConvergenceReport,
}

/// Serialize a float with 17 significant digits so values round-trip exactly.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

struct LadderRun {
    eps: f64,
    init: InitialData,
    traj: Trajectory,
    monitors: MonitorSet,
}

fn setup(cfg: &ExperimentConfig) -> Result<(Grid, DualEngine, SolverConfig), RunError> {
    let grid = build_grid(&cfg.grid_config())?;
    let engine = DualEngine::new(assemble_operator(&grid));
    let solver = cfg.solver_config()?;
    Ok((grid, engine, solver))
}

/// Solve one regularized trajectory per ladder member, in parallel workers,
/// and collect results in ladder order.
fn ladder_runs(
    cfg: &ExperimentConfig,
    grid: &Grid,
    engine: &DualEngine,
    solver: &SolverConfig,
    ladder: &[f64],
) -> Result<Vec<LadderRun>, RunError> {
    let u0 = cfg.initial_field(grid);
    let run_one = |eps: f64| -> Result<LadderRun, RunError> {
        let pert = Perturbation::new(eps)?;
        let init = prepare_initial_data(engine, &u0, eps)?;
        let traj = solve_trajectory(
            engine,
            &cfg.graph,
            Some(&pert),
            solver,
            &init,
            |t| cfg.forcing_field(grid, t),
            SolveMode::CahnHilliard,
        )?;
        let monitors = energy_monitors(engine, &traj, &cfg.graph, eps)?;
        Ok(LadderRun {
            eps,
            init,
            traj,
            monitors,
        })
    };
    let results: Vec<Result<LadderRun, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ladder
            .iter()
            .map(|&eps| scope.spawn(move || run_one(eps)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ladder worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

fn write_outputs(
    cfg: &ExperimentConfig,
    outputs: &[(&str, String)],
) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| RunError::Io {
        path: cfg.output_dir.display().to_string(),
        source: e,
    })?;
    let mut files = Vec::new();
    for (name, content) in outputs {
        let path = cfg.output_dir.join(name);
        if let Err(e) = fs::write(&path, content) {
            // no partial outputs: drop whatever this run already wrote
            for written in &files {
                let _ = fs::remove_file(written);
            }
            return Err(RunError::Io {
                path: path.display().to_string(),
                source: e,
            });
        }
        files.push(path);
    }
    Ok(files)
}

fn parameter_block(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "domain: {:?} [{}, {}], N = {}",
        cfg.domain_kind, cfg.domain_a, cfg.domain_b, cfg.dimension
    );
    let _ = writeln!(s, "grid: {} nodes", cfg.nodes);
    let _ = writeln!(s, "time: horizon = {}, dt = {}", cfg.horizon, cfg.dt);
    let _ = writeln!(s, "model: {:?}", cfg.graph);
    let _ = writeln!(
        s,
        "epsilon ladder: {}",
        cfg.ladder
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(s, "mode: {:?}", cfg.solver.mode);
    s
}

/// Solve one trajectory (the first ladder entry in Cahn–Hilliard mode) and
/// emit trajectory.csv plus report.txt.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    let (grid, engine, solver) = setup(cfg)?;
    let u0 = cfg.initial_field(&grid);
    let mode = cfg.solver.mode;
    let (pert, init) = match mode {
        SolveMode::CahnHilliard => {
            let eps = cfg.ladder[0];
            (
                Some(Perturbation::new(eps)?),
                prepare_initial_data(&engine, &u0, eps)?,
            )
        }
        SolveMode::Direct => (None, InitialData::from_raw(u0)),
    };
    let traj = solve_trajectory(
        &engine,
        &cfg.graph,
        pert.as_ref(),
        &solver,
        &init,
        |t| cfg.forcing_field(&grid, t),
        mode,
    )?;

    let mut csv =
        String::from("t,h_norm,v_norm,vstar_norm_of_rate,phi_eps,newton_iters,residual\n");
    for n in 0..traj.u.len() {
        let u = &traj.u[n];
        let rate_norm = if n == 0 {
            0.0
        } else {
            let rate = Field::from_values(
                u.values
                    .iter()
                    .zip(&traj.u[n - 1].values)
                    .map(|(a, b)| (a - b) / traj.dt)
                    .collect(),
            );
            engine.vstar_norm(&rate)?
        };
        let energy = match pert.as_ref() {
            Some(p) => phi_eps_energy(&engine, &cfg.graph, p, u),
            None => beta_energy(&engine, &cfg.graph, u),
        };
        let (iters, residual) = if n == 0 {
            (0, 0.0)
        } else {
            (traj.newton_iters[n - 1], traj.residuals[n - 1])
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_g17(traj.times[n]),
            fmt_g17(engine.h_norm(u)),
            fmt_g17(engine.v_norm(u)),
            fmt_g17(rate_norm),
            fmt_g17(energy),
            iters,
            fmt_g17(residual),
        );
    }

    let mut report = String::from("chreg solve\n");
    report.push_str(&parameter_block(cfg));
    let _ = writeln!(report, "steps: {}", traj.steps());
    let _ = writeln!(
        report,
        "final |u|_H: {}",
        fmt_g17(engine.h_norm(traj.final_state()))
    );
    let _ = writeln!(
        report,
        "max newton iterations per step: {}",
        traj.newton_iters.iter().copied().max().unwrap_or(0)
    );
    report.push_str("result: OK\n");

    let files = write_outputs(
        cfg,
        &[("trajectory.csv", csv), ("report.txt", report.clone())],
    )?;
    Ok(RunArtifacts {
        files,
        report,
        checks_passed: true,
        convergence: ConvergenceReport {
            ladder: cfg.ladder.clone(),
            ..Default::default()
        },
    })
}

/// Run the regularization ladder and check the Cauchy-criterion inequality
/// for every ordered pair; emit cauchy.csv and report.txt.
pub fn run_cauchy_study(cfg: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    let (grid, engine, solver) = setup(cfg)?;
    let runs = ladder_runs(cfg, &grid, &engine, &solver, &cfg.ladder)?;
    let m_observed = runs
        .iter()
        .map(|r| r.monitors.observed_max())
        .fold(0.0f64, f64::max);

    // single-entry ladders compare the trajectory with itself
    let mut index_pairs = Vec::new();
    if runs.len() == 1 {
        index_pairs.push((0usize, 0usize));
    } else {
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                index_pairs.push((i, j));
            }
        }
    }

    let sigma = |x: f64| x;
    let mut pairs = Vec::new();
    for (i, j) in index_pairs {
        let (a, b) = (&runs[i], &runs[j]);
        let d0_field = Field::from_values(
            a.init
                .regularized
                .values
                .iter()
                .zip(&b.init.regularized.values)
                .map(|(x, y)| x - y)
                .collect(),
        );
        let d0 = engine.vstar_norm(&d0_field)?;
        let lhs = cauchy_gap_lhs(&engine, &a.traj, &b.traj, &cfg.graph)?;
        let rhs = cauchy_bound_rhs(a.eps, b.eps, m_observed, cfg.horizon, cfg.c1, sigma, d0);
        pairs.push(CauchyPair {
            eps: a.eps,
            gamma: b.eps,
            d0_sq: d0 * d0,
            lhs,
            rhs,
        });
    }

    let mut csv = String::from("eps,gamma,d0_sq,lhs,rhs,verdict\n");
    for p in &pairs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_g17(p.eps),
            fmt_g17(p.gamma),
            fmt_g17(p.d0_sq),
            fmt_g17(p.lhs),
            fmt_g17(p.rhs),
            if p.passes() { "PASS" } else { "FAIL" },
        );
    }

    let all_passed = pairs.iter().all(|p| p.passes());
    let mut report = String::from("chreg cauchy-study\n");
    report.push_str(&parameter_block(cfg));
    let _ = writeln!(report, "M_observed: {}", fmt_g17(m_observed));
    for p in &pairs {
        let _ = writeln!(
            report,
            "cauchy eps={} gamma={}: lhs={} rhs={} {}",
            p.eps,
            p.gamma,
            fmt_g17(p.lhs),
            fmt_g17(p.rhs),
            if p.passes() { "PASS" } else { "FAIL" },
        );
    }
    let _ = writeln!(
        report,
        "result: {}",
        if all_passed {
            "ALL CHECKS PASSED"
        } else {
            "CHECKS FAILED"
        }
    );

    let files = write_outputs(cfg, &[("cauchy.csv", csv), ("report.txt", report.clone())])?;
    Ok(RunArtifacts {
        files,
        report,
        checks_passed: all_passed,
        convergence: ConvergenceReport {
            ladder: cfg.ladder.clone(),
            m_observed: Some(m_observed),
            cauchy: pairs,
            ..Default::default()
        },
    })
}

/// Run the ladder against a reference at eps_min/16 and check the
/// epsilon^{1/2} rate bound; emit rate.csv and report.txt.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    if cfg.ladder.len() < 2 {
        return Err(RunError::LadderTooShort {
            need: 2,
            got: cfg.ladder.len(),
        });
    }
    let (grid, engine, solver) = setup(cfg)?;
    let eps_ref = cfg.ladder.last().unwrap() / 16.0;
    let mut all_eps = cfg.ladder.clone();
    all_eps.push(eps_ref);
    let mut runs = ladder_runs(cfg, &grid, &engine, &solver, &all_eps)?;
    let reference = runs.pop().expect("reference run present");

    let mut points = Vec::new();
    for run in &runs {
        let err = error_vs_reference(&engine, &run.traj, &reference.traj)?;
        points.push(RatePoint {
            eps: run.eps,
            error: err,
        });
    }

    let ratios: Vec<f64> = points
        .iter()
        .map(|p| p.error * p.error / p.eps.sqrt())
        .collect();
    let strictly_decreasing = points.windows(2).all(|w| w[1].error < w[0].error);
    let max_ratio = ratios.iter().cloned().fold(0.0f64, f64::max);
    let ratio_bound_ok = max_ratio <= 1.25 * ratios[0];
    let fit = rate_fit(&points.iter().map(|p| (p.eps, p.error)).collect::<Vec<_>>());
    let (c_star, p_exp) = match &fit {
        Ok((c, p)) => (Some(*c), Some(*p)),
        Err(_) => (None, None),
    };

    let mut csv = String::from("eps,error,error_sq_over_sqrt_eps\n");
    for (p, r) in points.iter().zip(&ratios) {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_g17(p.eps),
            fmt_g17(p.error),
            fmt_g17(*r)
        );
    }
    let _ = writeln!(
        csv,
        "C_star={}",
        c_star.map(fmt_g17).unwrap_or_else(|| "nan".to_string())
    );
    let _ = writeln!(
        csv,
        "p={}",
        p_exp.map(fmt_g17).unwrap_or_else(|| "nan".to_string())
    );

    let all_passed = strictly_decreasing && ratio_bound_ok && fit.is_ok();
    let mut report = String::from("chreg rate-study\n");
    report.push_str(&parameter_block(cfg));
    let _ = writeln!(report, "reference epsilon: {eps_ref}");
    for (p, r) in points.iter().zip(&ratios) {
        let _ = writeln!(
            report,
            "eps={}: e(eps)={} e^2/sqrt(eps)={}",
            p.eps,
            fmt_g17(p.error),
            fmt_g17(*r)
        );
    }
    let _ = writeln!(report, "error strictly decreasing: {strictly_decreasing}");
    let _ = writeln!(
        report,
        "rate bound max <= 1.25 x value at largest eps: {ratio_bound_ok} (max {})",
        fmt_g17(max_ratio)
    );
    if let Some((c, p)) = c_star.zip(p_exp) {
        let _ = writeln!(report, "fit: C_star={} p={}", fmt_g17(c), fmt_g17(p));
    }
    let _ = writeln!(
        report,
        "result: {}",
        if all_passed {
            "ALL CHECKS PASSED"
        } else {
            "CHECKS FAILED"
        }
    );

    let files = write_outputs(cfg, &[("rate.csv", csv), ("report.txt", report.clone())])?;
    Ok(RunArtifacts {
        files,
        report,
        checks_passed: all_passed,
        convergence: ConvergenceReport {
            ladder: cfg.ladder.clone(),
            rate: points,
            c_star,
            p: p_exp,
            ..Default::default()
        },
    })
}

/// Nested-domain truncation study; emits truncation.csv and report.txt.
pub fn run_truncation_study(cfg: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    if cfg.radii.is_empty() {
        return Err(RunError::MissingRadii);
    }
    let solver = cfg.solver_config()?;
    let pert = match cfg.solver.mode {
        SolveMode::CahnHilliard => Some(Perturbation::new(cfg.ladder[0])?),
        SolveMode::Direct => None,
    };
    let initial = cfg.initial;
    let forcing = cfg.forcing;
    let init_fn = move |x: f64| initial.eval(x);
    let forcing_fn = move |x: f64, t: f64| forcing.eval(x, t);
    let problem = TruncationProblem {
        kind: cfg.domain_kind,
        inner: cfg.domain_a,
        dimension: cfg.dimension,
        base_radius: cfg.domain_b,
        base_nodes: cfg.nodes,
        graph: &cfg.graph,
        pert: pert.as_ref(),
        mode: cfg.solver.mode,
        solver: &solver,
        initial: &init_fn,
        forcing: &forcing_fn,
    };
    let rows = truncation_study(&problem, &cfg.radii)?;

    let mut csv = String::from("R_small,R_large,sup_diff\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_g17(r.r_small),
            fmt_g17(r.r_large),
            fmt_g17(r.sup_diff)
        );
    }

    let decreasing = rows.windows(2).all(|w| w[1].sup_diff < w[0].sup_diff);
    let mut report = String::from("chreg truncation-study\n");
    report.push_str(&parameter_block(cfg));
    for r in &rows {
        let _ = writeln!(
            report,
            "R {} -> {}: sup_diff = {}",
            r.r_small,
            r.r_large,
            fmt_g17(r.sup_diff)
        );
    }
    let _ = writeln!(report, "sup_diff strictly decreasing: {decreasing}");
    let _ = writeln!(
        report,
        "result: {}",
        if decreasing {
            "ALL CHECKS PASSED"
        } else {
            "CHECKS FAILED"
        }
    );

    let files = write_outputs(
        cfg,
        &[("truncation.csv", csv), ("report.txt", report.clone())],
    )?;
    Ok(RunArtifacts {
        files,
        report,
        checks_passed: decreasing,
        convergence: ConvergenceReport {
            ladder: cfg.ladder.clone(),
            truncation: rows,
            ..Default::default()
        },
    })
}

/// Validate the model contracts and the initial-data bounds for every ladder
/// member. Writes nothing; returns the rendered report and overall verdict.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<(String, bool), RunError> {
    let (grid, engine, _solver) = setup(cfg)?;
    let u0 = cfg.initial_field(&grid);
    let mut all_passed = true;
    let mut report = String::from("chreg validate\n");
    report.push_str(&parameter_block(cfg));
    for &eps in &cfg.ladder {
        let pert = Perturbation::new(eps)?;
        let conditions = validate_conditions(&cfg.graph, &pert);
        for check in &conditions.checks {
            if !check.passed {
                all_passed = false;
            }
            let _ = writeln!(
                report,
                "eps={eps} {}: {} ({})",
                check.condition,
                if check.passed { "PASS" } else { "FAIL" },
                check.detail,
            );
        }
        match prepare_initial_data(&engine, &u0, eps) {
            Ok(init) => {
                let h0 = engine.h_norm(&u0);
                let _ = writeln!(
                    report,
                    "eps={eps} initial data: |J_eps u0|_H = {} <= |u0|_H = {} PASS",
                    fmt_g17(engine.h_norm(&init.regularized)),
                    fmt_g17(h0),
                );
                let _ = writeln!(
                    report,
                    "eps={eps} initial data: |u0eps - u0|_Vstar = {} <= sqrt(eps)|u0|_H = {} PASS",
                    fmt_g17(init.vstar_gap),
                    fmt_g17(eps.sqrt() * h0),
                );
            }
            Err(e) => {
                all_passed = false;
                let _ = writeln!(report, "eps={eps} initial data: FAIL ({e})");
            }
        }
    }
    let _ = writeln!(
        report,
        "result: {}",
        if all_passed {
            "ALL CHECKS PASSED"
        } else {
            "CHECKS FAILED"
        }
    );
    Ok((report, all_passed))
}
