//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the verdicts and measured margins.

use chreg::analysis::{
    cauchy_bound_rhs, cauchy_gap_lhs, energy_monitors, error_vs_reference, truncation_study,
    MonitorSet, TruncationProblem,
};
use chreg::config::parse_config;
use chreg::domain::{assemble_operator, build_grid, Field, GridConfig, GridKind};
use chreg::dual::DualEngine;
use chreg::evolution::{
    phi_eps_energy, prepare_initial_data, solve_trajectory, InitialData, SolveMode, SolverConfig,
    Trajectory,
};
use chreg::nonlinearity::MonotoneGraph;
use chreg::runner::run_cauchy_study;
use chreg::sampling::SplitMix64;
use chreg::Perturbation;

fn verdict(number: u32, name: &str, ok: bool, detail: String) {
    println!(
        "acceptance criterion {number} ({name}): {} [{detail}]",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {number} ({name}) failed: {detail}");
}

fn interval_engine(n: usize) -> DualEngine {
    DualEngine::new(assemble_operator(
        &build_grid(&GridConfig::interval(0.0, 1.0, n)).unwrap(),
    ))
}

fn difference(a: &Field, b: &Field) -> Field {
    Field::from_values(a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect())
}

// ---------------------------------------------------------------------------
// 1. linear-beta exact solution (scalar ODE closed forms)
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_linear_beta_exact_solution() {
    let engine = interval_engine(201);
    let linear = MonotoneGraph::linear();
    let u0 = Field::constant(engine.operator().grid(), 1.0);
    let eps = 0.1;
    let pert = Perturbation::new(eps).unwrap();
    let mut worst = 0.0f64;
    let mut ok = true;

    for dt in [1e-2, 1e-3] {
        let cfg = SolverConfig::new(dt, 1.0).unwrap();

        let direct = solve_trajectory(
            &engine,
            &linear,
            None,
            &cfg,
            &InitialData::from_raw(u0.clone()),
            |_t| Field::zeros(201),
            SolveMode::Direct,
        )
        .unwrap();
        let mut err_direct = 0.0f64;
        for (n, &t) in direct.times.iter().enumerate() {
            let exact = (-t).exp();
            for &v in &direct.u[n].values {
                err_direct = err_direct.max((v - exact).abs());
            }
        }
        ok &= err_direct <= 5.0 * dt;
        worst = worst.max(err_direct / dt);

        let init = prepare_initial_data(&engine, &u0, eps).unwrap();
        let ch = solve_trajectory(
            &engine,
            &linear,
            Some(&pert),
            &cfg,
            &init,
            |_t| Field::zeros(201),
            SolveMode::CahnHilliard,
        )
        .unwrap();
        let mut err_ch = 0.0f64;
        for (n, &t) in ch.times.iter().enumerate() {
            let exact = (-(1.0 + 0.5 * eps) * t).exp() / (1.0 + eps);
            for &v in &ch.u[n].values {
                err_ch = err_ch.max((v - exact).abs());
            }
        }
        ok &= err_ch <= 5.0 * dt;
        worst = worst.max(err_ch / dt);
    }
    verdict(
        1,
        "linear-beta exact solution",
        ok,
        format!("max error/dt = {worst:.3} (bound 5)"),
    );
}

// ---------------------------------------------------------------------------
// 2 & 3. Stefan ladder on the truncated exterior domain
// ---------------------------------------------------------------------------

const LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

struct LadderRun {
    eps: f64,
    init: InitialData,
    traj: Trajectory,
    monitors: MonitorSet,
}

fn stefan_setup() -> (DualEngine, MonotoneGraph, Field, SolverConfig) {
    let grid = build_grid(&GridConfig::radial(1.0, 8.0, 141, 2)).unwrap();
    let engine = DualEngine::new(assemble_operator(&grid));
    let stefan = MonotoneGraph::stefan(2.0, 3.0, 1.0).unwrap();
    let u0 = Field::from_fn(&grid, |r| {
        2.0 * (-(r - 2.5).powi(2) / (2.0 * 0.4 * 0.4)).exp()
    });
    let cfg = SolverConfig::new(1e-3, 1.0).unwrap();
    (engine, stefan, u0, cfg)
}

fn stefan_ladder_run(
    engine: &DualEngine,
    stefan: &MonotoneGraph,
    u0: &Field,
    cfg: &SolverConfig,
    eps: f64,
) -> LadderRun {
    let n = engine.len();
    let pert = Perturbation::new(eps).unwrap();
    let init = prepare_initial_data(engine, u0, eps).unwrap();
    let traj = solve_trajectory(
        engine,
        stefan,
        Some(&pert),
        cfg,
        &init,
        |_t| Field::zeros(n),
        SolveMode::CahnHilliard,
    )
    .unwrap();
    let monitors = energy_monitors(engine, &traj, stefan, eps).unwrap();
    LadderRun {
        eps,
        init,
        traj,
        monitors,
    }
}

#[test]
fn criterion_2_cauchy_inequality() {
    let (engine, stefan, u0, cfg) = stefan_setup();
    let runs: Vec<LadderRun> = LADDER
        .iter()
        .map(|&eps| stefan_ladder_run(&engine, &stefan, &u0, &cfg, eps))
        .collect();
    let m_observed = runs
        .iter()
        .map(|r| r.monitors.observed_max())
        .fold(0.0f64, f64::max);

    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    let mut pairs = 0;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let d0 = engine
                .vstar_norm(&difference(
                    &runs[i].init.regularized,
                    &runs[j].init.regularized,
                ))
                .unwrap();
            let lhs = cauchy_gap_lhs(&engine, &runs[i].traj, &runs[j].traj, &stefan).unwrap();
            let rhs = cauchy_bound_rhs(runs[i].eps, runs[j].eps, m_observed, 1.0, 0.5, |x| x, d0);
            ok &= lhs <= rhs;
            min_margin = min_margin.min(rhs / lhs.max(1e-300));
            pairs += 1;
        }
    }
    verdict(
        2,
        "Cauchy inequality on the epsilon ladder",
        ok && pairs == 6,
        format!("6 pairs, M_observed = {m_observed:.3e}, min rhs/lhs = {min_margin:.2}"),
    );
}

#[test]
fn criterion_3_rate_bound() {
    let (engine, stefan, u0, cfg) = stefan_setup();
    let reference = stefan_ladder_run(&engine, &stefan, &u0, &cfg, LADDER[3] / 16.0);
    let errors: Vec<(f64, f64)> = LADDER
        .iter()
        .map(|&eps| {
            let run = stefan_ladder_run(&engine, &stefan, &u0, &cfg, eps);
            (
                eps,
                error_vs_reference(&engine, &run.traj, &reference.traj).unwrap(),
            )
        })
        .collect();

    let decreasing = errors.windows(2).all(|w| w[1].1 < w[0].1);
    let ratios: Vec<f64> = errors.iter().map(|&(e, v)| v * v / e.sqrt()).collect();
    let max_ratio = ratios.iter().cloned().fold(0.0f64, f64::max);
    let bound_ok = max_ratio <= 1.25 * ratios[0];
    verdict(
        3,
        "epsilon^(1/2) rate bound",
        decreasing && bound_ok,
        format!(
            "e(eps) = {:?}, e^2/sqrt(eps) max/first = {:.3}",
            errors.iter().map(|&(_, v)| v).collect::<Vec<_>>(),
            max_ratio / ratios[0]
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. V*-contraction (uniqueness mechanism) over 1000 steps, both modes
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_vstar_contraction() {
    let engine = interval_engine(101);
    let stefan = MonotoneGraph::stefan(2.0, 3.0, 1.0).unwrap();
    let pert = Perturbation::new(0.1).unwrap();
    let cfg = SolverConfig::new(1e-3, 1.0).unwrap();
    let mut rng = SplitMix64::new(0xACCE44);
    let u1 = Field::from_values((0..101).map(|_| rng.uniform(-1.0, 2.0)).collect());
    let u2 = Field::from_values((0..101).map(|_| rng.uniform(-1.0, 2.0)).collect());
    // identical forcing for both trajectories
    let forcing = |_t: f64| Field::from_values(vec![0.1; 101]);

    let mut ok = true;
    let mut worst_increase = f64::NEG_INFINITY;
    for mode in [SolveMode::CahnHilliard, SolveMode::Direct] {
        let make_init = |u: &Field| match mode {
            SolveMode::CahnHilliard => prepare_initial_data(&engine, u, 0.1).unwrap(),
            SolveMode::Direct => InitialData::from_raw(u.clone()),
        };
        let t1 = solve_trajectory(
            &engine,
            &stefan,
            Some(&pert),
            &cfg,
            &make_init(&u1),
            forcing,
            mode,
        )
        .unwrap();
        let t2 = solve_trajectory(
            &engine,
            &stefan,
            Some(&pert),
            &cfg,
            &make_init(&u2),
            forcing,
            mode,
        )
        .unwrap();
        assert_eq!(t1.steps(), 1000);
        let mut prev = engine.vstar_norm(&difference(&t1.u[0], &t2.u[0])).unwrap();
        for n in 1..=t1.steps() {
            let d = engine.vstar_norm(&difference(&t1.u[n], &t2.u[n])).unwrap();
            worst_increase = worst_increase.max(d - prev);
            ok &= d <= prev + 10.0 * cfg.newton_tol;
            prev = d;
        }
    }
    verdict(
        4,
        "V*-contraction over 1000 steps in both modes",
        ok,
        format!(
            "worst per-step increase = {worst_increase:.3e} (bound {:.1e})",
            10.0 * cfg.newton_tol
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Lyapunov dissipation for every catalog member and ladder epsilon
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_lyapunov_dissipation() {
    let engine = interval_engine(41);
    let grid = engine.operator().grid().clone();
    let catalog: Vec<(&str, MonotoneGraph, Field)> = vec![
        (
            "linear",
            MonotoneGraph::linear(),
            Field::from_fn(&grid, |x| 2.0 * (-(x - 0.5).powi(2) / 0.045).exp()),
        ),
        (
            "power q=2",
            MonotoneGraph::power(2.0).unwrap(),
            Field::from_fn(&grid, |x| 2.0 * (-(x - 0.5).powi(2) / 0.045).exp()),
        ),
        (
            "power q=0.5",
            MonotoneGraph::power(0.5).unwrap(),
            Field::from_fn(&grid, |x| 0.5 + (-(x - 0.5).powi(2) / 0.045).exp()),
        ),
        (
            "stefan",
            MonotoneGraph::stefan(2.0, 3.0, 1.0).unwrap(),
            Field::from_fn(&grid, |x| 2.0 * (-(x - 0.5).powi(2) / 0.045).exp()),
        ),
    ];
    let cfg = SolverConfig::new(5e-3, 0.3).unwrap();

    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for (name, graph, u0) in &catalog {
        for &eps in &LADDER {
            let pert = Perturbation::new(eps).unwrap();
            let init = prepare_initial_data(&engine, u0, eps).unwrap();
            let traj = solve_trajectory(
                &engine,
                graph,
                Some(&pert),
                &cfg,
                &init,
                |_t| Field::zeros(41),
                SolveMode::CahnHilliard,
            )
            .unwrap_or_else(|e| panic!("{name} eps={eps}: {e}"));
            let mut prev = phi_eps_energy(&engine, graph, &pert, &traj.u[0]);
            for n in 1..traj.u.len() {
                let next = phi_eps_energy(&engine, graph, &pert, &traj.u[n]);
                worst = worst.max(next - prev);
                ok &= next <= prev + 10.0 * cfg.newton_tol;
                prev = next;
            }
        }
    }
    verdict(
        5,
        "Lyapunov dissipation of phi_eps",
        ok,
        format!(
            "worst per-step energy increase = {worst:.3e} (bound {:.1e})",
            10.0 * cfg.newton_tol
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. monotone-graph suite at 10^4 samples per member
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_monotone_graph_suite() {
    let catalog = [
        MonotoneGraph::power(0.5).unwrap(),
        MonotoneGraph::power(2.0).unwrap(),
        MonotoneGraph::stefan(2.0, 3.0, 1.0).unwrap(),
        MonotoneGraph::linear(),
    ];
    let lambdas = [1.0, 0.1, 0.01, 0.001];
    let tol = 1e-8;
    let fd_step = 1e-5;
    let mut violations = 0usize;
    let mut rng = SplitMix64::new(0x6_00D);

    for graph in &catalog {
        assert_eq!(graph.eval(0.0), 0.0);
        let kinks = graph.kinks();
        let mut count = 0;
        while count < 10_000 {
            let x = rng.uniform(-10.0, 10.0);
            let y = rng.uniform(-10.0, 10.0);
            count += 1;

            // monotonicity
            if (graph.eval(x) - graph.eval(y)) * (x - y) < 0.0 {
                violations += 1;
            }
            // potential and derivative consistency away from kinks
            if kinks.iter().all(|&k| (x - k).abs() > 1e-2) {
                let fd_beta =
                    (graph.potential(x + fd_step) - graph.potential(x - fd_step)) / (2.0 * fd_step);
                if (fd_beta - graph.eval(x)).abs() > 1e-6 * (1.0 + graph.eval(x).abs()) {
                    violations += 1;
                }
                let fd_deriv =
                    (graph.eval(x + fd_step) - graph.eval(x - fd_step)) / (2.0 * fd_step);
                let sel = graph.derivative(x, 1e8);
                if (fd_deriv - sel).abs() > 1e-6 * (1.0 + sel.abs()) {
                    violations += 1;
                }
            }
            // Yosida laws and resolvent nonexpansiveness
            let mut prev_abs = 0.0;
            for (i, &lambda) in lambdas.iter().enumerate() {
                let bx = graph.yosida(lambda, x);
                let by = graph.yosida(lambda, y);
                if bx.abs() > graph.eval(x).abs() + tol {
                    violations += 1;
                }
                if (bx - by).abs() > (x - y).abs() / lambda + tol {
                    violations += 1;
                }
                if i > 0 && bx.abs() + tol < prev_abs {
                    violations += 1;
                }
                prev_abs = bx.abs();
                if (graph.resolvent(lambda, x) - graph.resolvent(lambda, y)).abs()
                    > (x - y).abs() + tol
                {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        6,
        "monotone-graph suite",
        violations == 0,
        format!("{violations} violations over 4 x 10^4 samples"),
    );
}

// ---------------------------------------------------------------------------
// 7. dual-norm chain and round trip on 10^3 random fields
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_dual_norm_chain_and_round_trip() {
    let engines = [
        interval_engine(64),
        DualEngine::new(assemble_operator(
            &build_grid(&GridConfig::radial(1.0, 4.0, 57, 3)).unwrap(),
        )),
    ];
    let mut rng = SplitMix64::new(0x7_0AD);
    let mut ok = true;
    let mut worst_chain = 0.0f64;
    let mut worst_round = 0.0f64;
    for k in 0..1000 {
        let engine = &engines[k % 2];
        let v = Field::from_values((0..engine.len()).map(|_| rng.uniform(-5.0, 5.0)).collect());
        let vstar = engine.vstar_norm(&v).unwrap();
        let h = engine.h_norm(&v);
        let vn = engine.v_norm(&v);
        ok &= vstar <= h * (1.0 + 1e-10) && h <= vn * (1.0 + 1e-10);
        worst_chain = worst_chain.max(vstar / h - 1.0).max(h / vn - 1.0);

        let image = engine.operator().apply_operator(&v).unwrap();
        let back = engine.compute_f(&image).unwrap();
        let rel = engine.h_norm(&difference(&back, &v)) / h.max(1e-300);
        ok &= rel <= 1e-10;
        worst_round = worst_round.max(rel);
    }
    verdict(
        7,
        "dual-norm chain and A round trip",
        ok,
        format!("worst chain excess = {worst_chain:.2e}, worst round-trip rel = {worst_round:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// 8. initial-data bounds for 100 random fields over the ladder
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_initial_data_bounds() {
    let engine = interval_engine(51);
    let mut rng = SplitMix64::new(0x1_B1D);
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let u0 = Field::from_values((0..51).map(|_| rng.uniform(-4.0, 4.0)).collect());
        let h0 = engine.h_norm(&u0);
        for &eps in &LADDER {
            let init = prepare_initial_data(&engine, &u0, eps).unwrap();
            let h_reg = engine.h_norm(&init.regularized);
            ok &= h_reg <= h0 + 1e-10;
            let bound = eps.sqrt() * h0;
            ok &= init.vstar_gap <= bound + 1e-10;
            worst = worst.max(h_reg - h0).max(init.vstar_gap - bound);
        }
    }
    verdict(
        8,
        "resolvent initial-data bounds",
        ok,
        format!("worst bound excess = {worst:.3e} (slack 1e-10)"),
    );
}

// ---------------------------------------------------------------------------
// 9. truncation self-consistency across nested radii
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_truncation_self_consistency() {
    let linear = MonotoneGraph::linear();
    let solver = SolverConfig::new(5e-3, 0.5).unwrap();
    let problem = TruncationProblem {
        kind: GridKind::RadialExterior,
        inner: 1.0,
        dimension: 2,
        base_radius: 4.0,
        base_nodes: 61,
        graph: &linear,
        pert: None,
        mode: SolveMode::Direct,
        solver: &solver,
        initial: &|r| (-(r - 2.0).powi(2) / (2.0 * 0.4 * 0.4)).exp(),
        forcing: &|_r, _t| 0.0,
    };
    let rows = truncation_study(&problem, &[4.0, 8.0, 16.0, 32.0]).unwrap();
    let sup_diffs: Vec<f64> = rows.iter().map(|r| r.sup_diff).collect();
    let decreasing = sup_diffs.windows(2).all(|w| w[1] < w[0]);
    let final_small = *sup_diffs.last().unwrap() <= 1e-3;
    verdict(
        9,
        "truncation self-consistency",
        decreasing && final_small,
        format!("sup_diff = {sup_diffs:?}"),
    );
}

// ---------------------------------------------------------------------------
// 10. byte-identical study outputs on repeated runs
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let base = std::env::temp_dir().join(format!("chreg_acceptance_{}", std::process::id()));
    let dir1 = base.join("run1");
    let dir2 = base.join("run2");
    let config_text = |dir: &std::path::Path| {
        format!(
            "domain.kind = radial_exterior\n\
             domain.a = 1\n\
             domain.b = 8\n\
             domain.dimension = 2\n\
             grid.nodes = 141\n\
             time.horizon = 1.0\n\
             time.dt = 0.001\n\
             model.beta.kind = stefan\n\
             model.beta.ks = 2\n\
             model.beta.kl = 3\n\
             model.beta.latent = 1\n\
             model.epsilon = 0.2,0.1,0.05,0.025\n\
             initial.kind = gaussian\n\
             initial.center = 2.5\n\
             initial.width = 0.4\n\
             initial.amplitude = 2.0\n\
             output.dir = {}\n",
            dir.display()
        )
    };
    let cfg1 = parse_config(&config_text(&dir1)).unwrap();
    let cfg2 = parse_config(&config_text(&dir2)).unwrap();
    let a1 = run_cauchy_study(&cfg1).unwrap();
    let a2 = run_cauchy_study(&cfg2).unwrap();
    let bytes1 = std::fs::read(dir1.join("cauchy.csv")).unwrap();
    let bytes2 = std::fs::read(dir2.join("cauchy.csv")).unwrap();
    let identical = bytes1 == bytes2;
    let _ = std::fs::remove_dir_all(&base);
    verdict(
        10,
        "deterministic study outputs",
        identical && a1.checks_passed && a2.checks_passed,
        format!(
            "{} bytes, checks passed = {}",
            bytes1.len(),
            a1.checks_passed && a2.checks_passed
        ),
    );
}
