//! Orchestration of the `run`, `study`, `mixing` and `verify` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bayesagg_core::aggregation::full_aggregate;
use bayesagg_core::game_model::validate_model;
use bayesagg_core::network::{fit_geometric_envelope, mixing_diagnostic, validate_schedule};
use bayesagg_core::solver::{bayes_gradient, init_state, run, RunConfig};
use bayesagg_core::verification::{
    best_response, best_response_refinement_check, central_dbne, epsilon_study, expected_cost, exploitability,
    study_csv, BestResponseMethod, CentralOptions, CentralSolution,
};
use bayesagg_core::{
    ActionBox, CournotParams, DiscreteGame, Error as CoreError, GameSpec, GradientScaling, GraphSchedule, InitRule,
    PriceSign, ScheduleMode, SolverOptions, StepsizeSchedule, Strategy, Trace, TypeInterval,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ExperimentConfig, InitKind, NetworkMode};
use crate::svg;

/// Best-response tolerance inside exploitability reports.
pub const BEST_RESPONSE_TOL: f64 = 1e-12;
/// Random points per player probed by `validate_model`.
pub const MODEL_PROBES: usize = 64;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("stage {stage} failed: {source}")]
    Stage { stage: &'static str, source: CoreError },
    #[error("stage {stage} failed: {message}")]
    Check { stage: &'static str, message: String },
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl ExperimentError {
    /// 2 config, 3 validation, 4 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Stage { source, .. } => match source {
                CoreError::Config(_) => 2,
                CoreError::Validation(_) | CoreError::Degenerate(_) | CoreError::Model(_) => 3,
                CoreError::Divergence { .. } | CoreError::Numeric(_) => 4,
                _ => 1,
            },
            ExperimentError::Check { .. } => 3,
            ExperimentError::Io { .. } => 1,
        }
    }

    fn stage(&self) -> &'static str {
        match self {
            ExperimentError::Stage { stage, .. } | ExperimentError::Check { stage, .. } => stage,
            ExperimentError::Io { .. } => "artifacts",
        }
    }
}

fn stage<T>(name: &'static str, r: bayesagg_core::Result<T>) -> Result<T, ExperimentError> {
    r.map_err(|source| ExperimentError::Stage { stage: name, source })
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf, ExperimentError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Ok(path)
}

fn prepare_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    let marker = dir.join("FAILED");
    if marker.exists() {
        std::fs::remove_file(&marker)
            .map_err(|e| ExperimentError::Io { path: marker.display().to_string(), message: e.to_string() })?;
    }
    Ok(())
}

/// Runs `body`; on error leaves a `FAILED` marker naming the stage next to
/// whatever artifacts were already written.
fn guarded<T>(dir: &Path, body: impl FnOnce() -> Result<T, ExperimentError>) -> Result<T, ExperimentError> {
    prepare_dir(dir)?;
    body().inspect_err(|err| {
        let _ = std::fs::write(dir.join("FAILED"), format!("stage: {}\nerror: {err}\n", err.stage()));
    })
}

pub fn game_spec(config: &ExperimentConfig, n_points: usize) -> bayesagg_core::Result<GameSpec> {
    let g = &config.game;
    let sign = PriceSign::from_value(g.sign).ok_or_else(|| CoreError::Config(format!("game.sign = {}", g.sign)))?;
    let params = CournotParams::linear_offsets(g.n, g.d, g.delta_step, sign);
    GameSpec::cournot(
        &params,
        ActionBox::interval(g.box_lo, g.box_hi)?,
        TypeInterval::uniform(g.theta_lo, g.theta_hi)?,
        n_points,
    )
}

pub fn build_game(config: &ExperimentConfig) -> bayesagg_core::Result<DiscreteGame> {
    DiscreteGame::new(game_spec(config, config.discretization.n_points)?)
}

pub fn build_schedule(config: &ExperimentConfig) -> bayesagg_core::Result<GraphSchedule> {
    let net = &config.network;
    let n = config.game.n;
    let period = (n - 1).max(1);
    let mode = match net.mode {
        NetworkMode::Complete => ScheduleMode::Complete,
        NetworkMode::Ring => ScheduleMode::RingStatic,
        NetworkMode::RoundRobin => ScheduleMode::RoundRobin { period },
        NetworkMode::RandomGossip => ScheduleMode::RandomGossip { period, extra_edge_prob: net.extra_edge_prob },
    };
    let mut schedule = GraphSchedule::new(n, mode, net.seed)?;
    if let Some(b) = net.window {
        schedule = schedule.with_window(b)?;
    }
    if let Some(eta) = net.eta {
        schedule = schedule.with_eta(eta)?;
    }
    Ok(schedule)
}

pub fn init_rule(config: &ExperimentConfig) -> InitRule {
    match config.solver.init {
        InitKind::Zeros => InitRule::Zeros,
        InitKind::Midpoint => InitRule::Midpoint,
        InitKind::Random => InitRule::Random { seed: config.solver.seed },
    }
}

pub fn solver_options(config: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        include_chain: config.solver.chain,
        scaling: if config.solver.per_type_scaling { GradientScaling::PerType } else { GradientScaling::Verbatim },
        threads: config.solver.threads,
    }
}

pub fn central_options(config: &ExperimentConfig) -> CentralOptions {
    CentralOptions { tol: config.solver.oracle_tol, max_iters: config.solver.oracle_max_iters, ..CentralOptions::default() }
}

fn validation_horizon(config: &ExperimentConfig, schedule: &GraphSchedule) -> usize {
    config.network.horizon.max(schedule.window())
}

/// `player,type,theta,action[_j]` with 1-based indices.
pub fn profile_csv(game: &DiscreteGame, profile: &[Strategy]) -> String {
    let dim = game.dim();
    let mut out = String::from("player,type,theta");
    if dim == 1 {
        out.push_str(",action");
    } else {
        for j in 0..dim {
            let _ = write!(out, ",action_{}", j + 1);
        }
    }
    out.push('\n');
    for (i, s) in profile.iter().enumerate() {
        for k in 0..game.n_points() {
            let _ = write!(out, "{},{},{:.16e}", i + 1, k + 1, game.theta(k));
            for v in s.action(k) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub trace: Trace,
    pub oracle: CentralSolution,
    pub final_distance: f64,
    pub epsilon: f64,
    pub runtime_ms: u128,
    pub out_dir: PathBuf,
}

/// validate_model, validate_schedule, central_dbne, run, exploitability, then artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, ExperimentError> {
    let dir = config.output.dir.clone();
    guarded(&dir, || {
        let start = Instant::now();
        let game = stage("build_game", build_game(config))?;
        let model_report = stage("validate_model", validate_model(game.spec(), MODEL_PROBES, config.network.seed))?;
        let schedule = stage("validate_schedule", build_schedule(config))?;
        let schedule_report = stage("validate_schedule", validate_schedule(&schedule, validation_horizon(config, &schedule)))?;
        let oracle = stage("central_dbne", central_dbne(&game, &central_options(config)))?;
        write(&dir, "oracle.csv", &profile_csv(&game, &oracle.profile))?;

        let stepsizes = stage("run", StepsizeSchedule::harmonic(config.solver.a, config.solver.b))?;
        let state = stage("run", init_state(&game, init_rule(config)))?;
        let run_config = RunConfig {
            iterations: config.solver.iterations,
            record_every: config.solver.record_every,
            probes: config.probes(),
        };
        let solver_start = Instant::now();
        let (trace, end) = stage(
            "run",
            run(&game, &schedule, &stepsizes, state, &run_config, Some(&oracle.profile), &solver_options(config)),
        )?;
        let solver_ms = solver_start.elapsed().as_millis();
        write(&dir, "trace.csv", &trace.to_csv())?;

        let report = stage("exploitability", exploitability(&game, &end.strategies, BEST_RESPONSE_TOL))?;
        let last = trace.last();
        let final_distance = last.oracle_distance.unwrap_or(f64::NAN);
        let runtime_ms = start.elapsed().as_millis();

        let mut text = String::new();
        let _ = writeln!(text, "players: {}", game.n_players());
        let _ = writeln!(text, "type points: {}", game.n_points());
        let _ = writeln!(text, "network: {} (window {}, eta {})", config.network.mode.name(), schedule.window(), schedule.eta());
        let _ = writeln!(text, "iterations: {}", last.t);
        let _ = writeln!(text, "final oracle distance: {final_distance:.6e}");
        let _ = writeln!(text, "final consensus residual: {:.6e}", last.consensus_residual);
        let _ = writeln!(text, "max conservation error: {:.6e}", trace.max_conservation_error);
        let _ = writeln!(text, "final iterate epsilon: {:.6e}", report.epsilon);
        for (i, g) in report.gains.iter().enumerate() {
            let _ = writeln!(text, "  player {} gain: {g:.6e}", i + 1);
        }
        let _ = writeln!(text, "oracle exploitability: {:.6e}", oracle.exploitability);
        let _ = writeln!(text, "oracle iterations: {}", oracle.iterations);
        let _ = writeln!(text, "model probes: {} (max rel gradient error {:.2e})", model_report.probes, model_report.max_rel_error_own.max(model_report.max_rel_error_agg));
        let _ = writeln!(text, "schedule windows checked: {} (empirical eta {:.4})", schedule_report.windows_checked, schedule_report.empirical_eta);
        let _ = writeln!(text, "solver runtime ms: {solver_ms}");
        let _ = writeln!(text, "total runtime ms: {runtime_ms}");
        write(&dir, "report.txt", &text)?;

        if config.output.emit_svg {
            let plot = |r: Result<String, svg::SvgError>| r.map_err(|e| ExperimentError::Check { stage: "artifacts", message: e.to_string() });
            if !trace.probes.is_empty() {
                write(&dir, "convergence.svg", &plot(svg::convergence_svg(&trace))?)?;
            }
            write(&dir, "consensus.svg", &plot(svg::consensus_svg(&trace))?)?;
        }
        Ok(RunSummary { trace, oracle, final_distance, epsilon: report.epsilon, runtime_ms, out_dir: dir.clone() })
    })
}

/// Writes `study.csv` (ε versus N) and `refinement.csv` (best-response gaps versus N).
pub fn run_study(config: &ExperimentConfig) -> Result<(), ExperimentError> {
    let dir = config.output.dir.clone();
    guarded(&dir, || {
        let d = &config.discretization;
        let spec = stage("build_game", game_spec(config, d.n_fine))?;
        let options = central_options(config);
        let rows = stage("epsilon_study", epsilon_study(&spec, &d.n_list, d.n_fine, &options))?;
        write(&dir, "study.csv", &study_csv(&rows))?;
        let fine = stage("build_game", DiscreteGame::new(spec.clone()))?;
        let rivals = stage("central_dbne", central_dbne(&fine, &options))?;
        let gaps = stage(
            "refinement_check",
            best_response_refinement_check(&spec, &rivals.profile, &d.n_list, d.n_fine, BEST_RESPONSE_TOL),
        )?;
        let mut csv = String::from("N,gap\n");
        for r in &gaps {
            let _ = writeln!(csv, "{},{:.16e}", r.n_points, r.gap);
        }
        write(&dir, "refinement.csv", &csv)?;
        Ok(())
    })
}

/// Writes `mixing.csv` with `lag,deviation,envelope` and `mixing.txt` with the fit.
pub fn run_mixing(config: &ExperimentConfig) -> Result<(), ExperimentError> {
    let dir = config.output.dir.clone();
    guarded(&dir, || {
        let schedule = stage("validate_schedule", build_schedule(config))?;
        let report = stage("validate_schedule", validate_schedule(&schedule, validation_horizon(config, &schedule)))?;
        let dev = stage("mixing", mixing_diagnostic(&schedule, 0, config.network.horizon))?;
        let env = fit_geometric_envelope(&dev);
        let mut csv = String::from("lag,deviation,envelope\n");
        for (j, d) in dev.iter().enumerate() {
            let _ = write!(csv, "{},{d:.16e},", j + 1);
            if let Some(e) = &env {
                let _ = write!(csv, "{:.16e}", e.bound(j + 1));
            }
            csv.push('\n');
        }
        write(&dir, "mixing.csv", &csv)?;
        let mut text = String::new();
        let _ = writeln!(text, "mode: {}", config.network.mode.name());
        let _ = writeln!(text, "window: {}", schedule.window());
        let _ = writeln!(text, "eta: {}", schedule.eta());
        let _ = writeln!(text, "empirical eta: {}", report.empirical_eta);
        match &env {
            Some(e) => {
                let _ = writeln!(text, "envelope gamma: {:.6e}", e.gamma);
                let _ = writeln!(text, "envelope beta: {:.6e}", e.beta);
            }
            None => text.push_str("envelope: none (no geometric decay observed)\n"),
        }
        write(&dir, "mixing.txt", &text)?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Invariant suite on the configured game; writes `verify.txt` and fails with
/// a validation error if any check fails.
pub fn run_verify(config: &ExperimentConfig) -> Result<Vec<Check>, ExperimentError> {
    let dir = config.output.dir.clone();
    guarded(&dir, || {
        let checks = verify_checks(config)?;
        let mut text = String::new();
        for c in &checks {
            let _ = writeln!(text, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        write(&dir, "verify.txt", &text)?;
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        if failed.is_empty() {
            Ok(checks)
        } else {
            Err(ExperimentError::Check { stage: "verify", message: format!("failed checks: {}", failed.join(", ")) })
        }
    })
}

fn verify_checks(config: &ExperimentConfig) -> Result<Vec<Check>, ExperimentError> {
    let game = stage("build_game", build_game(config))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.solver.seed);
    let mut checks = Vec::new();
    let mut push = |name, passed, detail: String| checks.push(Check { name, passed, detail });

    let model = stage("validate_model", validate_model(game.spec(), MODEL_PROBES, config.network.seed))?;
    push("model", true, format!("{} probes, min monotonicity {:.3e}", model.probes, model.min_monotonicity));

    let schedule = stage("validate_schedule", build_schedule(config))?;
    let sched = stage("validate_schedule", validate_schedule(&schedule, validation_horizon(config, &schedule)))?;
    push("schedule", true, format!("{} windows, empirical eta {:.4}", sched.windows_checked, sched.empirical_eta));

    let random_profile = |rng: &mut ChaCha8Rng| -> Vec<Strategy> {
        (0..game.n_players())
            .map(|i| {
                let bx = game.spec().action_box(i);
                let v: Vec<f64> = (0..game.n_points()).map(|_| rng.gen_range(bx.lo()[0]..=bx.hi()[0])).collect();
                Strategy::scalar(&v)
            })
            .collect()
    };

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let profile = random_profile(&mut rng);
        let i = rng.gen_range(0..game.n_players());
        let k = rng.gen_range(0..game.n_points());
        let agg = stage("gradient", full_aggregate(&profile, game.counts()))?;
        let g = stage("gradient", bayes_gradient(&game, i, &profile[i], &agg, true))?;
        let at = |delta: f64| -> Result<f64, ExperimentError> {
            let mut p = profile.clone();
            let mut t = p[i].table().clone();
            t[(k, 0)] += delta;
            p[i] = Strategy::from_projected(t);
            Ok(stage("gradient", expected_cost(&game, i, &p))?.total)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max((g[(k, 0)] - fd).abs() / g[(k, 0)].abs().max(1.0));
    }
    push("gradient", worst <= 1e-5, format!("max relative error {worst:.3e} over 20 probes"));

    let mut br_gap: f64 = 0.0;
    for _ in 0..20 {
        let profile = random_profile(&mut rng);
        let i = rng.gen_range(0..game.n_players());
        let closed = stage("best_response", best_response(&game, i, &profile, BEST_RESPONSE_TOL, BestResponseMethod::ClosedForm))?;
        let generic = stage("best_response", best_response(&game, i, &profile, BEST_RESPONSE_TOL, BestResponseMethod::Generic))?;
        br_gap = br_gap.max(closed.table().sub(generic.table()).max_abs());
    }
    push("best_response", br_gap <= 1e-8, format!("generic vs closed form {br_gap:.3e} over 20 instances"));

    let options = central_options(config);
    let oracle = stage("central_dbne", central_dbne(&game, &options))?;
    push(
        "certificate",
        oracle.exploitability <= options.tol,
        format!("exploitability {:.3e} (tol {:.1e})", oracle.exploitability, options.tol),
    );

    let stepsizes = stage("run", StepsizeSchedule::harmonic(config.solver.a, config.solver.b))?;
    let state = stage("run", init_state(&game, InitRule::Random { seed: config.solver.seed }))?;
    let iterations = config.solver.iterations.min(2000);
    let run_config = RunConfig { iterations, record_every: iterations.max(1), probes: vec![] };
    let (trace, _) = stage("run", run(&game, &schedule, &stepsizes, state, &run_config, None, &solver_options(config)))?;
    push(
        "conservation",
        trace.max_conservation_error <= 1e-10,
        format!("max error {:.3e} over {iterations} iterations", trace.max_conservation_error),
    );
    Ok(checks)
}
