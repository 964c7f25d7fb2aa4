//! Centralized oracles: expected costs, best responses, exploitability, the
//! discretized equilibrium, refinement across grids and the ε(N) study.

use std::fmt::Write as _;
use std::time::Instant;

use crate::aggregation::Strategy;
use crate::error::{Error, Result};
use crate::game_model::{ActionBox, CostModel, DiscreteGame, GameSpec};
use crate::objective::{conditional_cost, conditional_gradient, GradScratch, RivalTerms};
use crate::solver::{init_state, own_gradient, project_box, InitRule};
use crate::table::{distance, Table};
use crate::type_space::TypeGrid;

/// Iteration cap of the per-type projected gradient.
pub const BEST_RESPONSE_MAX_ITERS: usize = 10_000;

/// Slack below zero tolerated in exploitability gains.
pub const GAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCost {
    /// `Û_i(θ^k)` by row.
    pub per_type: Vec<f64>,
    /// `(1/N) Σ_k Û_i(θ^k)`.
    pub total: f64,
}

fn check_profile(game: &DiscreteGame, profile: &[Strategy]) -> Result<()> {
    if profile.len() != game.n_players() {
        return Err(Error::Shape(format!("profile has {} strategies for {} players", profile.len(), game.n_players())));
    }
    if let Some(i) = profile.iter().position(|s| s.n_points() != game.n_points() || s.dim() != game.dim()) {
        return Err(Error::Shape(format!(
            "strategy of player {} is {:?}, expected ({}, {})",
            i + 1,
            profile[i].table().shape(),
            game.n_points(),
            game.dim()
        )));
    }
    Ok(())
}

fn cost_with(game: &DiscreteGame, i: usize, own: &Strategy, rivals: &RivalTerms) -> ExpectedCost {
    let model = game.spec().model(i);
    let n = game.n_players();
    let per_type: Vec<f64> =
        (0..own.n_points()).map(|k| conditional_cost(model, own.action(k), rivals, game.theta(k), n)).collect();
    let total = per_type.iter().sum::<f64>() / per_type.len() as f64;
    ExpectedCost { per_type, total }
}

/// Conditional expected cost of player `i` (0-based) at every own type, with
/// the own action held at `σ_i(θ^k)` inside the aggregate.
pub fn expected_cost(game: &DiscreteGame, i: usize, profile: &[Strategy]) -> Result<ExpectedCost> {
    check_profile(game, profile)?;
    let rivals = RivalTerms::direct(game, profile, i)?;
    Ok(cost_with(game, i, &profile[i], &rivals))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestResponseMethod {
    /// Closed form when the model provides one, projected gradient otherwise.
    Auto,
    Generic,
    ClosedForm,
}

/// Projected gradient on one type's conditional objective, stepping with a
/// curvature backtrack: a step `s` is kept when `s ⟨∇φ(y) − ∇φ(x), y − x⟩ ≤ ‖y − x‖²`.
fn minimize_type(
    model: &dyn CostModel,
    rivals: &RivalTerms,
    theta: f64,
    n: usize,
    bx: &ActionBox,
    start: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let dim = start.len();
    let mut x = start.to_vec();
    bx.project(&mut x);
    let mut scratch = GradScratch::new(dim);
    let mut g = vec![0.0; dim];
    conditional_gradient(model, &x, rivals, theta, n, true, &mut scratch, &mut g);
    let mut s = 1.0;
    let mut y = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    for _ in 0..BEST_RESPONSE_MAX_ITERS {
        let mut probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        bx.project(&mut probe);
        let pg: f64 = x.iter().zip(&probe).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if pg <= tol {
            return Ok(x);
        }
        loop {
            for j in 0..dim {
                y[j] = x[j] - s * g[j];
            }
            bx.project(&mut y);
            conditional_gradient(model, &y, rivals, theta, n, true, &mut scratch, &mut gy);
            let (mut curv, mut len2) = (0.0, 0.0);
            for j in 0..dim {
                let d = y[j] - x[j];
                curv += (gy[j] - g[j]) * d;
                len2 += d * d;
            }
            if s * curv <= len2 {
                break;
            }
            s *= 0.5;
            if s < 1e-30 {
                return Err(Error::Numeric(format!("best-response backtracking collapsed at θ = {theta}")));
            }
        }
        std::mem::swap(&mut x, &mut y);
        std::mem::swap(&mut g, &mut gy);
        s *= 2.0;
    }
    Err(Error::Numeric(format!(
        "best response at θ = {theta} did not reach tolerance {tol} in {BEST_RESPONSE_MAX_ITERS} iterations"
    )))
}

fn respond(
    game: &DiscreteGame,
    i: usize,
    rivals: &RivalTerms,
    thetas: &[f64],
    start: &Strategy,
    tol: f64,
    method: BestResponseMethod,
) -> Result<Strategy> {
    let model = game.spec().model(i);
    let bx = game.spec().action_box(i);
    let n = game.n_players();
    let mut out = Table::zeros(thetas.len(), game.dim());
    for (k, &theta) in thetas.iter().enumerate() {
        let closed = match method {
            BestResponseMethod::Generic => None,
            _ => model.best_response_closed_form(&rivals.mean, theta, n, bx),
        };
        let x = match (closed, method) {
            (Some(x), _) => x,
            (None, BestResponseMethod::ClosedForm) => {
                return Err(Error::Model(format!("player {} has no closed-form best response", i + 1)))
            }
            (None, _) => minimize_type(model, rivals, theta, n, bx, start.action(k.min(start.n_points() - 1)), tol)?,
        };
        out.row_mut(k).copy_from_slice(&x);
    }
    Ok(Strategy::from_projected(out))
}

/// Best response of player `i` to the rivals in `profile` (its own entry is
/// only used to warm-start the generic path).
pub fn best_response(
    game: &DiscreteGame,
    i: usize,
    profile: &[Strategy],
    tol: f64,
    method: BestResponseMethod,
) -> Result<Strategy> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("best-response tolerance must be positive, got {tol}")));
    }
    check_profile(game, profile)?;
    let rivals = RivalTerms::direct(game, profile, i)?;
    respond(game, i, &rivals, game.grid().points(), &profile[i], tol, method)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitabilityReport {
    /// `ÊU_i(σ) − ÊU_i(BR_i, σ_{−i})`.
    pub gains: Vec<f64>,
    pub epsilon: f64,
    pub best_responses: Vec<Strategy>,
}

pub fn exploitability(game: &DiscreteGame, profile: &[Strategy], tol: f64) -> Result<ExploitabilityReport> {
    check_profile(game, profile)?;
    let mut gains = Vec::with_capacity(profile.len());
    let mut best_responses = Vec::with_capacity(profile.len());
    for i in 0..profile.len() {
        let rivals = RivalTerms::direct(game, profile, i)?;
        let br = respond(game, i, &rivals, game.grid().points(), &profile[i], tol, BestResponseMethod::Auto)?;
        let gain = cost_with(game, i, &profile[i], &rivals).total - cost_with(game, i, &br, &rivals).total;
        if gain < -GAIN_SLACK {
            return Err(Error::Numeric(format!("player {} best response is worse than the profile by {}", i + 1, -gain)));
        }
        gains.push(gain);
        best_responses.push(br);
    }
    let epsilon = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExploitabilityReport { gains, epsilon, best_responses })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralOptions {
    /// Required exploitability.
    pub tol: f64,
    /// Fixed-point residual `‖σ − Π(σ − γF(σ))‖/γ` required before certifying.
    pub residual_tol: f64,
    pub max_iters: usize,
    pub init: InitRule,
    /// Initial step; halved whenever the step length grows.
    pub step: f64,
    /// Tolerance for the per-type best responses inside the certificate.
    pub best_response_tol: f64,
}

impl Default for CentralOptions {
    fn default() -> Self {
        CentralOptions {
            tol: 1e-8,
            residual_tol: 1e-11,
            max_iters: 200_000,
            init: InitRule::Midpoint,
            step: 1.0,
            best_response_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralSolution {
    pub profile: Vec<Strategy>,
    /// Exploitability certificate.
    pub exploitability: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Projected gradient on the stacked per-type conditional gradients with the
/// exact aggregate.
pub fn central_dbne(game: &DiscreteGame, options: &CentralOptions) -> Result<CentralSolution> {
    if !(options.tol > 0.0 && options.residual_tol > 0.0 && options.step > 0.0) {
        return Err(Error::Config("central solver tolerances and step must be positive".into()));
    }
    let n = game.n_players();
    let mut profile = init_state(game, options.init)?.strategies;
    let mut gamma = options.step;
    let mut last_move = f64::INFINITY;
    let mut residual_tol = options.residual_tol;
    let mut last_eps = f64::NAN;
    for iter in 0..options.max_iters {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let rivals = RivalTerms::direct(game, &profile, i)?;
            let mut t = profile[i].table().clone();
            t.axpy(-gamma, &own_gradient(game, i, &profile[i], &rivals, true));
            let t = project_box(&t, game.spec().action_box(i));
            if !t.all_finite() {
                return Err(Error::Divergence { iteration: iter, detail: format!("central iterate of player {} is not finite", i + 1) });
            }
            next.push(Strategy::from_projected(t));
        }
        let moved = profile.iter().zip(&next).map(|(a, b)| distance(a.table(), b.table()).powi(2)).sum::<f64>().sqrt();
        if moved > last_move * (1.0 + 1e-12) && moved > 1e-14 {
            // step too long for this operator: retry from the current point
            gamma *= 0.5;
            last_move = f64::INFINITY;
            continue;
        }
        last_move = moved;
        profile = next;
        let residual = moved / gamma;
        if residual <= residual_tol {
            let report = exploitability(game, &profile, options.best_response_tol)?;
            last_eps = report.epsilon;
            if report.epsilon <= options.tol {
                return Ok(CentralSolution { profile, exploitability: report.epsilon, residual, iterations: iter + 1 });
            }
            if residual_tol < 1e-15 {
                break;
            }
            residual_tol *= 0.1;
        }
    }
    Err(Error::Numeric(format!(
        "central solver stopped after {} iterations with exploitability {last_eps:e} (target {:e})",
        options.max_iters, options.tol
    )))
}

/// Right-constant extension: a fine point `θ ∈ (θ^{k−1}, θ^k]` takes coarse row `k`.
pub fn refine_strategy(strategy: &Strategy, coarse: &TypeGrid, fine: &TypeGrid) -> Result<Strategy> {
    if strategy.n_points() != coarse.len() {
        return Err(Error::Shape(format!("strategy has {} rows for a {}-point grid", strategy.n_points(), coarse.len())));
    }
    let width = coarse.upper() - coarse.lower();
    if (coarse.lower() - fine.lower()).abs() > 1e-9 * width || (coarse.upper() - fine.upper()).abs() > 1e-9 * width {
        return Err(Error::Config("refinement needs both grids on the same interval".into()));
    }
    let mut out = Table::zeros(fine.len(), strategy.dim());
    for (f, &theta) in fine.points().iter().enumerate() {
        let k = coarse.locate(theta)?;
        out.row_mut(f).copy_from_slice(strategy.action(k));
    }
    Ok(Strategy::from_projected(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub n_points: usize,
    /// Exploitability of the refined equilibrium in the fine model.
    pub epsilon: f64,
    /// Certificate of the coarse equilibrium in its own model.
    pub certified_tol: f64,
    pub runtime_ms: u128,
}

fn check_nesting(n_list: &[usize], n_fine: usize) -> Result<Vec<usize>> {
    let mut sorted = n_list.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() || sorted[0] == 0 {
        return Err(Error::Config("N list must hold positive grid sizes".into()));
    }
    if let Some(bad) = sorted.iter().find(|&&m| n_fine % m != 0) {
        return Err(Error::Config(format!("N_fine = {n_fine} is not a multiple of N = {bad}")));
    }
    Ok(sorted)
}

/// For each `N`: equilibrium at `N`, refined to `N_fine`, scored by exploitability at `N_fine`.
pub fn epsilon_study(spec: &GameSpec, n_list: &[usize], n_fine: usize, options: &CentralOptions) -> Result<Vec<StudyRow>> {
    let sizes = check_nesting(n_list, n_fine)?;
    let fine = DiscreteGame::new(spec.with_points(n_fine)?)?;
    sizes
        .into_iter()
        .map(|m| {
            let start = Instant::now();
            let coarse = DiscreteGame::new(spec.with_points(m)?)?;
            let sol = central_dbne(&coarse, options)?;
            let refined = sol
                .profile
                .iter()
                .map(|s| refine_strategy(s, coarse.grid(), fine.grid()))
                .collect::<Result<Vec<_>>>()?;
            let report = exploitability(&fine, &refined, options.best_response_tol)?;
            Ok(StudyRow {
                n_points: m,
                epsilon: report.epsilon,
                certified_tol: sol.exploitability,
                runtime_ms: start.elapsed().as_millis(),
            })
        })
        .collect()
}

/// `N,epsilon,certified_tol,runtime_ms`.
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("N,epsilon,certified_tol,runtime_ms\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.16e},{:.16e},{}", r.n_points, r.epsilon, r.certified_tol, r.runtime_ms);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub n_points: usize,
    /// `max_i sup_θ |refined coarse BR_i − fine BR_i|`.
    pub gap: f64,
}

/// Coarse best responses against rivals fixed on the fine grid, refined and
/// compared with the fine best responses.
///
/// With independent types the coarse cell's rival mass is the whole fine
/// rival law, so the coarse response at `θ^k` minimizes the fine objective
/// evaluated at the coarse type point.
pub fn best_response_refinement_check(
    spec: &GameSpec,
    rivals_fine: &[Strategy],
    n_list: &[usize],
    n_fine: usize,
    tol: f64,
) -> Result<Vec<RefinementRow>> {
    let sizes = check_nesting(n_list, n_fine)?;
    let fine = DiscreteGame::new(spec.with_points(n_fine)?)?;
    check_profile(&fine, rivals_fine)?;
    let terms = (0..fine.n_players()).map(|i| RivalTerms::direct(&fine, rivals_fine, i)).collect::<Result<Vec<_>>>()?;
    let fine_br = (0..fine.n_players())
        .map(|i| respond(&fine, i, &terms[i], fine.grid().points(), &rivals_fine[i], tol, BestResponseMethod::Auto))
        .collect::<Result<Vec<_>>>()?;
    sizes
        .into_iter()
        .map(|m| {
            let grid = spec.with_points(m)?.grid()?;
            let mut gap: f64 = 0.0;
            for i in 0..fine.n_players() {
                let start = Strategy::constant(m, &spec.action_box(i).midpoint());
                let coarse = respond(&fine, i, &terms[i], grid.points(), &start, tol, BestResponseMethod::Auto)?;
                let refined = refine_strategy(&coarse, &grid, fine.grid())?;
                gap = gap.max(refined.table().sub(fine_br[i].table()).max_abs());
            }
            Ok(RefinementRow { n_points: m, gap })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{CournotParams, PriceSign};
    use crate::type_space::{build_uniform_grid, TypeInterval};

    fn cournot(n: usize, big_n: usize, d: f64) -> DiscreteGame {
        let params = CournotParams::linear_offsets(n, d, 20.0, PriceSign::Minus);
        let spec = GameSpec::cournot(
            &params,
            ActionBox::interval(0.0, 20.0).unwrap(),
            TypeInterval::uniform(1.0, 2.0).unwrap(),
            big_n,
        )
        .unwrap();
        DiscreteGame::new(spec).unwrap()
    }

    #[test]
    fn zero_profile_costs_nothing() {
        let game = cournot(5, 6, 60.0);
        let profile = vec![Strategy::constant(6, &[0.0]); 5];
        let c = expected_cost(&game, 2, &profile).unwrap();
        assert!(c.per_type.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_type_is_deterministic_game() {
        let game = cournot(2, 1, 60.0);
        let profile = vec![Strategy::scalar(&[3.0]), Strategy::scalar(&[5.0])];
        let c = expected_cost(&game, 0, &profile).unwrap();
        let direct = -(4.0 + 60.0) * 3.0 + 2.0 * 9.0;
        assert!((c.total - direct).abs() < 1e-12);
    }

    #[test]
    fn best_response_clamps_literal_example() {
        let game = cournot(5, 1, 1200.0);
        let mut profile = vec![Strategy::scalar(&[0.0]); 5];
        profile[0] = Strategy::scalar(&[7.0]);
        let br = best_response(&game, 0, &profile, 1e-10, BestResponseMethod::ClosedForm).unwrap();
        assert_eq!(br.action(0), &[20.0]);
        let generic = best_response(&game, 0, &profile, 1e-10, BestResponseMethod::Generic).unwrap();
        assert!((generic.action(0)[0] - 20.0).abs() < 1e-10);
    }

    #[test]
    fn zero_profile_is_exploitable() {
        let game = cournot(5, 8, 60.0);
        let profile = vec![Strategy::constant(8, &[0.0]); 5];
        assert!(exploitability(&game, &profile, 1e-10).unwrap().epsilon > 0.0);
    }

    #[test]
    fn refinement_examples() {
        let coarse = build_uniform_grid(0.0, 1.0, 2).unwrap();
        let fine = build_uniform_grid(0.0, 1.0, 4).unwrap();
        let s = Strategy::scalar(&[1.0, 2.0]);
        let r = refine_strategy(&s, &coarse, &fine).unwrap();
        assert_eq!(r.table().as_slice(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(refine_strategy(&s, &coarse, &coarse).unwrap(), s);
        let other = build_uniform_grid(0.0, 2.0, 4).unwrap();
        assert!(refine_strategy(&s, &coarse, &other).is_err());
    }

    #[test]
    fn study_rejects_bad_nesting() {
        let game = cournot(3, 4, 60.0);
        assert!(matches!(epsilon_study(game.spec(), &[3, 4], 8, &CentralOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn central_certificate() {
        let game = cournot(3, 6, 60.0);
        let sol = central_dbne(&game, &CentralOptions::default()).unwrap();
        assert!(sol.exploitability <= 1e-8);
        let report = exploitability(&game, &sol.profile, 1e-12).unwrap();
        assert!(report.gains.iter().all(|&g| g >= -GAIN_SLACK));
    }
}
