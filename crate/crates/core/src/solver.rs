//! Distributed equilibrium seeking: consensus mixing of aggregate estimates,
//! conditional gradient steps, box projection and dynamic average tracking.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::aggregation::{contribution, full_aggregate, AggregateFunction, Strategy};
use crate::error::{Error, Result};
use crate::game_model::{ActionBox, DiscreteGame};
use crate::network::{schedule_at, GraphSchedule, WeightMatrix};
use crate::objective::{conditional_gradient, GradScratch, RivalTerms};
use crate::table::{distance, Table};

/// `α(t)`, positive and non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub enum StepsizeSchedule {
    /// `a / (b + t)`.
    Harmonic { a: f64, b: f64 },
    /// Explicit values; the last one is held past the end.
    Table(Vec<f64>),
}

impl StepsizeSchedule {
    pub fn harmonic(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(b >= 1.0 && b.is_finite()) {
            return Err(Error::Config(format!("stepsize needs a > 0 and b >= 1, got a={a}, b={b}")));
        }
        Ok(StepsizeSchedule::Harmonic { a, b })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("stepsize table is empty".into()));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("stepsizes must be positive and finite".into()));
        }
        if let Some(t) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::Config(format!("stepsize table increases at t={}", t + 1)));
        }
        Ok(StepsizeSchedule::Table(values))
    }

    pub fn at(&self, t: usize) -> f64 {
        match self {
            StepsizeSchedule::Harmonic { a, b } => a / (b + t as f64),
            StepsizeSchedule::Table(v) => v[t.min(v.len() - 1)],
        }
    }
}

impl Default for StepsizeSchedule {
    fn default() -> Self {
        StepsizeSchedule::Harmonic { a: 2.0, b: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitRule {
    Zeros,
    Midpoint,
    Random { seed: u64 },
}

/// Normalization of the gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientScaling {
    /// Keep the `1/N` weight of each type cell, as [`bayes_gradient`] returns it.
    Verbatim,
    /// Per-type conditional gradient (`N ×` the verbatim value), so the
    /// stepsize acts on each type's own curvature.
    PerType,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Include the `(1/n) ∂_agg f` term.
    pub include_chain: bool,
    pub scaling: GradientScaling,
    /// Worker threads for per-player work; `1` runs inline.
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { include_chain: true, scaling: GradientScaling::PerType, threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: usize,
    pub strategies: Vec<Strategy>,
    /// `v_i`.
    pub estimates: Vec<AggregateFunction>,
    /// `u_i` from the last mixing round.
    pub mixed: Vec<AggregateFunction>,
    /// Cached `h_i(σ_i)`.
    pub contributions: Vec<AggregateFunction>,
}

impl SolverState {
    /// Largest entry of `|Σ_i v_i − Σ_i h_i(σ_i)|`, with the contributions recomputed from scratch.
    pub fn conservation_error(&self, game: &DiscreteGame) -> Result<f64> {
        let truth = full_aggregate(&self.strategies, game.counts())?;
        let mut total = Table::zeros(truth.n_sums(), truth.dim());
        for v in &self.estimates {
            total.axpy(1.0, v.table());
        }
        Ok(total.sub(truth.table()).max_abs())
    }

    /// `v̄ = (1/n) Σ_i v_i`.
    pub fn mean_estimate(&self) -> Table {
        mean_table(self.estimates.iter().map(|v| v.table()))
    }
}

fn mean_table<'a>(tables: impl Iterator<Item = &'a Table>) -> Table {
    let mut acc: Option<Table> = None;
    let mut count = 0usize;
    for t in tables {
        match acc.as_mut() {
            Some(a) => a.axpy(1.0, t),
            None => acc = Some(t.clone()),
        }
        count += 1;
    }
    let mut acc = acc.expect("at least one table");
    acc.scale(1.0 / count as f64);
    acc
}

/// Componentwise clamp of every row.
pub fn project_box(table: &Table, bx: &ActionBox) -> Table {
    let mut out = table.clone();
    for k in 0..out.rows() {
        bx.project(out.row_mut(k));
    }
    out
}

pub fn init_state(game: &DiscreteGame, rule: InitRule) -> Result<SolverState> {
    let spec = game.spec();
    let (n, big_n, dim) = (game.n_players(), game.n_points(), game.dim());
    let mut rng = match rule {
        InitRule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut strategies = Vec::with_capacity(n);
    for i in 0..n {
        let bx = spec.action_box(i);
        let table = match rule {
            InitRule::Zeros => {
                let zero = vec![0.0; dim];
                if !bx.contains(&zero) {
                    return Err(Error::Config(format!("zeros init is outside the action box of player {}", i + 1)));
                }
                Table::zeros(big_n, dim)
            }
            InitRule::Midpoint => Strategy::constant(big_n, &bx.midpoint()).into_table(),
            InitRule::Random { .. } => {
                let rng = rng.as_mut().expect("seeded above");
                let mut t = Table::zeros(big_n, dim);
                for k in 0..big_n {
                    for (j, v) in t.row_mut(k).iter_mut().enumerate() {
                        *v = rng.gen_range(bx.lo()[j]..=bx.hi()[j]);
                    }
                }
                t
            }
        };
        strategies.push(Strategy::new(table, bx)?);
    }
    let contributions = strategies.iter().map(|s| contribution(s, game.counts())).collect::<Result<Vec<_>>>()?;
    Ok(SolverState {
        t: 0,
        strategies,
        estimates: contributions.clone(),
        mixed: contributions.clone(),
        contributions,
    })
}

/// `u_i = Σ_j W_ij v_j`, summed in player order.
pub fn mix_estimates(estimates: &[AggregateFunction], w: &WeightMatrix) -> Result<Vec<AggregateFunction>> {
    let n = estimates.len();
    if w.n() != n {
        return Err(Error::Shape(format!("weight matrix is {0}x{0} for {n} estimates", w.n())));
    }
    let (rows, cols) = estimates[0].table().shape();
    if estimates.iter().any(|v| v.table().shape() != (rows, cols)) {
        return Err(Error::Shape("estimates have different shapes".into()));
    }
    Ok((0..n)
        .map(|i| {
            let mut u = Table::zeros(rows, cols);
            for (j, v) in estimates.iter().enumerate() {
                let wij = w.get(i, j);
                if wij != 0.0 {
                    u.axpy(wij, v.table());
                }
            }
            AggregateFunction::new(u)
        })
        .collect())
}

/// Conditional expected gradient of player `i` (0-based) at every type, read
/// from the aggregate table `agg`:
/// row `k` = `(1/N) Σ_s P(s | k) [∂_x f + χ (1/n) ∂_agg f]` at `x = σ(θ^k)`,
/// where the aggregate at `(s | k)` keeps the own action at `σ(θ^k)`.
pub fn bayes_gradient(
    game: &DiscreteGame,
    i: usize,
    strategy: &Strategy,
    agg: &AggregateFunction,
    include_chain: bool,
) -> Result<Table> {
    let rivals = RivalTerms::from_aggregate(game, agg, strategy, i)?;
    let mut g = own_gradient(game, i, strategy, &rivals, include_chain);
    g.scale(1.0 / game.n_points() as f64);
    Ok(g)
}

/// Per-type conditional gradient without the `1/N` weight.
pub(crate) fn own_gradient(
    game: &DiscreteGame,
    i: usize,
    strategy: &Strategy,
    rivals: &RivalTerms,
    include_chain: bool,
) -> Table {
    let model = game.spec().model(i);
    let n = game.n_players();
    let mut g = Table::zeros(strategy.n_points(), strategy.dim());
    let mut scratch = GradScratch::new(strategy.dim());
    for k in 0..strategy.n_points() {
        conditional_gradient(model, strategy.action(k), rivals, game.theta(k), n, include_chain, &mut scratch, g.row_mut(k));
    }
    g
}

struct PlayerUpdate {
    strategy: Strategy,
    contribution: AggregateFunction,
    estimate: AggregateFunction,
}

fn update_player(
    game: &DiscreteGame,
    state: &SolverState,
    u: &AggregateFunction,
    i: usize,
    alpha: f64,
    options: &SolverOptions,
) -> Result<PlayerUpdate> {
    let n = game.n_players() as f64;
    let own = &state.strategies[i];
    // v̄ tracks H/n, so the aggregate estimate is n·u_i
    let mut estimate = u.table().clone();
    estimate.scale(n);
    let rivals = RivalTerms::from_aggregate(game, &AggregateFunction::new(estimate), own, i)?;
    let mut g = own_gradient(game, i, own, &rivals, options.include_chain);
    if options.scaling == GradientScaling::Verbatim {
        g.scale(1.0 / game.n_points() as f64);
    }
    if !g.all_finite() {
        return Err(Error::Divergence { iteration: state.t, detail: format!("non-finite gradient for player {}", i + 1) });
    }
    let mut next = own.table().clone();
    next.axpy(-alpha, &g);
    let strategy = Strategy::from_projected(project_box(&next, game.spec().action_box(i)));
    let contribution = contribution(&strategy, game.counts())?;
    let mut v = u.table().clone();
    v.axpy(-1.0, state.contributions[i].table());
    v.axpy(1.0, contribution.table());
    if !v.all_finite() {
        return Err(Error::Divergence { iteration: state.t, detail: format!("non-finite estimate for player {}", i + 1) });
    }
    Ok(PlayerUpdate { strategy, contribution, estimate: AggregateFunction::new(v) })
}

/// Finishes round `t` given the mixed estimates `u^t` (stored into `state.mixed`).
fn advance(
    game: &DiscreteGame,
    state: &mut SolverState,
    mixed: Vec<AggregateFunction>,
    alpha: f64,
    options: &SolverOptions,
    pool: Option<&ThreadPool>,
) -> Result<()> {
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("stepsize {alpha} must be nonnegative")));
    }
    let n = game.n_players();
    let updates: Vec<PlayerUpdate> = {
        let snapshot = &*state;
        let work = |i: usize| update_player(game, snapshot, &mixed[i], i, alpha, options);
        match pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(work).collect::<Result<Vec<_>>>())?,
            None => (0..n).map(work).collect::<Result<Vec<_>>>()?,
        }
    };
    for (i, up) in updates.into_iter().enumerate() {
        state.strategies[i] = up.strategy;
        state.contributions[i] = up.contribution;
        state.estimates[i] = up.estimate;
    }
    state.mixed = mixed;
    state.t += 1;
    Ok(())
}

/// One synchronous round: mix with `w`, step every player from the time-`t` snapshot.
pub fn step(
    game: &DiscreteGame,
    state: &mut SolverState,
    w: &WeightMatrix,
    alpha: f64,
    options: &SolverOptions,
    pool: Option<&ThreadPool>,
) -> Result<()> {
    let mixed = mix_estimates(&state.estimates, w)?;
    advance(game, state, mixed, alpha, options, pool)
}

/// Builds the worker pool for `threads > 1`.
pub fn thread_pool(threads: usize) -> Result<Option<ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub record_every: usize,
    /// `(player, type row)`, both 0-based.
    pub probes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    /// `max_i ‖u_i − v̄‖`.
    pub consensus_residual: f64,
    pub oracle_distance: Option<f64>,
    pub stepsize: f64,
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub probes: Vec<(usize, usize)>,
    pub records: Vec<TraceRecord>,
    /// Largest conservation error seen over every iteration, not only recorded ones.
    pub max_conservation_error: f64,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    /// Header `t,consensus_residual,oracle_distance,stepsize,probe_<i>_<k>…` with
    /// 1-based probe indices; floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,consensus_residual,oracle_distance,stepsize");
        for (i, k) in &self.probes {
            let _ = write!(out, ",probe_{}_{}", i + 1, k + 1);
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{:.16e},", r.t, r.consensus_residual);
            if let Some(d) = r.oracle_distance {
                let _ = write!(out, "{d:.16e}");
            }
            let _ = write!(out, ",{:.16e}", r.stepsize);
            for p in &r.probes {
                let _ = write!(out, ",{p:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Stacked Euclidean distance between two profiles.
pub fn profile_distance(a: &[Strategy], b: &[Strategy]) -> f64 {
    a.iter().zip(b).map(|(x, y)| distance(x.table(), y.table()).powi(2)).sum::<f64>().sqrt()
}

fn consensus_residual(mixed: &[AggregateFunction], vbar: &Table) -> f64 {
    mixed.iter().map(|u| distance(u.table(), vbar)).fold(0.0, f64::max)
}

/// Runs `config.iterations` rounds from `state`, recording every
/// `record_every` rounds and always at the end.
pub fn run(
    game: &DiscreteGame,
    schedule: &GraphSchedule,
    stepsizes: &StepsizeSchedule,
    mut state: SolverState,
    config: &RunConfig,
    oracle: Option<&[Strategy]>,
    options: &SolverOptions,
) -> Result<(Trace, SolverState)> {
    if config.record_every == 0 {
        return Err(Error::Config("record_every must be positive".into()));
    }
    if schedule.n() != game.n_players() {
        return Err(Error::Config(format!("schedule has {} nodes for {} players", schedule.n(), game.n_players())));
    }
    for &(i, k) in &config.probes {
        if i >= game.n_players() || k >= game.n_points() {
            return Err(Error::Index(format!("probe ({}, {}) out of range", i + 1, k + 1)));
        }
    }
    if let Some(o) = oracle {
        if o.len() != game.n_players() || o.iter().any(|s| s.n_points() != game.n_points()) {
            return Err(Error::Shape("oracle profile does not match the game".into()));
        }
    }
    let pool = thread_pool(options.threads)?;
    let mut trace = Trace { probes: config.probes.clone(), records: Vec::new(), max_conservation_error: 0.0 };
    trace.max_conservation_error = state.conservation_error(game)?;
    let record = |state: &SolverState, mixed: &[AggregateFunction]| TraceRecord {
        t: state.t,
        consensus_residual: consensus_residual(mixed, &state.mean_estimate()),
        oracle_distance: oracle.map(|o| profile_distance(&state.strategies, o)),
        stepsize: stepsizes.at(state.t),
        probes: config.probes.iter().map(|&(i, k)| state.strategies[i].action(k)[0]).collect(),
    };
    let start = state.t;
    for t in start..start + config.iterations {
        let mixed = mix_estimates(&state.estimates, &schedule_at(schedule, t))?;
        if (t - start) % config.record_every == 0 {
            trace.records.push(record(&state, &mixed));
        }
        advance(game, &mut state, mixed, stepsizes.at(t), options, pool.as_ref())?;
        let err = state.conservation_error(game)?;
        if !err.is_finite() {
            return Err(Error::Divergence { iteration: t, detail: "conservation error is not finite".into() });
        }
        trace.max_conservation_error = trace.max_conservation_error.max(err);
    }
    let mixed = mix_estimates(&state.estimates, &schedule_at(schedule, state.t))?;
    trace.records.push(record(&state, &mixed));
    Ok((trace, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{CournotParams, GameSpec, PriceSign};
    use crate::type_space::TypeInterval;
    use approx::assert_abs_diff_eq;

    fn cournot(n: usize, big_n: usize) -> DiscreteGame {
        let params = CournotParams::linear_offsets(n, 60.0, 20.0, PriceSign::Minus);
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
    fn stepsizes() {
        let s = StepsizeSchedule::default();
        assert_eq!(s.at(0), 0.2);
        assert!((0..1000).all(|t| s.at(t + 1) <= s.at(t)));
        assert!(StepsizeSchedule::harmonic(0.0, 10.0).is_err());
        assert!(StepsizeSchedule::harmonic(1.0, 0.5).is_err());
        assert!(StepsizeSchedule::table(vec![0.1, 0.2]).is_err());
        let t = StepsizeSchedule::table(vec![0.3, 0.2]).unwrap();
        assert_eq!(t.at(5), 0.2);
        let partial: f64 = (0..1_000_000).map(|t| StepsizeSchedule::harmonic(1.0, 1.0).unwrap().at(t).powi(2)).sum();
        assert!(partial <= std::f64::consts::PI.powi(2) / 6.0);
    }

    #[test]
    fn init_rules() {
        let game = cournot(5, 4);
        let s = init_state(&game, InitRule::Zeros).unwrap();
        assert!(s.estimates.iter().all(|v| v.table().max_abs() == 0.0));
        let s = init_state(&game, InitRule::Midpoint).unwrap();
        assert!(s.strategies.iter().all(|x| x.table().as_slice().iter().all(|&v| v == 10.0)));
        assert!(s.estimates.iter().all(|v| v.table().as_slice().iter().all(|&e| (e - 2.0).abs() < 1e-15)));
        let a = init_state(&game, InitRule::Random { seed: 3 }).unwrap();
        let b = init_state(&game, InitRule::Random { seed: 3 }).unwrap();
        assert_eq!(a, b);
        assert!(a.conservation_error(&game).unwrap() < 1e-12);

        let params = CournotParams::linear_offsets(2, 60.0, 20.0, PriceSign::Minus);
        let spec = GameSpec::cournot(&params, ActionBox::interval(1.0, 2.0).unwrap(), TypeInterval::uniform(1.0, 2.0).unwrap(), 3).unwrap();
        let game = DiscreteGame::new(spec).unwrap();
        assert!(matches!(init_state(&game, InitRule::Zeros), Err(Error::Config(_))));
    }

    #[test]
    fn mixing_examples() {
        let v = vec![AggregateFunction::new(Table::filled(3, 1, 0.0)), AggregateFunction::new(Table::filled(3, 1, 2.0))];
        let half = crate::network::metropolis_weights(2, &[(0, 1)]).unwrap();
        let u = mix_estimates(&v, &half).unwrap();
        assert!(u.iter().all(|x| x.table().as_slice() == [1.0; 3]));
        let id = crate::network::metropolis_weights(2, &[]).unwrap();
        assert_eq!(mix_estimates(&v, &id).unwrap(), v);
        let three = crate::network::metropolis_weights(3, &[]).unwrap();
        assert!(mix_estimates(&v, &three).is_err());
    }

    #[test]
    fn projection() {
        let bx = ActionBox::interval(0.0, 20.0).unwrap();
        let t = Table::column(&[-3.0, 5.0, 25.0]);
        let p = project_box(&t, &bx);
        assert_eq!(p.as_slice(), &[0.0, 5.0, 20.0]);
        assert_eq!(project_box(&p, &bx), p);
    }

    #[test]
    fn gradient_hand_value() {
        // sign +1, d = 1200, x = 0: row value (1/N)(agg + 1200)
        let params = CournotParams::linear_offsets(5, 1200.0, 20.0, PriceSign::Plus);
        let spec = GameSpec::cournot(&params, ActionBox::interval(0.0, 20.0).unwrap(), TypeInterval::uniform(1.0, 2.0).unwrap(), 4).unwrap();
        let game = DiscreteGame::new(spec).unwrap();
        let own = Strategy::constant(4, &[0.0]);
        let agg = AggregateFunction::new(Table::filled(game.counts().n_sums(), 1, 7.0));
        let g = bayes_gradient(&game, 0, &own, &agg, true).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(g[(k, 0)], (7.0 + 1200.0) / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_stepsize_is_pure_consensus() {
        let game = cournot(3, 5);
        let mut state = init_state(&game, InitRule::Random { seed: 1 }).unwrap();
        let before = state.strategies.clone();
        let w = crate::network::metropolis_weights(3, &[(0, 1), (1, 2)]).unwrap();
        let expected = mix_estimates(&state.estimates, &w).unwrap();
        step(&game, &mut state, &w, 0.0, &SolverOptions::default(), None).unwrap();
        assert_eq!(state.strategies, before);
        for (v, u) in state.estimates.iter().zip(&expected) {
            assert!(v.table().sub(u.table()).max_abs() < 1e-13);
        }
    }

    #[test]
    fn run_records_and_conserves() {
        let game = cournot(4, 6);
        let schedule = GraphSchedule::round_robin(4).unwrap();
        let state = init_state(&game, InitRule::Random { seed: 2 }).unwrap();
        let config = RunConfig { iterations: 0, record_every: 1, probes: vec![(0, 0)] };
        let (trace, _) = run(&game, &schedule, &StepsizeSchedule::default(), state.clone(), &config, None, &SolverOptions::default()).unwrap();
        assert_eq!(trace.records.len(), 1);

        let config = RunConfig { iterations: 300, record_every: 100, probes: vec![(0, 0), (3, 5)] };
        let (trace, end) = run(&game, &schedule, &StepsizeSchedule::default(), state, &config, None, &SolverOptions::default()).unwrap();
        assert_eq!(trace.records.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 100, 200, 300]);
        assert_eq!(end.t, 300);
        assert!(trace.max_conservation_error < 1e-10);
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,consensus_residual,oracle_distance,stepsize,probe_1_1,probe_4_6\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn parallel_matches_serial() {
        let game = cournot(5, 8);
        let schedule = GraphSchedule::new(5, crate::network::ScheduleMode::RandomGossip { period: 4, extra_edge_prob: 0.3 }, 4).unwrap();
        let state = init_state(&game, InitRule::Random { seed: 9 }).unwrap();
        let config = RunConfig { iterations: 200, record_every: 10, probes: vec![(1, 2)] };
        let serial = SolverOptions::default();
        let parallel = SolverOptions { threads: 3, ..serial };
        let (a, _) = run(&game, &schedule, &StepsizeSchedule::default(), state.clone(), &config, None, &serial).unwrap();
        let (b, _) = run(&game, &schedule, &StepsizeSchedule::default(), state, &config, None, &parallel).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
