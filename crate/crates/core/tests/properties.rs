mod common;

use bayesagg_core::network::{fit_geometric_envelope, mixing_diagnostic, schedule_at, transition_product, validate_schedule};
use bayesagg_core::solver::{init_state, project_box, run, InitRule, RunConfig, SolverOptions};
use bayesagg_core::*;
use common::*;
use proptest::prelude::{prop_assert, prop_oneof, proptest, Just, ProptestConfig, Strategy as _};

fn schedule_strategy() -> impl proptest::strategy::Strategy<Value = GraphSchedule> {
    (3usize..7, 0u64..1000, 0usize..4, 0.0f64..0.5).prop_map(|(n, seed, kind, p)| {
        let mode = match kind {
            0 => ScheduleMode::RingStatic,
            1 => ScheduleMode::RoundRobin { period: n - 1 },
            2 => ScheduleMode::RandomGossip { period: n - 1, extra_edge_prob: p },
            _ => ScheduleMode::Complete,
        };
        GraphSchedule::new(n, mode, seed).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn emitted_weights_are_valid(schedule in schedule_strategy(), t in 0usize..500) {
        let w = schedule_at(&schedule, t);
        prop_assert!(w.check(schedule.eta()).is_ok());
        prop_assert!(validate_schedule(&schedule, schedule.window() + 10).is_ok());
    }

    #[test]
    fn products_stay_doubly_stochastic(schedule in schedule_strategy(), s in 0usize..50) {
        let phi = transition_product(&schedule, s, s + 1000).unwrap();
        let n = schedule.n();
        for i in 0..n {
            let row: f64 = phi.row(i).iter().sum();
            let col: f64 = (0..n).map(|r| phi[(r, i)]).sum();
            prop_assert!((row - 1.0).abs() < 1e-10 && (col - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mixing_decays_geometrically(schedule in schedule_strategy()) {
        let dev = mixing_diagnostic(&schedule, 0, 30 * schedule.window() * schedule.n()).unwrap();
        let env = fit_geometric_envelope(&dev).unwrap();
        prop_assert!(env.beta < 1.0);
        for (j, &d) in dev.iter().enumerate() {
            prop_assert!(d <= env.bound(j + 1) * (1.0 + 1e-9) + 1e-15);
        }
        prop_assert!(*dev.last().unwrap() < 1e-6);
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(
        a in proptest::collection::vec(-30.0f64..30.0, 8),
        b in proptest::collection::vec(-30.0f64..30.0, 8),
    ) {
        let bx = ActionBox::interval(0.0, 20.0).unwrap();
        let (ta, tb) = (Table::column(&a), Table::column(&b));
        let (pa, pb) = (project_box(&ta, &bx), project_box(&tb, &bx));
        prop_assert!(project_box(&pa, &bx) == pa);
        prop_assert!(pa.sub(&pb).norm() <= ta.sub(&tb).norm() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conservation_holds_on_any_schedule(
        schedule in schedule_strategy(),
        seed in 0u64..1000,
        init in prop_oneof![Just(0u8), Just(1u8), Just(2u8)],
    ) {
        let game = cournot(schedule.n(), 9);
        let rule = match init {
            0 => InitRule::Zeros,
            1 => InitRule::Midpoint,
            _ => InitRule::Random { seed },
        };
        let state = init_state(&game, rule).unwrap();
        let config = RunConfig { iterations: 400, record_every: 50, probes: vec![] };
        let (trace, end) = run(&game, &schedule, &StepsizeSchedule::default(), state, &config, None, &SolverOptions::default()).unwrap();
        prop_assert!(trace.max_conservation_error <= 1e-10);
        for (i, s) in end.strategies.iter().enumerate() {
            prop_assert!(Strategy::new(s.table().clone(), game.spec().action_box(i)).is_ok());
        }
    }
}

#[test]
fn consensus_residual_vanishes_on_a_static_ring() {
    let game = cournot(5, 10);
    let state = init_state(&game, InitRule::Random { seed: 5 }).unwrap();
    let config = RunConfig { iterations: 3000, record_every: 500, probes: vec![] };
    let (trace, _) = run(
        &game,
        &GraphSchedule::ring(5).unwrap(),
        &StepsizeSchedule::default(),
        state,
        &config,
        None,
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(trace.last().consensus_residual < 1e-6);
}

#[test]
fn verbatim_scaling_and_dropped_chain_still_run() {
    let game = cournot(4, 6);
    let state = init_state(&game, InitRule::Midpoint).unwrap();
    let config = RunConfig { iterations: 200, record_every: 200, probes: vec![(0, 0)] };
    for options in [
        SolverOptions { scaling: GradientScaling::Verbatim, ..SolverOptions::default() },
        SolverOptions { include_chain: false, ..SolverOptions::default() },
    ] {
        let (trace, _) =
            run(&game, &GraphSchedule::complete(4).unwrap(), &StepsizeSchedule::default(), state.clone(), &config, None, &options)
                .unwrap();
        assert!(trace.max_conservation_error <= 1e-10);
    }
}
