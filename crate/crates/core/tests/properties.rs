mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_tour, slow_admissible};
use radio_route::adversary::{
    gen_balanced, verify_admissible, AdversaryType, InjectionTrace, Violation,
};
use radio_route::coloring::greedy_color_by_id;
use radio_route::net::make_random_connected;
use radio_route::ogf::{plan_window, run_ogf, GossipConfig};
use radio_route::sim::{self, baselines::Eager, step, Action, Message, Reception};
use radio_route::{ConflictGraph, Tour, TourId};

fn balanced_type() -> impl Strategy<Value = AdversaryType> {
    (1usize..=3, 1u64..=3, 2i64..=5).prop_map(|(l, b, slack)| {
        // rho = 1 / (L * slack) keeps rho * L < 1.
        AdversaryType::from_parts(1, l as i64 * slack, b, l).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_traffic_is_admissible(
        n in 2usize..=7,
        p in 0.0f64..0.6,
        adv in balanced_type(),
        seed in any::<u64>(),
        horizon in 1u64..=60,
    ) {
        let net = make_random_connected(n, p, seed).unwrap();
        let trace = gen_balanced(&net, &adv, seed, horizon).unwrap();
        prop_assert!(trace.tours().iter().all(|t| t.len() <= adv.stretch()));
        prop_assert_eq!(verify_admissible(&net, &trace, &adv).unwrap(), Ok(()));
        prop_assert!(slow_admissible(&net, &trace, &adv));
    }

    #[test]
    fn dropping_tours_keeps_admissibility(
        n in 2usize..=6,
        adv in balanced_type(),
        seed in any::<u64>(),
        keep in prop::collection::vec(any::<bool>(), 64),
    ) {
        let net = make_random_connected(n, 0.3, seed).unwrap();
        let trace = gen_balanced(&net, &adv, seed, 40).unwrap();
        let subset: Vec<Tour> = trace
            .tours()
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[i % keep.len()])
            .map(|(_, t)| t.clone())
            .collect();
        let sub = InjectionTrace::new(subset, trace.horizon()).unwrap();
        prop_assert_eq!(verify_admissible(&net, &sub, &adv).unwrap(), Ok(()));
    }

    #[test]
    fn burst_of_b_plus_one_copies_is_caught(
        n in 2usize..=6,
        adv in balanced_type(),
        seed in any::<u64>(),
        round in 1u64..=30,
    ) {
        let net = make_random_connected(n, 0.3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_tour(&net, 1, round, adv.stretch(), &mut rng);
        let copies: Vec<Tour> = (0..=adv.burstiness())
            .map(|i| Tour::new(TourId(i + 1), round, base.path().to_vec()).unwrap())
            .collect();
        let trace = InjectionTrace::new(copies, round).unwrap();
        let verdict = verify_admissible(&net, &trace, &adv).unwrap();
        prop_assert!(matches!(verdict, Err(Violation::Load { .. })), "{:?}", verdict);
        prop_assert!(!slow_admissible(&net, &trace, &adv));
    }

    #[test]
    fn packets_are_conserved(
        n in 2usize..=7,
        adv in balanced_type(),
        seed in any::<u64>(),
        horizon in 1u64..=80,
    ) {
        let net = make_random_connected(n, 0.3, seed).unwrap();
        let trace = gen_balanced(&net, &adv, seed, horizon).unwrap();
        let metrics = sim::run(&net, &Eager, trace.tours(), horizon).unwrap();
        prop_assert_eq!(metrics.injected, trace.len());
        prop_assert_eq!(metrics.deliveries.len() + metrics.pending.len(), trace.len());
        let last = metrics.rounds.last().unwrap();
        prop_assert_eq!(last.backlog, metrics.pending.len());
        for d in &metrics.deliveries {
            prop_assert_eq!(d.hops.len(), d.links);
            prop_assert!(d.hops.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(d.injected <= d.hops[0]);
        }
    }

    #[test]
    fn old_go_first_is_deterministic(
        n in 2usize..=6,
        seed in any::<u64>(),
    ) {
        let net = make_random_connected(n, 0.3, seed).unwrap();
        let adv = AdversaryType::from_parts(1, 6, 1, 2).unwrap();
        let gossip = GossipConfig::oracle(3).unwrap();
        let trace = gen_balanced(&net, &adv, seed, 60).unwrap();
        let csv = || {
            let run = run_ogf(&net, &adv, gossip, &trace, 80, None).unwrap();
            let mut rounds = Vec::new();
            let mut deliveries = Vec::new();
            run.metrics.write_rounds_csv(&mut rounds).unwrap();
            run.metrics.write_deliveries_csv(&mut deliveries).unwrap();
            (rounds, deliveries)
        };
        prop_assert_eq!(csv(), csv());
    }

    #[test]
    fn window_plans_are_consistent(
        n in 2usize..=8,
        seed in any::<u64>(),
        count in 0usize..=12,
        max_links in 1usize..=3,
    ) {
        let net = make_random_connected(n, 0.3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tours: Vec<Tour> = (0..count as u64)
            .map(|i| random_tour(&net, i + 1, 1, max_links, &mut rng))
            .collect();
        let plan = plan_window(&net, &tours, 1).unwrap();
        let cg = ConflictGraph::build(&net, &tours).unwrap();
        prop_assert_eq!(plan.longest, tours.iter().map(Tour::len).max().unwrap_or(0));
        prop_assert_eq!(plan.delta, cg.max_degree());
        prop_assert!(plan.coloring.check_proper(&cg).is_ok());
        prop_assert!(plan.coloring.num_colors() as usize <= plan.delta + 1);
        prop_assert_eq!(&plan.coloring, &greedy_color_by_id(&cg));
        let expected = if tours.is_empty() { 0 } else { (plan.longest * (plan.delta + 1)) as u64 };
        prop_assert_eq!(plan.phase2_length, expected);
    }

    #[test]
    fn old_go_first_never_stacks_a_color(
        n in 2usize..=8,
        adv in balanced_type(),
        seed in any::<u64>(),
        oracle in any::<bool>(),
    ) {
        let net = make_random_connected(n, 0.3, seed).unwrap();
        let gossip = if oracle {
            GossipConfig::oracle(2).unwrap()
        } else {
            GossipConfig::tdma(n).unwrap()
        };
        let trace = gen_balanced(&net, &adv, seed, 200).unwrap();
        let run = run_ogf(&net, &adv, gossip, &trace, 300, None).unwrap();
        prop_assert!(run.clashes.is_empty(), "{:?}", run.clashes);
        prop_assert!(run.plans_agree);
        prop_assert!(run.metrics.unheard_packets.is_empty());
    }

    #[test]
    fn step_follows_the_hearing_rule(
        n in 2usize..=9,
        p in 0.0f64..0.8,
        seed in any::<u64>(),
        mask in any::<u16>(),
    ) {
        let net = make_random_connected(n, p, seed).unwrap();
        let transmitting: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let actions: Vec<Action<()>> = transmitting
            .iter()
            .map(|&t| if t { Action::Transmit(Message::packet(TourId(0))) } else { Action::Listen })
            .collect();
        let outcome = step(&net, &actions).unwrap();
        for v in net.nodes() {
            let got = match outcome.at(v) {
                Reception::Heard { sender, .. } => Some(Some(*sender)),
                Reception::Collision => Some(None),
                Reception::Silence => None,
            };
            prop_assert_eq!(got, common::hearing_rule(&net, &transmitting, v));
        }
    }
}
