mod common;

use std::collections::BTreeSet;
use std::time::Duration;

use common::*;
use depotflow::assign::{build_model, greedy_warm_start, solve, Proof};
use depotflow::model::{ideal_time, Order};
use depotflow::network::{grid_network, k_center_depots, k_center_objective, NetworkBuilder};
use depotflow::tripgen::{candidates_for_placed, generate_trips, Planner, TripGenOptions};
use depotflow::{Candidate, CostWeight, NodeId, OrderId, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn shortest_times_match_bellman_ford() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut b = NetworkBuilder::new(10.0);
    for i in 0..50u64 {
        b.node(i, 0.0, 0.0);
    }
    // A ring keeps the graph strongly connected; chords add shortcuts.
    for i in 0..50u64 {
        b.arc(i, (i + 1) % 50, Some(rng.random_range(5..120) as f64));
    }
    for _ in 0..150 {
        let (a, z) = (rng.random_range(0..50u64), rng.random_range(0..50u64));
        if a != z {
            b.arc(a, z, Some(rng.random_range(5..400) as f64));
        }
    }
    let net = b.build().expect("connected");
    for _ in 0..100 {
        let (a, z) = (NodeId(rng.random_range(0..50)), NodeId(rng.random_range(0..50)));
        assert_eq!(net.time(a, z), bellman_ford(&net, a)[z.index()], "{a:?} -> {z:?}");
    }
}

#[test]
fn k_center_on_a_path_is_optimal() {
    let mut b = NetworkBuilder::new(1.0);
    let gaps = [10.0, 30.0, 20.0, 50.0, 10.0];
    for i in 0..6u64 {
        b.node(i, 0.0, 0.0);
    }
    for (i, &g) in gaps.iter().enumerate() {
        b.arc(i as u64, i as u64 + 1, Some(g));
        b.arc(i as u64 + 1, i as u64, Some(g));
    }
    let net = b.build().unwrap();
    let d = all_pairs(&net);
    let mut best = i64::MAX;
    for a in 0..6 {
        for c in a + 1..6 {
            let r = (0..6).map(|v| d[a][v].min(d[c][v])).max().unwrap();
            best = best.min(r);
        }
    }
    let kc = k_center_depots(&net, 2, 20, 0).unwrap();
    assert_eq!(kc.objective, best);
    assert_eq!(k_center_objective(&net, &kc.depots), best);
}

#[test]
fn ideal_time_uses_the_nearest_of_twenty_depots() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = grid_network(10, 10, 150.0, 10.0).unwrap();
    let mut depots = BTreeSet::new();
    while depots.len() < 20 {
        depots.insert(NodeId(rng.random_range(0..100)));
    }
    let depots: Vec<NodeId> = depots.into_iter().collect();
    let net = grid.with_depots(depots.clone()).unwrap();
    let d = all_pairs(&net);
    let p = Params::default();
    for i in 0..200 {
        let dest = NodeId(rng.random_range(0..100));
        let release = rng.random_range(0..40_000) * 1000;
        let o = Order::new(OrderId(i), i as u64, release, dest);
        let want = depots.iter().map(|k| d[k.index()][dest.index()]).min().unwrap() + release + p.load + p.service;
        assert_eq!(ideal_time(&o, &net, &p).unwrap(), want);
    }
}

fn params(rng: &mut ChaCha8Rng) -> Params {
    let weights = [(0, 1), (1, 3), (1, 2), (1, 1)];
    let (n, dd) = weights[rng.random_range(0..weights.len())];
    Params {
        weight: CostWeight::new(n, dd).unwrap(),
        pre_empty_allowed: rng.random_bool(0.7),
        capacity: rng.random_range(3..=6),
        delay_heuristic: rng.random_range(120..=480) * 1000,
        delay_real: 480_000,
        ..Params::default()
    }
}

#[test]
fn best_trip_sequence_matches_permutation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut feasible = 0;
    for _ in 0..60 {
        let p = params(&mut rng);
        let ms = micro_state(&mut rng, 2, 4, p);
        let planner = Planner::new(&ms.state, &ms.net, &ms.p);
        for v in &ms.state.fleet {
            let depot = ms.net.depots()[rng.random_range(0..2)];
            let room = 6 - v.loaded.len();
            let k = rng.random_range(0..=room.min(4));
            let cands: Vec<Candidate> = ms
                .state
                .placed
                .iter()
                .take(k)
                .map(|&o| Candidate { order: o, depot })
                .collect();
            let start = start_of(v, ms.state.clock);
            let new: Vec<_> = cands.iter().map(|c| ms.view(c.order)).collect();
            let want = sequence_oracle(&ms.d, &ms.p, start, &ms.onboard(v), Some(depot), &new);
            let got = planner.best_trip_sequence(v, &cands).map(|(_, c)| c);
            assert_eq!(got, want, "vehicle {:?} candidates {cands:?}", v.id);
            feasible += got.is_some() as usize;
        }
    }
    assert!(feasible > 30, "only {feasible} feasible instances");
}

#[test]
fn trip_families_match_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut trips = 0;
    for _ in 0..20 {
        let p = Params {
            max_trip_size: rng.random_range(2..=4),
            ..params(&mut rng)
        };
        let placed = rng.random_range(1..=3);
        let ms = micro_state(&mut rng, 3, placed, p);
        let cands = candidates_for_placed(&ms.state, &ms.net, 2);
        let planner = Planner::new(&ms.state, &ms.net, &ms.p);
        let set = generate_trips(&planner, &cands, &TripGenOptions::from_params(&ms.p, 30.0));
        assert!(!set.truncated());
        let want = trip_families_oracle(&ms, &cands, ms.p.max_trip_size);
        assert_eq!(set.families(), want);
        trips += set.len();
    }
    assert!(trips > 20, "only {trips} trips generated");
}

#[test]
fn assignment_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let vehicles = rng.random_range(1..=4);
        let orders = rng.random_range(1..=6);
        let trips = rng.random_range(0..=40);
        let set = random_trip_set(&mut rng, vehicles, orders, trips);
        let placed: Vec<OrderId> = (0..orders).map(OrderId).collect();
        let m = build_model(&set, &placed, 300).unwrap();
        let a = solve(&m, &greedy_warm_start(&m), Duration::from_secs(10));
        assert_eq!(a.proof, Proof::Optimal);
        assert_eq!(a.objective_value, assignment_brute_force(&set, orders as usize, 300));
        assert_eq!(objective_of(&m, &a.chosen), a.objective_value);
        m.check(&a.chosen).unwrap();
    }
}

#[test]
fn warm_start_is_never_better_than_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let set = random_trip_set(&mut rng, 4, 8, 40);
        let placed: Vec<OrderId> = (0..8).map(OrderId).collect();
        let m = build_model(&set, &placed, 300).unwrap();
        let warm = greedy_warm_start(&m);
        m.check(&warm.chosen).unwrap();
        let best = assignment_brute_force(&set, 8, 300);
        assert!(warm.objective_value >= best);
        assert_eq!(solve(&m, &warm, Duration::from_secs(10)).objective_value, best);
    }
}
