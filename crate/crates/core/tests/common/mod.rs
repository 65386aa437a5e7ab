//! Independent oracles and scenario helpers shared by the integration tests
//! and the acceptance suite. Nothing here calls the routing, assignment or
//! reporting code it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use depotflow::assign::AssignmentModel;
use depotflow::engine::{Event, EventKind, EventLog};
use depotflow::model::{Cost, CostWeight, Position, Trip};
use depotflow::network::NetworkBuilder;
use depotflow::scenario::RunConfig;
use depotflow::tripgen::{RouteOrder, RouteStart, TripSet, VehicleTrips};
use depotflow::{Candidate, Millis, Network, NodeId, OrderId, OrderStatus, Params, SimState, Vehicle, VehicleId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const INF: Millis = Millis::MAX / 4;

/// Path of a scenario file shipped with the repository.
pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// The desk scenario with `overrides` applied.
pub fn desk(overrides: &[(&str, String)]) -> RunConfig {
    let o: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    RunConfig::load(&scenario_path("desk.toml"), &o).expect("desk scenario loads")
}

/// Single-source shortest times by Bellman-Ford relaxation over all arcs.
pub fn bellman_ford(net: &Network, src: NodeId) -> Vec<Millis> {
    let n = net.node_count();
    let arcs: Vec<(usize, usize, Millis)> = net
        .nodes()
        .flat_map(|a| net.out_arcs(a).map(move |(b, w)| (a.index(), b.index(), w)))
        .collect();
    let mut d = vec![INF; n];
    d[src.index()] = 0;
    for _ in 0..n {
        let mut changed = false;
        for &(a, b, w) in &arcs {
            if d[a] < INF && d[a] + w < d[b] {
                d[b] = d[a] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

/// All-pairs table from Bellman-Ford.
pub fn all_pairs(net: &Network) -> Vec<Vec<Millis>> {
    net.nodes().map(|s| bellman_ford(net, s)).collect()
}

/// Grid of `rows x cols` with independent random weights per arc
/// direction, in whole seconds within `lo..=hi`.
pub fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: i64, hi: i64) -> NetworkBuilder {
    let mut b = NetworkBuilder::new(10.0);
    let id = |r: usize, c: usize| (r * cols + c) as u64;
    for r in 0..rows {
        for c in 0..cols {
            b.node(id(r, c), c as f64, r as f64);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            let mut link = |a: u64, z: u64, rng: &mut ChaCha8Rng| {
                b.arc(a, z, Some(rng.random_range(lo..=hi) as f64));
                b.arc(z, a, Some(rng.random_range(lo..=hi) as f64));
            };
            if c + 1 < cols {
                link(id(r, c), id(r, c + 1), rng);
            }
            if r + 1 < rows {
                link(id(r, c), id(r + 1, c), rng);
            }
        }
    }
    b
}

/// Earliest possible delivery time of an order released at `release`.
pub fn ideal(d: &[Vec<Millis>], depots: &[NodeId], p: &Params, release: Millis, dest: NodeId) -> Millis {
    let tau = depots
        .iter()
        .map(|&k| d[k.index()][dest.index()])
        .min()
        .expect("depots");
    release + p.load + tau + p.service
}

/// Routing view of an order computed from first principles.
pub fn route_view(
    d: &[Vec<Millis>],
    depots: &[NodeId],
    p: &Params,
    id: OrderId,
    release: Millis,
    effective: Millis,
    dest: NodeId,
) -> RouteOrder {
    let orig = ideal(d, depots, p, release, dest);
    let eff = ideal(d, depots, p, effective, dest);
    RouteOrder {
        id,
        destination: dest,
        ideal: orig,
        latest: (eff + p.delay_heuristic).min(orig + p.delay_real),
    }
}

/// Weighted cost `(1 - beta) * delay + beta * drive`, scaled by the
/// denominator of beta.
pub fn weighted(w: CostWeight, delay: Millis, drive: Millis) -> Cost {
    (w.denominator() - w.numerator()) * delay + w.numerator() * drive
}

/// Token of an enumerated route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tok {
    Pick,
    Drop(usize),
}

/// Times one token sequence. `table` lists on-board orders first, then the
/// new ones; `new_count` of them are new.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    d: &[Vec<Millis>],
    p: &Params,
    start: RouteStart,
    table: &[RouteOrder],
    new_count: usize,
    depot: NodeId,
    seq: &[Tok],
) -> Option<Cost> {
    let onboard = table.len() - new_count;
    let (mut node, mut t, mut drive, mut load, mut delay) = (start.node, start.time, start.lead_drive, onboard, 0);
    for (k, tok) in seq.iter().enumerate() {
        match *tok {
            Tok::Pick => {
                let continuation = k == 0 && depot == start.node && load == start.fresh_load;
                if !p.pre_empty_allowed && load > 0 && !continuation {
                    return None;
                }
                load += new_count;
                if load > p.capacity {
                    return None;
                }
                let leg = d[node.index()][depot.index()];
                t += leg + p.load * new_count as Millis;
                drive += leg;
                node = depot;
            }
            Tok::Drop(i) => {
                let o = &table[i];
                let leg = d[node.index()][o.destination.index()];
                t += leg + p.service;
                drive += leg;
                if t > o.latest {
                    return None;
                }
                delay += t - o.ideal;
                load -= 1;
                node = o.destination;
            }
        }
    }
    Some(weighted(p.weight, delay, drive))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, n - 1);
            out.push(v);
        }
    }
    out
}

/// Cheapest feasible route by enumerating every delivery permutation and
/// every position of the single depot stop ahead of the new deliveries.
pub fn sequence_oracle(
    d: &[Vec<Millis>],
    p: &Params,
    start: RouteStart,
    onboard: &[RouteOrder],
    depot: Option<NodeId>,
    new: &[RouteOrder],
) -> Option<Cost> {
    let table: Vec<RouteOrder> = onboard.iter().chain(new).copied().collect();
    let n = table.len();
    let mut best: Option<Cost> = None;
    for perm in permutations(n) {
        let mut seqs = Vec::new();
        if new.is_empty() {
            seqs.push(perm.iter().map(|&i| Tok::Drop(i)).collect::<Vec<_>>());
        } else {
            let first_new = perm.iter().position(|&i| i >= onboard.len()).expect("new orders");
            for k in 0..=first_new {
                let mut s: Vec<Tok> = perm.iter().map(|&i| Tok::Drop(i)).collect();
                s.insert(k, Tok::Pick);
                seqs.push(s);
            }
        }
        for s in seqs {
            let depot = depot.unwrap_or(start.node);
            if let Some(c) = simulate(d, p, start, &table, new.len(), depot, &s) {
                best = Some(best.map_or(c, |b: Cost| b.min(c)));
            }
        }
    }
    best
}

/// Planning origin of a vehicle that is not in the middle of an action.
pub fn start_of(v: &Vehicle, clock: Millis) -> RouteStart {
    assert!(v.busy.is_none());
    match v.position {
        Position::At(node) => RouteStart {
            node,
            time: clock,
            lead_drive: 0,
            fresh_load: v.fresh_load,
        },
        Position::EnRoute { to, remaining, .. } => RouteStart {
            node: to,
            time: clock + remaining,
            lead_drive: remaining,
            fresh_load: 0,
        },
    }
}

/// A random small state: `vehicles` vehicles, some driving, some carrying
/// orders, and `placed` open orders at `clock`.
pub struct MicroState {
    pub net: Network,
    pub d: Vec<Vec<Millis>>,
    pub p: Params,
    pub state: SimState,
}

impl MicroState {
    pub fn view(&self, id: OrderId) -> RouteOrder {
        let o = self.state.order(id);
        route_view(
            &self.d,
            self.net.depots(),
            &self.p,
            id,
            o.release,
            o.effective_release,
            o.destination,
        )
    }

    pub fn onboard(&self, v: &Vehicle) -> Vec<RouteOrder> {
        v.loaded.iter().map(|&o| self.view(o)).collect()
    }
}

pub fn micro_state(rng: &mut ChaCha8Rng, vehicles: usize, placed: usize, p: Params) -> MicroState {
    use depotflow::model::Order;
    let b = random_grid(rng, 4, 4, 20, 90);
    let graph = b.build().expect("grid");
    let mut depots: Vec<NodeId> = Vec::new();
    while depots.len() < 2 {
        let n = NodeId(rng.random_range(0..16));
        if !depots.contains(&n) {
            depots.push(n);
        }
    }
    let net = graph.with_depots(depots).expect("depots");
    let d = all_pairs(&net);
    let clock: Millis = 100_000;
    let mut orders = Vec::new();
    // Loaded orders first (released earlier), then placed ones.
    let loaded_per: Vec<usize> = (0..vehicles).map(|_| rng.random_range(0..=2)).collect();
    let total_loaded: usize = loaded_per.iter().sum();
    for i in 0..total_loaded + placed {
        let release = if i < total_loaded {
            rng.random_range(0..=40) * 1000
        } else {
            rng.random_range(41..=100) * 1000
        };
        orders.push((release, NodeId(rng.random_range(0..16))));
    }
    orders.sort();
    // Earliest releases are the loaded ones.
    let demand: Vec<Order> = orders
        .iter()
        .enumerate()
        .map(|(i, &(t, dest))| Order::new(OrderId(i as u32), i as u64, t, dest))
        .collect();
    let fleet: Vec<Vehicle> = (0..vehicles)
        .map(|i| {
            let mut v = Vehicle::new(VehicleId(i as u32), NodeId(rng.random_range(0..16)));
            if rng.random_bool(0.3) {
                let Position::At(from) = v.position else { unreachable!() };
                let (to, w) = net.out_arcs(from).next().expect("arc");
                v.position = Position::EnRoute {
                    from,
                    to,
                    remaining: rng.random_range(1..=w / 1000) * 1000,
                };
            }
            v
        })
        .collect();
    let mut state = SimState::new(demand, fleet);
    state.clock = clock;
    state.release_until(clock);
    let mut next = 0u32;
    for (vi, &k) in loaded_per.iter().enumerate() {
        for _ in 0..k {
            let o = OrderId(next);
            next += 1;
            state
                .set_status(o, OrderStatus::Loaded(VehicleId(vi as u32)))
                .expect("placed -> loaded");
            state.orders[o.index()].pickup_time = Some(0);
            state.fleet[vi].loaded.push(o);
        }
    }
    MicroState { net, d, p, state }
}

/// Feasible candidate sets per vehicle by plain subset enumeration: same
/// depot, distinct orders, at most `eta` members, and a feasible route.
pub fn trip_families_oracle(ms: &MicroState, cands: &[Candidate], eta: usize) -> Vec<(VehicleId, Vec<Vec<Candidate>>)> {
    let mut out = Vec::new();
    for v in &ms.state.fleet {
        let start = start_of(v, ms.state.clock);
        let onboard = ms.onboard(v);
        let mut sets = Vec::new();
        for mask in 1u32..(1 << cands.len()) {
            let set: Vec<Candidate> = (0..cands.len())
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| cands[i])
                .collect();
            if set.len() > eta {
                continue;
            }
            let depot = set[0].depot;
            let orders: BTreeSet<OrderId> = set.iter().map(|c| c.order).collect();
            if set.iter().any(|c| c.depot != depot) || orders.len() != set.len() {
                continue;
            }
            let new: Vec<RouteOrder> = set.iter().map(|c| ms.view(c.order)).collect();
            if sequence_oracle(&ms.d, &ms.p, start, &onboard, Some(depot), &new).is_some() {
                sets.push(set);
            }
        }
        sets.sort();
        out.push((v.id, sets));
    }
    out
}

/// A random assignment instance given as `(vehicle, orders, relative cost)`
/// triples.
pub fn random_trip_set(rng: &mut ChaCha8Rng, vehicles: u32, orders: u32, trips: usize) -> TripSet {
    let mut per: BTreeMap<u32, Vec<Trip>> = (0..vehicles).map(|v| (v, Vec::new())).collect();
    for _ in 0..trips {
        let v = rng.random_range(0..vehicles);
        let size = rng.random_range(1..=orders.min(4));
        let mut os: Vec<u32> = (0..orders).collect();
        for i in 0..size as usize {
            let j = rng.random_range(i..os.len());
            os.swap(i, j);
        }
        let mut os = os[..size as usize].to_vec();
        os.sort();
        let rel: Cost = rng.random_range(-50..400);
        per.get_mut(&v).expect("vehicle").push(Trip {
            vehicle: VehicleId(v),
            candidates: os
                .iter()
                .map(|&o| Candidate {
                    order: OrderId(o),
                    depot: NodeId(0),
                })
                .collect(),
            route: Default::default(),
            cost: rel.abs(),
            relative_cost: rel,
        });
    }
    TripSet {
        vehicles: per
            .into_iter()
            .map(|(v, ts)| {
                let mut by_size = vec![Vec::new(); 4];
                for t in ts {
                    by_size[t.candidates.len() - 1].push(t);
                }
                VehicleTrips {
                    vehicle: VehicleId(v),
                    by_size,
                    baseline: None,
                    truncated: false,
                    elapsed: Duration::ZERO,
                    evaluations: 0,
                }
            })
            .collect(),
    }
}

/// Exhaustive optimum over every map from vehicles to one of their trips
/// or nothing, with disjoint orders.
pub fn assignment_brute_force(set: &TripSet, orders: usize, penalty: Cost) -> Cost {
    let per: Vec<Vec<(BTreeSet<OrderId>, Cost)>> = set
        .vehicles
        .iter()
        .map(|v| v.trips().map(|t| (t.orders().collect(), t.relative_cost)).collect())
        .collect();
    fn rec(
        per: &[Vec<(BTreeSet<OrderId>, Cost)>],
        v: usize,
        used: &mut BTreeSet<OrderId>,
        acc: Cost,
        penalty: Cost,
        n: usize,
        best: &mut Cost,
    ) {
        if v == per.len() {
            *best = (*best).min(acc + penalty * (n - used.len()) as Cost);
            return;
        }
        rec(per, v + 1, used, acc, penalty, n, best);
        for (os, c) in &per[v] {
            if os.iter().any(|o| used.contains(o)) {
                continue;
            }
            used.extend(os.iter().copied());
            rec(per, v + 1, used, acc + c, penalty, n, best);
            for o in os {
                used.remove(o);
            }
        }
    }
    let mut best = Cost::MAX;
    rec(&per, 0, &mut BTreeSet::new(), 0, penalty, orders, &mut best);
    best
}

/// Objective of a set of chosen trips recomputed from the model's trips.
pub fn objective_of(m: &AssignmentModel, chosen: &[usize]) -> Cost {
    let covered: BTreeSet<OrderId> = chosen.iter().flat_map(|&j| m.trips[j].orders()).collect();
    chosen.iter().map(|&j| m.trips[j].relative_cost).sum::<Cost>()
        + m.penalty * (m.orders.len() - covered.len()) as Cost
}

/// Facts about a log gathered by [`check_log`].
#[derive(Debug, Default)]
pub struct LogFacts {
    /// Delay in ms of each delivered order.
    pub delays: BTreeMap<OrderId, Millis>,
    pub reinsertions: BTreeMap<OrderId, u32>,
    pub ignored: BTreeSet<OrderId>,
    /// Sum of traversed arc times, ms.
    pub drive: Millis,
    pub pickups: usize,
}

/// Rules the log must satisfy.
pub struct LogRules {
    pub capacity: usize,
    pub pre_empty_allowed: bool,
    pub x: usize,
}

/// Walks a log and checks capacity, the depot-return rule, nearest-depot
/// pickups for `x = 1`, deadlines and terminal resolution.
pub fn check_log(
    log: &EventLog,
    demand: &[depotflow::model::Order],
    net: &Network,
    d: &[Vec<Millis>],
    p: &Params,
    fleet: usize,
    rules: &LogRules,
) -> Result<LogFacts, String> {
    #[derive(Clone, Copy, PartialEq)]
    enum S {
        New,
        Open,
        On(u32),
        Done,
        Gone,
    }
    let mut st = vec![S::New; demand.len()];
    let mut eff: Vec<Millis> = demand.iter().map(|o| o.release).collect();
    let mut onboard = vec![0usize; fleet];
    let mut stop = vec![0usize; fleet];
    let mut facts = LogFacts::default();
    let depots = net.depots();
    for (i, e) in log.events.iter().enumerate() {
        let Event {
            time,
            kind,
            order,
            vehicle,
            node,
            from,
        } = *e;
        let bad = |m: String| format!("event {i} at {time} ms ({kind:?}): {m}");
        let o = order.map(|o| o.index());
        let v = vehicle.map(|v| v.index());
        match kind {
            EventKind::Placed => {
                let o = o.ok_or_else(|| bad("no order".into()))?;
                if st[o] != S::New {
                    return Err(bad("placed twice".into()));
                }
                st[o] = S::Open;
            }
            EventKind::Reinserted => {
                let o = o.ok_or_else(|| bad("no order".into()))?;
                if st[o] != S::Open {
                    return Err(bad("reinserting an order that is not open".into()));
                }
                eff[o] = time;
                *facts.reinsertions.entry(OrderId(o as u32)).or_default() += 1;
            }
            EventKind::Ignored => {
                let o = o.ok_or_else(|| bad("no order".into()))?;
                if st[o] != S::Open {
                    return Err(bad("ignoring an order that is not open".into()));
                }
                st[o] = S::Gone;
                facts.ignored.insert(OrderId(o as u32));
            }
            EventKind::Pickup => {
                let (o, v, n) = (o.unwrap(), v.unwrap(), node.unwrap());
                if st[o] != S::Open {
                    return Err(bad("pickup of an order that is not open".into()));
                }
                if !rules.pre_empty_allowed && onboard[v] > stop[v] {
                    return Err(bad(format!(
                        "vehicle {v} returned to a depot with {} on board",
                        onboard[v] - stop[v]
                    )));
                }
                if rules.x == 1 {
                    let dest = demand[o].destination.index();
                    let best = depots.iter().map(|k| d[k.index()][dest]).min().unwrap();
                    if d[n.index()][dest] != best {
                        return Err(bad("pickup at a depot other than the nearest".into()));
                    }
                }
                onboard[v] += 1;
                stop[v] += 1;
                if onboard[v] > rules.capacity {
                    return Err(bad(format!("vehicle {v} carries {}", onboard[v])));
                }
                st[o] = S::On(v as u32);
                facts.pickups += 1;
            }
            EventKind::Dropoff => {
                let (o, v) = (o.unwrap(), v.unwrap());
                if st[o] != S::On(v as u32) {
                    return Err(bad("drop-off of an order not on this vehicle".into()));
                }
                let dest = demand[o].destination;
                let orig = ideal(d, depots, p, demand[o].release, dest);
                let latest = (ideal(d, depots, p, eff[o], dest) + p.delay_heuristic).min(orig + p.delay_real);
                if time > latest {
                    return Err(bad(format!("deadline {latest} missed")));
                }
                facts.delays.insert(OrderId(o as u32), time - orig);
                onboard[v] -= 1;
                stop[v] = 0;
                st[o] = S::Done;
            }
            EventKind::Drive | EventKind::DriveIdle => {
                let (v, a, b) = (v.unwrap(), from.unwrap(), node.unwrap());
                facts.drive += net.arc_time(a, b).ok_or_else(|| bad("not an arc".into()))?;
                stop[v] = 0;
            }
            EventKind::Epoch | EventKind::IdleReturn => {}
        }
    }
    if let Some(o) = st.iter().position(|s| !matches!(s, S::Done | S::Gone)) {
        return Err(format!("order {o} unresolved at the end of the log"));
    }
    Ok(facts)
}

/// Day objective in seconds recomputed from the log: weighted delays of
/// delivered orders and driving time, plus the penalty per ignored order.
pub fn objective_from_log(facts: &LogFacts, p: &Params) -> f64 {
    let delay: Millis = facts.delays.values().sum();
    let scaled = weighted(p.weight, delay, facts.drive) + p.penalty * facts.ignored.len() as Cost;
    scaled as f64 / p.weight.denominator() as f64 / 1000.0
}
