//! Candidate construction and anytime trip generation.
//!
//! Trips grow one candidate at a time: a set of size `ℓ` is only sequenced
//! if every subset of size `ℓ-1` was already a feasible trip for the same
//! vehicle. Each vehicle has its own wall-clock budget; on expiry the trips
//! found so far are kept.

pub mod sequence;

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::model::{
    ideal_time_original, latest_dropoff, Candidate, Cost, Order, OrderId, Params, RoutePlan, SimState, Trip, Vehicle,
    VehicleId,
};
use crate::network::{Network, NodeId};
use crate::time::Millis;
pub use sequence::{
    best_sequence, evaluate, evaluate_plan, to_route_plan, Evaluated, RouteOrder, RouteStart, SearchOptions, Sequenced,
    Step,
};

/// The `x` depots closest to the order's destination (by travel time from
/// depot to destination), ties to the lower depot id.
pub fn candidates_for_order(order: &Order, net: &Network, x: usize) -> Vec<Candidate> {
    net.depots_by_time_to(order.destination)
        .iter()
        .take(x)
        .map(|&(_, depot)| Candidate { order: order.id, depot })
        .collect()
}

/// Candidates for every placed order, sorted by (order, depot).
pub fn candidates_for_placed(state: &SimState, net: &Network, x: usize) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = state
        .placed
        .iter()
        .flat_map(|&o| candidates_for_order(state.order(o), net, x))
        .collect();
    out.sort();
    out
}

/// Routing view of an order: ideal time from the original release, latest
/// drop-off from the effective release.
pub fn route_order(order: &Order, net: &Network, p: &Params) -> RouteOrder {
    RouteOrder {
        id: order.id,
        destination: order.destination,
        ideal: ideal_time_original(order, net, p).expect("destinations are reachable from a depot"),
        latest: latest_dropoff(order, net, p).expect("destinations are reachable from a depot"),
    }
}

/// Read-only planning context for one decision epoch.
pub struct Planner<'a> {
    pub net: &'a Network,
    pub p: &'a Params,
    pub state: &'a SimState,
    pub opts: SearchOptions,
}

impl<'a> Planner<'a> {
    pub fn new(state: &'a SimState, net: &'a Network, p: &'a Params) -> Self {
        Self {
            net,
            p,
            state,
            opts: SearchOptions::default(),
        }
    }

    pub fn route_order(&self, id: OrderId) -> RouteOrder {
        route_order(self.state.order(id), self.net, self.p)
    }

    /// Start point and on-board orders of a vehicle.
    pub fn vehicle_view(&self, v: &Vehicle) -> (RouteStart, Vec<RouteOrder>) {
        let start = RouteStart::of(v, self.state.clock);
        let onboard = v
            .onboard_for_planning()
            .into_iter()
            .map(|o| self.route_order(o))
            .collect();
        (start, onboard)
    }

    fn sequence(&self, start: RouteStart, onboard: &[RouteOrder], cands: &[Candidate]) -> Option<Sequenced> {
        let depot = cands.first().map(|c| c.depot);
        let new: Vec<RouteOrder> = cands.iter().map(|c| self.route_order(c.order)).collect();
        best_sequence(self.net, self.p, start, onboard, depot, &new, self.opts)
    }

    /// Cheapest route for `v` delivering its load and picking up `cands`
    /// (all at one depot). `None` when no sequence is feasible.
    pub fn best_trip_sequence(&self, v: &Vehicle, cands: &[Candidate]) -> Option<(RoutePlan, Cost)> {
        debug_assert!(cands.windows(2).all(|w| w[0].depot == w[1].depot));
        let (start, onboard) = self.vehicle_view(v);
        let seq = self.sequence(start, &onboard, cands)?;
        let table: Vec<RouteOrder> = onboard
            .iter()
            .copied()
            .chain(cands.iter().map(|c| self.route_order(c.order)))
            .collect();
        let plan = to_route_plan(&table, &seq.steps, &seq.eval);
        Some((plan, seq.eval.cost))
    }

    /// Whether `v` can serve `c` on top of its current load.
    pub fn candidate_vehicle_feasible(&self, v: &Vehicle, c: &Candidate) -> bool {
        self.best_trip_sequence(v, std::slice::from_ref(c)).is_some()
    }

    /// Whether two candidates can share a trip: same depot, different
    /// orders, and an empty vehicle waiting at that depot now can deliver
    /// both in time in some order.
    pub fn two_candidates_feasible(&self, a: &Candidate, b: &Candidate) -> bool {
        if a.depot != b.depot || a.order == b.order {
            return false;
        }
        let start = RouteStart::at(a.depot, self.state.clock);
        self.sequence(start, &[], &[*a, *b]).is_some()
    }

    /// Plan (and its cost) that only delivers the current load.
    pub fn baseline(&self, v: &Vehicle) -> Option<(RoutePlan, Cost)> {
        self.best_trip_sequence(v, &[])
    }
}

/// Trips of one vehicle, bucketed by size.
#[derive(Debug, Clone)]
pub struct VehicleTrips {
    pub vehicle: VehicleId,
    /// `by_size[ℓ - 1]` holds the trips with `ℓ` candidates.
    pub by_size: Vec<Vec<Trip>>,
    /// Route delivering only the current load, and its cost.
    pub baseline: Option<(RoutePlan, Cost)>,
    pub truncated: bool,
    pub elapsed: Duration,
    /// Number of sequencing calls.
    pub evaluations: u64,
}

impl VehicleTrips {
    pub fn trips(&self) -> impl Iterator<Item = &Trip> {
        self.by_size.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_size.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All feasible trips of one decision epoch.
#[derive(Debug, Clone, Default)]
pub struct TripSet {
    pub vehicles: Vec<VehicleTrips>,
}

impl TripSet {
    pub fn trips(&self) -> impl Iterator<Item = &Trip> {
        self.vehicles.iter().flat_map(|v| v.trips())
    }

    pub fn len(&self) -> usize {
        self.vehicles.iter().map(VehicleTrips::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn truncated(&self) -> bool {
        self.vehicles.iter().any(|v| v.truncated)
    }

    /// Candidate sets per vehicle, for comparisons against oracles.
    pub fn families(&self) -> Vec<(VehicleId, Vec<Vec<Candidate>>)> {
        self.vehicles
            .iter()
            .map(|v| {
                let mut sets: Vec<Vec<Candidate>> = v.trips().map(|t| t.candidates.clone()).collect();
                sets.sort();
                (v.vehicle, sets)
            })
            .collect()
    }
}

/// Settings for [`generate_trips`].
#[derive(Debug, Clone, Copy)]
pub struct TripGenOptions {
    pub max_trip_size: usize,
    /// Per-vehicle wall-clock budget.
    pub budget: Duration,
    pub search: SearchOptions,
}

impl TripGenOptions {
    pub fn from_params(p: &Params, budget_secs: f64) -> Self {
        Self {
            max_trip_size: p.max_trip_size,
            budget: Duration::from_secs_f64(budget_secs),
            search: SearchOptions::default(),
        }
    }
}

/// Pairwise combinability of candidates, computed once per epoch and shared
/// by all vehicles (the check does not depend on the vehicle).
fn pair_table(planner: &Planner<'_>, cands: &[Candidate]) -> HashSet<(u32, u32)> {
    let mut by_depot: HashMap<NodeId, Vec<u32>> = HashMap::new();
    for (i, c) in cands.iter().enumerate() {
        by_depot.entry(c.depot).or_default().push(i as u32);
    }
    let mut groups: Vec<Vec<u32>> = by_depot.into_values().collect();
    groups.sort();
    groups
        .par_iter()
        .flat_map_iter(|group| {
            let mut ok = Vec::new();
            for (k, &i) in group.iter().enumerate() {
                for &j in &group[k + 1..] {
                    if planner.two_candidates_feasible(&cands[i as usize], &cands[j as usize]) {
                        ok.push((i.min(j), i.max(j)));
                    }
                }
            }
            ok
        })
        .collect()
}

fn generate_for_vehicle(
    planner: &Planner<'_>,
    v: &Vehicle,
    cands: &[Candidate],
    pairs: &HashSet<(u32, u32)>,
    opts: &TripGenOptions,
) -> VehicleTrips {
    let began = Instant::now();
    let deadline = began + opts.budget;
    let (start, onboard) = planner.vehicle_view(v);
    let baseline = planner.baseline(v);
    let mut out = VehicleTrips {
        vehicle: v.id,
        by_size: Vec::new(),
        baseline: baseline.clone(),
        truncated: false,
        elapsed: Duration::ZERO,
        evaluations: 0,
    };
    let Some((_, base_cost)) = baseline else {
        out.elapsed = began.elapsed();
        return out;
    };

    let make_trip = |idx: &[u32], evaluations: &mut u64| -> Option<Trip> {
        *evaluations += 1;
        let set: Vec<Candidate> = idx.iter().map(|&i| cands[i as usize]).collect();
        let seq = planner.sequence(start, &onboard, &set)?;
        let table: Vec<RouteOrder> = onboard
            .iter()
            .copied()
            .chain(set.iter().map(|c| planner.route_order(c.order)))
            .collect();
        Some(Trip {
            vehicle: v.id,
            route: to_route_plan(&table, &seq.steps, &seq.eval),
            cost: seq.eval.cost,
            relative_cost: seq.eval.cost - base_cost,
            candidates: set,
        })
    };

    // Each level keeps (sorted candidate indices, trip).
    let mut level: Vec<(Vec<u32>, Trip)> = Vec::new();
    'size1: for i in 0..cands.len() as u32 {
        if Instant::now() > deadline {
            out.truncated = true;
            break 'size1;
        }
        if let Some(t) = make_trip(&[i], &mut out.evaluations) {
            level.push((vec![i], t));
        }
    }
    let mut size = 1;
    while !level.is_empty() && !out.truncated && size < opts.max_trip_size {
        size += 1;
        let present: HashSet<&[u32]> = level.iter().map(|(k, _)| k.as_slice()).collect();
        let mut next: Vec<(Vec<u32>, Trip)> = Vec::new();
        'join: for a in 0..level.len() {
            let ka = &level[a].0;
            for (kb, _) in &level[a + 1..] {
                // Keys are sorted, so joinable partners are contiguous.
                if ka[..size - 2] != kb[..size - 2] {
                    break;
                }
                let (x, y) = (ka[size - 2], kb[size - 2]);
                let mut union = ka.clone();
                union.push(y);
                let admissible = if size == 2 {
                    pairs.contains(&(x.min(y), x.max(y)))
                } else {
                    (0..size - 2).all(|skip| {
                        let sub: Vec<u32> = union
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != skip)
                            .map(|(_, &c)| c)
                            .collect();
                        present.contains(sub.as_slice())
                    })
                };
                if !admissible {
                    continue;
                }
                if Instant::now() > deadline {
                    out.truncated = true;
                    break 'join;
                }
                if let Some(t) = make_trip(&union, &mut out.evaluations) {
                    next.push((union, t));
                }
            }
        }
        out.by_size
            .push(std::mem::take(&mut level).into_iter().map(|(_, t)| t).collect());
        level = next;
    }
    if !level.is_empty() {
        out.by_size.push(level.into_iter().map(|(_, t)| t).collect());
    }
    out.elapsed = began.elapsed();
    out
}

/// Generates all feasible trips (up to `max_trip_size` candidates) for
/// every vehicle. Vehicles are processed in parallel on a read-only view;
/// output order is by vehicle id and does not depend on the worker count.
pub fn generate_trips(planner: &Planner<'_>, cands: &[Candidate], opts: &TripGenOptions) -> TripSet {
    debug_assert!(cands.windows(2).all(|w| w[0] < w[1]), "candidates sorted and unique");
    if cands.is_empty() {
        return TripSet {
            vehicles: planner
                .state
                .fleet
                .iter()
                .map(|v| VehicleTrips {
                    vehicle: v.id,
                    by_size: Vec::new(),
                    baseline: planner.baseline(v),
                    truncated: false,
                    elapsed: Duration::ZERO,
                    evaluations: 0,
                })
                .collect(),
        };
    }
    let pairs = pair_table(planner, cands);
    let vehicles = planner
        .state
        .fleet
        .par_iter()
        .map(|v| generate_for_vehicle(planner, v, cands, &pairs, opts))
        .collect();
    TripSet { vehicles }
}

/// Lower bound on the drop-off time of `order` over all vehicles and the
/// given candidate depots, from free-flow travel times.
pub fn earliest_dropoff(planner: &Planner<'_>, order: &Order, depots: &[NodeId]) -> Millis {
    let p = planner.p;
    planner
        .state
        .fleet
        .iter()
        .flat_map(|v| {
            let start = RouteStart::of(v, planner.state.clock);
            depots.iter().map(move |&d| {
                start.time
                    + planner.net.time(start.node, d)
                    + p.load
                    + planner.net.time(d, order.destination)
                    + p.service
            })
        })
        .min()
        .unwrap_or(Millis::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Order, OrderStatus, ScenarioConfig, Vehicle};
    use crate::network::grid_network;

    fn setup(placed: &[(u32, Millis)], vehicles: &[u32]) -> (Network, SimState) {
        let net = grid_network(1, 9, 1000.0, 10.0)
            .unwrap()
            .with_depots(vec![NodeId(2), NodeId(6)])
            .unwrap();
        let orders: Vec<Order> = placed
            .iter()
            .enumerate()
            .map(|(i, &(dest, t))| Order::new(OrderId(i as u32), i as u64, t, NodeId(dest)))
            .collect();
        let fleet = vehicles
            .iter()
            .enumerate()
            .map(|(i, &n)| Vehicle::new(VehicleId(i as u32), NodeId(n)))
            .collect();
        let mut s = SimState::new(orders, fleet);
        s.release_until(Millis::MAX);
        (net, s)
    }

    #[test]
    fn nearest_depots_sorted_and_truncated() {
        let net = grid_network(1, 9, 1000.0, 10.0)
            .unwrap()
            .with_depots(vec![NodeId(0), NodeId(3), NodeId(5), NodeId(8)])
            .unwrap();
        let o = Order::new(OrderId(0), 0, 0, NodeId(4));
        let c = candidates_for_order(&o, &net, 3);
        // Nodes 3 and 5 are both 100 s away; the lower id wins.
        assert_eq!(
            c.iter().map(|c| c.depot).collect::<Vec<_>>(),
            vec![NodeId(3), NodeId(5), NodeId(0)]
        );
        assert_eq!(candidates_for_order(&o, &net, 1).len(), 1);
        assert_eq!(candidates_for_order(&o, &net, 4).len(), 4);
        assert_eq!(candidates_for_order(&o, &net, 10).len(), 4);
    }

    #[test]
    fn candidate_vehicle_checks() {
        let (net, s) = setup(&[(3, 0)], &[2, 8]);
        let p = ScenarioConfig::default().params();
        let planner = Planner::new(&s, &net, &p);
        let c = Candidate {
            order: OrderId(0),
            depot: NodeId(2),
        };
        assert!(planner.candidate_vehicle_feasible(&s.fleet[0], &c));
        // Vehicle at node 8 needs 600 s to reach depot 2: beyond 480 s slack.
        assert!(!planner.candidate_vehicle_feasible(&s.fleet[1], &c));
    }

    #[test]
    fn two_candidate_rules() {
        let (net, s) = setup(&[(3, 0), (1, 0), (7, 0)], &[2]);
        let p = ScenarioConfig::default().params();
        let planner = Planner::new(&s, &net, &p);
        let a = Candidate {
            order: OrderId(0),
            depot: NodeId(2),
        };
        let a6 = Candidate {
            order: OrderId(0),
            depot: NodeId(6),
        };
        let b = Candidate {
            order: OrderId(1),
            depot: NodeId(2),
        };
        let c6 = Candidate {
            order: OrderId(2),
            depot: NodeId(6),
        };
        assert!(!planner.two_candidates_feasible(&a, &a6));
        assert!(!planner.two_candidates_feasible(&a, &c6));
        assert!(planner.two_candidates_feasible(&a, &b));
    }

    #[test]
    fn powerset_of_three_combinable_candidates() {
        let (net, s) = setup(&[(3, 0), (1, 0), (2, 0)], &[2]);
        let p = Params {
            depots_per_order: 1,
            max_trip_size: 3,
            ..ScenarioConfig::default().params()
        };
        let planner = Planner::new(&s, &net, &p);
        let cands = candidates_for_placed(&s, &net, 1);
        assert!(cands.iter().all(|c| c.depot == NodeId(2)));
        let opts = TripGenOptions {
            max_trip_size: 3,
            budget: Duration::from_secs(60),
            search: SearchOptions::default(),
        };
        let trips = generate_trips(&planner, &cands, &opts);
        let sizes: Vec<usize> = trips.vehicles[0].by_size.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        assert!(!trips.truncated());
    }

    #[test]
    fn no_orders_no_trips() {
        let (net, s) = setup(&[], &[2, 3]);
        let p = ScenarioConfig::default().params();
        let planner = Planner::new(&s, &net, &p);
        let trips = generate_trips(&planner, &[], &TripGenOptions::from_params(&p, 10.0));
        assert_eq!(trips.vehicles.len(), 2);
        assert!(trips.is_empty());
    }

    #[test]
    fn zero_budget_truncates() {
        let (net, s) = setup(&[(3, 0), (1, 0)], &[2]);
        let p = ScenarioConfig::default().params();
        let planner = Planner::new(&s, &net, &p);
        let cands = candidates_for_placed(&s, &net, 2);
        let opts = TripGenOptions {
            max_trip_size: 3,
            budget: Duration::ZERO,
            search: SearchOptions::default(),
        };
        std::thread::sleep(Duration::from_millis(1));
        let trips = generate_trips(&planner, &cands, &opts);
        assert!(trips.truncated());
    }

    #[test]
    fn relative_cost_subtracts_baseline() {
        let (net, mut s) = setup(&[(0, 0), (3, 0)], &[2]);
        // Load order 0 on the vehicle.
        s.set_status(OrderId(0), OrderStatus::Loaded(VehicleId(0))).unwrap();
        s.fleet[0].loaded.push(OrderId(0));
        let p = ScenarioConfig::default().params();
        let planner = Planner::new(&s, &net, &p);
        let (_, base) = planner.baseline(&s.fleet[0]).unwrap();
        let cands = candidates_for_placed(&s, &net, 1);
        let trips = generate_trips(&planner, &cands, &TripGenOptions::from_params(&p, 10.0));
        let t = trips.trips().next().unwrap();
        assert_eq!(t.relative_cost, t.cost - base);
        assert_eq!(t.route.deliveries().count(), 2);
    }
}
