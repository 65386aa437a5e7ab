//! Event-driven greedy insertion baseline.
//!
//! Each order is inserted, when it is released, into the vehicle plan where
//! it adds the least cost. Earlier commitments are never revisited; an order
//! without a feasible insertion is ignored at once.

use crate::engine::{DayRun, EngineError, Event, EventKind, Simulator};
use crate::model::{Cost, Order, OrderId, OrderStatus, Params, RoutePlan, ScenarioConfig, SimState, VehicleId};
use crate::network::{Network, NodeId};
use crate::time::Millis;
use crate::tripgen::{candidates_for_order, evaluate, evaluate_plan, route_order, to_route_plan, RouteStart, Step};

/// Cheapest insertion of one order.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub vehicle: VehicleId,
    pub depot: NodeId,
    pub plan: RoutePlan,
    /// Cost of the new plan minus the cost of the current one.
    pub added_cost: Cost,
}

/// Inserts a pickup of `new` before original step `i` and its delivery
/// before original step `j >= i`. A pickup next to a pickup at the same
/// depot joins that stop.
fn insert(steps: &[Step], depot: NodeId, new: usize, i: usize, j: usize) -> Vec<Step> {
    let joins_prev = i > 0 && matches!(&steps[i - 1], Step::Pickup { depot: d, .. } if *d == depot);
    // Delivering right after the new pickup keeps it a stop of its own.
    let joins_next = !joins_prev && j > i && matches!(steps.get(i), Some(Step::Pickup { depot: d, .. }) if *d == depot);
    let mut out = Vec::with_capacity(steps.len() + 2);
    for (k, s) in steps.iter().enumerate() {
        if k == i && !joins_prev && !joins_next {
            out.push(Step::Pickup {
                depot,
                orders: vec![new],
            });
        }
        if k == j {
            out.push(Step::Deliver(new));
        }
        let mut s = s.clone();
        if (joins_prev && k + 1 == i) || (joins_next && k == i) {
            if let Step::Pickup { orders, .. } = &mut s {
                orders.push(new);
            }
        }
        out.push(s);
    }
    if i == steps.len() {
        out.push(Step::Pickup {
            depot,
            orders: vec![new],
        });
    }
    if j == steps.len() {
        out.push(Step::Deliver(new));
    }
    out
}

/// Cheapest feasible insertion of placed order `o` over every vehicle, every
/// candidate depot and every pickup/delivery position pair. Ties go to the
/// lower vehicle id, then the closer depot, then earlier positions.
pub fn find_best_vehicle(o: OrderId, state: &SimState, net: &Network, p: &Params) -> Option<Insertion> {
    let order = state.order(o);
    let depots: Vec<NodeId> = candidates_for_order(order, net, p.depots_per_order)
        .iter()
        .map(|c| c.depot)
        .collect();
    let lookup = |id: OrderId| route_order(state.order(id), net, p);
    let mut best: Option<(Cost, Insertion)> = None;
    for v in &state.fleet {
        let start = RouteStart::of(v, state.clock);
        let onboard = v.onboard_for_planning().len();
        let (mut table, steps, current) =
            evaluate_plan(net, p, start, onboard, &v.plan, lookup).expect("committed plans stay feasible");
        let new = table.len();
        table.push(lookup(o));
        for &depot in &depots {
            for i in 0..=steps.len() {
                for j in i..=steps.len() {
                    let cand = insert(&steps, depot, new, i, j);
                    let Some(eval) = evaluate(net, p, start, onboard, &table, &cand) else {
                        continue;
                    };
                    let added = eval.cost - current.cost;
                    // Strict improvement keeps the first option in
                    // (vehicle, depot rank, i, j) order.
                    if best.as_ref().is_none_or(|(b, _)| added < *b) {
                        let plan = to_route_plan(&table, &cand, &eval);
                        best = Some((
                            added,
                            Insertion {
                                vehicle: v.id,
                                depot,
                                plan,
                                added_cost: added,
                            },
                        ));
                    }
                }
            }
        }
    }
    best.map(|(_, ins)| ins)
}

/// Simulates one day with greedy insertion at every release. Idle returns
/// and audits run on the epoch grid, as in the dispatcher.
pub fn run_greedy_day(cfg: &ScenarioConfig, net: &Network, demand: Vec<Order>) -> Result<DayRun, EngineError> {
    let mut sim = Simulator::new(cfg, net, demand)?;
    let epoch = sim.p.epoch;
    let day_end = sim.p.day_end;
    let mut next_tick: Millis = 0;
    loop {
        let next_release = sim.state.pending_future.front().map(|&o| sim.state.order(o).release);
        let t = next_release.map_or(next_tick, |r| r.min(next_tick));
        sim.propagate(t)?;
        for o in sim.release() {
            match find_best_vehicle(o, &sim.state, net, &sim.p) {
                Some(ins) => {
                    let v = &mut sim.state.fleet[ins.vehicle.index()];
                    v.plan = ins.plan;
                    v.relocation = None;
                }
                None => {
                    sim.state.set_status(o, OrderStatus::Ignored)?;
                    sim.log.push(Event::new(t, EventKind::Ignored).order(o));
                }
            }
        }
        if t == next_tick {
            sim.idle_return();
            if sim.opts.audit {
                sim.state.audit(sim.p.capacity)?;
            }
            if t >= day_end && sim.open_orders() == 0 && sim.fleet_at_rest() {
                break;
            }
            if t > day_end + crate::engine::DRAIN_LIMIT {
                return Err(EngineError::Stalled {
                    clock: t,
                    open: sim.open_orders(),
                    moving: sim.state.fleet.iter().filter(|v| !v.is_idle()).count(),
                });
            }
            next_tick += epoch;
        }
    }
    sim.finish()
}
