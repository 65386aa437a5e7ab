//! Route timing and the exact best-sequence search for one vehicle.
//!
//! A route starts where the vehicle becomes free, delivers its on-board
//! orders, and visits at most one depot where all new orders are loaded in
//! one stop. Collapsing the new pickups into one stop leaves `q!` visiting
//! orders for `q` new orders instead of `(2q)!/2^q`.

use crate::model::{Candidate, Cost, OrderId, Params, Position, RoutePlan, Stop, StopAction, Vehicle};
use crate::network::{Network, NodeId};
use crate::time::Millis;

/// Where and when a vehicle is free to start a new route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteStart {
    pub node: NodeId,
    pub time: Millis,
    /// Driving already committed before reaching `node` (rest of the arc
    /// being traversed). Counted in the route's driving time.
    pub lead_drive: Millis,
    /// On-board orders loaded during the depot stop the vehicle is still
    /// at. Continuing that stop is not a return to the depot.
    pub fresh_load: usize,
}

impl RouteStart {
    /// Planning origin of `v` at `clock`: after any in-progress action and
    /// at the head of any arc being driven.
    pub fn of(v: &Vehicle, clock: Millis) -> Self {
        match v.position {
            Position::At(node) => RouteStart {
                node,
                time: if v.busy.is_some() {
                    v.busy_until.max(clock)
                } else {
                    clock
                },
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

    pub fn at(node: NodeId, time: Millis) -> Self {
        Self {
            node,
            time,
            lead_drive: 0,
            fresh_load: 0,
        }
    }
}

/// Per-order data needed for routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteOrder {
    pub id: OrderId,
    pub destination: NodeId,
    /// Ideal delivery time from the original release; delay is measured
    /// against it.
    pub ideal: Millis,
    /// Latest admissible drop-off (service completion).
    pub latest: Millis,
}

/// One step of a route. Indices refer to a caller-supplied order table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Pickup { depot: NodeId, orders: Vec<usize> },
    Deliver(usize),
}

/// Timing and cost of a feasible route.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub cost: Cost,
    pub drive: Millis,
    /// Sum of delays of delivered orders.
    pub delay: Millis,
    /// `(arrival, departure)` per step.
    pub times: Vec<(Millis, Millis)>,
}

/// Times a route and checks deadlines and capacity. `onboard` is the load
/// when the route starts. Returns `None` if any constraint is violated or a
/// pickup happens while loaded with pre-empty returns disabled.
pub fn evaluate(
    net: &Network,
    p: &Params,
    start: RouteStart,
    onboard: usize,
    orders: &[RouteOrder],
    steps: &[Step],
) -> Option<Evaluated> {
    let mut node = start.node;
    let mut t = start.time;
    let mut drive = start.lead_drive;
    let mut delay = 0;
    let mut load = onboard;
    let mut times = Vec::with_capacity(steps.len());
    for step in steps {
        match step {
            Step::Pickup { depot, orders: picked } => {
                let continues_stop = times.is_empty() && *depot == start.node && load == start.fresh_load;
                if !p.pre_empty_allowed && load > 0 && !continues_stop {
                    return None;
                }
                load += picked.len();
                if load > p.capacity {
                    return None;
                }
                let leg = net.time(node, *depot);
                drive += leg;
                t += leg;
                let arrive = t;
                t += p.load * picked.len() as Millis;
                node = *depot;
                times.push((arrive, t));
            }
            Step::Deliver(i) => {
                let o = &orders[*i];
                let leg = net.time(node, o.destination);
                drive += leg;
                t += leg;
                let arrive = t;
                t += p.service;
                if t > o.latest || load == 0 {
                    return None;
                }
                load -= 1;
                delay += t - o.ideal;
                node = o.destination;
                times.push((arrive, t));
            }
        }
    }
    Some(Evaluated {
        cost: p.weight.combine(delay, drive),
        drive,
        delay,
        times,
    })
}

/// Search switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Prune partial sequences whose cost lower bound reaches the incumbent.
    pub cost_bound: bool,
    /// Prune partial sequences in which some pending order can no longer
    /// meet its deadline.
    pub deadline_lookahead: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            cost_bound: true,
            deadline_lookahead: true,
        }
    }
}

/// Best route for a vehicle and a set of new orders sharing one depot.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequenced {
    /// Steps over the combined table (on-board orders first, then new ones).
    pub steps: Vec<Step>,
    pub eval: Evaluated,
    /// Complete sequences reached by the search.
    pub leaves: u64,
    /// Whether the exact search ran (false: cheapest insertion was used).
    pub exact: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Token {
    Pickup,
    Deliver(u8),
}

struct Search<'a> {
    p: &'a Params,
    /// Travel times between points: 0 = start, 1 = depot, 2 + i = order i.
    dist: Vec<Vec<Millis>>,
    orders: Vec<RouteOrder>,
    /// Bit i set when order i is new (needs the depot stop first).
    new_mask: u32,
    new_count: usize,
    fresh_load: usize,
    opts: SearchOptions,
    path: Vec<Token>,
    best: Option<(Cost, Vec<Token>)>,
    leaves: u64,
}

impl Search<'_> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(&mut self, at: usize, t: Millis, drive: Millis, delay: Millis, remaining: u32, picked: bool, load: usize) {
        if remaining == 0 && (picked || self.new_count == 0) {
            self.leaves += 1;
            let cost = self.p.weight.combine(delay, drive);
            if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                self.best = Some((cost, self.path.clone()));
            }
            return;
        }
        if self.opts.deadline_lookahead || self.opts.cost_bound {
            let mut extra_delay = 0;
            let pending_loads = if picked {
                0
            } else {
                self.p.load * self.new_count as Millis
            };
            let mut bits = remaining;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let o = &self.orders[i];
                let eta = if !picked && self.new_mask & (1 << i) != 0 {
                    t + self.dist[at][1] + pending_loads + self.dist[1][2 + i]
                } else {
                    t + self.dist[at][2 + i]
                } + self.p.service;
                if self.opts.deadline_lookahead && eta > o.latest {
                    return;
                }
                extra_delay += (eta - o.ideal).max(0);
            }
            if self.opts.cost_bound {
                if let Some((best, _)) = &self.best {
                    if self.p.weight.combine(delay + extra_delay, drive) >= *best {
                        return;
                    }
                }
            }
        }

        if !picked && self.new_count > 0 {
            let continues_stop = at == 0 && self.dist[0][1] == 0 && load == self.fresh_load;
            let pre_empty_ok = self.p.pre_empty_allowed || load == 0 || continues_stop;
            if pre_empty_ok && load + self.new_count <= self.p.capacity {
                let leg = self.dist[at][1];
                self.path.push(Token::Pickup);
                self.dfs(
                    1,
                    t + leg + self.p.load * self.new_count as Millis,
                    drive + leg,
                    delay,
                    remaining,
                    true,
                    load + self.new_count,
                );
                self.path.pop();
            }
        }
        let mut bits = remaining;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if !picked && self.new_mask & (1 << i) != 0 {
                continue;
            }
            let o = self.orders[i];
            let leg = self.dist[at][2 + i];
            let done = t + leg + self.p.service;
            if done > o.latest {
                continue;
            }
            self.path.push(Token::Deliver(i as u8));
            self.dfs(
                2 + i,
                done,
                drive + leg,
                delay + done - o.ideal,
                remaining & !(1 << i),
                picked,
                load - 1,
            );
            self.path.pop();
        }
    }
}

/// Exact minimum-cost route delivering `onboard` and picking up all of
/// `new` at `depot`. Ties go to the lexicographically smallest sequence,
/// with the depot stop ordered before deliveries and deliveries by order id.
/// Routes longer than `p.sequencing_cap` deliveries fall back to cheapest
/// insertion.
pub fn best_sequence(
    net: &Network,
    p: &Params,
    start: RouteStart,
    onboard: &[RouteOrder],
    depot: Option<NodeId>,
    new: &[RouteOrder],
    opts: SearchOptions,
) -> Option<Sequenced> {
    assert!(new.is_empty() || depot.is_some(), "new orders need a depot");
    let mut table: Vec<RouteOrder> = onboard.iter().chain(new).copied().collect();
    let mut is_new: Vec<bool> = (0..table.len()).map(|i| i >= onboard.len()).collect();
    // Sort by id so that the search visits sequences in lexicographic order.
    let mut perm: Vec<usize> = (0..table.len()).collect();
    perm.sort_by_key(|&i| table[i].id);
    table = perm.iter().map(|&i| table[i]).collect();
    is_new = perm.iter().map(|&i| is_new[i]).collect();
    let depot_node = depot.unwrap_or(start.node);

    if table.len() > p.sequencing_cap || table.len() > 31 {
        return cheapest_insertion(net, p, start, onboard, depot_node, new);
    }

    let mut points = vec![start.node, depot_node];
    points.extend(table.iter().map(|o| o.destination));
    let dist = points
        .iter()
        .map(|&a| points.iter().map(|&b| net.time(a, b)).collect())
        .collect();
    let new_mask = is_new
        .iter()
        .enumerate()
        .filter(|(_, &n)| n)
        .fold(0u32, |m, (i, _)| m | (1 << i));
    let mut search = Search {
        p,
        dist,
        orders: table.clone(),
        new_mask,
        new_count: new.len(),
        fresh_load: start.fresh_load,
        opts,
        path: Vec::with_capacity(table.len() + 1),
        best: None,
        leaves: 0,
    };
    let full = if table.is_empty() { 0 } else { (1u32 << table.len()) - 1 };
    search.dfs(0, start.time, start.lead_drive, 0, full, false, onboard.len());
    let leaves = search.leaves;
    let (_, tokens) = search.best?;

    // Map back to the caller's table layout (onboard first, then new).
    let new_indices: Vec<usize> = (onboard.len()..onboard.len() + new.len()).collect();
    let steps: Vec<Step> = tokens
        .into_iter()
        .map(|tok| match tok {
            Token::Pickup => Step::Pickup {
                depot: depot_node,
                orders: new_indices.clone(),
            },
            Token::Deliver(i) => Step::Deliver(perm[i as usize]),
        })
        .collect();
    let combined: Vec<RouteOrder> = onboard.iter().chain(new).copied().collect();
    let eval =
        evaluate(net, p, start, onboard.len(), &combined, &steps).expect("search result must re-evaluate as feasible");
    Some(Sequenced {
        steps,
        eval,
        leaves,
        exact: true,
    })
}

/// Keeps on-board deliveries in the given order, inserts the depot stop at
/// its cheapest feasible position, then each new delivery (by id) at its
/// cheapest feasible position after the depot stop.
fn cheapest_insertion(
    net: &Network,
    p: &Params,
    start: RouteStart,
    onboard: &[RouteOrder],
    depot: NodeId,
    new: &[RouteOrder],
) -> Option<Sequenced> {
    let combined: Vec<RouteOrder> = onboard.iter().chain(new).copied().collect();
    let steps: Vec<Step> = (0..onboard.len()).map(Step::Deliver).collect();
    if new.is_empty() {
        let eval = evaluate(net, p, start, onboard.len(), &combined, &steps)?;
        return Some(Sequenced {
            steps,
            eval,
            leaves: 1,
            exact: false,
        });
    }
    let all_new: Vec<usize> = (onboard.len()..combined.len()).collect();
    // Depot position is judged on the route without the new deliveries;
    // positions that cannot fit them are rejected later.
    let mut best: Option<(Cost, Vec<Step>)> = None;
    for pos in 0..=steps.len() {
        let mut cand = steps.clone();
        cand.insert(
            pos,
            Step::Pickup {
                depot,
                orders: all_new.clone(),
            },
        );
        let mut trial = cand.clone();
        let mut ok = true;
        let mut order_by_id: Vec<usize> = all_new.clone();
        order_by_id.sort_by_key(|&i| combined[i].id);
        for &i in &order_by_id {
            let pickup_at = trial.iter().position(|s| matches!(s, Step::Pickup { .. })).unwrap();
            let mut inserted: Option<(Cost, Vec<Step>)> = None;
            for q in pickup_at + 1..=trial.len() {
                let mut t2 = trial.clone();
                t2.insert(q, Step::Deliver(i));
                if let Some(e) = evaluate(net, p, start, onboard.len(), &combined, &partial(&t2, onboard.len())) {
                    if inserted.as_ref().is_none_or(|(c, _)| e.cost < *c) {
                        inserted = Some((e.cost, t2));
                    }
                }
            }
            match inserted {
                Some((_, t2)) => trial = t2,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        if let Some(e) = evaluate(net, p, start, onboard.len(), &combined, &trial) {
            if best.as_ref().is_none_or(|(c, _)| e.cost < *c) {
                best = Some((e.cost, trial));
            }
        }
    }
    let (_, steps) = best?;
    let eval = evaluate(net, p, start, onboard.len(), &combined, &steps)?;
    Some(Sequenced {
        steps,
        eval,
        leaves: 0,
        exact: false,
    })
}

/// While inserting, the depot stop only loads orders already placed in the
/// route so capacity and timing reflect the partial route.
fn partial(steps: &[Step], onboard: usize) -> Vec<Step> {
    let delivered: Vec<usize> = steps
        .iter()
        .filter_map(|s| match s {
            Step::Deliver(i) if *i >= onboard => Some(*i),
            _ => None,
        })
        .collect();
    steps
        .iter()
        .map(|s| match s {
            Step::Pickup { depot, .. } => Step::Pickup {
                depot: *depot,
                orders: delivered.clone(),
            },
            other => other.clone(),
        })
        .collect()
}

/// Converts a route over `orders` to a [`RoutePlan`], attaching the given
/// depot for pickup candidates.
pub fn to_route_plan(orders: &[RouteOrder], steps: &[Step], eval: &Evaluated) -> RoutePlan {
    let stops = steps
        .iter()
        .zip(&eval.times)
        .map(|(step, &(arrive, depart))| match step {
            Step::Pickup { depot, orders: idx } => {
                let mut cands: Vec<Candidate> = idx
                    .iter()
                    .map(|&i| Candidate {
                        order: orders[i].id,
                        depot: *depot,
                    })
                    .collect();
                cands.sort();
                Stop {
                    location: *depot,
                    action: StopAction::PickupSet(cands),
                    planned_arrival: arrive,
                    planned_departure: depart,
                }
            }
            Step::Deliver(i) => Stop {
                location: orders[*i].destination,
                action: StopAction::Deliver(orders[*i].id),
                planned_arrival: arrive,
                planned_departure: depart,
            },
        })
        .collect();
    RoutePlan { stops }
}

/// Re-times an existing plan from `start`. Used to audit stored plan times
/// and to price plans that are kept unchanged.
pub fn evaluate_plan(
    net: &Network,
    p: &Params,
    start: RouteStart,
    onboard: usize,
    plan: &RoutePlan,
    lookup: impl Fn(OrderId) -> RouteOrder,
) -> Option<(Vec<RouteOrder>, Vec<Step>, Evaluated)> {
    let mut table: Vec<RouteOrder> = Vec::new();
    let index = |o: OrderId, table: &mut Vec<RouteOrder>| -> usize {
        if let Some(i) = table.iter().position(|r| r.id == o) {
            i
        } else {
            table.push(lookup(o));
            table.len() - 1
        }
    };
    let steps: Vec<Step> = plan
        .stops
        .iter()
        .map(|s| match &s.action {
            StopAction::PickupSet(c) => Step::Pickup {
                depot: s.location,
                orders: c.iter().map(|c| index(c.order, &mut table)).collect(),
            },
            StopAction::Deliver(o) => Step::Deliver(index(*o, &mut table)),
        })
        .collect();
    let eval = evaluate(net, p, start, onboard, &table, &steps)?;
    Some((table, steps, eval))
}
