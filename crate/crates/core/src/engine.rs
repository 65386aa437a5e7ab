//! Rolling-horizon fleet simulation.
//!
//! Every `epoch` ms the dispatcher re-plans all orders that are not yet on a
//! vehicle: candidates, trips, assignment, then plan installation. Between
//! epochs each vehicle follows its plan along shortest paths. The day runs
//! until every order is delivered or ignored and every vehicle has come to
//! rest, so late orders are drained after `day_end`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{build_model, greedy_warm_start, solve, ModelError, Proof};
use crate::model::{
    latest_dropoff, BusyAction, Order, OrderId, OrderStatus, Params, Position, RoutePlan, ScenarioConfig, SimState,
    StateError, StopAction, Vehicle, VehicleId,
};
use crate::network::{Network, NodeId};
use crate::report::{compute_kpis, AuditError, KpiReport};
use crate::time::{millis_from_secs, secs_from_millis, Millis};
use crate::tripgen::{
    candidates_for_order, candidates_for_placed, earliest_dropoff, generate_trips, Planner, SearchOptions,
    TripGenOptions,
};

/// Simulated time allowed after `day_end` for draining open orders.
pub(crate) const DRAIN_LIMIT: Millis = 24 * 3600 * 1000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("delay bound {0} ms must be positive")]
    NonPositiveDelay(Millis),
    #[error("real delay bound {real} ms is below the planning bound {heuristic} ms")]
    RealBelowHeuristic { real: Millis, heuristic: Millis },
    #[error("network has no depots")]
    NoDepots,
    #[error("fleet is empty")]
    NoVehicles,
    #[error("orders must have dense ids sorted by release (order {0:?})")]
    DemandOrder(OrderId),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("vehicle {vehicle:?} reached {node:?} at {actual} ms but its plan expected {planned} ms")]
    Timing {
        vehicle: VehicleId,
        node: NodeId,
        planned: Millis,
        actual: Millis,
    },
    #[error("vehicle {vehicle:?} has no route for its load at {clock} ms")]
    NoRoute { vehicle: VehicleId, clock: Millis },
    #[error("vehicle {vehicle:?} cannot reach {target:?} from {from:?}")]
    Unreachable {
        vehicle: VehicleId,
        from: NodeId,
        target: NodeId,
    },
    #[error("vehicle {vehicle:?} asked to deliver {order:?} which it does not carry")]
    NotOnBoard { vehicle: VehicleId, order: OrderId },
    #[error("simulation still open at {clock} ms: {open} orders, {moving} vehicles moving")]
    Stalled { clock: Millis, open: usize, moving: usize },
    #[error("log audit failed: {0}")]
    Audit(#[from] AuditError),
    #[error("cannot write model dump: {0}")]
    Io(#[from] std::io::Error),
}

/// Maximum number of times an order may be found infeasible, counting the
/// first time: `(real - real mod heuristic) / heuristic`.
pub fn reinsert_limit(real: Millis, heuristic: Millis) -> Result<u32, EngineError> {
    if heuristic <= 0 {
        return Err(EngineError::NonPositiveDelay(heuristic));
    }
    if real < heuristic {
        return Err(EngineError::RealBelowHeuristic { real, heuristic });
    }
    Ok(((real - real % heuristic) / heuristic) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Placed,
    Pickup,
    Dropoff,
    Ignored,
    Reinserted,
    Epoch,
    IdleReturn,
    /// Arc traversal while serving a plan.
    Drive,
    /// Arc traversal while drifting to a depot.
    DriveIdle,
}

/// One log record. Arc events carry the arc tail in `from` and the head in
/// `node`; pickup and drop-off events are stamped at action completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: Millis,
    pub kind: EventKind,
    pub order: Option<OrderId>,
    pub vehicle: Option<VehicleId>,
    pub node: Option<NodeId>,
    pub from: Option<NodeId>,
}

impl Event {
    pub fn new(time: Millis, kind: EventKind) -> Self {
        Self {
            time,
            kind,
            order: None,
            vehicle: None,
            node: None,
            from: None,
        }
    }

    pub fn order(mut self, o: OrderId) -> Self {
        self.order = Some(o);
        self
    }

    pub fn vehicle(mut self, v: VehicleId) -> Self {
        self.vehicle = Some(v);
        self
    }

    pub fn node(mut self, n: NodeId) -> Self {
        self.node = Some(n);
        self
    }

    pub fn from(mut self, n: NodeId) -> Self {
        self.from = Some(n);
        self
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    time: f64,
    kind: EventKind,
    order: Option<u64>,
    vehicle: Option<u32>,
    node: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<u64>,
}

/// Append-only event log with non-decreasing times.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, e: Event) {
        debug_assert!(
            self.events.last().is_none_or(|l| l.time <= e.time),
            "log times must not decrease"
        );
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    /// One JSON object per line; times in seconds, orders and nodes by
    /// their external labels.
    pub fn to_json_lines(&self, net: &Network, orders: &[Order]) -> String {
        let mut out = String::new();
        for e in &self.events {
            let rec = EventRecord {
                time: secs_from_millis(e.time),
                kind: e.kind,
                order: e.order.map(|o| orders[o.index()].label),
                vehicle: e.vehicle.map(|v| v.0),
                node: e.node.map(|n| net.label(n)),
                from: e.from.map(|n| net.label(n)),
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain record"));
            out.push('\n');
        }
        out
    }

    /// Reads a log written by [`EventLog::to_json_lines`].
    pub fn from_json_lines(text: &str, net: &Network, orders: &[Order]) -> Result<Self, String> {
        let by_label: HashMap<u64, OrderId> = orders.iter().map(|o| (o.label, o.id)).collect();
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let at = |msg: String| format!("line {}: {msg}", i + 1);
            let rec: EventRecord = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
            let node = |l: u64| net.node(l).map_err(|e| at(e.to_string()));
            events.push(Event {
                time: millis_from_secs(rec.time),
                kind: rec.kind,
                order: rec
                    .order
                    .map(|l| {
                        by_label
                            .get(&l)
                            .copied()
                            .ok_or_else(|| at(format!("unknown order {l}")))
                    })
                    .transpose()?,
                vehicle: rec.vehicle.map(VehicleId),
                node: rec.node.map(node).transpose()?,
                from: rec.from.map(node).transpose()?,
            });
        }
        Ok(Self { events })
    }
}

/// Wall-clock limits and checks of a run.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub tripgen_budget: Duration,
    pub ilp_budget: Duration,
    /// Check the order partition and fleet bookkeeping after every epoch.
    pub audit: bool,
    /// Directory receiving the assignment model of every epoch in LP format.
    pub lp_dump: Option<PathBuf>,
}

impl EngineOptions {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            tripgen_budget: Duration::from_secs_f64(cfg.tripgen_timeout),
            ilp_budget: Duration::from_secs_f64(cfg.ilp_budget),
            audit: true,
            lp_dump: None,
        }
    }
}

/// Diagnostics of one decision epoch.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EpochStats {
    pub index: u64,
    pub time: Millis,
    pub placed: usize,
    pub candidates: usize,
    pub trips: usize,
    pub tripgen_truncated: bool,
    pub proof: Option<Proof>,
    pub assigned: usize,
    pub rejected_now: usize,
    pub reinserted: usize,
    pub ignored: usize,
    pub tripgen_secs: f64,
    pub solve_secs: f64,
}

impl EpochStats {
    /// Whether budgets left this epoch's decision unaffected.
    pub fn exact(&self) -> bool {
        !self.tripgen_truncated && self.proof != Some(Proof::IncumbentAtBudget)
    }
}

/// Outcome of a simulated day.
#[derive(Debug, Clone)]
pub struct DayRun {
    pub log: EventLog,
    pub state: SimState,
    pub epochs: Vec<EpochStats>,
    pub kpis: KpiReport,
}

impl DayRun {
    /// Whether every epoch was solved without hitting a budget.
    pub fn exact(&self) -> bool {
        self.epochs.iter().all(EpochStats::exact)
    }
}

/// State change produced while advancing one vehicle.
#[derive(Debug, Clone, Copy)]
enum Change {
    LoadStart(OrderId),
    Loaded(OrderId, NodeId),
    Served(OrderId, NodeId),
    Arc { from: NodeId, to: NodeId, idle: bool },
}

/// Fleet simulator shared by the dispatcher and the greedy baseline.
pub struct Simulator<'a> {
    pub net: &'a Network,
    pub p: Params,
    pub opts: EngineOptions,
    pub state: SimState,
    pub log: EventLog,
    pub epochs: Vec<EpochStats>,
    pub zeta: u32,
    pub x: usize,
}

impl<'a> Simulator<'a> {
    /// Fleet of `cfg.fleet_size` empty vehicles placed round-robin over the
    /// depots by vehicle id.
    pub fn new(cfg: &ScenarioConfig, net: &'a Network, demand: Vec<Order>) -> Result<Self, EngineError> {
        let depots = net.depots();
        if depots.is_empty() {
            return Err(EngineError::NoDepots);
        }
        let fleet = (0..cfg.fleet_size)
            .map(|i| Vehicle::new(VehicleId(i as u32), depots[i % depots.len()]))
            .collect();
        Self::with_fleet(cfg.params(), EngineOptions::from_config(cfg), net, demand, fleet)
    }

    pub fn with_fleet(
        p: Params,
        opts: EngineOptions,
        net: &'a Network,
        demand: Vec<Order>,
        fleet: Vec<Vehicle>,
    ) -> Result<Self, EngineError> {
        if net.depots().is_empty() {
            return Err(EngineError::NoDepots);
        }
        if fleet.is_empty() {
            return Err(EngineError::NoVehicles);
        }
        for (i, o) in demand.iter().enumerate() {
            if o.id.index() != i || (i > 0 && demand[i - 1].release > o.release) {
                return Err(EngineError::DemandOrder(o.id));
            }
        }
        let zeta = reinsert_limit(p.delay_real, p.delay_heuristic)?;
        Ok(Self {
            net,
            x: p.depots_per_order,
            p,
            opts,
            state: SimState::new(demand, fleet),
            log: EventLog::default(),
            epochs: Vec::new(),
            zeta,
        })
    }

    /// Moves orders released up to the current clock to placed.
    pub fn release(&mut self) -> Vec<OrderId> {
        let clock = self.state.clock;
        let out = self.state.release_until(clock);
        for &o in &out {
            self.log.push(Event::new(clock, EventKind::Placed).order(o));
        }
        out
    }

    /// One dispatch decision at the current clock.
    pub fn decision_epoch(&mut self) -> Result<EpochStats, EngineError> {
        let clock = self.state.clock;
        let mut stats = EpochStats {
            index: self.epochs.len() as u64,
            time: clock,
            placed: self.state.placed.len(),
            ..EpochStats::default()
        };
        self.log.push(Event::new(clock, EventKind::Epoch));
        if self.state.placed.is_empty() {
            self.epochs.push(stats.clone());
            return Ok(stats);
        }
        let (plans, failed) = {
            let planner = Planner::new(&self.state, self.net, &self.p);
            let cands = candidates_for_placed(&self.state, self.net, self.x);
            stats.candidates = cands.len();
            let began = Instant::now();
            let trips = generate_trips(
                &planner,
                &cands,
                &TripGenOptions {
                    max_trip_size: self.p.max_trip_size,
                    budget: self.opts.tripgen_budget,
                    search: SearchOptions::default(),
                },
            );
            stats.tripgen_secs = began.elapsed().as_secs_f64();
            stats.trips = trips.len();
            stats.tripgen_truncated = trips.truncated();

            let placed: Vec<OrderId> = self.state.placed.iter().copied().collect();
            let model = build_model(&trips, &placed, self.p.penalty)?;
            if let Some(dir) = &self.opts.lp_dump {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(format!("epoch-{:05}.lp", stats.index)), model.to_lp())?;
            }
            let began = Instant::now();
            let warm = greedy_warm_start(&model);
            let a = solve(&model, &warm, self.opts.ilp_budget);
            stats.solve_secs = began.elapsed().as_secs_f64();
            stats.proof = Some(a.proof);
            stats.assigned = a.chosen.iter().map(|&j| model.trips[j].size()).sum();
            stats.rejected_now = a.rejected_now.len();

            let chosen = a.by_vehicle(&model);
            let mut plans = Vec::with_capacity(trips.vehicles.len());
            for vt in &trips.vehicles {
                let plan = match chosen.get(&vt.vehicle) {
                    Some(t) => t.route.clone(),
                    None => match &vt.baseline {
                        Some((plan, _)) => plan.clone(),
                        None => {
                            return Err(EngineError::NoRoute {
                                vehicle: vt.vehicle,
                                clock,
                            })
                        }
                    },
                };
                plans.push((vt.vehicle, plan));
            }

            // An unassigned order only counts as failed when no trip holds it
            // and no vehicle could reach its destination in time even
            // ignoring all other commitments.
            let mut failed = Vec::new();
            for &o in &a.rejected_now {
                let row = model.orders.binary_search(&o).expect("rejected orders are placed");
                if !model.trips_of_order[row].is_empty() {
                    continue;
                }
                let order = self.state.order(o);
                let depots: Vec<NodeId> = candidates_for_order(order, self.net, self.x)
                    .iter()
                    .map(|c| c.depot)
                    .collect();
                let latest = latest_dropoff(order, self.net, &self.p).expect("reachable destination");
                if earliest_dropoff(&planner, order, &depots) > latest {
                    failed.push(o);
                }
            }
            (plans, failed)
        };
        for (v, plan) in plans {
            let veh = &mut self.state.fleet[v.index()];
            if !plan.is_empty() {
                veh.relocation = None;
            }
            veh.plan = plan;
        }
        for o in failed {
            if self.fail(o)? {
                stats.reinserted += 1;
            } else {
                stats.ignored += 1;
            }
        }
        self.epochs.push(stats.clone());
        Ok(stats)
    }

    /// Records an infeasibility finding: reinserts the order with a fresh
    /// release while it has failed fewer than `zeta` times, else ignores it.
    /// Returns whether it was reinserted.
    pub fn fail(&mut self, o: OrderId) -> Result<bool, EngineError> {
        let clock = self.state.clock;
        let order = &mut self.state.orders[o.index()];
        if order.reinsert_count + 1 < self.zeta {
            order.reinsert_count += 1;
            order.effective_release = clock;
            self.log.push(Event::new(clock, EventKind::Reinserted).order(o));
            Ok(true)
        } else {
            self.state.set_status(o, OrderStatus::Ignored)?;
            self.log.push(Event::new(clock, EventKind::Ignored).order(o));
            Ok(false)
        }
    }

    /// Sends every idle vehicle that is not at a depot towards its nearest
    /// depot, ties to the lower depot id. Mid-arc vehicles measure from the
    /// arc head. The target is dropped as soon as the vehicle gets a plan.
    pub fn idle_return(&mut self) {
        let clock = self.state.clock;
        for v in &mut self.state.fleet {
            if !v.plan.is_empty() || !v.loaded.is_empty() || v.busy.is_some() {
                continue;
            }
            let node = match v.position {
                Position::At(n) if self.net.is_depot(n) => {
                    v.relocation = None;
                    continue;
                }
                Position::At(n) => n,
                Position::EnRoute { to, .. } => to,
            };
            let target = *self
                .net
                .depots()
                .iter()
                .min_by_key(|&&d| (self.net.time(node, d), d))
                .expect("depots exist");
            if v.relocation != Some(target) {
                v.relocation = Some(target);
                self.log
                    .push(Event::new(clock, EventKind::IdleReturn).vehicle(v.id).node(target));
            }
        }
    }

    /// Advances every vehicle from the current clock to `until`, executing
    /// arrivals, loads and services, and logs the resulting events in time
    /// order.
    pub fn propagate(&mut self, until: Millis) -> Result<(), EngineError> {
        let clock = self.state.clock;
        assert!(until >= clock, "time runs forward");
        let mut changes: Vec<(Millis, VehicleId, usize, Change)> = Vec::new();
        for v in &mut self.state.fleet {
            let mut local = Vec::new();
            advance(self.net, &self.p, v, clock, until, &mut local)?;
            changes.extend(local.into_iter().enumerate().map(|(i, (t, c))| (t, v.id, i, c)));
        }
        changes.sort_by_key(|&(t, v, i, _)| (t, v, i));
        for (t, v, _, change) in changes {
            match change {
                Change::LoadStart(o) => {
                    self.state.set_status(o, OrderStatus::Loaded(v))?;
                    self.state.orders[o.index()].pickup_time = Some(t);
                }
                Change::Loaded(o, node) => {
                    self.log
                        .push(Event::new(t, EventKind::Pickup).order(o).vehicle(v).node(node));
                }
                Change::Served(o, node) => {
                    self.state.set_status(o, OrderStatus::Delivered)?;
                    self.state.orders[o.index()].dropoff_time = Some(t);
                    self.log
                        .push(Event::new(t, EventKind::Dropoff).order(o).vehicle(v).node(node));
                }
                Change::Arc { from, to, idle } => {
                    let kind = if idle { EventKind::DriveIdle } else { EventKind::Drive };
                    self.log.push(Event::new(t, kind).vehicle(v).node(to).from(from));
                }
            }
        }
        self.state.clock = until;
        Ok(())
    }

    /// Whether no vehicle is moving, acting, or holding a plan.
    pub fn fleet_at_rest(&self) -> bool {
        self.state.fleet.iter().all(|v| {
            matches!(v.position, Position::At(_)) && v.busy.is_none() && v.plan.is_empty() && v.relocation.is_none()
        })
    }

    pub fn open_orders(&self) -> usize {
        self.state.pending_future.len() + self.state.placed.len() + self.state.loaded.len()
    }

    fn stalled(&self) -> EngineError {
        EngineError::Stalled {
            clock: self.state.clock,
            open: self.open_orders(),
            moving: self
                .state
                .fleet
                .iter()
                .filter(|v| !v.is_idle() || v.relocation.is_some())
                .count(),
        }
    }

    /// Runs epochs until the day is over, every order is resolved and the
    /// fleet is at rest.
    pub fn run(mut self) -> Result<DayRun, EngineError> {
        let epoch = self.p.epoch;
        let k_end = (self.p.day_end + epoch - 1) / epoch;
        let mut k: Millis = 0;
        loop {
            let t = k * epoch;
            if k > 0 {
                self.propagate(t)?;
            }
            self.release();
            self.decision_epoch()?;
            self.idle_return();
            if self.opts.audit {
                self.state.audit(self.p.capacity)?;
            }
            if k >= k_end && self.open_orders() == 0 && self.fleet_at_rest() {
                break;
            }
            if t > self.p.day_end + DRAIN_LIMIT {
                return Err(self.stalled());
            }
            k += 1;
        }
        self.finish()
    }

    /// Terminal audit and KPI computation.
    pub fn finish(self) -> Result<DayRun, EngineError> {
        self.state.audit_terminal()?;
        let demand: Vec<Order> = self
            .state
            .orders
            .iter()
            .map(|o| Order::new(o.id, o.label, o.release, o.destination))
            .collect();
        let kpis = compute_kpis(&self.log, &demand, self.net, &self.p, self.state.fleet.len())?;
        Ok(DayRun {
            log: self.log,
            state: self.state,
            epochs: self.epochs,
            kpis,
        })
    }

    /// Multi-line description of the fleet, for diagnostics.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "clock {} ms, {} open orders", self.state.clock, self.open_orders());
        for v in &self.state.fleet {
            let _ = writeln!(
                s,
                "{:?}: {:?} busy {:?} until {} loaded {:?} stops {} relocation {:?}",
                v.id,
                v.position,
                v.busy,
                v.busy_until,
                v.loaded,
                v.plan.stops.len(),
                v.relocation
            );
        }
        s
    }
}

/// Moves one vehicle along its plan from `clock` to `until`.
fn advance(
    net: &Network,
    p: &Params,
    v: &mut Vehicle,
    clock: Millis,
    until: Millis,
    out: &mut Vec<(Millis, Change)>,
) -> Result<(), EngineError> {
    let mut t = clock;
    loop {
        if let Some(action) = v.busy {
            if v.busy_until > until {
                break;
            }
            t = v.busy_until;
            let Position::At(node) = v.position else {
                unreachable!("actions happen at nodes")
            };
            match action {
                BusyAction::Load(o) => out.push((t, Change::Loaded(o, node))),
                BusyAction::Serve(o) => {
                    v.loaded.retain(|&l| l != o);
                    out.push((t, Change::Served(o, node)));
                }
            }
            v.busy = None;
        }
        match v.position {
            Position::EnRoute { from, to, remaining } => {
                if t + remaining > until {
                    v.position = Position::EnRoute {
                        from,
                        to,
                        remaining: remaining - (until - t),
                    };
                    break;
                }
                t += remaining;
                v.position = Position::At(to);
                out.push((
                    t,
                    Change::Arc {
                        from,
                        to,
                        idle: v.plan.is_empty(),
                    },
                ));
            }
            Position::At(node) => {
                let target = match (v.plan.stops.first(), v.relocation) {
                    (Some(stop), _) => stop.location,
                    (None, Some(d)) => d,
                    (None, None) => break,
                };
                if node != target {
                    let (next, dt) = net.next_hop(node, target).ok_or(EngineError::Unreachable {
                        vehicle: v.id,
                        from: node,
                        target,
                    })?;
                    v.fresh_load = 0;
                    v.position = Position::EnRoute {
                        from: node,
                        to: next,
                        remaining: dt,
                    };
                    continue;
                }
                if v.plan.is_empty() {
                    v.relocation = None;
                    break;
                }
                let stop = &mut v.plan.stops[0];
                if stop.planned_arrival != t {
                    return Err(EngineError::Timing {
                        vehicle: v.id,
                        node,
                        planned: stop.planned_arrival,
                        actual: t,
                    });
                }
                match &mut stop.action {
                    StopAction::PickupSet(cands) => {
                        let c = cands.remove(0);
                        out.push((t, Change::LoadStart(c.order)));
                        v.loaded.push(c.order);
                        v.fresh_load += 1;
                        v.busy = Some(BusyAction::Load(c.order));
                        v.busy_until = t + p.load;
                        if cands.is_empty() {
                            v.plan.stops.remove(0);
                        } else {
                            stop.planned_arrival = t + p.load;
                        }
                    }
                    StopAction::Deliver(o) => {
                        let o = *o;
                        if !v.loaded.contains(&o) {
                            return Err(EngineError::NotOnBoard {
                                vehicle: v.id,
                                order: o,
                            });
                        }
                        v.fresh_load = 0;
                        v.busy = Some(BusyAction::Serve(o));
                        v.busy_until = t + p.service;
                        v.plan.stops.remove(0);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Simulates one day with the rolling-horizon dispatcher.
pub fn run_day(cfg: &ScenarioConfig, net: &Network, demand: Vec<Order>) -> Result<DayRun, EngineError> {
    Simulator::new(cfg, net, demand)?.run()
}

/// Like [`run_day`] with explicit engine options.
pub fn run_day_with(
    cfg: &ScenarioConfig,
    net: &Network,
    demand: Vec<Order>,
    opts: EngineOptions,
) -> Result<DayRun, EngineError> {
    let mut sim = Simulator::new(cfg, net, demand)?;
    sim.opts = opts;
    sim.run()
}

/// Plan of `v` as a compact string, for debugging.
pub fn describe_plan(plan: &RoutePlan) -> String {
    plan.stops
        .iter()
        .map(|s| match &s.action {
            StopAction::PickupSet(c) => format!(
                "P{}[{}]@{}",
                s.location.0,
                c.iter().map(|c| c.order.0.to_string()).collect::<Vec<_>>().join(","),
                s.planned_arrival
            ),
            StopAction::Deliver(o) => format!("D{}@{}", o.0, s.planned_arrival),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Candidate, Stop};
    use crate::network::{grid_network, NetworkBuilder};

    fn line(depots: &[u32]) -> Network {
        grid_network(1, 9, 1000.0, 10.0)
            .unwrap()
            .with_depots(depots.iter().map(|&d| NodeId(d)).collect())
            .unwrap()
    }

    fn cfg(fleet: usize) -> ScenarioConfig {
        ScenarioConfig {
            fleet_size: fleet,
            day_end: 1000.0,
            quiet_tail: 0.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn reinsert_limit_formula() {
        assert_eq!(reinsert_limit(480_000, 480_000).unwrap(), 1);
        assert_eq!(reinsert_limit(1_440_000, 480_000).unwrap(), 3);
        assert_eq!(reinsert_limit(1_200_000, 480_000).unwrap(), 2);
        assert!(reinsert_limit(480_000, 0).is_err());
        assert!(reinsert_limit(100, 200).is_err());
    }

    #[test]
    fn two_pickups_in_one_epoch() {
        let net = line(&[4]);
        let c = cfg(1);
        let orders = vec![
            Order::new(OrderId(0), 0, 0, NodeId(6)),
            Order::new(OrderId(1), 1, 0, NodeId(7)),
        ];
        let mut sim = Simulator::new(&c, &net, orders).unwrap();
        sim.release();
        let start = sim.state.clock;
        sim.state.fleet[0].plan = RoutePlan {
            stops: vec![Stop {
                location: NodeId(4),
                action: StopAction::PickupSet(vec![
                    Candidate {
                        order: OrderId(0),
                        depot: NodeId(4),
                    },
                    Candidate {
                        order: OrderId(1),
                        depot: NodeId(4),
                    },
                ]),
                planned_arrival: start,
                planned_departure: start + 30_000,
            }],
        };
        sim.propagate(100_000).unwrap();
        let pickups: Vec<Millis> = sim
            .log
            .iter()
            .filter(|e| e.kind == EventKind::Pickup)
            .map(|e| e.time)
            .collect();
        assert_eq!(pickups, vec![15_000, 30_000]);
        assert_eq!(sim.state.order(OrderId(0)).pickup_time, Some(0));
        assert_eq!(sim.state.order(OrderId(1)).pickup_time, Some(15_000));
        assert_eq!(sim.state.fleet[0].loaded.len(), 2);
    }

    #[test]
    fn quiet_propagation_only_moves_the_clock() {
        let net = line(&[4]);
        let mut sim = Simulator::new(&cfg(2), &net, vec![]).unwrap();
        let before = sim.state.fleet.clone();
        sim.propagate(100_000).unwrap();
        assert_eq!(sim.state.clock, 100_000);
        assert_eq!(sim.state.fleet, before);
        assert!(sim.log.is_empty());
    }

    #[test]
    fn failure_bookkeeping_respects_limit() {
        let net = line(&[4]);
        let o = vec![Order::new(OrderId(0), 0, 0, NodeId(6))];
        let mut sim = Simulator::new(&cfg(1), &net, o.clone()).unwrap();
        sim.release();
        assert!(!sim.fail(OrderId(0)).unwrap());
        assert_eq!(sim.state.order(OrderId(0)).status, OrderStatus::Ignored);
        assert_eq!(sim.log.iter().filter(|e| e.kind == EventKind::Ignored).count(), 1);

        let c = ScenarioConfig {
            max_delay_real: 1440.0,
            ..cfg(1)
        };
        let mut sim = Simulator::new(&c, &net, o).unwrap();
        sim.release();
        sim.state.clock = 200_000;
        assert!(sim.fail(OrderId(0)).unwrap());
        assert!(sim.fail(OrderId(0)).unwrap());
        assert!(!sim.fail(OrderId(0)).unwrap());
        let ord = sim.state.order(OrderId(0));
        assert_eq!((ord.reinsert_count, ord.effective_release), (2, 200_000));
        assert_eq!(ord.status, OrderStatus::Ignored);
    }

    #[test]
    fn idle_vehicle_at_depot_stays() {
        let net = line(&[4]);
        let mut sim = Simulator::new(&cfg(1), &net, vec![]).unwrap();
        sim.idle_return();
        assert_eq!(sim.state.fleet[0].relocation, None);
        assert!(sim.log.is_empty());
    }

    #[test]
    fn idle_tie_goes_to_lower_depot() {
        let net = line(&[2, 6]);
        let fleet = vec![Vehicle::new(VehicleId(0), NodeId(4))];
        let c = cfg(1);
        let mut sim = Simulator::with_fleet(c.params(), EngineOptions::from_config(&c), &net, vec![], fleet).unwrap();
        sim.idle_return();
        assert_eq!(sim.state.fleet[0].relocation, Some(NodeId(2)));
        sim.propagate(1_000_000).unwrap();
        assert_eq!(sim.state.fleet[0].position, Position::At(NodeId(2)));
        assert!(sim.fleet_at_rest());
        assert!(sim.log.iter().all(|e| e.kind != EventKind::Drive));
        assert_eq!(sim.log.iter().filter(|e| e.kind == EventKind::DriveIdle).count(), 2);
    }

    #[test]
    fn idle_mid_arc_measures_from_head() {
        // 0 <-> 1 <-> 2 with asymmetric arcs; depots 0 and 2.
        let mut b = NetworkBuilder::new(10.0);
        for i in 0..3 {
            b.node(i, i as f64, 0.0);
        }
        b.arc(0, 1, Some(50.0))
            .arc(1, 0, Some(300.0))
            .arc(1, 2, Some(200.0))
            .arc(2, 1, Some(40.0));
        let net = b.build().unwrap().with_depots(vec![NodeId(0), NodeId(2)]).unwrap();
        let mut v = Vehicle::new(VehicleId(0), NodeId(2));
        // Driving 2 -> 1 with 10 s left: from node 1, depot 2 is 200 s away
        // and depot 0 is 300 s away.
        v.position = Position::EnRoute {
            from: NodeId(2),
            to: NodeId(1),
            remaining: 10_000,
        };
        let c = cfg(1);
        let mut sim = Simulator::with_fleet(c.params(), EngineOptions::from_config(&c), &net, vec![], vec![v]).unwrap();
        sim.idle_return();
        assert_eq!(sim.state.fleet[0].relocation, Some(NodeId(2)));
    }

    #[test]
    fn json_lines_round_trip() {
        let net = line(&[4]);
        let orders = vec![Order::new(OrderId(0), 17, 0, NodeId(7))];
        let run = run_day(&cfg(1), &net, orders.clone()).unwrap();
        let text = run.log.to_json_lines(&net, &orders);
        assert!(text.lines().next().unwrap().contains("\"kind\":\"placed\""));
        let back = EventLog::from_json_lines(&text, &net, &orders).unwrap();
        assert_eq!(back.events, run.log.events);
        assert!(EventLog::from_json_lines("{\"time\":0}", &net, &orders).is_err());
    }

    #[test]
    fn empty_day_costs_nothing() {
        let net = line(&[4]);
        let run = run_day(&cfg(3), &net, vec![]).unwrap();
        assert_eq!(run.kpis.total_cost, 0.0);
        assert_eq!(run.kpis.total_distance_km, 0.0);
        assert!(run.log.iter().all(|e| e.kind == EventKind::Epoch));
    }

    #[test]
    fn no_placed_orders_no_plan_change() {
        let net = line(&[4]);
        let mut sim = Simulator::new(&cfg(2), &net, vec![]).unwrap();
        let before = sim.state.fleet.clone();
        let stats = sim.decision_epoch().unwrap();
        assert_eq!(stats.placed, 0);
        assert_eq!(sim.state.fleet, before);
    }

    #[test]
    fn single_order_day_closed_form() {
        // Vehicle starts at depot 4; order to node 7 (300 s away) at t = 0.
        let net = line(&[4]);
        let c = cfg(1);
        let run = run_day(&c, &net, vec![Order::new(OrderId(0), 0, 0, NodeId(7))]).unwrap();
        let o = run.state.order(OrderId(0));
        assert_eq!(o.status, OrderStatus::Delivered);
        assert_eq!(o.pickup_time, Some(0));
        assert_eq!(o.dropoff_time, Some(345_000));
        // Delay 0, driving 300 s out and 300 s back to the depot.
        let beta = 1.0 / 3.0;
        let expected = (1.0 - beta) * 0.0 + beta * 600.0;
        assert!((run.kpis.total_cost - expected).abs() < 1e-9);
        assert!((run.kpis.total_distance_km - 6.0).abs() < 1e-9);
        assert_eq!(run.kpis.mean_delay, Some(0.0));
    }

    #[test]
    fn depot_choice_minimizes_route_cost() {
        // Vehicle at depot 0; destination 4 is nearer to depot 6 (200 s)
        // than to depot 0 (400 s).
        let net = grid_network(1, 9, 1000.0, 10.0)
            .unwrap()
            .with_depots(vec![NodeId(0), NodeId(6)])
            .unwrap();
        let c = ScenarioConfig {
            depots_per_order: 2,
            ..cfg(1)
        };
        let p = c.params();
        let mut sim = Simulator::new(&c, &net, vec![Order::new(OrderId(0), 0, 0, NodeId(4))]).unwrap();
        sim.release();
        sim.decision_epoch().unwrap();
        // Hand enumeration: ideal = 15 + 200 + 30 = 245 s.
        // Pick at 0: done at 445 s, delay 200, drive 400.
        // Pick at 6: drive 600 + 200, done at 845 s, delay 600.
        let via0 = p.weight.combine(200_000, 400_000);
        let via6 = p.weight.combine(600_000, 800_000);
        assert!(via0 < via6);
        let pick: Vec<_> = sim.state.fleet[0].plan.pickups().collect();
        assert_eq!(pick[0].depot, NodeId(0));
    }
}
