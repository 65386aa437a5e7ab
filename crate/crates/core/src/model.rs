//! Domain types shared by every stage: configuration, orders, candidates,
//! vehicles, route plans, trips and the simulation state.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::network::{Network, NodeId};
use crate::time::{millis_from_secs, Millis};

/// Objective value in scaled units: milliseconds multiplied by the cost
/// weight denominator, so that weighted sums of delay and driving time stay integral.
pub type Cost = i64;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: &'static str, msg: String },
    #[error("cannot parse cost weight `{0}` (expected a number in [0,1] or `a/b`)")]
    CostWeight(String),
}

/// The convex weight β between customer delay and operator driving time,
/// held as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostWeight {
    num: i64,
    den: i64,
}

impl CostWeight {
    pub fn new(num: i64, den: i64) -> Result<Self, ConfigError> {
        if den <= 0 || num < 0 || num > den {
            return Err(ConfigError::CostWeight(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    /// Smallest-denominator fraction within 1e-5 of `value`
    /// (so `0.33333` becomes `1/3`).
    pub fn from_f64(value: f64) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ConfigError::CostWeight(value.to_string()));
        }
        for den in 1..=100_000i64 {
            let num = (value * den as f64).round() as i64;
            if (num as f64 / den as f64 - value).abs() <= 1e-5 {
                return Self::new(num, den);
            }
        }
        Err(ConfigError::CostWeight(value.to_string()))
    }

    pub fn numerator(self) -> i64 {
        self.num
    }

    pub fn denominator(self) -> i64 {
        self.den
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Scaled cost `(1-β)·delay + β·drive` for millisecond inputs.
    #[inline]
    pub fn combine(self, delay: Millis, drive: Millis) -> Cost {
        (self.den - self.num) * delay + self.num * drive
    }

    /// Scaled cost of a plain duration (penalties are given in seconds).
    #[inline]
    pub fn scale(self, ms: Millis) -> Cost {
        self.den * ms
    }

    /// Converts a scaled cost back to seconds.
    pub fn cost_to_secs(self, cost: Cost) -> f64 {
        cost as f64 / (self.den as f64 * 1000.0)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for CostWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for CostWeight {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse().map_err(|_| ConfigError::CostWeight(s.into()))?;
            let b = b.trim().parse().map_err(|_| ConfigError::CostWeight(s.into()))?;
            Self::new(a, b)
        } else {
            let v: f64 = s.parse().map_err(|_| ConfigError::CostWeight(s.into()))?;
            Self::from_f64(v)
        }
    }
}

impl Serialize for CostWeight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 {
            s.serialize_i64(self.num)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for CostWeight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Int(i) => CostWeight::new(i, 1),
            Raw::Float(f) => CostWeight::from_f64(f),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Scenario parameters. Durations are in seconds; key names are the
/// canonical config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Service-level delay guarantee.
    pub max_delay_real: f64,
    /// Delay bound used while planning inside one decision epoch.
    pub max_delay_heuristic: f64,
    pub fleet_size: usize,
    pub capacity: usize,
    pub depot_count: usize,
    pub cost_weight: CostWeight,
    pub max_trip_size: usize,
    pub service_time: f64,
    pub load_time: f64,
    pub epoch_length: f64,
    /// Span before `day_end` in which no orders are placed.
    pub quiet_tail: f64,
    pub depots_per_order: usize,
    /// Vehicle speed in m/s, used for coordinate-derived arc weights and
    /// for reporting driven distance.
    pub speed: f64,
    /// Per-vehicle trip generation wall-clock budget.
    pub tripgen_timeout: f64,
    /// Wall-clock budget of the assignment solver per epoch.
    pub ilp_budget: f64,
    /// Penalty charged per rejected order, in seconds.
    pub reject_penalty: f64,
    pub day_end: f64,
    pub pre_empty_allowed: bool,
    pub seed: u64,
    /// Largest number of deliveries sequenced exactly; longer routes use
    /// cheapest insertion.
    pub sequencing_cap: usize,
}

impl Default for ScenarioConfig {
    /// The base scenario: 30 vehicles of capacity 6, 20 depots, 8 minute
    /// delay bound, three depots per order, 100 s epochs.
    fn default() -> Self {
        Self {
            max_delay_real: 480.0,
            max_delay_heuristic: 480.0,
            fleet_size: 30,
            capacity: 6,
            depot_count: 20,
            cost_weight: CostWeight { num: 1, den: 3 },
            max_trip_size: 10,
            service_time: 30.0,
            load_time: 15.0,
            epoch_length: 100.0,
            quiet_tail: 600.0,
            depots_per_order: 3,
            speed: 10.0,
            tripgen_timeout: 50.0,
            ilp_budget: 50.0,
            reject_penalty: 10_000.0,
            day_end: 47_400.0,
            pre_empty_allowed: true,
            seed: 0,
            sequencing_cap: 10,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let durations = [
            ("max_delay_real", self.max_delay_real),
            ("max_delay_heuristic", self.max_delay_heuristic),
            ("service_time", self.service_time),
            ("load_time", self.load_time),
            ("quiet_tail", self.quiet_tail),
            ("tripgen_timeout", self.tripgen_timeout),
            ("ilp_budget", self.ilp_budget),
            ("day_end", self.day_end),
        ];
        for (key, v) in durations {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid {
                    key,
                    msg: format!("{v} is not a non-negative duration"),
                });
            }
        }
        let positive = [
            ("epoch_length", self.epoch_length),
            ("speed", self.speed),
            ("reject_penalty", self.reject_penalty),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid {
                    key,
                    msg: format!("{v} must be positive"),
                });
            }
        }
        let counts = [
            ("fleet_size", self.fleet_size),
            ("capacity", self.capacity),
            ("max_trip_size", self.max_trip_size),
            ("depots_per_order", self.depots_per_order),
            ("depot_count", self.depot_count),
            ("sequencing_cap", self.sequencing_cap),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(ConfigError::Invalid {
                    key,
                    msg: "must be at least 1".into(),
                });
            }
        }
        if self.max_delay_heuristic <= 0.0 {
            return Err(ConfigError::Invalid {
                key: "max_delay_heuristic",
                msg: "must be positive".into(),
            });
        }
        if self.max_delay_real < self.max_delay_heuristic {
            return Err(ConfigError::Invalid {
                key: "max_delay_real",
                msg: "must be at least max_delay_heuristic".into(),
            });
        }
        if self.quiet_tail > self.day_end {
            return Err(ConfigError::Invalid {
                key: "quiet_tail",
                msg: "exceeds day_end".into(),
            });
        }
        Ok(())
    }

    /// Millisecond view used by the algorithms.
    pub fn params(&self) -> Params {
        Params {
            delay_real: millis_from_secs(self.max_delay_real),
            delay_heuristic: millis_from_secs(self.max_delay_heuristic),
            capacity: self.capacity,
            weight: self.cost_weight,
            max_trip_size: self.max_trip_size,
            service: millis_from_secs(self.service_time),
            load: millis_from_secs(self.load_time),
            epoch: millis_from_secs(self.epoch_length),
            quiet_tail: millis_from_secs(self.quiet_tail),
            depots_per_order: self.depots_per_order,
            penalty: self.cost_weight.scale(millis_from_secs(self.reject_penalty)),
            day_end: millis_from_secs(self.day_end),
            pre_empty_allowed: self.pre_empty_allowed,
            sequencing_cap: self.sequencing_cap,
            speed: self.speed,
        }
    }

    /// Latest admissible release time.
    pub fn last_release(&self) -> Millis {
        millis_from_secs(self.day_end - self.quiet_tail)
    }
}

/// Millisecond-resolution parameters derived from a [`ScenarioConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub delay_real: Millis,
    pub delay_heuristic: Millis,
    pub capacity: usize,
    pub weight: CostWeight,
    pub max_trip_size: usize,
    pub service: Millis,
    pub load: Millis,
    pub epoch: Millis,
    pub quiet_tail: Millis,
    pub depots_per_order: usize,
    /// Rejection penalty in scaled cost units.
    pub penalty: Cost,
    pub day_end: Millis,
    pub pre_empty_allowed: bool,
    pub sequencing_cap: usize,
    /// Vehicle speed in m/s; converts driven time to distance.
    pub speed: f64,
}

impl Default for Params {
    fn default() -> Self {
        ScenarioConfig::default().params()
    }
}

/// Dense order index (position in the release-sorted demand list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderId(pub u32);

impl OrderId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl VehicleId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderStatus {
    Unknown,
    Placed,
    Loaded(VehicleId),
    Delivered,
    Ignored,
}

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("order {order:?}: illegal transition {from:?} -> {to:?}")]
    IllegalTransition {
        order: OrderId,
        from: OrderStatus,
        to: OrderStatus,
    },
    #[error("order {0:?} belongs to {1} order sets")]
    Partition(OrderId, usize),
    #[error("order {order:?}: status {status:?} disagrees with set membership")]
    Membership { order: OrderId, status: OrderStatus },
    #[error("vehicle {0:?} carries {1} orders, above capacity")]
    Capacity(VehicleId, usize),
    #[error("vehicle {vehicle:?} lists order {order:?} which is not loaded on it")]
    Load { vehicle: VehicleId, order: OrderId },
    #[error("order {order:?} delivered with delay {delay} ms outside [0, {limit}]")]
    Delay {
        order: OrderId,
        delay: Millis,
        limit: Millis,
    },
    #[error("order {0:?} reinserted more often than allowed")]
    Reinsertions(OrderId),
    #[error("end of day: {0} orders neither delivered nor ignored")]
    Unresolved(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub id: OrderId,
    /// Identifier from the demand file.
    pub label: u64,
    pub release: Millis,
    pub destination: NodeId,
    pub status: OrderStatus,
    pub reinsert_count: u32,
    /// Release time anchoring feasibility; moves forward on reinsertion.
    pub effective_release: Millis,
    /// Start of loading.
    pub pickup_time: Option<Millis>,
    /// Completion of service at the destination.
    pub dropoff_time: Option<Millis>,
}

impl Order {
    pub fn new(id: OrderId, label: u64, release: Millis, destination: NodeId) -> Self {
        Self {
            id,
            label,
            release,
            destination,
            status: OrderStatus::Unknown,
            reinsert_count: 0,
            effective_release: release,
            pickup_time: None,
            dropoff_time: None,
        }
    }

    /// Applies a lifecycle transition, rejecting illegal ones.
    pub fn transition(&mut self, to: OrderStatus) -> Result<(), StateError> {
        use OrderStatus::*;
        let ok = matches!(
            (self.status, to),
            (Unknown, Placed) | (Placed, Loaded(_)) | (Placed, Ignored) | (Loaded(_), Delivered)
        );
        if !ok {
            return Err(StateError::IllegalTransition {
                order: self.id,
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }
}

/// Error for orders whose destination no depot reaches.
#[derive(Debug, Error, PartialEq)]
#[error("no depot reaches destination node {0}")]
pub struct NoDepotError(pub u64);

fn ideal_from(release: Millis, destination: NodeId, net: &Network, p: &Params) -> Result<Millis, NoDepotError> {
    let tau = net
        .nearest_depot_time(destination)
        .ok_or(NoDepotError(net.label(destination)))?;
    Ok(release + p.load + tau + p.service)
}

/// Earliest possible delivery from the effective release: load at the
/// closest depot, drive straight to the destination, serve.
pub fn ideal_time(order: &Order, net: &Network, p: &Params) -> Result<Millis, NoDepotError> {
    ideal_from(order.effective_release, order.destination, net, p)
}

/// Ideal time anchored at the original release; delay is measured from it.
pub fn ideal_time_original(order: &Order, net: &Network, p: &Params) -> Result<Millis, NoDepotError> {
    ideal_from(order.release, order.destination, net, p)
}

/// Latest admissible drop-off: the heuristic delay bound past the
/// (effective) ideal time, never beyond the real delay bound past the
/// original ideal time.
pub fn latest_dropoff(order: &Order, net: &Network, p: &Params) -> Result<Millis, NoDepotError> {
    let heuristic = ideal_time(order, net, p)? + p.delay_heuristic;
    let real = ideal_time_original(order, net, p)? + p.delay_real;
    Ok(heuristic.min(real))
}

/// A pairing of an order with one potential pick-up depot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Candidate {
    pub order: OrderId,
    pub depot: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    At(NodeId),
    /// Driving the arc `from -> to` with `remaining` ms left.
    EnRoute {
        from: NodeId,
        to: NodeId,
        remaining: Millis,
    },
}

/// In-progress stop action that cannot be preempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusyAction {
    Load(OrderId),
    Serve(OrderId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopAction {
    PickupSet(Vec<Candidate>),
    Deliver(OrderId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stop {
    pub location: NodeId,
    pub action: StopAction,
    pub planned_arrival: Millis,
    pub planned_departure: Millis,
}

impl Stop {
    pub fn action_count(&self) -> usize {
        match &self.action {
            StopAction::PickupSet(c) => c.len(),
            StopAction::Deliver(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutePlan {
    pub stops: Vec<Stop>,
}

impl RoutePlan {
    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Orders delivered by this plan, in visiting order.
    pub fn deliveries(&self) -> impl Iterator<Item = OrderId> + '_ {
        self.stops.iter().filter_map(|s| match s.action {
            StopAction::Deliver(o) => Some(o),
            _ => None,
        })
    }

    pub fn pickups(&self) -> impl Iterator<Item = &Candidate> + '_ {
        self.stops.iter().flat_map(|s| match &s.action {
            StopAction::PickupSet(c) => c.as_slice(),
            _ => &[],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub position: Position,
    /// End of the in-progress load/service action.
    pub busy_until: Millis,
    pub busy: Option<BusyAction>,
    /// Orders on board, in loading order.
    pub loaded: Vec<OrderId>,
    /// How many of `loaded` were loaded at the depot stop the vehicle is
    /// still at; reset when it drives off or serves an order.
    pub fresh_load: usize,
    pub plan: RoutePlan,
    /// Depot the vehicle drifts to while idle.
    pub relocation: Option<NodeId>,
}

impl Vehicle {
    pub fn new(id: VehicleId, at: NodeId) -> Self {
        Self {
            id,
            position: Position::At(at),
            busy_until: 0,
            busy: None,
            loaded: Vec::new(),
            fresh_load: 0,
            plan: RoutePlan::default(),
            relocation: None,
        }
    }

    /// Loaded orders still to be delivered after the in-progress action.
    pub fn onboard_for_planning(&self) -> Vec<OrderId> {
        match self.busy {
            Some(BusyAction::Serve(o)) => self.loaded.iter().copied().filter(|&l| l != o).collect(),
            _ => self.loaded.clone(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.plan.is_empty() && self.loaded.is_empty() && self.busy.is_none()
    }
}

/// Vehicle-specific candidate set with its cheapest feasible route.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub vehicle: VehicleId,
    /// Sorted; all share one depot.
    pub candidates: Vec<Candidate>,
    pub route: RoutePlan,
    pub cost: Cost,
    /// `cost` minus the cost of the vehicle's plan for its current load.
    pub relative_cost: Cost,
}

impl Trip {
    pub fn size(&self) -> usize {
        self.candidates.len()
    }

    pub fn depot(&self) -> NodeId {
        self.candidates[0].depot
    }

    pub fn orders(&self) -> impl Iterator<Item = OrderId> + '_ {
        self.candidates.iter().map(|c| c.order)
    }
}

/// Full state at one instant: clock, fleet and the order partition.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: Millis,
    pub fleet: Vec<Vehicle>,
    pub orders: Vec<Order>,
    pub placed: BTreeSet<OrderId>,
    pub loaded: BTreeSet<OrderId>,
    pub delivered: BTreeSet<OrderId>,
    pub ignored: BTreeSet<OrderId>,
    pub pending_future: VecDeque<OrderId>,
}

impl SimState {
    /// `orders` must be sorted by release with dense ids `0..n`.
    pub fn new(orders: Vec<Order>, fleet: Vec<Vehicle>) -> Self {
        debug_assert!(orders.iter().enumerate().all(|(i, o)| o.id.index() == i));
        debug_assert!(orders.windows(2).all(|w| w[0].release <= w[1].release));
        let pending_future = orders.iter().map(|o| o.id).collect();
        Self {
            clock: 0,
            fleet,
            orders,
            placed: BTreeSet::new(),
            loaded: BTreeSet::new(),
            delivered: BTreeSet::new(),
            ignored: BTreeSet::new(),
            pending_future,
        }
    }

    pub fn order(&self, id: OrderId) -> &Order {
        &self.orders[id.index()]
    }

    pub fn vehicle(&self, id: VehicleId) -> &Vehicle {
        &self.fleet[id.index()]
    }

    /// Moves every unknown order released at or before `t` to placed.
    pub fn release_until(&mut self, t: Millis) -> Vec<OrderId> {
        let mut out = Vec::new();
        while let Some(&o) = self.pending_future.front() {
            if self.orders[o.index()].release > t {
                break;
            }
            self.pending_future.pop_front();
            self.orders[o.index()]
                .transition(OrderStatus::Placed)
                .expect("unknown -> placed");
            self.placed.insert(o);
            out.push(o);
        }
        out
    }

    /// Moves an order to a new status, keeping the set partition in sync.
    pub fn set_status(&mut self, id: OrderId, to: OrderStatus) -> Result<(), StateError> {
        let from = self.orders[id.index()].status;
        self.orders[id.index()].transition(to)?;
        self.set_for(from).remove(&id);
        self.set_for(to).insert(id);
        Ok(())
    }

    fn set_for(&mut self, status: OrderStatus) -> &mut BTreeSet<OrderId> {
        match status {
            OrderStatus::Placed => &mut self.placed,
            OrderStatus::Loaded(_) => &mut self.loaded,
            OrderStatus::Delivered => &mut self.delivered,
            OrderStatus::Ignored => &mut self.ignored,
            // Unknown orders live in the release queue, which is only
            // drained through `release_until`.
            OrderStatus::Unknown => unreachable!("no transition into Unknown"),
        }
    }

    /// Checks the five-way order partition, status/set agreement, fleet
    /// load bookkeeping and capacity.
    pub fn audit(&self, capacity: usize) -> Result<(), StateError> {
        let unknown: BTreeSet<OrderId> = self.pending_future.iter().copied().collect();
        for o in &self.orders {
            let member = [
                unknown.contains(&o.id),
                self.placed.contains(&o.id),
                self.loaded.contains(&o.id),
                self.delivered.contains(&o.id),
                self.ignored.contains(&o.id),
            ];
            let count = member.iter().filter(|m| **m).count();
            if count != 1 {
                return Err(StateError::Partition(o.id, count));
            }
            let expected = match o.status {
                OrderStatus::Unknown => 0,
                OrderStatus::Placed => 1,
                OrderStatus::Loaded(_) => 2,
                OrderStatus::Delivered => 3,
                OrderStatus::Ignored => 4,
            };
            if !member[expected] {
                return Err(StateError::Membership {
                    order: o.id,
                    status: o.status,
                });
            }
        }
        let mut on_vehicles = 0;
        for v in &self.fleet {
            if v.loaded.len() > capacity {
                return Err(StateError::Capacity(v.id, v.loaded.len()));
            }
            for &o in &v.loaded {
                if self.orders[o.index()].status != OrderStatus::Loaded(v.id) {
                    return Err(StateError::Load {
                        vehicle: v.id,
                        order: o,
                    });
                }
            }
            on_vehicles += v.loaded.len();
        }
        if on_vehicles != self.loaded.len() {
            return Err(StateError::Partition(
                self.loaded.iter().next().copied().unwrap_or(OrderId(0)),
                0,
            ));
        }
        Ok(())
    }

    /// End-of-day condition: every order delivered or ignored.
    pub fn audit_terminal(&self) -> Result<(), StateError> {
        let open = self.pending_future.len() + self.placed.len() + self.loaded.len();
        if open > 0 {
            return Err(StateError::Unresolved(open));
        }
        Ok(())
    }
}
