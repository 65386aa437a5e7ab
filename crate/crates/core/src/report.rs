//! Event-log replay, audits and KPIs.
//!
//! Everything here is recomputed from the event log and the demand, so a
//! log written by any strategy can be checked and scored the same way.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{Event, EventKind, EventLog};
use crate::model::{ideal_time_original, Order, Params};
use crate::network::{Network, NodeId};
use crate::time::{secs_from_millis, Millis};

/// First offending event of a log that fails replay.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("event {index} at {time} ms: {msg}")]
pub struct AuditError {
    pub index: usize,
    pub time: Millis,
    pub msg: String,
}

/// Constraints checked on top of the order lifecycle.
#[derive(Debug, Clone, Copy)]
pub struct AuditRules {
    pub capacity: usize,
    /// When false, a pickup may not start a new depot stop while loaded.
    pub pre_empty_allowed: bool,
    /// Pickups only at each order's nearest depot.
    pub nearest_depot_only: bool,
    /// Drop-off no later than the latest admissible time of the order.
    pub deadlines: bool,
    /// Every order ends delivered or ignored.
    pub terminal: bool,
}

impl AuditRules {
    pub fn from_params(p: &Params) -> Self {
        Self {
            capacity: p.capacity,
            pre_empty_allowed: p.pre_empty_allowed,
            nearest_depot_only: p.depots_per_order == 1,
            deadlines: true,
            terminal: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Unknown,
    Placed,
    OnBoard(u32),
    Delivered,
    Ignored,
}

/// Per-order facts recovered from a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OrderTrace {
    pub placed: Option<Millis>,
    /// Completion of loading.
    pub pickup: Option<Millis>,
    pub pickup_depot: Option<NodeId>,
    /// Completion of service.
    pub dropoff: Option<Millis>,
    pub ignored: Option<Millis>,
    pub reinsertions: u32,
    pub effective_release: Millis,
    pub vehicle: Option<u32>,
}

/// Per-vehicle facts recovered from a log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VehicleTrace {
    pub service_drive: Millis,
    pub idle_drive: Millis,
    pub max_load: usize,
}

/// Result of a successful replay.
#[derive(Debug, Clone)]
pub struct Replay {
    pub orders: Vec<OrderTrace>,
    pub vehicles: Vec<VehicleTrace>,
}

fn latest_allowed(o: &Order, effective_release: Millis, net: &Network, p: &Params) -> Millis {
    let mut eff = o.clone();
    eff.effective_release = effective_release;
    crate::model::latest_dropoff(&eff, net, p).expect("reachable destination")
}

/// Replays `log` against `demand`, checking lifecycle order, vehicle
/// continuity and the given rules.
pub fn replay(
    log: &EventLog,
    demand: &[Order],
    net: &Network,
    p: &Params,
    fleet_size: usize,
    rules: AuditRules,
) -> Result<Replay, AuditError> {
    let mut orders: Vec<OrderTrace> = demand
        .iter()
        .map(|o| OrderTrace {
            effective_release: o.release,
            ..OrderTrace::default()
        })
        .collect();
    let mut stage = vec![Stage::Unknown; demand.len()];
    let mut vehicles = vec![VehicleTrace::default(); fleet_size];
    let mut at: Vec<Option<NodeId>> = vec![None; fleet_size];
    let mut onboard: Vec<Vec<u32>> = vec![Vec::new(); fleet_size];
    // Orders loaded since the vehicle last drove or served.
    let mut stop_loads = vec![0usize; fleet_size];
    let mut last_time = Millis::MIN;

    for (index, e) in log.events.iter().enumerate() {
        let err = |msg: String| AuditError {
            index,
            time: e.time,
            msg,
        };
        if e.time < last_time {
            return Err(err(format!("time goes back from {last_time}")));
        }
        last_time = e.time;
        let vehicle = match e.vehicle {
            Some(v) if v.index() >= fleet_size => return Err(err(format!("unknown vehicle {}", v.0))),
            Some(v) => Some(v.index()),
            None => None,
        };
        let order = match e.order {
            Some(o) if o.index() >= demand.len() => return Err(err(format!("unknown order {}", o.0))),
            Some(o) => Some(o.index()),
            None => None,
        };
        let need = |what: &str| err(format!("{:?} event without {what}", e.kind));
        match e.kind {
            EventKind::Epoch => {}
            EventKind::Placed => {
                let o = order.ok_or_else(|| need("order"))?;
                if stage[o] != Stage::Unknown {
                    return Err(err(format!("order {o} placed twice")));
                }
                if e.time < demand[o].release {
                    return Err(err(format!("order {o} placed before its release")));
                }
                stage[o] = Stage::Placed;
                orders[o].placed = Some(e.time);
            }
            EventKind::Reinserted => {
                let o = order.ok_or_else(|| need("order"))?;
                if stage[o] != Stage::Placed {
                    return Err(err(format!("order {o} reinserted while {:?}", stage[o])));
                }
                orders[o].reinsertions += 1;
                orders[o].effective_release = e.time;
            }
            EventKind::Ignored => {
                let o = order.ok_or_else(|| need("order"))?;
                if stage[o] != Stage::Placed {
                    return Err(err(format!("order {o} ignored while {:?}", stage[o])));
                }
                stage[o] = Stage::Ignored;
                orders[o].ignored = Some(e.time);
            }
            EventKind::Pickup => {
                let o = order.ok_or_else(|| need("order"))?;
                let v = vehicle.ok_or_else(|| need("vehicle"))?;
                let node = e.node.ok_or_else(|| need("node"))?;
                if stage[o] != Stage::Placed {
                    return Err(err(format!("order {o} picked up while {:?}", stage[o])));
                }
                if !net.is_depot(node) {
                    return Err(err(format!("pickup at non-depot node {}", net.label(node))));
                }
                check_position(&mut at[v], node).map_err(&err)?;
                if !rules.pre_empty_allowed && onboard[v].len() > stop_loads[v] {
                    return Err(err(format!("vehicle {v} returned to a depot while loaded")));
                }
                if rules.nearest_depot_only && net.depots_by_time_to(demand[o].destination)[0].1 != node {
                    return Err(err(format!("order {o} picked up at a depot other than its nearest")));
                }
                onboard[v].push(o as u32);
                stop_loads[v] += 1;
                if onboard[v].len() > rules.capacity {
                    return Err(err(format!(
                        "vehicle {v} carries {} > {}",
                        onboard[v].len(),
                        rules.capacity
                    )));
                }
                vehicles[v].max_load = vehicles[v].max_load.max(onboard[v].len());
                stage[o] = Stage::OnBoard(v as u32);
                orders[o].pickup = Some(e.time);
                orders[o].pickup_depot = Some(node);
                orders[o].vehicle = Some(v as u32);
            }
            EventKind::Dropoff => {
                let o = order.ok_or_else(|| need("order"))?;
                let v = vehicle.ok_or_else(|| need("vehicle"))?;
                let node = e.node.ok_or_else(|| need("node"))?;
                if stage[o] != Stage::OnBoard(v as u32) {
                    return Err(err(format!("order {o} dropped by vehicle {v} while {:?}", stage[o])));
                }
                if node != demand[o].destination {
                    return Err(err(format!("order {o} dropped away from its destination")));
                }
                check_position(&mut at[v], node).map_err(&err)?;
                if rules.deadlines {
                    let latest = latest_allowed(&demand[o], orders[o].effective_release, net, p);
                    if e.time > latest {
                        return Err(err(format!("order {o} delivered at {} after latest {latest}", e.time)));
                    }
                }
                onboard[v].retain(|&x| x != o as u32);
                stop_loads[v] = 0;
                stage[o] = Stage::Delivered;
                orders[o].dropoff = Some(e.time);
            }
            EventKind::IdleReturn => {
                vehicle.ok_or_else(|| need("vehicle"))?;
            }
            EventKind::Drive | EventKind::DriveIdle => {
                let v = vehicle.ok_or_else(|| need("vehicle"))?;
                let to = e.node.ok_or_else(|| need("node"))?;
                let from = e.from.ok_or_else(|| need("arc tail"))?;
                check_position(&mut at[v], from).map_err(&err)?;
                let dt = net
                    .arc_time(from, to)
                    .ok_or_else(|| err(format!("no arc {} -> {}", net.label(from), net.label(to))))?;
                if e.kind == EventKind::Drive {
                    vehicles[v].service_drive += dt;
                } else {
                    vehicles[v].idle_drive += dt;
                }
                at[v] = Some(to);
                stop_loads[v] = 0;
            }
        }
    }
    if rules.terminal {
        if let Some(o) = stage
            .iter()
            .position(|s| !matches!(s, Stage::Delivered | Stage::Ignored))
        {
            return Err(AuditError {
                index: log.len(),
                time: last_time,
                msg: format!("order {o} unresolved at the end ({:?})", stage[o]),
            });
        }
    }
    Ok(Replay { orders, vehicles })
}

fn check_position(at: &mut Option<NodeId>, node: NodeId) -> Result<(), String> {
    match *at {
        Some(cur) if cur != node => Err(format!("vehicle at {cur:?} acts at {node:?}")),
        _ => {
            *at = Some(node);
            Ok(())
        }
    }
}

/// One row of the per-epoch series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochPoint {
    pub time: f64,
    /// Placed orders not yet picked up or ignored at the end of the window.
    pub open_orders: usize,
    pub on_board: usize,
    pub pickups: usize,
    pub dropoffs: usize,
    pub ignored: usize,
}

/// Key performance indicators of a finished day. Means over no delivered
/// orders are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub orders: usize,
    pub delivered: usize,
    pub ignored: usize,
    pub service_rate: Option<f64>,
    pub mean_delivery_time: Option<f64>,
    pub mean_delay: Option<f64>,
    pub max_delay: Option<f64>,
    pub mean_time_on_vehicle: Option<f64>,
    pub mean_waiting_time: Option<f64>,
    pub mean_loaded_parcels: Option<f64>,
    pub total_distance_km: f64,
    pub service_distance_km: f64,
    pub relocation_distance_km: f64,
    pub vehicle_distance_km: Vec<f64>,
    /// Day objective in seconds: weighted delay and driving time plus the
    /// rejection penalty per ignored order.
    pub total_cost: f64,
    pub reinsertions: u64,
    /// Delivered orders by number of reinsertions.
    pub delivered_by_reinsertions: Vec<u64>,
    /// `(bin start in s, count)`; bins of `DELAY_BIN` s up to the real
    /// delay bound.
    pub delay_histogram: Vec<(f64, u64)>,
    /// Delivered orders by rank of the pickup depot among the depots
    /// closest to the destination (0 = nearest).
    pub depot_rank_usage: Vec<u64>,
    pub epoch_series: Vec<EpochPoint>,
}

/// Width of delay histogram bins in seconds.
pub const DELAY_BIN: f64 = 30.0;

/// Column names of the KPI table, in order.
pub const KPI_COLUMNS: [&str; 7] = [
    "Service rate [%]",
    "Delivery time [s]",
    "Delay [s]",
    "Time on vehicle [s]",
    "Waiting time [s]",
    "Mean loaded parcels",
    "Total distance [km]",
];

const EXTRA_COLUMNS: [&str; 8] = [
    "orders",
    "delivered",
    "ignored",
    "max_delay_s",
    "total_cost_s",
    "service_distance_km",
    "relocation_distance_km",
    "reinsertions",
];

fn mean(v: &[Millis]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().map(|&x| secs_from_millis(x)).sum::<f64>() / v.len() as f64)
}

/// Replays the log and derives all KPIs. Fails with the first bad event.
pub fn compute_kpis(
    log: &EventLog,
    demand: &[Order],
    net: &Network,
    p: &Params,
    fleet_size: usize,
) -> Result<KpiReport, AuditError> {
    let rules = AuditRules {
        nearest_depot_only: false,
        ..AuditRules::from_params(p)
    };
    let r = replay(log, demand, net, p, fleet_size, rules)?;
    let mut delivery = Vec::new();
    let mut delay = Vec::new();
    let mut on_vehicle = Vec::new();
    let mut waiting = Vec::new();
    let mut depot_rank_usage: Vec<u64> = Vec::new();
    let mut delivered_by_reinsertions: Vec<u64> = Vec::new();
    let bins = (secs_from_millis(p.delay_real) / DELAY_BIN).ceil().max(1.0) as usize;
    let mut hist = vec![0u64; bins];
    let mut on_board_time: Millis = 0;
    let mut last_dropoff: Option<Millis> = None;
    for (o, t) in demand.iter().zip(&r.orders) {
        let (Some(pick), Some(drop)) = (t.pickup, t.dropoff) else {
            continue;
        };
        let pick_start = pick - p.load;
        let theta = drop - ideal_time_original(o, net, p).expect("reachable destination");
        delivery.push(drop - o.release);
        delay.push(theta);
        on_vehicle.push(drop - p.service - pick);
        waiting.push(pick_start - o.release);
        on_board_time += drop - pick_start;
        last_dropoff = Some(last_dropoff.map_or(drop, |l: Millis| l.max(drop)));
        let bin = ((secs_from_millis(theta.max(0)) / DELAY_BIN) as usize).min(bins - 1);
        hist[bin] += 1;
        let depot = t.pickup_depot.expect("pickup has a depot");
        let rank = net
            .depots_by_time_to(o.destination)
            .iter()
            .position(|&(_, d)| d == depot)
            .expect("pickup depot is a depot");
        if depot_rank_usage.len() <= rank {
            depot_rank_usage.resize(rank + 1, 0);
        }
        depot_rank_usage[rank] += 1;
        let k = t.reinsertions as usize;
        if delivered_by_reinsertions.len() <= k {
            delivered_by_reinsertions.resize(k + 1, 0);
        }
        delivered_by_reinsertions[k] += 1;
    }
    let delivered = delay.len();
    let ignored = r.orders.iter().filter(|t| t.ignored.is_some()).count();
    let mean_loaded_parcels = match (demand.first(), last_dropoff) {
        (Some(first), Some(last)) if last > first.release && fleet_size > 0 => {
            Some(on_board_time as f64 / ((last - first.release) as f64 * fleet_size as f64))
        }
        _ => None,
    };
    let km = |ms: Millis| secs_from_millis(ms) * p.speed / 1000.0;
    let vehicle_distance_km: Vec<f64> = r.vehicles.iter().map(|v| km(v.service_drive + v.idle_drive)).collect();
    let service: Millis = r.vehicles.iter().map(|v| v.service_drive).sum();
    let idle: Millis = r.vehicles.iter().map(|v| v.idle_drive).sum();
    let delay_sum: Millis = delay.iter().sum();
    let cost = p.weight.combine(delay_sum, service + idle) + p.penalty * ignored as i64;
    Ok(KpiReport {
        orders: demand.len(),
        delivered,
        ignored,
        service_rate: (!demand.is_empty()).then(|| delivered as f64 / demand.len() as f64 * 100.0),
        mean_delivery_time: mean(&delivery),
        mean_delay: mean(&delay),
        max_delay: delay.iter().max().map(|&d| secs_from_millis(d)),
        mean_time_on_vehicle: mean(&on_vehicle),
        mean_waiting_time: mean(&waiting),
        mean_loaded_parcels,
        total_distance_km: km(service + idle),
        service_distance_km: km(service),
        relocation_distance_km: km(idle),
        vehicle_distance_km,
        total_cost: p.weight.cost_to_secs(cost),
        reinsertions: r.orders.iter().map(|t| t.reinsertions as u64).sum(),
        delivered_by_reinsertions,
        delay_histogram: hist
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 * DELAY_BIN, c))
            .collect(),
        depot_rank_usage,
        epoch_series: epoch_series(log, p.epoch),
    })
}

fn epoch_series(log: &EventLog, epoch: Millis) -> Vec<EpochPoint> {
    let Some(last) = log.events.last() else {
        return Vec::new();
    };
    let windows = (last.time / epoch + 1) as usize;
    let mut rows: Vec<EpochPoint> = (0..windows)
        .map(|k| EpochPoint {
            time: secs_from_millis(k as Millis * epoch),
            open_orders: 0,
            on_board: 0,
            pickups: 0,
            dropoffs: 0,
            ignored: 0,
        })
        .collect();
    let (mut open, mut board) = (0i64, 0i64);
    let mut events = log.events.iter().peekable();
    for (k, row) in rows.iter_mut().enumerate() {
        let end = (k as Millis + 1) * epoch;
        while let Some(e) = events.next_if(|e: &&Event| e.time < end) {
            match e.kind {
                EventKind::Placed => open += 1,
                EventKind::Pickup => {
                    open -= 1;
                    board += 1;
                    row.pickups += 1;
                }
                EventKind::Dropoff => {
                    board -= 1;
                    row.dropoffs += 1;
                }
                EventKind::Ignored => {
                    open -= 1;
                    row.ignored += 1;
                }
                _ => {}
            }
        }
        row.open_orders = open as usize;
        row.on_board = board as usize;
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.4}"))
}

impl KpiReport {
    pub fn csv_header() -> String {
        KPI_COLUMNS
            .iter()
            .chain(EXTRA_COLUMNS.iter())
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Values in [`KpiReport::csv_header`] order; undefined means are
    /// written as `null`.
    pub fn csv_row(&self) -> String {
        [
            opt(self.service_rate),
            opt(self.mean_delivery_time),
            opt(self.mean_delay),
            opt(self.mean_time_on_vehicle),
            opt(self.mean_waiting_time),
            opt(self.mean_loaded_parcels),
            format!("{:.4}", self.total_distance_km),
            self.orders.to_string(),
            self.delivered.to_string(),
            self.ignored.to_string(),
            opt(self.max_delay),
            format!("{:.4}", self.total_cost),
            format!("{:.4}", self.service_distance_km),
            format!("{:.4}", self.relocation_distance_km),
            self.reinsertions.to_string(),
        ]
        .join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain report")
    }

    pub fn delay_histogram_csv(&self) -> String {
        histogram_csv(self.delay_histogram.iter().copied())
    }

    pub fn depot_rank_csv(&self) -> String {
        let mut s = String::from("rank,count\n");
        for (rank, c) in self.depot_rank_usage.iter().enumerate() {
            let _ = writeln!(s, "{},{c}", rank + 1);
        }
        s
    }

    pub fn epoch_series_csv(&self) -> String {
        let mut s = String::from("time,open_orders,on_board,pickups,dropoffs,ignored\n");
        for r in &self.epoch_series {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.time, r.open_orders, r.on_board, r.pickups, r.dropoffs, r.ignored
            );
        }
        s
    }
}

/// `bin_start,count` lines.
pub fn histogram_csv(bins: impl IntoIterator<Item = (f64, u64)>) -> String {
    let mut s = String::from("bin_start,count\n");
    for (start, c) in bins {
        let _ = writeln!(s, "{start},{c}");
    }
    s
}
