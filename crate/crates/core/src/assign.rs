//! Trip-vehicle assignment integer program.
//!
//! Variables: one binary per (trip, vehicle) pair and one rejection binary
//! per placed order. Minimize the summed relative trip costs plus the
//! rejection penalty, subject to at most one trip per vehicle and every
//! placed order either covered by exactly one chosen trip or rejected.
//!
//! The exact solver works on the equivalent packing form: choosing trip `T`
//! saves `α·|T| - relative_cost(T)` against rejecting its orders. It is a
//! depth-first branch-and-bound over vehicles, bounded by a Lagrangian
//! relaxation of the per-order rows. For fixed multipliers each vehicle
//! independently takes its best reduced-weight trip, so the bound is cheap
//! and tightened by subgradient steps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{Candidate, Cost, OrderId, Trip, VehicleId};
use crate::tripgen::TripSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("trip {trip} of vehicle {vehicle:?} references order {order:?} that is not placed")]
    UnknownOrder {
        trip: usize,
        vehicle: VehicleId,
        order: OrderId,
    },
    #[error("trip {trip} of vehicle {vehicle:?} contains order {order:?} twice")]
    RepeatedOrder {
        trip: usize,
        vehicle: VehicleId,
        order: OrderId,
    },
}

/// The assignment program for one decision epoch.
#[derive(Debug, Clone)]
pub struct AssignmentModel {
    pub vehicles: Vec<VehicleId>,
    /// Placed orders, sorted; row `i` of the per-order constraints.
    pub orders: Vec<OrderId>,
    /// Trip variables.
    pub trips: Vec<Trip>,
    pub penalty: Cost,
    /// Trip indices per vehicle row.
    pub trips_of_vehicle: Vec<Vec<usize>>,
    /// Vehicle row of each trip.
    pub vehicle_of_trip: Vec<usize>,
    /// Order rows covered by each trip.
    pub orders_of_trip: Vec<Vec<usize>>,
    /// Trip indices per order row.
    pub trips_of_order: Vec<Vec<usize>>,
    /// Candidates per order row that appear in at least one trip.
    pub candidates_of_order: Vec<Vec<Candidate>>,
}

/// Builds the model from generated trips. Every trip's orders must be
/// among `placed`.
pub fn build_model(trips: &TripSet, placed: &[OrderId], penalty: Cost) -> Result<AssignmentModel, ModelError> {
    let mut orders = placed.to_vec();
    orders.sort();
    orders.dedup();
    let row: HashMap<OrderId, usize> = orders.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let vehicles: Vec<VehicleId> = trips.vehicles.iter().map(|v| v.vehicle).collect();
    let mut m = AssignmentModel {
        trips_of_vehicle: vec![Vec::new(); vehicles.len()],
        trips_of_order: vec![Vec::new(); orders.len()],
        candidates_of_order: vec![Vec::new(); orders.len()],
        vehicles,
        orders,
        trips: Vec::new(),
        penalty,
        vehicle_of_trip: Vec::new(),
        orders_of_trip: Vec::new(),
    };
    for (vrow, vt) in trips.vehicles.iter().enumerate() {
        for t in vt.trips() {
            let j = m.trips.len();
            let mut rows = Vec::with_capacity(t.size());
            for c in &t.candidates {
                let &r = row.get(&c.order).ok_or(ModelError::UnknownOrder {
                    trip: j,
                    vehicle: t.vehicle,
                    order: c.order,
                })?;
                if rows.contains(&r) {
                    return Err(ModelError::RepeatedOrder {
                        trip: j,
                        vehicle: t.vehicle,
                        order: c.order,
                    });
                }
                rows.push(r);
                m.trips_of_order[r].push(j);
                if !m.candidates_of_order[r].contains(c) {
                    m.candidates_of_order[r].push(*c);
                }
            }
            m.trips_of_vehicle[vrow].push(j);
            m.vehicle_of_trip.push(vrow);
            m.orders_of_trip.push(rows);
            m.trips.push(t.clone());
        }
    }
    for c in &mut m.candidates_of_order {
        c.sort();
    }
    Ok(m)
}

impl AssignmentModel {
    /// Objective of choosing `chosen` (trip indices) and rejecting the rest.
    pub fn objective(&self, chosen: &[usize]) -> Cost {
        let covered: usize = chosen.iter().map(|&j| self.orders_of_trip[j].len()).sum();
        let rel: Cost = chosen.iter().map(|&j| self.trips[j].relative_cost).sum();
        rel + self.penalty * (self.orders.len() - covered) as Cost
    }

    /// Checks the per-vehicle and per-order rows for a selection of trips.
    pub fn check(&self, chosen: &[usize]) -> Result<(), String> {
        let mut per_vehicle = vec![0usize; self.vehicles.len()];
        let mut per_order = vec![0usize; self.orders.len()];
        for &j in chosen {
            per_vehicle[self.vehicle_of_trip[j]] += 1;
            for &r in &self.orders_of_trip[j] {
                per_order[r] += 1;
            }
        }
        if let Some(v) = per_vehicle.iter().position(|&n| n > 1) {
            return Err(format!("vehicle {:?} has {} trips", self.vehicles[v], per_vehicle[v]));
        }
        if let Some(r) = per_order.iter().position(|&n| n > 1) {
            return Err(format!("order {:?} covered {} times", self.orders[r], per_order[r]));
        }
        Ok(())
    }

    fn assignment(&self, mut chosen: Vec<usize>, proof: Proof) -> Assignment {
        chosen.sort_by_key(|&j| (self.vehicle_of_trip[j], j));
        let mut covered = vec![false; self.orders.len()];
        for &j in &chosen {
            for &r in &self.orders_of_trip[j] {
                covered[r] = true;
            }
        }
        let rejected_now = self
            .orders
            .iter()
            .zip(&covered)
            .filter(|(_, c)| !**c)
            .map(|(o, _)| *o)
            .collect();
        Assignment {
            objective_value: self.objective(&chosen),
            chosen,
            rejected_now,
            proof,
        }
    }

    /// The model in CPLEX LP text format, for cross-checking with external
    /// solvers. Trip variables are `e<j>`, rejection variables `x<row>`.
    pub fn to_lp(&self) -> String {
        let mut s = String::new();
        s.push_str("\\ trip-vehicle assignment\nMinimize\n obj:");
        let mut first = true;
        let mut term = |s: &mut String, coef: Cost, var: String| {
            if first {
                let _ = write!(s, " {coef} {var}");
                first = false;
            } else if coef < 0 {
                let _ = write!(s, " - {} {var}", -coef);
            } else {
                let _ = write!(s, " + {coef} {var}");
            }
        };
        for (j, t) in self.trips.iter().enumerate() {
            term(&mut s, t.relative_cost, format!("e{j}"));
        }
        for r in 0..self.orders.len() {
            term(&mut s, self.penalty, format!("x{r}"));
        }
        if first {
            s.push_str(" 0");
        }
        s.push_str("\nSubject To\n");
        for (v, trips) in self.trips_of_vehicle.iter().enumerate() {
            if trips.is_empty() {
                continue;
            }
            let lhs: Vec<String> = trips.iter().map(|j| format!("e{j}")).collect();
            let _ = writeln!(s, " v{}: {} <= 1", self.vehicles[v].0, lhs.join(" + "));
        }
        for (r, trips) in self.trips_of_order.iter().enumerate() {
            let mut lhs: Vec<String> = trips.iter().map(|j| format!("e{j}")).collect();
            lhs.push(format!("x{r}"));
            let _ = writeln!(s, " o{}: {} = 1", self.orders[r].0, lhs.join(" + "));
        }
        s.push_str("Binary\n");
        for j in 0..self.trips.len() {
            let _ = writeln!(s, " e{j}");
        }
        for r in 0..self.orders.len() {
            let _ = writeln!(s, " x{r}");
        }
        s.push_str("End\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proof {
    Optimal,
    IncumbentAtBudget,
}

/// A feasible solution of an [`AssignmentModel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Chosen trip indices, at most one per vehicle, sorted by vehicle.
    pub chosen: Vec<usize>,
    /// Placed orders not covered by a chosen trip.
    pub rejected_now: Vec<OrderId>,
    pub objective_value: Cost,
    pub proof: Proof,
}

impl Assignment {
    /// Chosen trip per vehicle.
    pub fn by_vehicle<'m>(&self, model: &'m AssignmentModel) -> BTreeMap<VehicleId, &'m Trip> {
        self.chosen
            .iter()
            .map(|&j| (model.vehicles[model.vehicle_of_trip[j]], &model.trips[j]))
            .collect()
    }
}

/// Greedy initial solution: largest trips first, ties by increasing route
/// cost, taking a trip when its vehicle and all its orders are still free.
pub fn greedy_warm_start(model: &AssignmentModel) -> Assignment {
    let mut order: Vec<usize> = (0..model.trips.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&model.trips[a], &model.trips[b]);
        tb.size()
            .cmp(&ta.size())
            .then(ta.cost.cmp(&tb.cost))
            .then(model.vehicle_of_trip[a].cmp(&model.vehicle_of_trip[b]))
            .then(ta.candidates.cmp(&tb.candidates))
    });
    let mut vehicle_used = vec![false; model.vehicles.len()];
    let mut order_used = vec![false; model.orders.len()];
    let mut chosen = Vec::new();
    for j in order {
        let v = model.vehicle_of_trip[j];
        if vehicle_used[v] || model.orders_of_trip[j].iter().any(|&r| order_used[r]) {
            continue;
        }
        vehicle_used[v] = true;
        for &r in &model.orders_of_trip[j] {
            order_used[r] = true;
        }
        chosen.push(j);
    }
    model.assignment(chosen, Proof::IncumbentAtBudget)
}

/// Pluggable exact solver.
pub trait AssignmentSolver {
    fn solve(&self, model: &AssignmentModel, warm: &Assignment, budget: Duration) -> Assignment;
}

/// Branch-and-bound with a Lagrangian bound.
#[derive(Debug, Clone, Copy)]
pub struct BranchAndBound {
    pub root_iterations: usize,
    pub node_iterations: usize,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        Self {
            root_iterations: 60,
            node_iterations: 6,
        }
    }
}

/// Solves `model` to optimality unless `budget` runs out, starting from
/// the incumbent `warm`.
pub fn solve(model: &AssignmentModel, warm: &Assignment, budget: Duration) -> Assignment {
    BranchAndBound::default().solve(model, warm, budget)
}

impl AssignmentSolver for BranchAndBound {
    fn solve(&self, model: &AssignmentModel, warm: &Assignment, budget: Duration) -> Assignment {
        debug_assert!(model.check(&warm.chosen).is_ok());
        let mut search = Search::new(model, *self, Instant::now() + budget);
        search.incumbent = gain(model, &warm.chosen);
        search.best = warm.chosen.clone();
        let n = model.orders.len();
        let mut lambda: Vec<f64> = vec![0.0; n];
        for (j, rows) in search.rows.iter().enumerate() {
            let per = search.weight[j] as f64 / rows.len() as f64;
            for &r in rows {
                lambda[r] = lambda[r].max(per);
            }
        }
        let mut node = Node {
            used: vec![false; n],
            decided: vec![false; model.vehicles.len()],
            fixed: 0,
            picked: Vec::new(),
        };
        search.branch(&mut node, lambda, self.root_iterations);
        let proof = if search.out_of_time {
            Proof::IncumbentAtBudget
        } else {
            Proof::Optimal
        };
        let chosen = search.best.clone();
        let a = model.assignment(chosen, proof);
        debug_assert!(a.objective_value <= warm.objective_value);
        a
    }
}

/// Savings of a selection against rejecting every order.
fn gain(model: &AssignmentModel, chosen: &[usize]) -> Cost {
    model.penalty * model.orders.len() as Cost - model.objective(chosen)
}

struct Node {
    used: Vec<bool>,
    decided: Vec<bool>,
    fixed: Cost,
    picked: Vec<usize>,
}

struct Search {
    opts: BranchAndBound,
    /// Trips with positive savings, per vehicle; indices into the model.
    useful: Vec<Vec<usize>>,
    weight: Vec<Cost>,
    rows: Vec<Vec<usize>>,
    incumbent: Cost,
    best: Vec<usize>,
    deadline: Instant,
    nodes: u64,
    out_of_time: bool,
}

/// Relaxed solution at fixed multipliers.
struct Relaxed {
    bound: f64,
    /// Best compatible trip and its reduced weight per undecided vehicle.
    pick: Vec<Option<(usize, f64)>>,
}

impl Search {
    fn new(model: &AssignmentModel, opts: BranchAndBound, deadline: Instant) -> Self {
        let weight: Vec<Cost> = model
            .trips
            .iter()
            .map(|t| model.penalty * t.size() as Cost - t.relative_cost)
            .collect();
        let useful = model
            .trips_of_vehicle
            .iter()
            .map(|ts| ts.iter().copied().filter(|&j| weight[j] > 0).collect())
            .collect();
        Self {
            opts,
            useful,
            rows: model.orders_of_trip.clone(),
            weight,
            incumbent: 0,
            best: Vec::new(),
            deadline,
            nodes: 0,
            out_of_time: false,
        }
    }

    fn relax(&self, node: &Node, lambda: &[f64]) -> Relaxed {
        let mut bound: f64 = (0..lambda.len()).filter(|&r| !node.used[r]).map(|r| lambda[r]).sum();
        let mut pick = vec![None; self.useful.len()];
        for (v, trips) in self.useful.iter().enumerate() {
            if node.decided[v] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for &j in trips {
                if self.rows[j].iter().any(|&r| node.used[r]) {
                    continue;
                }
                let red = self.weight[j] as f64 - self.rows[j].iter().map(|&r| lambda[r]).sum::<f64>();
                if best.is_none_or(|(_, b)| red > b) {
                    best = Some((j, red));
                }
            }
            if let Some((_, red)) = best {
                bound += red.max(0.0);
            }
            pick[v] = best;
        }
        Relaxed { bound, pick }
    }

    /// Subgradient descent on the multipliers; returns the best bound seen
    /// with its multipliers.
    fn tighten(&self, node: &Node, mut lambda: Vec<f64>, iterations: usize) -> (Vec<f64>, Relaxed) {
        let target = (self.incumbent - node.fixed) as f64;
        let mut best = self.relax(node, &lambda);
        let mut best_lambda = lambda.clone();
        let mut current = best.bound;
        let mut mu = 1.0;
        let mut stall = 0;
        let mut relaxed = best.pick.clone();
        for _ in 0..iterations {
            if current < target + 1.0 {
                break;
            }
            let mut g: Vec<f64> = (0..lambda.len())
                .map(|r| if node.used[r] { 0.0 } else { 1.0 })
                .collect();
            for &(j, _) in relaxed.iter().flatten().filter(|(_, red)| *red > 0.0) {
                for &r in &self.rows[j] {
                    g[r] -= 1.0;
                }
            }
            // Multipliers at zero cannot go lower.
            for r in 0..g.len() {
                if lambda[r] <= 0.0 && g[r] > 0.0 {
                    g[r] = 0.0;
                }
            }
            let norm: f64 = g.iter().map(|x| x * x).sum();
            if norm == 0.0 {
                break;
            }
            let step = mu * (current - target.max(0.0)).max(1.0) / norm;
            for r in 0..lambda.len() {
                lambda[r] = (lambda[r] - step * g[r]).max(0.0);
            }
            let rel = self.relax(node, &lambda);
            current = rel.bound;
            relaxed = rel.pick.clone();
            if rel.bound < best.bound - 1e-9 {
                best = rel;
                best_lambda.clone_from(&lambda);
                stall = 0;
            } else {
                stall += 1;
                if stall >= 3 {
                    mu *= 0.5;
                    stall = 0;
                }
            }
        }
        (best_lambda, best)
    }

    fn can_improve(&self, fixed: Cost, bound: f64) -> bool {
        fixed as f64 + bound >= (self.incumbent + 1) as f64 - 1e-6
    }

    fn branch(&mut self, node: &mut Node, lambda: Vec<f64>, iterations: usize) {
        if self.out_of_time {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(64) && Instant::now() > self.deadline {
            self.out_of_time = true;
            return;
        }
        if node.fixed > self.incumbent {
            self.incumbent = node.fixed;
            self.best = node.picked.clone();
        }
        let (lambda, rel) = self.tighten(node, lambda, iterations);
        if !self.can_improve(node.fixed, rel.bound) {
            return;
        }
        // Branch on the undecided vehicle whose relaxed pick gains most.
        let Some(v) = (0..rel.pick.len()).filter(|&v| rel.pick[v].is_some()).max_by(|&a, &b| {
            let (ra, rb) = (rel.pick[a].unwrap().1, rel.pick[b].unwrap().1);
            ra.total_cmp(&rb).then(b.cmp(&a))
        }) else {
            // Every undecided vehicle is out of compatible trips.
            return;
        };
        let max_red = rel.pick[v].unwrap().1.max(0.0);
        let mut children: Vec<(usize, f64)> = self.useful[v]
            .iter()
            .copied()
            .filter(|&j| !self.rows[j].iter().any(|&r| node.used[r]))
            .map(|j| {
                (
                    j,
                    self.weight[j] as f64 - self.rows[j].iter().map(|&r| lambda[r]).sum::<f64>(),
                )
            })
            .collect();
        children.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        node.decided[v] = true;
        for (j, red) in children {
            // Bound of the child from the parent's multipliers.
            if !self.can_improve(node.fixed, rel.bound - max_red + red) {
                break;
            }
            for &r in &self.rows[j] {
                node.used[r] = true;
            }
            node.fixed += self.weight[j];
            node.picked.push(j);
            self.branch(node, lambda.clone(), self.opts.node_iterations);
            node.picked.pop();
            node.fixed -= self.weight[j];
            for &r in &self.rows[j] {
                node.used[r] = false;
            }
            if self.out_of_time {
                break;
            }
        }
        if !self.out_of_time && self.can_improve(node.fixed, rel.bound - max_red) {
            self.branch(node, lambda, self.opts.node_iterations);
        }
        node.decided[v] = false;
    }
}
