//! Dynamic multi-depot same-day delivery dispatch.
//!
//! A rolling-horizon dispatcher that, at every decision epoch, pairs each
//! open order with its closest depots, builds feasible vehicle trips that
//! may return to a depot before the vehicle is empty, and picks trips
//! through an exact trip-vehicle assignment integer program. The crate also
//! contains the fleet simulator, a greedy insertion baseline and KPI
//! reporting.

pub mod assign;
pub mod baselines;
pub mod demand;
pub mod engine;
pub mod model;
pub mod network;
pub mod report;
pub mod scenario;
pub mod time;
pub mod tripgen;

pub use model::{
    Candidate, Cost, CostWeight, Order, OrderId, OrderStatus, Params, Position, RoutePlan, ScenarioConfig, SimState,
    Stop, StopAction, Trip, Vehicle, VehicleId,
};
pub use network::{Network, NetworkBuilder, NodeId};
pub use time::Millis;
