//! Shared fixtures for the criterion benchmarks.

use std::path::PathBuf;

use depotflow::engine::Simulator;
use depotflow::scenario::{RunConfig, Scenario};
use depotflow::{Millis, Network, Params, SimState};

/// The desk scenario shipped with the repository.
pub fn desk() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/desk.toml");
    RunConfig::load(&path, &[])
        .expect("desk scenario")
        .build()
        .expect("desk inputs")
}

/// Dispatcher state of the desk day just before the decision at `at`
/// seconds: orders released, trips not yet generated.
pub fn snapshot(sc: &Scenario, at: f64) -> (Network, Params, SimState) {
    let cfg = &sc.config.scenario;
    let p = cfg.params();
    let until = (at * 1000.0) as Millis;
    let mut sim = Simulator::new(cfg, &sc.net, sc.orders.clone()).expect("simulator");
    let mut k: Millis = 0;
    loop {
        let t = k * p.epoch;
        if k > 0 {
            sim.propagate(t).expect("propagate");
        }
        sim.release();
        if t >= until {
            break;
        }
        sim.decision_epoch().expect("epoch");
        sim.idle_return();
        k += 1;
    }
    (sc.net.clone(), p, sim.state)
}
