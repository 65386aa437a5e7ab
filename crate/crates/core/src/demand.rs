//! Demand instances: the text format and a seeded synthetic generator with
//! a flat base rate plus Gaussian peaks.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Order, OrderId};
use crate::network::{Network, NodeId};
use crate::time::{format_secs, millis_from_secs, Millis};

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: order {id} targets unknown destination node {node}")]
    UnknownDestination { line: usize, id: u64, node: u64 },
    #[error("line {line}: duplicate order id {id}")]
    DuplicateId { line: usize, id: u64 },
    #[error("line {line}: order {id} released at {release} s, after the last admissible release {limit} s")]
    LateRelease {
        line: usize,
        id: u64,
        release: String,
        limit: String,
    },
    #[error("line {line}: order {id} has negative release time")]
    NegativeRelease { line: usize, id: u64 },
    #[error("network has no nodes to deliver to")]
    NoNodes,
    #[error("invalid demand profile: {0}")]
    Profile(String),
}

/// A temporal demand peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Seconds since start of day.
    pub center: f64,
    /// Standard deviation, seconds.
    pub width: f64,
    /// Peak intensity on top of the base rate, orders per second.
    pub amplitude: f64,
}

/// Release-time intensity `base_rate + Σ amplitude·exp(-(t-center)²/2width²)`
/// on `[0, horizon - quiet_tail]`, with `total_orders` draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub total_orders: usize,
    pub horizon: f64,
    pub quiet_tail: f64,
    pub base_rate: f64,
    #[serde(default)]
    pub peaks: Vec<Peak>,
}

impl DemandProfile {
    fn span(&self) -> f64 {
        self.horizon - self.quiet_tail
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        let span = self.span();
        if !(span > 0.0 && span.is_finite()) {
            return Err(DemandError::Profile(format!(
                "horizon {} must exceed quiet_tail {}",
                self.horizon, self.quiet_tail
            )));
        }
        if !(self.base_rate >= 0.0 && self.base_rate.is_finite()) {
            return Err(DemandError::Profile("base_rate must be >= 0".into()));
        }
        for p in &self.peaks {
            if !(0.0..=span).contains(&p.center) {
                return Err(DemandError::Profile(format!(
                    "peak center {} outside [0, {span}]",
                    p.center
                )));
            }
            if !(p.width > 0.0 && p.amplitude >= 0.0) {
                return Err(DemandError::Profile("peak width must be > 0 and amplitude >= 0".into()));
            }
        }
        if self.total_orders > 0 && self.base_rate + self.peaks.iter().map(|p| p.amplitude).sum::<f64>() <= 0.0 {
            return Err(DemandError::Profile("intensity is zero everywhere".into()));
        }
        Ok(())
    }

    /// Unnormalized intensity at `t` seconds.
    pub fn intensity(&self, t: f64) -> f64 {
        self.base_rate
            + self
                .peaks
                .iter()
                .map(|p| p.amplitude * (-(t - p.center).powi(2) / (2.0 * p.width * p.width)).exp())
                .sum::<f64>()
    }
}

/// Draws `total_orders` orders: release times by rejection sampling from
/// the profile's intensity, truncated to whole seconds; destinations uniform
/// over non-depot nodes. Sorted by release, ids dense.
pub fn generate_demand(profile: &DemandProfile, net: &Network, seed: u64) -> Result<Vec<Order>, DemandError> {
    profile.validate()?;
    let mut targets: Vec<NodeId> = net.nodes().filter(|&n| !net.is_depot(n)).collect();
    if targets.is_empty() {
        targets = net.nodes().collect();
    }
    if targets.is_empty() {
        return Err(DemandError::NoNodes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = profile.span();
    let ceiling = profile.base_rate + profile.peaks.iter().map(|p| p.amplitude).sum::<f64>();
    let mut raw = Vec::with_capacity(profile.total_orders);
    while raw.len() < profile.total_orders {
        let t = rng.random_range(0.0..=span);
        if rng.random_range(0.0..ceiling) < profile.intensity(t) {
            let dest = targets[rng.random_range(0..targets.len())];
            raw.push((millis_from_secs(t.floor()), dest));
        }
    }
    raw.sort_by_key(|&(t, d)| (t, d));
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, (t, d))| Order::new(OrderId(i as u32), i as u64, t, d))
        .collect())
}

/// Serializes orders as `O <id> <release_seconds> <destination_node>` lines.
pub fn demand_to_text(orders: &[Order], net: &Network) -> String {
    orders
        .iter()
        .map(|o| {
            format!(
                "O {} {} {}\n",
                o.label,
                format_secs(o.release),
                net.label(o.destination)
            )
        })
        .collect()
}

/// Parses a demand file. `last_release` is the latest admissible release
/// (`day_end - quiet_tail`).
pub fn parse_demand(text: &str, net: &Network, last_release: Millis) -> Result<Vec<Order>, DemandError> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 4 || f[0] != "O" {
            return Err(DemandError::Parse {
                line,
                msg: "expected `O <id> <release_seconds> <destination_node>`".into(),
            });
        }
        let bad = |what: &str, v: &str| DemandError::Parse {
            line,
            msg: format!("bad {what} `{v}`"),
        };
        let id: u64 = f[1].parse().map_err(|_| bad("id", f[1]))?;
        let secs: f64 = f[2].parse().map_err(|_| bad("release", f[2]))?;
        let node: u64 = f[3].parse().map_err(|_| bad("destination", f[3]))?;
        if !secs.is_finite() {
            return Err(bad("release", f[2]));
        }
        let release = millis_from_secs(secs);
        if release < 0 {
            return Err(DemandError::NegativeRelease { line, id });
        }
        if release > last_release {
            return Err(DemandError::LateRelease {
                line,
                id,
                release: f[2].to_string(),
                limit: format_secs(last_release),
            });
        }
        let dest = net
            .node(node)
            .map_err(|_| DemandError::UnknownDestination { line, id, node })?;
        if !seen.insert(id) {
            return Err(DemandError::DuplicateId { line, id });
        }
        rows.push((release, id, dest));
    }
    rows.sort_by_key(|&(t, id, _)| (t, id));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (t, id, d))| Order::new(OrderId(i as u32), id, t, d))
        .collect())
}

pub fn load_demand(path: impl AsRef<Path>, net: &Network, last_release: Millis) -> Result<Vec<Order>, DemandError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DemandError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_demand(&text, net, last_release)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::grid_network;

    fn net() -> Network {
        grid_network(5, 5, 100.0, 10.0)
            .unwrap()
            .with_depots(vec![NodeId(0), NodeId(24)])
            .unwrap()
    }

    fn flat(n: usize) -> DemandProfile {
        DemandProfile {
            total_orders: n,
            horizon: 14_400.0,
            quiet_tail: 600.0,
            base_rate: 1.0,
            peaks: vec![],
        }
    }

    #[test]
    fn zero_orders() {
        assert!(generate_demand(&flat(0), &net(), 1).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_within_window() {
        let net = net();
        let a = generate_demand(&flat(300), &net, 9).unwrap();
        let b = generate_demand(&flat(300), &net, 9).unwrap();
        assert_eq!(demand_to_text(&a, &net), demand_to_text(&b, &net));
        assert!(a
            .iter()
            .all(|o| o.release <= 13_800_000 && !net.is_depot(o.destination)));
        assert!(a.windows(2).all(|w| w[0].release <= w[1].release));
        let c = generate_demand(&flat(300), &net, 10).unwrap();
        assert_ne!(demand_to_text(&a, &net), demand_to_text(&c, &net));
    }

    #[test]
    fn flat_profile_counts_stay_in_poisson_band() {
        let net = net();
        let orders = generate_demand(&flat(10_000), &net, 42).unwrap();
        let bins = 13_800 / 600;
        let mut counts = vec![0usize; bins];
        for o in &orders {
            counts[((o.release / 600_000) as usize).min(bins - 1)] += 1;
        }
        let mean = 10_000.0 / bins as f64;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 4.0 * mean.sqrt(),
                "bin {i}: {c} vs mean {mean}"
            );
        }
    }

    #[test]
    fn dominant_peak_holds_the_modal_bin() {
        let net = net();
        let profile = DemandProfile {
            total_orders: 3000,
            horizon: 14_400.0,
            quiet_tail: 600.0,
            base_rate: 0.05,
            peaks: vec![
                Peak {
                    center: 3_600.0,
                    width: 900.0,
                    amplitude: 0.2,
                },
                Peak {
                    center: 10_800.0,
                    width: 900.0,
                    amplitude: 0.4,
                },
            ],
        };
        let orders = generate_demand(&profile, &net, 3).unwrap();
        let mut counts = [0usize; 23];
        for o in &orders {
            counts[(o.release / 600_000) as usize] += 1;
        }
        let modal = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i)).unwrap();
        let bin_start = modal as f64 * 600.0;
        assert!(
            (9_900.0 - 600.0..=11_700.0).contains(&bin_start),
            "modal bin {bin_start}"
        );
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut p = flat(5);
        p.peaks.push(Peak {
            center: 20_000.0,
            width: 10.0,
            amplitude: 1.0,
        });
        assert!(matches!(generate_demand(&p, &net(), 0), Err(DemandError::Profile(_))));
    }

    #[test]
    fn parses_and_validates_rows() {
        let net = net();
        let ok = parse_demand("O 5 10 3\nO 2 0 4\n\nO 9 12.5 7\n", &net, 1_000_000).unwrap();
        assert_eq!(ok.len(), 3);
        assert_eq!(ok[0].label, 2);
        assert_eq!(ok[2].release, 12_500);
        assert!(ok.iter().enumerate().all(|(i, o)| o.id.index() == i));

        let err = parse_demand("O 1 10 3\nO 2 2000 3\n", &net, 1_000_000).unwrap_err();
        assert!(matches!(err, DemandError::LateRelease { line: 2, id: 2, .. }), "{err}");
        let err = parse_demand("O 1 10 99\n", &net, 1_000_000).unwrap_err();
        assert!(matches!(err, DemandError::UnknownDestination { node: 99, .. }));
        let err = parse_demand("O 1 10 3\nO 1 11 4\n", &net, 1_000_000).unwrap_err();
        assert!(matches!(err, DemandError::DuplicateId { line: 2, id: 1 }));
    }

    #[test]
    fn generated_demand_round_trips() {
        let net = net();
        let orders = generate_demand(&flat(200), &net, 5).unwrap();
        let text = demand_to_text(&orders, &net);
        let back = parse_demand(&text, &net, 13_800_000).unwrap();
        assert_eq!(back, orders);
    }
}
