//! Scenario files, overrides, single runs and parameter sweeps.
//!
//! A scenario file is TOML. Top-level keys are the [`ScenarioConfig`] keys;
//! the `[network]`, `[depots]` and `[demand]` tables say where the graph,
//! the depot set and the orders come from. Relative paths are resolved
//! against the file's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::run_greedy_day;
use crate::demand::{demand_to_text, generate_demand, load_demand, DemandError, DemandProfile, Peak};
use crate::engine::{reinsert_limit, run_day_with, DayRun, EngineError, EngineOptions};
use crate::model::{ConfigError, Order, ScenarioConfig};
use crate::network::{depots_to_text, grid_network, k_center_depots, load_depots, load_network, Network, NetworkError};
use crate::report::KpiReport;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Toml { path: String, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Dispatch strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Rolling-horizon trip generation and exact assignment.
    #[default]
    Full,
    /// Event-driven cheapest insertion.
    Greedy,
}

impl FromStr for Strategy {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "greedy" => Ok(Self::Greedy),
            other => Err(ScenarioError::Invalid(format!(
                "unknown strategy `{other}` (expected full or greedy)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Metres between neighbours.
    pub spacing: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

/// Depots from a file, or `depot_count` k-center depots otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepotSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_restarts() -> usize {
    20
}

impl Default for DepotSource {
    fn default() -> Self {
        Self {
            file: None,
            restarts: default_restarts(),
            seed: 0,
        }
    }
}

/// Release profile; the horizon and quiet tail come from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub total_orders: usize,
    pub base_rate: f64,
    #[serde(default)]
    pub peaks: Vec<Peak>,
}

/// Orders from a file, or drawn from a profile with the scenario seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSpec>,
}

/// Contents of a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub strategy: Strategy,
    pub network: NetworkSource,
    pub depots: DepotSource,
    pub demand: DemandSource,
}

const SECTIONS: [&str; 3] = ["network", "depots", "demand"];

/// Short names accepted for overrides and sweeps.
fn canonical_key(key: &str) -> &str {
    match key {
        "x" => "depots_per_order",
        "beta" => "cost_weight",
        "order_count" => "demand.profile.total_orders",
        other => other,
    }
}

fn scenario_keys() -> Vec<String> {
    match toml::Value::try_from(ScenarioConfig::default()) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => unreachable!("config serializes to a table"),
    }
}

/// Parses an override value: a TOML literal when it is one, else a string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key` (dotted for nested tables, short names allowed) in a raw
/// scenario table.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let key = canonical_key(key);
    let parts: Vec<&str> = key.split('.').collect();
    let known = if parts.len() == 1 {
        parts[0] == "strategy" || scenario_keys().iter().any(|k| k == parts[0])
    } else {
        SECTIONS.contains(&parts[0])
    };
    if !known {
        return Err(ScenarioError::UnknownKey(key.to_string()));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ScenarioError::Invalid(format!("`{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

fn section<T: for<'de> Deserialize<'de> + Default>(
    table: &mut toml::Table,
    name: &str,
    path: &str,
) -> Result<T, ScenarioError> {
    match table.remove(name) {
        None => Ok(T::default()),
        Some(v) => v.try_into().map_err(|e: toml::de::Error| ScenarioError::Toml {
            path: path.to_string(),
            msg: format!("[{name}]: {}", e.message()),
        }),
    }
}

impl RunConfig {
    /// Builds a config from a raw table. `origin` names the source in
    /// diagnostics; `base` resolves relative paths.
    pub fn from_table(mut table: toml::Table, origin: &str, base: &Path) -> Result<Self, ScenarioError> {
        let strategy = match table.remove("strategy") {
            None => Strategy::Full,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => {
                return Err(ScenarioError::Invalid(format!(
                    "strategy must be a string, got {other}"
                )))
            }
        };
        let mut network: NetworkSource = section(&mut table, "network", origin)?;
        let mut depots: DepotSource = section(&mut table, "depots", origin)?;
        let mut demand: DemandSource = section(&mut table, "demand", origin)?;
        let known = scenario_keys();
        if let Some(k) = table.keys().find(|k| !known.contains(k)) {
            return Err(ScenarioError::UnknownKey(k.clone()));
        }
        let scenario: ScenarioConfig =
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| ScenarioError::Toml {
                    path: origin.to_string(),
                    msg: e.message().to_string(),
                })?;
        scenario.validate()?;
        let absolute = |p: &mut Option<PathBuf>| {
            if let Some(f) = p {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        };
        absolute(&mut network.file);
        absolute(&mut depots.file);
        absolute(&mut demand.file);
        let cfg = Self {
            scenario,
            strategy,
            network,
            depots,
            demand,
        };
        cfg.check_sources()?;
        Ok(cfg)
    }

    fn check_sources(&self) -> Result<(), ScenarioError> {
        match (&self.network.file, &self.network.grid) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(ScenarioError::Invalid(
                    "[network] needs exactly one of `file` or `grid`".into(),
                ))
            }
        }
        match (&self.demand.file, &self.demand.profile) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(ScenarioError::Invalid(
                    "[demand] needs exactly one of `file` or `profile`".into(),
                ))
            }
        }
        if self.depots.restarts == 0 {
            return Err(ScenarioError::Invalid("[depots] restarts must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads a scenario file and applies `overrides` in order.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let origin = path.display().to_string();
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Toml {
            path: origin.clone(),
            msg: e.message().to_string(),
        })?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_table(table, &origin, &base)
    }

    /// Raw table form; loading it back gives the same config.
    pub fn to_table(&self) -> toml::Table {
        let mut t = match toml::Value::try_from(&self.scenario) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        t.insert("strategy".into(), toml::Value::String(self.strategy.to_string()));
        let mut put = |name: &str, v: Result<toml::Value, toml::ser::Error>| {
            t.insert(name.into(), v.expect("plain section"));
        };
        put("network", toml::Value::try_from(&self.network));
        put("depots", toml::Value::try_from(&self.depots));
        put("demand", toml::Value::try_from(&self.demand));
        t
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("plain table")
    }

    /// Loads or generates graph, depots and orders.
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let cfg = &self.scenario;
        let graph = match (&self.network.file, &self.network.grid) {
            (Some(f), _) => load_network(f, cfg.speed)?,
            (None, Some(g)) => grid_network(g.rows, g.cols, g.spacing, cfg.speed)?,
            (None, None) => unreachable!("checked on load"),
        };
        let depots = match &self.depots.file {
            Some(f) => {
                let d = load_depots(f, &graph)?;
                if d.len() != cfg.depot_count {
                    return Err(ScenarioError::Invalid(format!(
                        "depot_count = {} but {} lists {} depots",
                        cfg.depot_count,
                        f.display(),
                        d.len()
                    )));
                }
                d
            }
            None => k_center_depots(&graph, cfg.depot_count, self.depots.restarts, self.depots.seed)?.depots,
        };
        let net = graph.with_depots(depots)?;
        let orders = match (&self.demand.file, &self.demand.profile) {
            (Some(f), _) => load_demand(f, &net, cfg.last_release())?,
            (None, Some(p)) => generate_demand(&self.profile(p), &net, cfg.seed)?,
            (None, None) => unreachable!("checked on load"),
        };
        reinsert_limit(cfg.params().delay_real, cfg.params().delay_heuristic)?;
        Ok(Scenario {
            config: self.clone(),
            net,
            orders,
        })
    }

    fn profile(&self, p: &ProfileSpec) -> DemandProfile {
        DemandProfile {
            total_orders: p.total_orders,
            horizon: self.scenario.day_end,
            quiet_tail: self.scenario.quiet_tail,
            base_rate: p.base_rate,
            peaks: p.peaks.clone(),
        }
    }
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub net: Network,
    pub orders: Vec<Order>,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub day: DayRun,
    pub wall_secs: f64,
}

impl Scenario {
    pub fn run(&self) -> Result<RunOutcome, ScenarioError> {
        self.run_with(None)
    }

    /// Like [`Scenario::run`]; the dispatcher also writes each epoch's
    /// assignment model to `lp_dump`.
    pub fn run_with(&self, lp_dump: Option<PathBuf>) -> Result<RunOutcome, ScenarioError> {
        let began = Instant::now();
        let cfg = &self.config.scenario;
        let day = match self.config.strategy {
            Strategy::Full => {
                let opts = EngineOptions {
                    lp_dump,
                    ..EngineOptions::from_config(cfg)
                };
                run_day_with(cfg, &self.net, self.orders.clone(), opts)?
            }
            Strategy::Greedy => run_greedy_day(cfg, &self.net, self.orders.clone())?,
        };
        Ok(RunOutcome {
            day,
            wall_secs: began.elapsed().as_secs_f64(),
        })
    }

    pub fn summary(&self) -> String {
        let cfg = &self.config.scenario;
        let p = cfg.params();
        let zeta = reinsert_limit(p.delay_real, p.delay_heuristic).unwrap_or(0);
        format!(
            "{} nodes, {} arcs, {} depots, {} orders, {} vehicles of capacity {}, x = {}, zeta = {}, strategy {}",
            self.net.node_count(),
            self.net.arc_count(),
            self.net.depots().len(),
            self.orders.len(),
            cfg.fleet_size,
            cfg.capacity,
            cfg.depots_per_order,
            zeta,
            self.config.strategy
        )
    }

    /// Writes the event log, KPI files, histograms, the per-epoch
    /// diagnostics, the depot and order files, and the resolved config.
    pub fn write_outputs(&self, out: &RunOutcome, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let day = &out.day;
        let k = &day.kpis;
        let mut epochs = String::from(
            "index,time,placed,candidates,trips,tripgen_truncated,proof,assigned,rejected_now,reinserted,ignored,tripgen_secs,solve_secs\n",
        );
        for e in &day.epochs {
            let proof = match e.proof {
                Some(p) => serde_json::to_value(p)
                    .expect("plain enum")
                    .as_str()
                    .unwrap_or("")
                    .to_string(),
                None => String::new(),
            };
            let _ = writeln!(
                epochs,
                "{},{},{},{},{},{},{},{},{},{},{},{:.4},{:.4}",
                e.index,
                crate::time::format_secs(e.time),
                e.placed,
                e.candidates,
                e.trips,
                e.tripgen_truncated,
                proof,
                e.assigned,
                e.rejected_now,
                e.reinserted,
                e.ignored,
                e.tripgen_secs,
                e.solve_secs
            );
        }
        // Orders and depots are written as resolved, so the copied config
        // points at them rather than at the original sources.
        let mut resolved = self.config.clone();
        resolved.network = NetworkSource {
            file: Some(dir.join("graph.txt")),
            grid: None,
        };
        resolved.depots.file = Some(dir.join("depots.txt"));
        resolved.demand = DemandSource {
            file: Some(dir.join("orders.txt")),
            profile: None,
        };
        let files: [(&str, String); 11] = [
            ("events.jsonl", day.log.to_json_lines(&self.net, &self.orders)),
            ("kpi.csv", k.to_csv()),
            ("kpi.json", k.to_json()),
            ("delay_histogram.csv", k.delay_histogram_csv()),
            ("depot_rank.csv", k.depot_rank_csv()),
            ("epoch_series.csv", k.epoch_series_csv()),
            ("epochs.csv", epochs),
            ("graph.txt", self.net.to_graph_text()),
            ("depots.txt", depots_to_text(&self.net, self.net.depots())),
            ("orders.txt", demand_to_text(&self.orders, &self.net)),
            ("config.toml", resolved.to_toml()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Parameters a sweep may vary.
pub const SWEEP_KEYS: [&str; 8] = [
    "x",
    "depots_per_order",
    "depot_count",
    "fleet_size",
    "order_count",
    "cost_weight",
    "beta",
    "max_delay_real",
];

/// One row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub kpis: KpiReport,
    pub exact: bool,
    pub wall_secs: f64,
}

/// Checks a sweep request before any run starts.
pub fn check_sweep(param: &str, values: &[String]) -> Result<(), ScenarioError> {
    if !SWEEP_KEYS.contains(&param) {
        return Err(ScenarioError::UnknownKey(format!(
            "{param} (sweepable: {})",
            SWEEP_KEYS.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(ScenarioError::Invalid("sweep needs at least one value".into()));
    }
    Ok(())
}

/// Runs `config` once per value of `param`, writing each run to
/// `out/<param>=<value>` and returning rows in value order. Runs execute on
/// the current rayon pool.
pub fn sweep(
    path: &Path,
    overrides: &[(String, String)],
    param: &str,
    values: &[String],
    out: &Path,
) -> Result<Vec<SweepRow>, ScenarioError> {
    use rayon::prelude::*;
    check_sweep(param, values)?;
    let configs = values
        .iter()
        .map(|v| {
            let mut o = overrides.to_vec();
            o.push((param.to_string(), v.clone()));
            RunConfig::load(path, &o)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| {
            let sc = cfg.build()?;
            let res = sc.run()?;
            sc.write_outputs(&res, &out.join(format!("{param}={}", v.replace('/', "_"))))?;
            Ok(SweepRow {
                value: v.clone(),
                exact: res.day.exact(),
                kpis: res.day.kpis,
                wall_secs: res.wall_secs,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let path = out.join("sweep.csv");
    fs::write(&path, sweep_csv(param, &rows)).map_err(io_err(&path))?;
    Ok(rows)
}

/// Comparison table: one row per value, KPI columns.
pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{param},{},exact\n", KpiReport::csv_header());
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.value, r.kpis.csv_row(), r.exact);
    }
    s
}
