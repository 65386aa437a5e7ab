//! `depotflow`: run, sweep and author delivery dispatch scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use depotflow::demand::{demand_to_text, generate_demand, DemandProfile, Peak};
use depotflow::engine::EventLog;
use depotflow::network::{depots_to_text, grid_network, k_center_depots, load_depots, load_network};
use depotflow::report::{replay, AuditRules};
use depotflow::scenario::{check_sweep, sweep, sweep_csv, RunConfig, Strategy};

/// Environment variable holding the worker thread count.
const WORKERS_VAR: &str = "DEPOTFLOW_WORKERS";

#[derive(Parser)]
#[command(
    name = "depotflow",
    version,
    about = "Multi-depot same-day delivery dispatch simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Full,
    Greedy,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one day and write the event log, KPIs and resolved config.
    ///
    /// Config keys can be overridden after the config path as
    /// `--key value` (for example `--fleet_size 10 --x 1`).
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        /// Write every epoch's assignment model in LP format here.
        #[arg(long)]
        lp_dump: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// One run per value of a parameter, plus a comparison table.
    Sweep {
        config: PathBuf,
        /// x, depots_per_order, depot_count, fleet_size, order_count,
        /// cost_weight, beta or max_delay_real.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long, short, default_value = "sweep")]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Write a grid graph.
    GenGrid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Metres between neighbours.
        #[arg(long, default_value_t = 200.0)]
        spacing: f64,
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Place depots by greedy farthest-point k-center.
    GenDepots {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Draw orders from a release profile.
    GenDemand {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        depots: PathBuf,
        #[arg(long)]
        orders: usize,
        /// End of the day in seconds.
        #[arg(long, default_value_t = 14_400.0)]
        horizon: f64,
        #[arg(long, default_value_t = 600.0)]
        quiet_tail: f64,
        #[arg(long, default_value_t = 1.0)]
        base_rate: f64,
        /// Peak as `center:width:amplitude` in seconds and relative rate.
        #[arg(long = "peak", value_parser = parse_peak)]
        peaks: Vec<Peak>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a grid, its depots and an order file into one directory.
    GenScenario {
        #[arg(long, default_value_t = 20)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        cols: usize,
        #[arg(long, default_value_t = 200.0)]
        spacing: f64,
        #[arg(long, default_value_t = 5)]
        depots: usize,
        #[arg(long, default_value_t = 500)]
        orders: usize,
        #[arg(long, default_value_t = 14_400.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Check a config and its inputs; with `--log`, audit an event log.
    Validate {
        config: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
}

fn parse_peak(s: &str) -> Result<Peak, String> {
    let f: Vec<&str> = s.split(':').collect();
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}` in peak `{s}`"));
    match f.as_slice() {
        [c, w, a] => Ok(Peak {
            center: num(c)?,
            width: num(w)?,
            amplitude: num(a)?,
        }),
        _ => Err(format!("peak `{s}` is not center:width:amplitude")),
    }
}

/// Turns `--key value` / `--key=value` tokens into pairs.
fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(key) = tok.strip_prefix("--") else {
            bail!("expected `--key value`, got `{tok}`");
        };
        match key.split_once('=') {
            Some((k, v)) => out.push((k.replace('-', "_"), v.to_string())),
            None => {
                let v = it.next().with_context(|| format!("`--{key}` needs a value"))?;
                out.push((key.replace('-', "_"), v.clone()));
            }
        }
    }
    Ok(out)
}

fn with_strategy(mut overrides: Vec<(String, String)>, s: Option<StrategyArg>) -> Vec<(String, String)> {
    if let Some(s) = s {
        let name = match s {
            StrategyArg::Full => Strategy::Full,
            StrategyArg::Greedy => Strategy::Greedy,
        };
        overrides.push(("strategy".into(), name.to_string()));
    }
    overrides
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_VAR) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("{WORKERS_VAR} must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Two-peak profile of the desk scenario, scaled to `horizon`.
fn desk_profile(orders: usize, horizon: f64) -> DemandProfile {
    let peak = |center: f64| Peak {
        center,
        width: horizon * 5.0 / 72.0,
        amplitude: 4.0,
    };
    DemandProfile {
        total_orders: orders,
        horizon,
        quiet_tail: 600.0_f64.min(horizon / 4.0),
        base_rate: 1.0,
        peaks: vec![peak(horizon / 4.0), peak(horizon * 3.0 / 4.0)],
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run {
            config,
            strategy,
            out,
            lp_dump,
            overrides,
        } => {
            let overrides = with_strategy(parse_overrides(&overrides)?, strategy);
            let sc = RunConfig::load(&config, &overrides)?.build()?;
            eprintln!("{}", sc.summary());
            let res = sc.run_with(lp_dump)?;
            sc.write_outputs(&res, &out)?;
            let exact = if res.day.exact() {
                ""
            } else {
                " (some epochs hit a budget)"
            };
            eprintln!(
                "finished in {:.1} s{exact}; outputs in {}",
                res.wall_secs,
                out.display()
            );
            print!("{}", res.day.kpis.to_csv());
        }
        Cmd::Sweep {
            config,
            param,
            values,
            strategy,
            out,
            overrides,
        } => {
            if let Err(e) = check_sweep(&param, &values) {
                Cli::command().error(ErrorKind::InvalidValue, e).exit();
            }
            let overrides = with_strategy(parse_overrides(&overrides)?, strategy);
            let rows = sweep(&config, &overrides, &param, &values, &out)?;
            print!("{}", sweep_csv(&param, &rows));
        }
        Cmd::GenGrid {
            rows,
            cols,
            spacing,
            speed,
            out,
        } => {
            let net = grid_network(rows, cols, spacing, speed)?;
            write(&out, &net.to_graph_text())?;
        }
        Cmd::GenDepots {
            network,
            k,
            restarts,
            seed,
            speed,
            out,
        } => {
            let net = load_network(&network, speed)?;
            let kc = k_center_depots(&net, k, restarts, seed)?;
            eprintln!("covering radius {} s", depotflow::time::format_secs(kc.objective));
            write(&out, &depots_to_text(&net, &kc.depots))?;
        }
        Cmd::GenDemand {
            network,
            depots,
            orders,
            horizon,
            quiet_tail,
            base_rate,
            peaks,
            seed,
            speed,
            out,
        } => {
            let graph = load_network(&network, speed)?;
            let d = load_depots(&depots, &graph)?;
            let net = graph.with_depots(d)?;
            let profile = DemandProfile {
                total_orders: orders,
                horizon,
                quiet_tail,
                base_rate,
                peaks,
            };
            let o = generate_demand(&profile, &net, seed)?;
            write(&out, &demand_to_text(&o, &net))?;
        }
        Cmd::GenScenario {
            rows,
            cols,
            spacing,
            depots,
            orders,
            horizon,
            seed,
            out,
        } => {
            let graph = grid_network(rows, cols, spacing, 10.0)?;
            let kc = k_center_depots(&graph, depots, 20, seed)?;
            let net = graph.with_depots(kc.depots.clone())?;
            let o = generate_demand(&desk_profile(orders, horizon), &net, seed)?;
            write(&out.join("graph.txt"), &net.to_graph_text())?;
            write(&out.join("depots.txt"), &depots_to_text(&net, &kc.depots))?;
            write(&out.join("orders.txt"), &demand_to_text(&o, &net))?;
            let cfg = format!(
                "depot_count = {depots}\nday_end = {horizon}\nquiet_tail = {}\nseed = {seed}\n\n\
                 [network]\nfile = \"graph.txt\"\n\n[depots]\nfile = \"depots.txt\"\n\n[demand]\nfile = \"orders.txt\"\n",
                desk_profile(orders, horizon).quiet_tail
            );
            write(&out.join("scenario.toml"), &cfg)?;
        }
        Cmd::Validate { config, log, overrides } => {
            let sc = RunConfig::load(&config, &parse_overrides(&overrides)?)?.build()?;
            println!("{}", sc.summary());
            if let Some(path) = log {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let log = EventLog::from_json_lines(&text, &sc.net, &sc.orders)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                let p = sc.config.scenario.params();
                replay(
                    &log,
                    &sc.orders,
                    &sc.net,
                    &p,
                    sc.config.scenario.fleet_size,
                    AuditRules::from_params(&p),
                )
                .with_context(|| format!("{} fails the audit", path.display()))?;
                println!("{}: {} events pass the audit", path.display(), log.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers().and_then(|()| run(cli.cmd)) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
