use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use snipnet::bench::{
    self, parse_payloads, BenchConfig, DeviceKind, EntryLayer, HeaderModel, NeighSpec, RouteSpec,
};
use snipnet::netdev::medium::MediumParams;

#[derive(Parser)]
#[command(name = "snipnet", version, about = "Network stack measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark runs.
    Bench {
        #[command(subcommand)]
        kind: BenchKind,
    },
}

#[derive(Subcommand)]
enum BenchKind {
    /// Per-layer processing cost and packet rate.
    Layer(RunArgs),
    /// Application goodput.
    Goodput(RunArgs),
    /// Airtime bound of the simulated radio.
    Theory(TheoryArgs),
}

#[derive(Args)]
struct Common {
    /// Payload sizes: `a:b:step`, `a:b` or `n1,n2,...`.
    #[arg(long, default_value = "0:1200:100")]
    payload: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Medium parameter file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "reflector")]
    device: DeviceKind,
    #[arg(long, default_value = "sock_udp")]
    entry: EntryLayer,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Extra route, e.g. `prefix=2001:db8::/32,via=fe80::2`.
    #[arg(long)]
    route: Vec<RouteSpec>,
    /// Extra neighbor, e.g. `ip=fe80::3,l2=00:03`.
    #[arg(long)]
    neigh: Vec<NeighSpec>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: Common,
}

fn base_config(c: &Common) -> Result<BenchConfig> {
    let medium = match &c.config {
        Some(p) => MediumParams::from_file(p)?,
        None => MediumParams::default(),
    };
    Ok(BenchConfig {
        payloads: parse_payloads(&c.payload)?,
        seed: c.seed,
        headers: HeaderModel::for_medium(&medium),
        medium,
        ..BenchConfig::default()
    })
}

fn run_config(a: &RunArgs) -> Result<BenchConfig> {
    let cfg = BenchConfig {
        entry: a.entry,
        device: a.device,
        repetitions: a.reps,
        routes: a.route.clone(),
        neighbors: a.neigh.clone(),
        ..base_config(&a.common)?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emit(rows: &[bench::Row], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => bench::write_csv(rows, p).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bench::to_csv(rows)?.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let Command::Bench { kind } = cli.command;
    match kind {
        BenchKind::Layer(a) => {
            let cfg = run_config(&a)?;
            emit(&bench::bench_layer(&cfg)?, a.common.out.as_ref())
        }
        BenchKind::Goodput(a) => {
            let cfg = run_config(&a)?;
            emit(&bench::bench_goodput(&cfg)?, a.common.out.as_ref())
        }
        BenchKind::Theory(a) => {
            let cfg = base_config(&a.common)?;
            emit(&bench::bench_theory(&cfg), a.common.out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
