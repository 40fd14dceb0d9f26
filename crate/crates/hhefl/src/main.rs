use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use hhefl::bench::bench_hesd;
use hhefl::config::{parse_config, parse_variant, ExperimentConfig, TransportKind};
use hhefl::metrics::{read_metrics, summarize, write_metrics, MetricsSink};
use hhefl::protocol::Mode;
use hhefl::runner::{
    accept_clients, connect_client, initial_model, load_client_keys, load_data,
    load_server_keys, run_experiment, shards, write_key_files, ClientRole, Observed, RunOptions,
    ServerRole,
};
use hhefl::transport::Link;
use hhefl_core::bfv::{BfvParams, SecurityPreset};

#[derive(Parser)]
#[command(name = "hhefl", version, about = "Federated averaging over PASTA + BFV hybrid encryption")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured mode (plain, bfv, hhe).
    #[arg(long)]
    mode: Option<String>,
    /// Overrides the configured and HHEFL_SEED seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// in-process or tcp:<host:port>.
    #[arg(long)]
    transport: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every role's keys (the third-party authority).
    Keygen(Common),
    /// Run the authority, server and clients in one process.
    RunSim(Common),
    /// Run the aggregation server over TCP.
    RunServer {
        #[command(flatten)]
        common: Common,
        /// Directory written by `keygen`.
        #[arg(long, default_value = "out/keys")]
        keys: PathBuf,
    },
    /// Run one client over TCP.
    RunClient {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        id: u32,
        #[arg(long, default_value = "out/keys")]
        keys: PathBuf,
    },
    /// Time transciphering over growing parameter counts.
    BenchHesd {
        #[arg(long, default_value = "pasta-4")]
        variant: String,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        params: Vec<usize>,
        #[arg(long, default_value = "bfv-16384")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a metrics CSV.
    Report {
        metrics: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut cfg = parse_config(&text)?;
    cfg.apply_env()?;
    if let Some(m) = &common.mode {
        cfg.mode = Mode::from_name(m).with_context(|| format!("unknown mode `{m}`"))?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = &common.transport {
        cfg.transport = match t.as_str() {
            "in-process" => TransportKind::InProcess,
            other => match other.strip_prefix("tcp:") {
                Some(addr) if !addr.is_empty() => TransportKind::Tcp(addr.to_string()),
                _ => bail!("transport must be in-process or tcp:<host:port>"),
            },
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn tcp_addr(cfg: &ExperimentConfig) -> anyhow::Result<&str> {
    match &cfg.transport {
        TransportKind::Tcp(a) => Ok(a),
        TransportKind::InProcess => bail!("this role needs transport = tcp:<host:port>"),
    }
}

fn print_rounds(records_path: &Path, result: &hhefl::runner::ExperimentResult) {
    for r in &result.rounds {
        match r.metrics {
            Some(m) => println!(
                "round {:>3}: {} contributors, n = {:>4}, accuracy {:.4}, loss {:.4}, f1 {:.4}",
                r.round,
                r.contributors.len(),
                r.n,
                m.accuracy,
                m.loss,
                m.f1
            ),
            None => println!("round {:>3}: {} contributors, no evaluation reports", r.round, r.contributors.len()),
        }
    }
    println!("metrics written to {}", records_path.display());
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Keygen(common) => {
            let cfg = load(&common)?;
            let dir = common.out.join("keys");
            write_key_files(&cfg, &dir)?;
            println!("keys for the server and {} clients written to {}", cfg.clients, dir.display());
        }
        Command::RunSim(common) => {
            let cfg = load(&common)?;
            let opts = RunOptions {
                tap: None,
                out: Some(common.out.clone()),
            };
            let result = run_experiment(&cfg, &opts)?;
            print_rounds(&common.out.join("metrics.csv"), &result);
        }
        Command::RunServer { common, keys } => {
            let cfg = load(&common)?;
            let frame = match cfg.mode {
                Mode::Plain => None,
                _ => Some(load_server_keys(&cfg, &keys.join("server"))?),
            };
            let listener = TcpListener::bind(tcp_addr(&cfg)?)?;
            println!("waiting for {} clients on {}", cfg.clients, listener.local_addr()?);
            let links: Vec<Box<dyn Link>> = accept_clients(&listener, &cfg)?
                .into_iter()
                .map(|l| Box::new(l) as Box<dyn Link>)
                .collect();
            let initial: Vec<f32> = initial_model(&cfg)?.params().iter().map(|&x| x as f32).collect();
            let sink = MetricsSink::default();
            let server = ServerRole::new(&cfg, frame.as_ref(), initial, links, sink.clone())?;
            drop(frame);
            for r in server.run()? {
                match r.metrics {
                    Some(m) => println!("round {:>3}: n = {:>4}, accuracy {:.4}, loss {:.4}", r.round, r.n, m.accuracy, m.loss),
                    None => println!("round {:>3}: n = {:>4}, no evaluation reports", r.round, r.n),
                }
            }
            std::fs::create_dir_all(&common.out)?;
            write_metrics(&sink.sorted(), &common.out.join("server-metrics.csv"))?;
        }
        Command::RunClient { common, id, keys } => {
            let cfg = load(&common)?;
            if id as usize >= cfg.clients {
                bail!("client id {id} is out of range");
            }
            let data = Arc::new(load_data(&cfg)?);
            let shard = shards(&cfg, &data)?.swap_remove(id as usize);
            let frame = match cfg.mode {
                Mode::Plain => None,
                _ => Some(load_client_keys(&cfg, &keys.join(format!("client-{id}")), id)?),
            };
            let sink = MetricsSink::default();
            let role = ClientRole::new(&cfg, id, frame.as_ref(), data, shard, sink.clone(), Observed::default())?;
            role.run(connect_client(tcp_addr(&cfg)?, id)?)?;
            std::fs::create_dir_all(&common.out)?;
            write_metrics(&sink.sorted(), &common.out.join(format!("client-{id}-metrics.csv")))?;
        }
        Command::BenchHesd {
            variant,
            params,
            preset,
            seed,
        } => {
            let v = parse_variant(&variant).with_context(|| format!("unknown variant `{variant}`"))?;
            let p = SecurityPreset::from_name(&preset).with_context(|| format!("unknown preset `{preset}`"))?;
            let table = bench_hesd(v, &params, &BfvParams::preset(p)?, hhefl_core::rng::seed_from_u64(seed))?;
            print!("{table}");
        }
        Command::Report { metrics } => {
            let records = read_metrics(&metrics)?;
            println!("{:<10} {:>6} {:>14} {:>14}", "phase", "rows", "bytes_up", "bytes_down");
            for (phase, rows, up, down) in summarize(&records) {
                println!("{:<10} {:>6} {:>14} {:>14}", phase, rows, up, down);
            }
            for r in records.iter().filter(|r| r.phase == Some(hhefl::metrics::Phase::Global)) {
                if let (Some(a), Some(l)) = (r.accuracy, r.loss) {
                    println!("round {:>3}: accuracy {:.4}, loss {:.4}", r.round, a, l);
                }
            }
        }
    }
    Ok(())
}
