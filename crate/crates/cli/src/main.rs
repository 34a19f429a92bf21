//! `slalab`: run SLA enforcement experiments and turn their traces into plot data.

use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use tracing::{error, info};
use tracing_subscriber::EnvFilter;

use slalab_core::scenario::{
    emit_plotdata, live_stats, load_scenario, run_experiment, ConfigError, GnbNode, Mode, RicNode, RunError,
    RunOutput, ScenarioConfig,
};
use slalab_core::PolicyKind;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "slalab", version, about = "Closed-loop GBR enforcement over a simulated 5G cell")]
struct Cli {
    /// tracing filter, e.g. `info` or `slalab_core::ric=debug`
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Soft,
    Strict,
    Baseline,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Soft => PolicyKind::Soft,
            PolicyArg::Strict => PolicyKind::Strict,
            PolicyArg::Baseline => PolicyKind::Baseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Det,
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario's policy.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Pacing factor for live mode.
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the long schedule (paper_traffic, paper_duration_s).
        #[arg(long)]
        paper_timeline: bool,
    },
    /// Split a trace into per-UE series and a violation bar file.
    Plotdata {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Host the controller and the SLA xApp; agents connect over TCP.
    Ric {
        #[arg(long, default_value = "127.0.0.1:36421")]
        listen: SocketAddr,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Stop after this many seconds; runs until killed otherwise.
        #[arg(long)]
        for_s: Option<f64>,
    },
    /// Run one gNB (scheduler and agent) against a remote controller.
    Gnb {
        #[arg(long, default_value = "127.0.0.1:36421")]
        connect: SocketAddr,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &PathBuf, policy: Option<PolicyArg>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load_scenario(path)?;
    if let Some(p) = policy {
        cfg.policy = p.into();
    }
    Ok(cfg)
}

fn apply_speed(cfg: &mut ScenarioConfig, speed: Option<f64>) -> Result<(), Failure> {
    if let Some(s) = speed {
        if !(s.is_finite() && s > 0.0) {
            return Err(Failure::Config(format!("--speed must be positive, got {s}")));
        }
        cfg.speed = s;
    }
    Ok(())
}

fn print_summary(out: &RunOutput) {
    let s = &out.summary;
    println!("policy {} ({}), {} windows", s.policy, s.mode, s.windows);
    for u in &s.ues {
        println!(
            "  UE{}  gbr {:>6.2}  mean {:>6.2}  steady {:>6.2}  violation {:>6.3} Mbps",
            u.ue_id, u.gbr_mbps, u.mean_throughput_mbps, u.steady_throughput_mbps, u.mean_violation_mbps
        );
    }
    println!(
        "  total violation {:.3} Mbps, {} controls, contention {:.1} s",
        s.total_violation_mbps, s.command_count, s.contention_duration_s
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            policy,
            mode,
            speed,
            out,
            paper_timeline,
        } => {
            let mut cfg = load(&config, policy)?;
            if paper_timeline {
                cfg = cfg.with_paper_timeline()?;
            }
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Det => Mode::Det,
                    ModeArg::Live => Mode::Live,
                };
            }
            apply_speed(&mut cfg, speed)?;
            let dir = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let result = run_experiment(&cfg)?;
            let (trace, summary) = result.write(&dir)?;
            print_summary(&result);
            println!("wrote {} and {}", trace.display(), summary.display());
        }
        Command::Plotdata { trace, out } => {
            let files = emit_plotdata(&trace, &out).map_err(|e| Failure::Runtime(e.to_string()))?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Ric {
            listen,
            config,
            policy,
            for_s,
        } => {
            let cfg = load(&config, policy)?;
            let listener = TcpListener::bind(listen).map_err(|e| Failure::Runtime(format!("bind {listen}: {e}")))?;
            let node = RicNode::start(&cfg, listener)?;
            println!("controller listening on {}", node.addr);
            let until = for_s.map(|s| Instant::now() + Duration::from_secs_f64(s));
            while until.map_or(true, |u| Instant::now() < u) {
                thread::sleep(Duration::from_millis(100));
            }
            let outcome = node.stop();
            println!(
                "{} decisions, {} controls issued",
                outcome.decisions.len(),
                outcome.counters.controls_issued
            );
        }
        Command::Gnb {
            connect,
            config,
            speed,
            out,
        } => {
            let mut cfg = load(&config, None)?;
            apply_speed(&mut cfg, speed)?;
            let node = GnbNode::start(&cfg, connect)?;
            info!(%connect, "waiting for a report subscription");
            while !node.sim_finished() {
                thread::sleep(Duration::from_millis(20));
            }
            let g = node.stop();
            let stats = live_stats(&cfg, &g.trace, &[], &g.acks, 0);
            println!(
                "{} windows reported, {} controls applied",
                stats.indications_expected, g.sim_counters.commands_applied
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                let path = dir.join("sim_trace.csv");
                std::fs::write(&path, g.trace.to_csv()).map_err(|e| Failure::Runtime(e.to_string()))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            error!("{msg}");
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            error!("{msg}");
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
