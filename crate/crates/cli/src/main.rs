use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;

use crowdsense::blur::{blurriness, edge_sharpness, parse_pnm};
use crowdsense::harness::{
    bench_confirm, bench_stages, confirm_csv, linear_fit, Config, ConfigError, CONFIRM_USERS,
};
use crowdsense::net::{spawn_clock, wall_slot, Metrics, NetServer, TcpTransport};
use crowdsense::protocol::{Client, ClientError, Server};

const EXIT_FAILURE: u8 = 1;
const EXIT_REJECTED: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(name = "crowdsense", version, about = "Privacy-preserving parking crowdsensing")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set group_bits=512`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Server(ServerCmd),
    #[command(subcommand)]
    Client(ClientCmd),
    #[command(subcommand)]
    Blur(BlurCmd),
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum ServerCmd {
    /// Serve requests until killed.
    Run,
}

#[derive(Args)]
struct Conn {
    /// Client state file.
    #[arg(long)]
    state: PathBuf,
    /// Server address; defaults to the config's `listen`.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Subcommand)]
enum ClientCmd {
    /// Obtain a credential and write a new state file.
    Register {
        #[command(flatten)]
        conn: Conn,
        /// Replace an existing state file.
        #[arg(long)]
        force: bool,
    },
    /// Report whether a space is available.
    Submit {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        space: String,
        /// 1 if the space is free, 0 if occupied.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        available: u8,
        /// Time slot; defaults to the current wall-clock slot.
        #[arg(long)]
        slot: Option<u64>,
    },
    /// Collect the credit for an earlier submission.
    Claim {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        space: String,
        #[arg(long)]
        slot: u64,
    },
    /// Spend credits on the status of one or more spaces.
    Inquire {
        #[command(flatten)]
        conn: Conn,
        #[arg(long = "space", required = true)]
        spaces: Vec<String>,
    },
    /// Print the balance and pending tickets.
    Show {
        #[arg(long)]
        state: PathBuf,
    },
}

#[derive(Subcommand)]
enum BlurCmd {
    /// Blurriness of BLURRED relative to ORIGINAL (plain PGM/PPM files).
    Compute { original: PathBuf, blurred: PathBuf },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Mean time and bytes per protocol stage.
    Stages {
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Confirmation time against the number of simultaneous users.
    Confirm {
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Client(ClientError),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Client(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn connect(cfg: &Config, conn: &Conn) -> Result<TcpTransport, Failure> {
    let addr = conn.server.as_deref().unwrap_or(&cfg.listen);
    TcpTransport::connect(addr)
        .and_then(|t| t.with_timeout(Some(Duration::from_secs(120))))
        .map_err(|e| Failure::Client(ClientError::Transport(format!("{addr}: {e}"))))
}

fn load_state(path: &Path) -> Result<Client, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Client::from_state_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn save_state(path: &Path, client: &Client) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, client.to_state_string())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn run_server(cfg: &Config) -> Result<(), Failure> {
    let server_cfg = cfg.server_config(&mut OsRng)?;
    let mut server = Server::new(server_cfg);
    if let Some(j) = &cfg.journal {
        server = server.with_journal(j)?;
    }
    let server = Arc::new(server.on_wall_clock());
    // still needed to finalize windows while no requests arrive
    let _clock = spawn_clock(server.clone(), Arc::new(AtomicBool::new(false)));
    let net = NetServer::start(server, cfg.listen.as_str(), Arc::new(Metrics::new()), Some(Duration::from_secs(300)))?;
    println!("listening on {}", net.local_addr());
    net.wait();
    Ok(())
}

fn run_client(cfg: &Config, cmd: &ClientCmd) -> Result<(), Failure> {
    match cmd {
        ClientCmd::Register { conn, force } => {
            if conn.state.exists() && !force {
                return Err(Failure::Usage(format!("{} exists; pass --force to replace it", conn.state.display())));
            }
            let mut t = connect(cfg, conn)?;
            let client = Client::register(&mut t, &mut OsRng)?;
            save_state(&conn.state, &client)?;
            println!("registered; balance {}", client.balance());
        }
        ClientCmd::Submit { conn, space, available, slot } => {
            let mut client = load_state(&conn.state)?;
            let mut t = connect(cfg, conn)?.with_params(client.params().clone());
            let slot = slot.unwrap_or_else(|| wall_slot(Duration::from_secs(cfg.slot_length)));
            client.prune_tickets(slot);
            client.submit(&mut t, space, slot, *available == 1, &mut OsRng)?;
            save_state(&conn.state, &client)?;
            println!("accepted {space} at slot {slot}");
        }
        ClientCmd::Claim { conn, space, slot } => {
            let mut client = load_state(&conn.state)?;
            let mut t = connect(cfg, conn)?.with_params(client.params().clone());
            let result = client.claim(&mut t, space, *slot, &mut OsRng);
            save_state(&conn.state, &client)?;
            let credit = result?;
            println!("claimed {credit}; balance {}", client.balance());
        }
        ClientCmd::Inquire { conn, spaces } => {
            let mut client = load_state(&conn.state)?;
            let mut t = connect(cfg, conn)?.with_params(client.params().clone());
            let statuses = client.inquire(&mut t, spaces, &mut OsRng)?;
            save_state(&conn.state, &client)?;
            for (j, s) in spaces.iter().zip(statuses) {
                println!("{j} {}", s.tag());
            }
            println!("balance {}", client.balance());
        }
        ClientCmd::Show { state } => {
            let client = load_state(state)?;
            println!("balance {}", client.balance());
            for (j, t, a) in client.tickets() {
                println!("ticket {j} {t} {}", u8::from(a));
            }
        }
    }
    Ok(())
}

fn run_blur(original: &Path, blurred: &Path) -> Result<(), Failure> {
    let read = |p: &Path| -> Result<_, Failure> {
        let bytes = fs::read(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        parse_pnm(&bytes).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
    };
    let (a, b) = (read(original)?, read(blurred)?);
    let value = blurriness(&a, &b).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("sharpness_original {}", edge_sharpness(&a));
    println!("sharpness_blurred {}", edge_sharpness(&b));
    println!("blurriness {value}");
    Ok(())
}

fn run_bench(cfg: &Config, cmd: &BenchCmd) -> Result<(), Failure> {
    let server_cfg = cfg.server_config(&mut OsRng)?;
    let bench_err = |e: crowdsense::harness::BenchError| match e {
        crowdsense::harness::BenchError::Client(c) => Failure::Client(c),
        other => Failure::Client(ClientError::Transport(other.to_string())),
    };
    match cmd {
        BenchCmd::Stages { reps, seed } => {
            let stats = bench_stages(server_cfg, *reps, *seed).map_err(bench_err)?;
            println!("{:<13}{:>12}{:>12}{:>12}{:>12}", "stage", "user s", "server s", "user B", "server B");
            for s in &stats {
                println!(
                    "{:<13}{:>12.6}{:>12.6}{:>12.0}{:>12.0}",
                    s.stage, s.user_time_s, s.server_time_s, s.user_bytes, s.server_bytes
                );
            }
            for s in &stats {
                for line in s.csv_lines() {
                    println!("{line}");
                }
            }
        }
        BenchCmd::Confirm { reps, users, seed } => {
            let users = users.clone().unwrap_or_else(|| CONFIRM_USERS.to_vec());
            if users.is_empty() || users.contains(&0) {
                return Err(Failure::Usage("--users needs positive counts".into()));
            }
            let points = bench_confirm(server_cfg, &users, *reps, *seed).map_err(bench_err)?;
            println!("{:>6}{:>14}{:>14}", "users", "same s", "distinct s");
            for p in &points {
                println!("{:>6}{:>14.6}{:>14.6}", p.users, p.same_space_s, p.distinct_space_s);
            }
            if points.len() >= 2 {
                let (slope, _, r2) =
                    linear_fit(&points.iter().map(|p| (p.users as f64, p.same_space_s)).collect::<Vec<_>>());
                println!("same-space fit: slope {slope:.6} s/user, r2 {r2:.4}");
            }
            for line in confirm_csv(&points) {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Blur(BlurCmd::Compute { original, blurred }) = &cli.command {
        return run_blur(original, blurred);
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Server(ServerCmd::Run) => run_server(&cfg),
        Command::Client(cmd) => run_client(&cfg, cmd),
        Command::Bench(cmd) => run_bench(&cfg, cmd),
        Command::Blur(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FAILURE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(Failure::Client(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ClientError::Rejected { .. } => EXIT_REJECTED,
                ClientError::Transport(_) => EXIT_TRANSPORT,
                _ => EXIT_FAILURE,
            })
        }
    }
}
