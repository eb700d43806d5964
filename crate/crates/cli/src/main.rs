use std::path::PathBuf;
use std::process::ExitCode;
use std::{env, fs};

use clap::{Args, Parser, Subcommand};
use gapsl::harness::{self, parse_config, render_comparison, RunConfig};
use gapsl::transport::HANDSHAKE_TIMEOUT;
use gapsl::{Error, Result};

#[derive(Parser)]
#[command(name = "gapsl", version, about = "Parallel split learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment for one or more seeds.
    Run(Box<RunArgs>),
    /// Compare finished runs side by side.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Join a TCP server as one client.
    Client {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        client_id: u16,
        /// Local configuration; the server's copy takes precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated ablation flags (gapsl only).
    #[arg(long)]
    ablations: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    clients: Option<usize>,
    /// Dirichlet concentration, or `iid`.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    k_min: Option<f64>,
    #[arg(long)]
    k_max: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    transport: Option<String>,
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    /// Act as a TCP client instead of running the server.
    #[arg(long, requires = "client_id")]
    connect: Option<String>,
    #[arg(long)]
    client_id: Option<u16>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let mut put = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k.to_owned(), val));
            }
        };
        put("strategy", self.strategy.clone());
        put("ablations", self.ablations.clone());
        put("seed", self.seed.map(|s| s.to_string()));
        put("seeds", self.seeds.as_ref().map(|s| s.iter().map(u64::to_string).collect::<Vec<_>>().join(",")));
        put("rounds", self.rounds.map(|x| x.to_string()));
        put("clients", self.clients.map(|x| x.to_string()));
        put("alpha", self.alpha.clone());
        put("k_min", self.k_min.map(|x| x.to_string()));
        put("k_max", self.k_max.map(|x| x.to_string()));
        put("eta", self.eta.map(|x| x.to_string()));
        put("lambda", self.lambda.map(|x| x.to_string()));
        put("transport", self.transport.clone());
        put("listen", self.listen.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        v
    }
}

fn read_text(path: Option<&PathBuf>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::file(p, e)),
        None => Ok(String::new()),
    }
}

fn load(path: Option<&PathBuf>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let env_seed = env::var("GAPSL_SEED").ok();
    parse_config(&read_text(path)?, overrides, env_seed.as_deref())
}

fn client(address: &str, client_id: u16, config: Option<&PathBuf>) -> Result<()> {
    if config.is_some() {
        load(config, &[])?;
    }
    harness::run_client(address, client_id, HANDSHAKE_TIMEOUT)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            if let (Some(addr), Some(id)) = (&args.connect, args.client_id) {
                return client(addr, id, args.config.as_ref());
            }
            let cfg = load(args.config.as_ref(), &args.overrides())?;
            let outcome = harness::run(&cfg)?;
            for (name, s) in &outcome.summary {
                println!(
                    "{name}: final accuracy {:.2}% ± {:.2} over {} seed(s)",
                    100.0 * s.final_accuracy_mean,
                    100.0 * s.final_accuracy_std,
                    s.seeds.len()
                );
            }
            println!("wrote {}", outcome.out_dir.display());
            Ok(())
        }
        Command::Compare { dirs } => {
            print!("{}", render_comparison(&harness::compare(&dirs)?));
            Ok(())
        }
        Command::Client { connect, client_id, config } => client(&connect, client_id, config.as_ref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
