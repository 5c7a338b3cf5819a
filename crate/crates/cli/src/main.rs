use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::{CliError, Output};
use config::ExperimentConfig;

/// Fractional smoothness and discrete hedging experiments.
#[derive(Parser)]
#[command(name = "fracsmooth", version)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Main output CSV; side tables go next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Config overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    pairs: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Price, delta and gamma on a (t, s) grid.
    Price(Overrides),
    /// L2 tracking errors over n and the fitted rate.
    HedgeSweep(Overrides),
    /// Conditional L2 decay, gradient and Hessian curves.
    Smoothness(Overrides),
    /// Chaos coefficients, D_{1,2} norm and the Besov criterion.
    Chaos(Overrides),
    /// Clock, mixed normal, KS distance and L_p curves.
    Weaklimit(Overrides),
    /// L2-regularity of the hedging integrand against n.
    Zreg(Overrides),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Price(_) => "price",
            Command::HedgeSweep(_) => "hedge-sweep",
            Command::Smoothness(_) => "smoothness",
            Command::Chaos(_) => "chaos",
            Command::Weaklimit(_) => "weaklimit",
            Command::Zreg(_) => "zreg",
        }
    }

    fn overrides(&self) -> &[String] {
        match self {
            Command::Price(o)
            | Command::HedgeSweep(o)
            | Command::Smoothness(o)
            | Command::Chaos(o)
            | Command::Weaklimit(o)
            | Command::Zreg(o) => &o.pairs,
        }
    }
}

/// Pulls the global flags back out of the trailing pairs, where clap leaves
/// them once the first unknown `--key` has been seen.
fn split_globals(cli: &mut Cli) -> Result<Vec<String>, CliError> {
    let mut rest = Vec::new();
    let pairs = cli.command.overrides().to_vec();
    let mut it = pairs.into_iter();
    while let Some(arg) = it.next() {
        let (key, inline) = match arg.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (arg.clone(), None),
        };
        if !matches!(key.as_str(), "--config" | "--out" | "--threads") {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| {
                CliError::Config(config::ConfigError::Invalid {
                    key: key.trim_start_matches('-').to_string(),
                    reason: "missing value".into(),
                })
            })?,
        };
        match key.as_str() {
            "--config" => cli.config = Some(value.into()),
            "--out" => cli.out = Some(value.into()),
            _ => {
                cli.threads = Some(value.parse().map_err(|e: std::num::ParseIntError| {
                    CliError::Config(config::ConfigError::Invalid {
                        key: "threads".into(),
                        reason: e.to_string(),
                    })
                })?)
            }
        }
    }
    Ok(rest)
}

fn run(mut cli: Cli) -> Result<serde_json::Value, CliError> {
    let overrides = split_globals(&mut cli)?;
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    cfg.apply_overrides(&overrides)?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config(config::ConfigError::Invalid {
                key: "threads".into(),
                reason: "must be >= 1".into(),
            }));
        }
        // a second initialization only happens in tests; ignore it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let name = cli.command.name();
    let out = Output {
        path: cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv"))),
    };
    log::info!("running {name}, output {}", out.path.display());
    match cli.command {
        Command::Price(_) => commands::price(&cfg, &out),
        Command::HedgeSweep(_) => commands::hedge_sweep(&cfg, &out),
        Command::Smoothness(_) => commands::smoothness(&cfg, &out),
        Command::Chaos(_) => commands::chaos(&cfg, &out),
        Command::Weaklimit(_) => commands::weaklimit(&cfg, &out),
        Command::Zreg(_) => commands::zreg(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "code": e.exit_code(), "kind": e.kind(), "message": e.to_string() });
            eprintln!("error {line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
