use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdaodv_core::adversary::AttackKind;
use sdaodv_core::config::{ConfigError, Protocol, ScenarioConfig};
use sdaodv_core::harness::{self, RunError, SweepSpec};

/// Output directory override; takes precedence over `--out`.
const OUT_ENV: &str = "SDAODV_OUT_DIR";

#[derive(Parser)]
#[command(name = "sdaodv-sim", version, about = "MANET simulator for AODV and SD-AODV under routing attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write GLOMO.STAT plus a CSV row.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write per-tick node positions.
        #[arg(long)]
        mobility_trace: bool,
    },
    /// Run protocol x attack x malicious-fraction x seed and write figure CSVs.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Malicious percentages.
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30")]
        fractions: Vec<f64>,
        /// Number of seeds per point, counting up from the config's seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "aodv,sdaodv")]
        protocols: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "wormhole,byzantine,blackhole")]
        attacks: Vec<String>,
        #[arg(long)]
        separate_sdaodv_curves: bool,
        #[arg(long)]
        mobility_trace: bool,
        /// Run points one at a time.
        #[arg(long)]
        sequential: bool,
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
        match e {
            RunError::Setup { .. } => Failure::Config(e.to_string()),
            RunError::Io { .. } => Failure::Runtime(e.to_string()),
        }
    }
}

fn out_dir(flag: PathBuf) -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or(flag)
}

fn parse_list<T>(items: &[String], what: &str, parse: fn(&str) -> Option<T>) -> Result<Vec<T>, Failure> {
    let parsed = items
        .iter()
        .map(|s| parse(s.trim()).ok_or_else(|| Failure::Config(format!("unknown {what} `{s}`"))))
        .collect::<Result<Vec<T>, _>>()?;
    if parsed.is_empty() {
        return Err(Failure::Config(format!("no {what}s given")));
    }
    Ok(parsed)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, mobility_trace } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let dir = out_dir(out);
            let result = harness::run_one(&cfg, &dir, mobility_trace)?;
            println!("{}", harness::CSV_HEADER);
            println!("{}", result.csv_row());
        }
        Command::Sweep {
            config,
            out,
            fractions,
            seeds,
            protocols,
            attacks,
            separate_sdaodv_curves,
            mobility_trace,
            sequential,
        } => {
            let base = ScenarioConfig::from_file(&config)?;
            if seeds == 0 {
                return Err(Failure::Config("--seeds must be at least 1".into()));
            }
            if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f < 100.0)) {
                return Err(Failure::Config("--fractions must lie strictly between 0 and 100".into()));
            }
            let spec = SweepSpec {
                fractions,
                seeds: (base.seed..base.seed + seeds).collect(),
                protocols: parse_list(&protocols, "protocol", Protocol::parse)?,
                attacks: parse_list(&attacks, "attack", AttackKind::parse)?,
                separate_sdaodv_curves,
                mobility_trace,
                parallel: !sequential,
            };
            let dir = out_dir(out);
            let result = harness::run_sweep(&base, &spec).inspect_err(|_| {
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(dir.join("failed_config.toml"), base.to_toml_string());
            })?;
            harness::write_sweep(&result, &dir)?;
            println!("{} runs written to {}", result.runs.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}
