use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use etlqg_cli::commands::{self, Overrides};
use etlqg_cli::CliError;

#[derive(Parser)]
#[command(name = "etlqg", version, about = "Event-triggered LQG experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the base seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Override the number of Monte-Carlo runs.
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    /// Override the trigger: voi, always, never, exact_scalar_dp,
    /// periodic, periodic:PERIOD or periodic:PERIOD:OFFSET.
    #[arg(long, value_name = "NAME")]
    policy: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print diagnostics.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and write trajectory.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory; defaults to `experiment.output`.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Rate/performance trade-off over a list of prices.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated λ values.
        #[arg(long, value_name = "CSV-list", allow_hyphen_values = true)]
        lambda: String,
        /// Output CSV file; defaults to `experiment.output`, then stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

impl Common {
    fn load(&self) -> Result<etlqg_cli::ExperimentConfig, CliError> {
        let overrides = Overrides {
            seed: self.seed,
            runs: self.runs,
            policy: self.policy.as_deref().map(commands::parse_policy).transpose()?,
        };
        commands::load(&self.config, &overrides)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = common.load()?;
            let mut stderr = std::io::stderr();
            if commands::validate(&cfg, &mut stderr)? {
                Ok(())
            } else {
                Err(CliError::Config("validation failed".into()))
            }
        }
        Command::Simulate { common, out } => {
            let cfg = common.load()?;
            let dir = out
                .or_else(|| cfg.experiment.output.as_ref().map(PathBuf::from))
                .ok_or_else(|| CliError::Usage("simulate needs --out or experiment.output".into()))?;
            commands::simulate(&cfg, &dir)?;
            Ok(())
        }
        Command::Sweep { common, lambda, out } => {
            let lambdas = commands::parse_lambdas(&lambda)?;
            let cfg = common.load()?;
            let table = commands::sweep(&cfg, &lambdas)?;
            match out.or_else(|| cfg.experiment.output.as_ref().map(PathBuf::from)) {
                Some(path) => std::fs::write(&path, table).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
                None => std::io::stdout().write_all(&table).map_err(|e| CliError::Io(e.to_string())),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("etlqg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
