use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use asian_lsv_cli::{
    cmd_mc, cmd_oracle, cmd_price, cmd_smile, cmd_table1, CliError, CommandOutput, OracleMode,
    RunConfig,
};
use clap::{Parser, Subcommand};

/// Short-maturity Asian option asymptotics, Monte Carlo and variational oracle.
#[derive(Parser)]
#[command(name = "asian-lsv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path, `-` for stdout.
    #[arg(long, global = true, default_value = "-")]
    out: String,
    /// Oracle mode: fixed, floating, rho-pm or local-vol.
    #[arg(long, global = true, default_value = "fixed")]
    mode: String,
    /// Seed override for randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Quadratic smile over the x grid.
    Smile,
    /// Asymptotic prices via Black-Scholes.
    Price,
    /// Monte Carlo prices and implied vols.
    Mc,
    /// Variational oracle against the rate series.
    Oracle,
    /// Reference smile coefficients for nine configurations.
    Table1,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required for this command".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.set("mc.seed", seed.to_string());
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<CommandOutput, CliError> {
    match cli.command {
        Command::Table1 => cmd_table1(),
        Command::Smile => cmd_smile(&load_config(cli)?),
        Command::Price => cmd_price(&load_config(cli)?),
        Command::Mc => cmd_mc(&load_config(cli)?),
        Command::Oracle => {
            let mode: OracleMode = cli.mode.parse()?;
            cmd_oracle(&load_config(cli)?, mode)
        }
    }
}

fn emit(out: &str, csv: &str) -> Result<(), CliError> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(csv.as_bytes())?;
        stdout.flush()?;
    } else {
        std::fs::write(out, csv)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|output| {
        emit(&cli.out, &output.csv)?;
        Ok(output)
    });
    match result {
        Ok(output) => {
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(output.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
