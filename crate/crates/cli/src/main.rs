use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rcident_cli::config::{RouteKind, SchemeKind};
use rcident_cli::report::status_line;
use rcident_cli::{run, Overrides};

#[derive(Parser)]
#[command(
    name = "rcident",
    version,
    about = "Identification toolkit for random-coefficient demand"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_order: Option<usize>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeKind>,
        #[arg(long, value_enum)]
        route: Option<RouteKind>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        seed,
        max_order,
        scheme,
        route,
    } = cli.command;
    let overrides = Overrides {
        seed,
        max_order,
        scheme,
        route,
    };
    match run(&config, &out, &overrides) {
        Ok(report) => {
            eprintln!("{}", status_line(&report));
            ExitCode::from(report.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
