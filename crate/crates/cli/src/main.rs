use std::path::PathBuf;
use std::process::ExitCode;

use alphafund::app::{self, Amendment, AppError, Outputs, Overrides, Rendered};
use alphafund_core::fees::Scheme;
use alphafund_core::{Decimal, Rounding, Usd};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alphafund", version, about = "Replay fund rebalancing scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Override the scenario's fee scheme (A, B or C).
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// Override the rounding mode (down, half-up, up).
    #[arg(long, value_parser = parse_rounding)]
    rounding: Option<Rounding>,
}

#[derive(Args)]
struct Out {
    /// Write one csv file per table into this directory.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Write the resulting fund snapshot here.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a scenario and print its tables.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        out: Out,
    },
    /// Compare cumulative performance fees with the lot-level oracle.
    Diff {
        scenario: PathBuf,
        #[arg(long, default_value = "0.000000001", value_parser = parse_decimal)]
        tolerance: Decimal,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Parse a scenario and check its seed state.
    Validate { scenario: PathBuf },
    /// Continue from a snapshot, optionally amending the next event.
    Resume {
        /// Snapshot written by an earlier run or resume.
        from: PathBuf,
        scenario: PathBuf,
        #[arg(long, value_parser = parse_decimal)]
        proceeds: Option<Decimal>,
        #[arg(long, value_parser = parse_decimal)]
        tolerance: Option<Decimal>,
        #[command(flatten)]
        out: Out,
    },
    /// Print a seeded random scenario.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::from_name(s).ok_or_else(|| format!("unknown scheme '{s}'"))
}

fn parse_rounding(s: &str) -> Result<Rounding, String> {
    Rounding::from_name(s).ok_or_else(|| format!("unknown rounding '{s}'"))
}

fn parse_decimal(s: &str) -> Result<Decimal, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn overrides(c: Common) -> Overrides {
    Overrides { scheme: c.scheme, rounding: c.rounding }
}

fn execute(cmd: Cmd) -> Result<Rendered, AppError> {
    match cmd {
        Cmd::Run { scenario, common, out } => {
            app::run(&scenario, &overrides(common), &Outputs { csv_dir: out.csv_dir, snapshot: out.snapshot })
        }
        Cmd::Diff { scenario, tolerance, common, csv_dir } => {
            app::diff(&scenario, tolerance, &overrides(common), &Outputs { csv_dir, snapshot: None })
        }
        Cmd::Validate { scenario } => app::validate(&scenario),
        Cmd::Resume { from, scenario, proceeds, tolerance, out } => {
            let amend = Amendment { proceeds: proceeds.map(Usd), tolerance };
            app::resume(&from, &scenario, &amend, &Outputs { csv_dir: out.csv_dir, snapshot: out.snapshot })
        }
        Cmd::Generate { seed } => app::generate(seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(r) => {
            print!("{}", r.text);
            ExitCode::from(r.code as u8)
        }
        Err(e) => {
            eprintln!("alphafund: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
