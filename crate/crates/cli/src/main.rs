// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use acp_cli::*;

/// Committee-based consensus simulator, estimators and replay.
///
/// Exit codes: 0 success, 1 I/O failure, 2 configuration or flag error,
/// 3 safety violation detected, 4 replay divergence.
#[derive(Parser)]
#[command(name = "acp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario with every default spelled out.
    Init {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write trace.jsonl, report.txt and CSV reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<u64>,
        /// Output directory; defaults to the scenario's paths or the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of seeds to run in parallel, starting at the scenario seed.
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Closed-form agreement time, message volume, throughput and block time.
    Estimate {
        /// JSON estimator inputs; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the eight-cell throughput table.
        #[arg(long)]
        table: bool,
        /// Block-time check for KEY=VALUE settings (N, h, BS, bw, rtt, t); a CSV grid when given no settings.
        #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
        blocktime: Option<Vec<String>>,
    },
    /// Re-execute a trace and compare it event by event.
    Replay {
        trace: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ACP_SIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    ExitCode::from(code as u8)
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Init { out } => {
            let text = scaffold();
            match out {
                Some(p) => fs::write(&p, text + "\n").map_err(|e| CliError::io(&format!("writing {}", p.display()), e))?,
                None => println!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { config, seed, rounds, out, runs } => simulate_cmd(&config, seed, rounds, out.as_deref(), runs),
        Command::Estimate { config, table, blocktime } => {
            let input = load_estimator_input(config.as_deref())?;
            if table {
                print!("{}", table_text());
            }
            match blocktime {
                Some(args) if args.is_empty() => print!("{}", blocktime_grid_csv(&input)),
                Some(args) => print!("{}", blocktime_text(&parse_blocktime(&input, &args)?)),
                None if !table => print!("{}", estimate_summary(&input)),
                None => {}
            }
            Ok(EXIT_OK)
        }
        Command::Replay { trace } => {
            let verdict = replay_file(&trace)?;
            println!("{verdict}");
            Ok(verdict.exit_code())
        }
    }
}

fn simulate_cmd(config: &Path, seed: Option<u64>, rounds: Option<u64>, out: Option<&Path>, runs: u64) -> Result<i32, CliError> {
    if runs == 0 {
        return Err(CliError::config("--runs must be at least 1"));
    }
    let base = with_overrides(load_scenario(config)?, seed, rounds)?;
    if runs == 1 {
        let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let o = simulate(&base, &dir, out.is_none())?;
        print!("{}", o.report.to_text());
        println!("trace: {}", o.trace.display());
        return Ok(o.exit_code());
    }
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let results: Vec<Result<(u64, i32, String), CliError>> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut s = base.clone();
            s.seed = base.seed.wrapping_add(k);
            let o = simulate(&s, &root.join(format!("seed-{}", s.seed)), false)?;
            let line = format!(
                "seed {:>6}: {} final, {} tentative, safety {}, liveness {}",
                s.seed,
                o.report.final_rounds(),
                o.report.tentative_rounds(),
                if o.report.safety_ok() { "ok" } else { "VIOLATED" },
                if o.report.liveness_ok() { "ok" } else { "not met" }
            );
            Ok((s.seed, o.exit_code(), line))
        })
        .collect();
    let mut code = EXIT_OK;
    for r in results {
        let (_, c, line) = r?;
        println!("{line}");
        code = code.max(c);
    }
    Ok(code)
}
