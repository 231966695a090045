use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use valleycut_cli::{bench, report, simulate, CliResult, RunManifest};

#[derive(Parser)]
#[command(
    name = "valleycut",
    version,
    about = "Valley-anchored capacity thresholds for scored streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every BA × policy × seed combination of a scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the manifest's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric tables and figure series from a simulate directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-event ingest time against grid size.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "128,512,2048")]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 200_000)]
        events: usize,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, seeds, out } => {
            let mut m = RunManifest::load(&config)?;
            if let Some(seeds) = seeds {
                m.seeds = seeds;
            }
            let s = simulate::simulate(&m, &out)?;
            println!("{} runs, {} files, scenario {}", s.runs, s.files, s.scenario_hash);
        }
        Command::Report { input, out } => {
            let r = report::report(&input, &out)?;
            println!(
                "{:<12} {:<16} {:<22} {:>12} {:>12}",
                "ba", "policy", "metric", "median", "iqr"
            );
            for row in &r.rows {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
                let iqr = row.q75.zip(row.q25).map(|(a, b)| a - b);
                println!(
                    "{:<12} {:<16} {:<22} {:>12} {:>12}",
                    row.ba,
                    row.policy,
                    row.metric,
                    fmt(row.median),
                    fmt(iqr)
                );
            }
        }
        Command::Bench { grids, events } => {
            let p = bench::bench(&grids, events)?;
            for (g, m) in p.grid_sizes.iter().zip(&p.medians) {
                println!("G={g:<6} median {m:.1} ns/event");
            }
            println!("log-log slope {:.3}", p.slope);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("valleycut: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
