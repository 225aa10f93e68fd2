use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iqn_cli::config::{parse_config, parse_seeds};
use iqn_cli::experiments::{check_output_path, print_summary};
use iqn_cli::{emit_plot_data, resume_experiment, run_experiment, CliResult};

#[derive(Parser)]
#[command(name = "iqn", version, about = "Iterated Q-Network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every window size and seed of a config.
    Run {
        config: PathBuf,
        /// Overrides the config's seeds: `0..10`, `0..=9` or `1,2,5`.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory; defaults to the config's `output_dir`, else a
        /// hash-named directory under `$IQN_OUTPUT_ROOT` (or `runs`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for concurrent seeds; all cores by default.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Finish an interrupted run from its checkpoint.
    Resume {
        checkpoint: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild `plot.csv` of a run directory.
    Plotdata { run_dir: PathBuf },
    /// Parse and check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &PathBuf, seeds: Option<&str>) -> CliResult<iqn_cli::ExperimentConfig> {
    let mut c = parse_config(config)?;
    if let Some(s) = seeds {
        c.seeds = parse_seeds(s)?;
        c.validate()?;
    }
    Ok(c)
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Run { config, seeds, out, threads } => {
            let c = load(&config, seeds.as_deref())?;
            let root = c.output_root(out.as_deref());
            println!("writing to {}", root.display());
            let summary = run_experiment(&c, &root, threads)?;
            let _ = print_summary(&summary, &mut stdout);
        }
        Command::Resume { checkpoint, threads } => match resume_experiment(&checkpoint, threads)? {
            Some(summary) => {
                let _ = print_summary(&summary, &mut stdout);
            }
            None => println!("run finished; other runs of this experiment are still incomplete"),
        },
        Command::Plotdata { run_dir } => {
            let path = emit_plot_data(&run_dir)?;
            println!("{}", path.display());
        }
        Command::Validate { config, seeds, out } => {
            let c = load(&config, seeds.as_deref())?;
            let root = c.output_root(out.as_deref());
            check_output_path(&root)?;
            println!("{} ok: kind {}, {} seeds, hash {}", config.display(), c.kind.name(), c.seeds.len(), c.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
