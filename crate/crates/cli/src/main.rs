use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phaseprior_cli::{load_config, presets, run, validate};

#[derive(Parser)]
#[command(
    name = "phaseprior",
    version,
    about = "Run injectivity and MRA experiments from JSON configurations"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the preset experiments.
    Presets,
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Presets => {
            println!("preset\tcommand\treference\tdefault_parameters");
            for p in presets::all() {
                println!("{}\t{}\t{}\t{}", p.name, p.command, p.reference, (p.parameters)());
            }
            ExitCode::SUCCESS
        }
        Cmd::Validate { config } => match load_config(&config).and_then(|c| validate(&c)) {
            Ok(()) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                ExitCode::from(2)
            }
        },
        Cmd::Run { config, out, threads } => {
            if let Some(k) = threads {
                if k == 0 {
                    eprintln!("--threads must be at least 1");
                    return ExitCode::from(2);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    eprintln!("cannot configure threads: {e}");
                    return ExitCode::from(1);
                }
            }
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            match run(&cfg, out.as_deref()) {
                Ok(summary) => {
                    for f in &summary.outcome.flags {
                        eprintln!("flag: {f}");
                    }
                    println!("wrote {}", summary.output_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
