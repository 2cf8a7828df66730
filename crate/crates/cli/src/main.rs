use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use heisen_cli::output::write_atomic;
use heisen_cli::{load_config_with, run_experiment, Format, Overrides, RunError, RunKind, EXIT_DEFECT, THREADS_ENV};
use heisen_core::presets::PRESET_NAMES;

#[derive(Parser)]
#[command(name = "heisen", version, about = "Reduced Heisenberg dynamics of open quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run perturbative-vs-exact checks; `--seed` swaps in a random model.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Shipped model presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn preset_blurb(name: &str) -> &'static str {
    match name {
        "two_qubit" => "two spin-1/2 coupled by S1.S2; bath state diag(1-c, c); parameter c",
        "dephasing_bath" => "qubit dephased by an 8-level bath with decaying correlations",
        _ => "",
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn execute(config: PathBuf, ov: Overrides) -> ExitCode {
    let cfg = match load_config_with(&config, &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    finish(&cfg)
}

fn finish(cfg: &heisen_cli::ExperimentConfig) -> ExitCode {
    let outcome = match run_experiment(cfg) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let text = outcome.table.encode(cfg.format);
    let written = match &cfg.output {
        Some(p) => write_atomic(p, &text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        return fail(&RunError::Io(e));
    }
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("defect: {f}");
        }
        ExitCode::from(EXIT_DEFECT as u8)
    }
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Preset {
            action: PresetAction::List,
        } => {
            for name in PRESET_NAMES {
                println!("{name}\t{}", preset_blurb(name));
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, common } => execute(config, overrides(common, None, None)),
        Command::Validate { config, seed, common } => execute(config, overrides(common, seed, Some(RunKind::Validate))),
    }
}

fn overrides(c: Common, seed: Option<u64>, kind: Option<RunKind>) -> Overrides {
    Overrides {
        order: c.order,
        lambda: c.lambda,
        output: c.output,
        format: c.format,
        seed,
        kind,
    }
}
