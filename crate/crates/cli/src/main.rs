use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtsfm::optimizer::SynthesisConfig;
use mtsfm_cli::archive::TrialSelector;
use mtsfm_cli::config::load_config;
use mtsfm_cli::{commands, CliResult};

/// Synthesize MTSFM waveform sets for MIMO transmit beampatterns.
#[derive(Debug, Parser)]
#[command(name = "mtsfm", version)]
struct Cli {
    /// TOML configuration; omitted fields use the design-example defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Campaign seed, overriding `rng_seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for concurrent trials (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file (synth, eval, report) or directory (analyze).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an optimization campaign and write a run archive.
    Synth,
    /// Re-verify a stored trial and export its beampattern.
    Eval {
        archive: PathBuf,
        /// Trial index or "best".
        #[arg(long, default_value = "best")]
        trial: TrialSelector,
    },
    /// Export spectrum, spectrogram, ambiguity and autocorrelation data.
    Analyze {
        archive: PathBuf,
        #[arg(long, default_value = "best")]
        trial: TrialSelector,
        #[arg(long, default_value_t = 0)]
        waveform: usize,
    },
    /// Print per-trial results and PSLR statistics.
    Report { archive: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Synth => {
            let mut config = match &cli.config {
                Some(path) => load_config(path)?,
                None => SynthesisConfig::default(),
            };
            if let Some(seed) = cli.seed {
                config.rng_seed = seed;
            }
            let output = cli.output.unwrap_or_else(|| PathBuf::from("run.json"));
            commands::synth(&config, cli.jobs, &output, &mut stdout)?;
        }
        Command::Eval { archive, trial } => {
            commands::eval(&archive, trial, cli.output.as_deref(), &mut stdout)?;
        }
        Command::Analyze {
            archive,
            trial,
            waveform,
        } => {
            let dir = cli.output.unwrap_or_else(|| PathBuf::from("."));
            commands::analyze(&archive, trial, waveform, &dir, &mut stdout)?;
        }
        Command::Report { archive } => {
            commands::report(&archive, cli.output.as_deref(), &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

