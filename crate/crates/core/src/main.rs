use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subsaf::bench::{self, ExperimentConfig, BUILTIN_CHANNELS};
use subsaf::filterbank;
use subsaf::signals;
use subsaf::Error;

#[derive(Parser)]
#[command(
    name = "subsaf",
    version,
    about = "Robust subband adaptive filtering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write its MSD/ERLE trace as CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// CSV destination (overrides `output` in the config; stdout if neither).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final weights of the first run, one per line.
        #[arg(long)]
        weights_out: Option<PathBuf>,
    },
    /// Design a prototype filter and write its coefficients.
    DesignBank {
        #[arg(long)]
        subbands: usize,
        /// Prototype length (default 8N+1).
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 60.0)]
        atten: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bundled echo channels.
    Channels {
        #[command(subcommand)]
        action: ChannelAction,
    },
}

#[derive(Subcommand)]
enum ChannelAction {
    /// List bundled channel names.
    List,
    /// Write a bundled channel as float-per-line text.
    Export {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(values: &[f64], out: Option<&PathBuf>) -> subsaf::Result<()> {
    match out {
        Some(path) => signals::write_float_text(path, values),
        None => {
            for v in values {
                println!("{v:e}");
            }
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> subsaf::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            runs,
            out,
            weights_out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            let series = bench::run_experiment(&cfg)?;
            match out.or(cfg.output.clone()) {
                Some(path) => {
                    series.write_csv(&path)?;
                    let tail = series
                        .len()
                        .saturating_sub(series.len() / 10)
                        .min(series.len() - 1);
                    eprintln!(
                        "{} runs, {} samples, final-10% MSD {:.2} dB -> {}",
                        series.runs,
                        series.len(),
                        series.mean_msd_db(tail..series.len()),
                        path.display()
                    );
                }
                None => print!("{}", series.to_csv()),
            }
            if let Some(path) = weights_out {
                signals::write_float_text(&path, &series.weights)?;
            }
            Ok(())
        }
        Command::DesignBank {
            subbands,
            length,
            atten,
            out,
        } => {
            let len = length.unwrap_or_else(|| filterbank::default_length(subbands));
            let proto = filterbank::design_prototype(subbands, len, atten)?;
            eprintln!(
                "N={subbands} J={len}: measured stopband attenuation {:.2} dB",
                proto.stopband_atten_db()
            );
            emit(proto.coeffs(), out.as_ref())
        }
        Command::Channels { action } => match action {
            ChannelAction::List => {
                for (name, desc) in BUILTIN_CHANNELS {
                    println!("{name:<14} {desc}");
                }
                Ok(())
            }
            ChannelAction::Export { name, out } => {
                let h = bench::builtin_channel(&name)?;
                emit(&h, out.as_ref())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() || matches!(e, Error::AttenuationUnreachable { .. }) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
