mod commands;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "diarkit",
    version,
    about = "Domain-aware speaker diarization: domain identification, PLDA scoring, AHC, VB-HMM resegmentation, DER/JER scoring and per-domain tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Acoustic domain identification: train, predict, benchmark
    Adi(commands::adi::AdiArgs),
    /// PLDA backend: train and adapt models
    Plda(commands::plda::PldaArgs),
    /// Diarize recordings with tuned domain profiles
    Diarize(commands::diarize::DiarizeArgs),
    /// Score a hypothesis against a reference (DER/JER)
    Score(commands::score::ScoreArgs),
    /// Per-domain grid search over (threshold, PCA energy)
    Sweep(commands::sweep::SweepArgs),
    /// Generate a deterministic synthetic corpus
    Synth(commands::synth::SynthArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    configure_threads();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Adi(args) => commands::adi::run(args),
        Command::Plda(args) => commands::plda::run(args),
        Command::Diarize(args) => commands::diarize::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Synth(args) => commands::synth::run(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

/// DIARKIT_THREADS bounds worker parallelism; 0 or unset means automatic.
fn configure_threads() {
    if let Ok(value) = std::env::var("DIARKIT_THREADS") {
        match value.trim().parse::<usize>() {
            Ok(0) => {}
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => log::warn!("ignoring invalid DIARKIT_THREADS value {value:?}"),
        }
    }
}
