use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Subcommand;
use diarkit::adi::{adi_benchmark, AdiModel, TrialConfig};
use diarkit::error::Result;
use diarkit::formats::{atomic_write, parse_utterance_embeddings};

use crate::manifest::{read_input, RunManifest};

#[derive(Debug, clap::Args)]
pub struct AdiArgs {
    #[command(subcommand)]
    command: AdiCommand,
}

#[derive(Debug, Subcommand)]
enum AdiCommand {
    /// Fit the labeled embedding store and write it as model JSON
    Train {
        /// labeled utterance embedding table
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// nearest neighbors consulted per prediction
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Predict a domain for every row of an utterance table
    Predict {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// CSV output: utterance_id, predicted_domain, similarity
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated-random-split benchmark over a labeled table
    Bench {
        #[arg(long)]
        embeddings: PathBuf,
        /// report JSON; a per-domain CSV lands next to it
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long = "train-size", default_value_t = 200)]
        train_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// redraw splits until every domain appears in training
        #[arg(long = "require-all-domains", default_value_t = false)]
        require_all_domains: bool,
    },
}

pub fn run(args: AdiArgs) -> Result<()> {
    match args.command {
        AdiCommand::Train { embeddings, out, k } => {
            let mut manifest = RunManifest::new("adi train");
            manifest.set("k", k);
            let table = parse_utterance_embeddings(&read_input(&mut manifest, &embeddings)?)?;
            let model = AdiModel::fit_with_k(&table, k)?;
            let mut text = serde_json::to_string_pretty(&model)?;
            text.push('\n');
            atomic_write(&out, &text)?;
            manifest.write_alongside(&out)?;
            Ok(())
        }
        AdiCommand::Predict {
            embeddings,
            model,
            out,
        } => {
            let mut manifest = RunManifest::new("adi predict");
            let table = parse_utterance_embeddings(&read_input(&mut manifest, &embeddings)?)?;
            let model: AdiModel = serde_json::from_str(&read_input(&mut manifest, &model)?)?;
            let mut csv = String::from("utterance_id,predicted_domain,similarity\n");
            for row in &table.rows {
                let (domain, similarity) = model.predict(&row.vector)?;
                writeln!(csv, "{},{domain},{similarity:.6}", row.utterance_id)
                    .expect("string write");
            }
            atomic_write(&out, &csv)?;
            manifest.write_alongside(&out)?;
            Ok(())
        }
        AdiCommand::Bench {
            embeddings,
            out,
            trials,
            train_size,
            seed,
            k,
            require_all_domains,
        } => {
            let mut manifest = RunManifest::new("adi bench");
            manifest.set("trials", trials);
            manifest.set("train_size", train_size);
            manifest.set("seed", seed);
            manifest.set("k", k);
            manifest.set("require_all_domains", require_all_domains);
            let table = parse_utterance_embeddings(&read_input(&mut manifest, &embeddings)?)?;
            let cfg = TrialConfig {
                n_train: train_size,
                n_trials: trials,
                seed,
                require_all_domains_in_train: require_all_domains,
                k,
            };
            let report = adi_benchmark(&table, &cfg)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            atomic_write(&out, &text)?;
            atomic_write(&out.with_extension("csv"), &report.per_domain_csv())?;
            manifest.write_alongside(&out)?;
            println!("mean accuracy {:.2}%", report.mean_accuracy * 100.0);
            Ok(())
        }
    }
}
