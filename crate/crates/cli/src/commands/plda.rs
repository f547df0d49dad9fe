use std::path::PathBuf;

use clap::Subcommand;
use diarkit::error::{Error, Result};
use diarkit::formats::{atomic_write, parse_segment_embeddings, parse_utterance_embeddings};
use diarkit::plda::{adapt, length_normalize_rows, train_em, AdaptationConfig, PldaModel};
use sha2::{Digest, Sha256};

use crate::manifest::{read_input, RunManifest};

#[derive(Debug, clap::Args)]
pub struct PldaArgs {
    #[command(subcommand)]
    command: PldaCommand,
}

#[derive(Debug, Subcommand)]
enum PldaCommand {
    /// EM-train a two-covariance model on a speaker-labeled utterance table
    Train {
        /// utterance table whose label column carries speaker tokens
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// skip length normalization (must match scoring-time setting)
        #[arg(long = "no-length-norm", default_value_t = false)]
        no_length_norm: bool,
    },
    /// Unsupervised adaptation on pooled, unlabeled segment data
    Adapt {
        #[arg(long)]
        model: PathBuf,
        /// pooled segment-form embedding table
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "within-share", default_value_t = 0.75)]
        within_share: f64,
        #[arg(long = "between-share", default_value_t = 0.25)]
        between_share: f64,
        #[arg(long = "no-length-norm", default_value_t = false)]
        no_length_norm: bool,
    },
}

pub fn run(args: PldaArgs) -> Result<()> {
    match args.command {
        PldaCommand::Train {
            embeddings,
            out,
            iters,
            no_length_norm,
        } => {
            let mut manifest = RunManifest::new("plda train");
            manifest.set("iters", iters);
            manifest.set("length_norm", !no_length_norm);
            let raw = read_input(&mut manifest, &embeddings)?;
            let table = parse_utterance_embeddings(&raw)?;
            let mut vectors: Vec<Vec<f64>> =
                table.rows.iter().map(|r| r.vector.clone()).collect();
            if !no_length_norm {
                length_normalize_rows(&mut vectors)?;
            }
            let labels: Vec<String> = table
                .rows
                .iter()
                .map(|r| {
                    r.label.clone().ok_or_else(|| {
                        Error::validation(format!(
                            "row {:?} has no speaker label",
                            r.utterance_id
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let training = train_em(&vectors, &labels, iters)?;
            let mut model = training.model;
            let mut hasher = Sha256::new();
            hasher.update(raw.as_bytes());
            model.meta.training_hash =
                Some(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect());
            log::info!(
                "log-likelihood: {:.3} -> {:.3} over {} iterations",
                training.loglik.first().unwrap_or(&f64::NAN),
                training.loglik.last().unwrap_or(&f64::NAN),
                iters
            );
            atomic_write(&out, &model.to_json())?;
            manifest.write_alongside(&out)?;
            Ok(())
        }
        PldaCommand::Adapt {
            model,
            segments,
            out,
            within_share,
            between_share,
            no_length_norm,
        } => {
            let mut manifest = RunManifest::new("plda adapt");
            manifest.set("within_share", within_share);
            manifest.set("between_share", between_share);
            manifest.set("length_norm", !no_length_norm);
            let model = PldaModel::from_json(&read_input(&mut manifest, &model)?)?;
            let table = parse_segment_embeddings(&read_input(&mut manifest, &segments)?)?;
            let mut pooled: Vec<Vec<f64>> =
                table.rows.iter().map(|r| r.vector.clone()).collect();
            if !no_length_norm {
                length_normalize_rows(&mut pooled)?;
            }
            let cfg = AdaptationConfig {
                within_share,
                between_share,
            };
            let adapted = adapt(&model, &pooled, &cfg)?;
            atomic_write(&out, &adapted.to_json())?;
            manifest.write_alongside(&out)?;
            Ok(())
        }
    }
}
