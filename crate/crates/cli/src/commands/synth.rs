use std::path::PathBuf;

use diarkit::error::Result;
use diarkit::synth::{generate_corpus, SynthConfig};

use crate::manifest::RunManifest;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// output directory: utterances.txt, segments.txt, ref.rttm, all.uem,
    /// truth.csv, segments_truth.csv, plda_train.txt, manifest.json
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    domains: usize,
    #[arg(long = "recordings-per-domain", default_value_t = 4)]
    recordings_per_domain: usize,
    #[arg(long = "speakers-min", default_value_t = 2)]
    speakers_min: usize,
    #[arg(long = "speakers-max", default_value_t = 4)]
    speakers_max: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long = "domain-spread", default_value_t = 3.0)]
    domain_spread: f64,
    #[arg(long = "between-scale", default_value_t = 1.0)]
    between_scale: f64,
    #[arg(long = "within-scale", default_value_t = 0.3)]
    within_scale: f64,
    #[arg(long = "turn-min", default_value_t = 2.0)]
    turn_min: f64,
    #[arg(long = "turn-max", default_value_t = 6.0)]
    turn_max: f64,
    /// recording duration in seconds
    #[arg(long, default_value_t = 120.0)]
    duration: f64,
    /// sub-segment hop in seconds
    #[arg(long, default_value_t = 1.0)]
    hop: f64,
    #[arg(long = "overlap-fraction", default_value_t = 0.0)]
    overlap_fraction: f64,
    #[arg(long = "plda-speakers", default_value_t = 60)]
    plda_speakers: usize,
    #[arg(long = "plda-segments-per-speaker", default_value_t = 20)]
    plda_segments_per_speaker: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_domains: args.domains,
        recordings_per_domain: args.recordings_per_domain,
        speakers_min: args.speakers_min,
        speakers_max: args.speakers_max,
        dim: args.dim,
        domain_spread: args.domain_spread,
        between_scale: args.between_scale,
        within_scale: args.within_scale,
        turn_min: args.turn_min,
        turn_max: args.turn_max,
        recording_duration: args.duration,
        subsegment_hop: args.hop,
        overlap_fraction: args.overlap_fraction,
        plda_speakers: args.plda_speakers,
        plda_segments_per_speaker: args.plda_segments_per_speaker,
        seed: args.seed,
    };
    let corpus = generate_corpus(&cfg)?;
    corpus.write_to_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("synth");
    manifest.set("config", format!("{cfg:?}"));
    manifest.write_to(&args.out_dir.join("manifest.json"))?;
    println!(
        "wrote {} recordings ({} segments) to {}",
        corpus.references.len(),
        corpus.segments.rows.len(),
        args.out_dir.display()
    );
    Ok(())
}
