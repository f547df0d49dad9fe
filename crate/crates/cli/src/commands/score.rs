use std::path::PathBuf;

use diarkit::error::Result;
use diarkit::formats::{atomic_write, parse_rttm, parse_uem};
use diarkit::metrics::{score_report, ScoreOptions};

use crate::manifest::{read_input, RunManifest};

#[derive(Debug, clap::Args)]
pub struct ScoreArgs {
    /// reference RTTM
    #[arg(long = "ref")]
    reference: PathBuf,
    /// hypothesis RTTM
    #[arg(long)]
    hyp: PathBuf,
    /// scoring regions; without it scoring covers the full reference extent
    #[arg(long)]
    uem: Option<PathBuf>,
    /// seconds forgiven around reference turn boundaries
    #[arg(long, default_value_t = 0.0)]
    collar: f64,
    /// exclude reference overlap regions from scoring
    #[arg(long = "ignore-overlaps", default_value_t = false)]
    ignore_overlaps: bool,
    /// report JSON; a flat CSV lands next to it
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ScoreArgs) -> Result<()> {
    let mut manifest = RunManifest::new("score");
    manifest.set("collar", args.collar);
    manifest.set("ignore_overlaps", args.ignore_overlaps);

    let refs = parse_rttm(&read_input(&mut manifest, &args.reference)?)?;
    let hyps = parse_rttm(&read_input(&mut manifest, &args.hyp)?)?;
    let uem = match &args.uem {
        Some(path) => Some(parse_uem(&read_input(&mut manifest, path)?)?),
        None => {
            log::warn!("no UEM given, scoring over the full reference extent");
            None
        }
    };
    let opts = ScoreOptions {
        collar: args.collar,
        score_overlaps: !args.ignore_overlaps,
    };
    let report = score_report(&refs, &hyps, uem.as_ref(), &opts)?;

    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    atomic_write(&args.out, &text)?;
    atomic_write(&args.out.with_extension("csv"), &report.to_csv())?;
    manifest.write_alongside(&args.out)?;

    let der = report
        .der
        .map(|d| format!("{:.2}%", d * 100.0))
        .unwrap_or_else(|| "NA".to_string());
    let jer = report
        .jer
        .map(|j| format!("{:.2}%", j * 100.0))
        .unwrap_or_else(|| "NA".to_string());
    println!("DER {der} JER {jer}");
    Ok(())
}
