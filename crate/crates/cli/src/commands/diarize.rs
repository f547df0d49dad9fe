use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::ValueEnum;
use diarkit::adi::AdiModel;
use diarkit::error::{Error, Result};
use diarkit::formats::{
    atomic_write, parse_domain_map, parse_segment_embeddings, read_profiles, write_rttm,
    Annotation, DomainProfile, ProfileSet,
};
use diarkit::plda::PldaModel;
use diarkit::sweep::{diarize_recording, RunOptions};
use diarkit::BASELINE_PCA_ENERGY;
use serde::Serialize;

use crate::commands::VbArgs;
use crate::manifest::{read_input, RunManifest};

/// The three experiment configurations: the baseline's single global
/// profile at the 30% PCA energy, per-domain thresholds at that energy, and
/// fully domain-dependent (threshold, energy) pairs.
#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum Mode {
    B,
    M1,
    M2,
}

#[derive(Debug, clap::Args)]
pub struct DiarizeArgs {
    /// segment-form embedding table (all recordings)
    #[arg(long)]
    segments: PathBuf,
    /// PLDA model JSON
    #[arg(long)]
    plda: PathBuf,
    /// domain profiles JSON
    #[arg(long)]
    profiles: PathBuf,
    /// domain-identification model JSON; predicts domains for recordings
    /// missing from --domains
    #[arg(long = "adi-model")]
    adi_model: Option<PathBuf>,
    /// explicit recording -> domain CSV; wins over prediction
    #[arg(long)]
    domains: Option<PathBuf>,
    #[arg(long, value_enum, ignore_case = true)]
    mode: Mode,
    /// refine the first pass with VB-HMM resegmentation
    #[arg(long, default_value_t = false)]
    reseg: bool,
    /// hypothesis RTTM output; diagnostics JSON lands next to it
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "no-length-norm", default_value_t = false)]
    no_length_norm: bool,
    #[command(flatten)]
    vb: VbArgs,
}

#[derive(Debug, Serialize)]
struct RecordingDiagnostics {
    domain: Option<String>,
    domain_source: String,
    threshold: f64,
    pca_energy: f64,
    n_segments: usize,
    n_clusters_first_pass: usize,
    n_speakers_final: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    elbo_trace: Option<Vec<f64>>,
}

fn resolve_profile<'a>(
    mode: Mode,
    profiles: &'a ProfileSet,
    domain: Option<&str>,
) -> Result<(f64, f64, &'a DomainProfile)> {
    let fallback = || {
        profiles.fallback.as_ref().ok_or_else(|| {
            Error::config("profiles file has no fallback profile".to_string())
        })
    };
    let domain_profile = || -> Result<&DomainProfile> {
        match domain.and_then(|d| profiles.get(d)) {
            Some(p) => Ok(p),
            None => {
                if let Some(d) = domain {
                    log::warn!("no profile for domain {d:?}, using fallback");
                } else {
                    log::warn!("unresolved domain, using fallback profile");
                }
                fallback()
            }
        }
    };
    match mode {
        Mode::B => {
            let p = fallback()?;
            Ok((p.ahc_threshold, BASELINE_PCA_ENERGY, p))
        }
        Mode::M1 => {
            let p = domain_profile()?;
            Ok((p.ahc_threshold, BASELINE_PCA_ENERGY, p))
        }
        Mode::M2 => {
            let p = domain_profile()?;
            Ok((p.ahc_threshold, p.pca_energy, p))
        }
    }
}

pub fn run(args: DiarizeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("diarize");
    manifest.set("mode", format!("{:?}", args.mode));
    manifest.set("reseg", args.reseg);
    manifest.set("length_norm", !args.no_length_norm);
    manifest.set("vb", format!("{:?}", args.vb.to_config()));

    let segments = parse_segment_embeddings(&read_input(&mut manifest, &args.segments)?)?;
    let model = PldaModel::from_json(&read_input(&mut manifest, &args.plda)?)?;
    let profiles = read_profiles(&read_input(&mut manifest, &args.profiles)?)?;
    let domain_map = match &args.domains {
        Some(path) => parse_domain_map(&read_input(&mut manifest, path)?)?,
        None => BTreeMap::new(),
    };
    let adi_model: Option<AdiModel> = match &args.adi_model {
        Some(path) => Some(serde_json::from_str(&read_input(&mut manifest, path)?)?),
        None => None,
    };

    let opts = RunOptions {
        length_norm: !args.no_length_norm,
        vb: args.vb.to_config(),
    };
    args.vb.to_config().validate()?;

    let mut groups = segments.group_by_recording();
    // recordings named in the domain map but absent from the segment table
    // still appear in the output, as empty hypotheses
    for rec in domain_map.keys() {
        if !groups.contains_key(rec) {
            log::warn!("recording {rec}: no segments, emitting an empty hypothesis");
            groups.insert(rec.clone(), Vec::new());
        }
    }

    let mut hypotheses: BTreeMap<String, Annotation> = BTreeMap::new();
    let mut diagnostics: BTreeMap<String, RecordingDiagnostics> = BTreeMap::new();
    for (rec, segs) in &groups {
        let (domain, source) = match domain_map.get(rec) {
            Some(d) => (Some(d.clone()), "map"),
            None => match &adi_model {
                Some(adi) if !segs.is_empty() => {
                    // query with the recording's utterance-level embedding:
                    // the mean of its raw segment vectors
                    let dim = segs[0].vector.len();
                    let mut mean = vec![0.0f64; dim];
                    for seg in segs.iter() {
                        for (m, v) in mean.iter_mut().zip(&seg.vector) {
                            *m += v;
                        }
                    }
                    for m in mean.iter_mut() {
                        *m /= segs.len() as f64;
                    }
                    let (domain, _) = adi.predict(&mean)?;
                    (Some(domain), "adi")
                }
                _ => (None, "fallback"),
            },
        };
        let (threshold, energy, _) = resolve_profile(args.mode, &profiles, domain.as_deref())?;
        let out = diarize_recording(rec, segs, &model, threshold, energy, args.reseg, &opts)?;
        diagnostics.insert(
            rec.clone(),
            RecordingDiagnostics {
                domain,
                domain_source: source.to_string(),
                threshold,
                pca_energy: energy,
                n_segments: segs.len(),
                n_clusters_first_pass: out.n_clusters_first_pass,
                n_speakers_final: out.n_speakers_final,
                elbo_trace: out.elbo_trace,
            },
        );
        hypotheses.insert(rec.clone(), out.annotation);
    }

    atomic_write(&args.out, &write_rttm(&hypotheses))?;
    let mut diag_text = serde_json::to_string_pretty(&diagnostics)?;
    diag_text.push('\n');
    let diag_path = {
        let mut name = args.out.file_name().unwrap_or_default().to_os_string();
        name.push(".diag.json");
        args.out.with_file_name(name)
    };
    atomic_write(&diag_path, &diag_text)?;
    manifest.write_alongside(&args.out)?;
    Ok(())
}
