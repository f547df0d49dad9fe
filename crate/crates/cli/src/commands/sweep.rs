use std::path::{Path, PathBuf};

use diarkit::error::Result;
use diarkit::formats::{
    atomic_write, parse_domain_map, parse_rttm, parse_segment_embeddings, parse_uem,
    write_profiles,
};
use diarkit::plda::PldaModel;
use diarkit::sweep::{sweep_all, RunOptions, SweepGrid, SweepOutcome};

use crate::commands::{parse_axis, VbArgs};
use crate::manifest::{read_input, RunManifest};

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// development segment-form embedding table
    #[arg(long = "dev-segments")]
    dev_segments: PathBuf,
    /// development reference RTTM
    #[arg(long = "dev-ref")]
    dev_ref: PathBuf,
    #[arg(long)]
    uem: PathBuf,
    #[arg(long)]
    plda: PathBuf,
    /// true development domains: recording -> domain CSV
    #[arg(long)]
    domains: PathBuf,
    /// thresholds: comma list or start:stop:step (default -2.0:2.0:0.1)
    #[arg(long = "grid-thresholds", allow_hyphen_values = true)]
    grid_thresholds: Option<String>,
    /// energies: comma list or start:stop:step (default 0.10:0.95:0.05)
    #[arg(long = "grid-energies")]
    grid_energies: Option<String>,
    /// also optimize the resegmented variant (written as *.reseg.*)
    #[arg(long, default_value_t = false)]
    reseg: bool,
    /// tuned profiles JSON; threshold-only and baseline variants plus the
    /// grid CSV land next to it
    #[arg(long = "out-profiles")]
    out_profiles: PathBuf,
    #[arg(long = "no-length-norm", default_value_t = false)]
    no_length_norm: bool,
    #[command(flatten)]
    vb: VbArgs,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path.extension().map(|e| e.to_string_lossy().to_string());
    let name = match ext {
        Some(ext) => format!("{stem}{suffix}.{ext}"),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn write_outcome(outcome: &SweepOutcome, base: &Path, suffix: &str) -> Result<()> {
    atomic_write(
        &sibling(base, suffix),
        &write_profiles(&outcome.tuned_profiles()),
    )?;
    atomic_write(
        &sibling(base, &format!("{suffix}.m1")),
        &write_profiles(&outcome.threshold_only_profiles()),
    )?;
    atomic_write(
        &sibling(base, &format!("{suffix}.b")),
        &write_profiles(&outcome.baseline_profile()),
    )?;
    Ok(())
}

pub fn run(args: SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sweep");
    manifest.set("reseg", args.reseg);
    manifest.set("length_norm", !args.no_length_norm);
    manifest.set("vb", format!("{:?}", args.vb.to_config()));

    let segments = parse_segment_embeddings(&read_input(&mut manifest, &args.dev_segments)?)?;
    let refs = parse_rttm(&read_input(&mut manifest, &args.dev_ref)?)?;
    let uem = parse_uem(&read_input(&mut manifest, &args.uem)?)?;
    let model = PldaModel::from_json(&read_input(&mut manifest, &args.plda)?)?;
    let domains = parse_domain_map(&read_input(&mut manifest, &args.domains)?)?;

    let mut grid = SweepGrid::default();
    if let Some(spec) = &args.grid_thresholds {
        grid.thresholds = parse_axis(spec)?;
    }
    if let Some(spec) = &args.grid_energies {
        grid.energies = parse_axis(spec)?;
    }
    grid.validate()?;
    manifest.set("thresholds", format!("{:?}", grid.thresholds));
    manifest.set("energies", format!("{:?}", grid.energies));

    let opts = RunOptions {
        length_norm: !args.no_length_norm,
        vb: args.vb.to_config(),
    };
    let groups = segments.group_by_recording();
    let result = sweep_all(
        &groups, &domains, &refs, &uem, &model, &grid, args.reseg, &opts,
    )?;

    write_outcome(&result.first_pass, &args.out_profiles, "")?;
    atomic_write(
        &sibling(&args.out_profiles, ".grid").with_extension("csv"),
        &result.first_pass.grid_csv(),
    )?;
    if let Some(reseg) = &result.reseg {
        write_outcome(reseg, &args.out_profiles, ".reseg")?;
        atomic_write(
            &sibling(&args.out_profiles, ".reseg.grid").with_extension("csv"),
            &reseg.grid_csv(),
        )?;
    }
    manifest.write_alongside(&args.out_profiles)?;

    for (domain, sweep) in &result.first_pass.per_domain {
        log::info!(
            "{domain}: threshold {:.3}, energy {:.2}, dev DER {:.2}%",
            sweep.best.ahc_threshold,
            sweep.best.pca_energy,
            sweep.best_der * 100.0
        );
    }
    println!(
        "global best: threshold {:.3}, energy {:.2}, dev DER {:.2}%",
        result.first_pass.global.best.ahc_threshold,
        result.first_pass.global.best.pca_energy,
        result.first_pass.global.best_der * 100.0
    );
    Ok(())
}
