//! The experiment flows: per-recording first-pass diarization (recording
//! PCA + PLDA scoring + AHC, optional VB-HMM refinement), and the
//! per-domain grid search over (AHC threshold, PCA energy) that produces
//! tuned domain profiles plus global fallbacks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering;
use crate::error::{Error, Result};
use crate::formats::{Annotation, DomainProfile, ProfileSet, ScoringRegions, SegmentEmbedding, Turn};
use crate::metrics;
use crate::plda::{self, PldaModel};
use crate::reseg::{self, VbConfig};
use crate::BASELINE_PCA_ENERGY;

/// Knobs shared by every diarization run. Length normalization is the usual
/// PLDA pre-step and defaults to on; it must match how the model was
/// trained.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub length_norm: bool,
    pub vb: VbConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            length_norm: true,
            vb: VbConfig::default(),
        }
    }
}

/// Per-recording outcome of one configuration.
#[derive(Debug, Clone)]
pub struct DiarizedRecording {
    pub annotation: Annotation,
    pub n_clusters_first_pass: usize,
    pub n_speakers_final: usize,
    pub elbo_trace: Option<Vec<f64>>,
}

/// Diarize one recording: score, cluster at `threshold`, optionally refine
/// with VB-HMM, and emit speaker-labeled turns (`spk<k>` named after the
/// first-pass cluster indices). Adjacent same-speaker segments merge into
/// one turn.
pub fn diarize_recording(
    recording_id: &str,
    segments: &[SegmentEmbedding],
    model: &PldaModel,
    threshold: f64,
    energy: f64,
    reseg: bool,
    opts: &RunOptions,
) -> Result<DiarizedRecording> {
    if segments.is_empty() {
        return Ok(DiarizedRecording {
            annotation: Annotation::empty(recording_id),
            n_clusters_first_pass: 0,
            n_speakers_final: 0,
            elbo_trace: None,
        });
    }
    let mut vectors: Vec<Vec<f64>> = segments.iter().map(|s| s.vector.clone()).collect();
    if opts.length_norm {
        plda::length_normalize_rows(&mut vectors)?;
    }
    let proj = plda::recording_pca(&vectors, energy)?;
    let scores = plda::score_matrix_projected(model, &vectors, &proj)?;
    let assignment = clustering::ahc_cluster(&scores, threshold)?;

    let mut labels = assignment.labels.clone();
    let mut elbo_trace = None;
    if reseg && segments.len() > 1 {
        let vb = reseg::vb_resegment(&vectors, &labels, model, &proj, &opts.vb)?;
        labels = vb.labels;
        elbo_trace = Some(vb.elbo_trace);
    }

    let mut final_speakers: Vec<usize> = labels.clone();
    final_speakers.sort_unstable();
    final_speakers.dedup();

    let turns = labels_to_turns(recording_id, segments, &labels)?;
    Ok(DiarizedRecording {
        annotation: Annotation::from_turns(recording_id, turns)?,
        n_clusters_first_pass: assignment.n_clusters,
        n_speakers_final: final_speakers.len(),
        elbo_trace,
    })
}

fn labels_to_turns(
    recording_id: &str,
    segments: &[SegmentEmbedding],
    labels: &[usize],
) -> Result<Vec<Turn>> {
    let mut turns = Vec::new();
    let mut current: Option<(usize, f64, f64)> = None; // label, onset, offset
    for (seg, &label) in segments.iter().zip(labels) {
        match current.as_mut() {
            Some((cur_label, _, offset)) if *cur_label == label && seg.onset <= *offset + 1e-6 => {
                *offset = seg.offset.max(*offset);
            }
            _ => {
                if let Some((l, a, b)) = current.take() {
                    turns.push(Turn::new(recording_id, a, b - a, format!("spk{l}"))?);
                }
                current = Some((label, seg.onset, seg.offset));
            }
        }
    }
    if let Some((l, a, b)) = current.take() {
        turns.push(Turn::new(recording_id, a, b - a, format!("spk{l}"))?);
    }
    Ok(turns)
}

/// Run one (threshold, energy) configuration over a group of recordings.
/// Recordings process in parallel; the result map is order-independent.
pub fn run_config(
    recordings: &BTreeMap<String, Vec<SegmentEmbedding>>,
    model: &PldaModel,
    threshold: f64,
    energy: f64,
    reseg: bool,
    opts: &RunOptions,
) -> Result<BTreeMap<String, Annotation>> {
    let entries: Vec<(&String, &Vec<SegmentEmbedding>)> = recordings.iter().collect();
    let results: Vec<(String, Annotation)> = entries
        .par_iter()
        .map(|(rec, segments)| {
            diarize_recording(rec, segments, model, threshold, energy, reseg, opts)
                .map(|out| ((*rec).clone(), out.annotation))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().collect())
}

// ---------------------------------------------------------------------------
// grid search

/// The search grid. Thresholds are raw PLDA-score units. The default grid
/// covers -2.0..=2.0 in 0.1 steps and energies 0.10..=0.95 in 0.05 steps
/// (which includes the 0.30 baseline point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub thresholds: Vec<f64>,
    pub energies: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let thresholds: Vec<f64> = (-20..=20).map(|i| i as f64 / 10.0).collect();
        let energies: Vec<f64> = (2..=19).map(|i| i as f64 / 20.0).collect();
        SweepGrid {
            thresholds,
            energies,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.energies.is_empty() {
            return Err(Error::config("sweep grid must be non-empty"));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("thresholds must be strictly ascending"));
        }
        if self.energies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("energies must be strictly ascending"));
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("thresholds must be finite"));
        }
        if self.energies.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::config("energies must lie in (0, 1]"));
        }
        Ok(())
    }

    /// The grid energy closest to the 0.30 baseline (ties toward the
    /// smaller value), used for the baseline-style restricted optima.
    pub fn baseline_energy(&self) -> f64 {
        let mut best = self.energies[0];
        for &e in &self.energies {
            let better = (e - BASELINE_PCA_ENERGY).abs() < (best - BASELINE_PCA_ENERGY).abs();
            if better {
                best = e;
            }
        }
        best
    }
}

/// One evaluated grid point (per domain group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub threshold: f64,
    pub energy: f64,
    pub reseg: bool,
    pub error_seconds: f64,
    pub total_ref: f64,
    pub jer_sum: f64,
    pub jer_count: usize,
}

impl GridCell {
    pub fn der(&self) -> f64 {
        if self.total_ref > 0.0 {
            self.error_seconds / self.total_ref
        } else {
            f64::NAN
        }
    }

    pub fn jer(&self) -> f64 {
        if self.jer_count > 0 {
            self.jer_sum / self.jer_count as f64
        } else {
            f64::NAN
        }
    }
}

/// Sweep outcome for one group (a domain, or the pooled corpus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSweep {
    pub domain: String,
    /// full-grid optimum
    pub best: DomainProfile,
    pub best_der: f64,
    /// optimum restricted to the baseline energy
    pub best_baseline_energy: DomainProfile,
    pub best_baseline_der: f64,
    pub table: Vec<GridCell>,
}

/// Full sweep result: per-domain optima plus the pooled-global sweep that
/// yields the fallback profile and the single-threshold baseline point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub per_domain: BTreeMap<String, DomainSweep>,
    pub global: DomainSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub first_pass: SweepOutcome,
    pub reseg: Option<SweepOutcome>,
}

impl SweepOutcome {
    /// Fully tuned per-domain (threshold, energy) profiles; fallback = the
    /// best single global profile.
    pub fn tuned_profiles(&self) -> ProfileSet {
        let mut set = ProfileSet::default();
        for sweep in self.per_domain.values() {
            set.profiles
                .insert(sweep.best.domain.clone(), sweep.best.clone());
        }
        set.fallback = Some(self.global.best.clone());
        set
    }

    /// Per-domain thresholds at the baseline energy; fallback = the
    /// baseline-energy global point.
    pub fn threshold_only_profiles(&self) -> ProfileSet {
        let mut set = ProfileSet::default();
        for sweep in self.per_domain.values() {
            set.profiles.insert(
                sweep.best_baseline_energy.domain.clone(),
                sweep.best_baseline_energy.clone(),
            );
        }
        set.fallback = Some(self.global.best_baseline_energy.clone());
        set
    }

    /// The single global baseline-energy profile, as fallback only.
    pub fn baseline_profile(&self) -> ProfileSet {
        ProfileSet {
            profiles: BTreeMap::new(),
            fallback: Some(self.global.best_baseline_energy.clone()),
        }
    }

    /// Full grid table as CSV: domain, threshold, energy, der, jer.
    pub fn grid_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("domain,threshold,energy,der,jer\n");
        for sweep in self.per_domain.values().chain(std::iter::once(&self.global)) {
            for cell in &sweep.table {
                writeln!(
                    out,
                    "{},{},{},{:.6},{:.6}",
                    sweep.domain,
                    cell.threshold,
                    cell.energy,
                    cell.der(),
                    cell.jer()
                )
                .expect("string write");
            }
        }
        out
    }
}

/// Evaluate every grid point over one group of recordings. For a fixed
/// energy the score matrix and the full merge sequence are computed once
/// per recording and shared across thresholds.
fn evaluate_group(
    recordings: &BTreeMap<String, Vec<SegmentEmbedding>>,
    refs: &BTreeMap<String, Annotation>,
    uem: &BTreeMap<String, ScoringRegions>,
    model: &PldaModel,
    grid: &SweepGrid,
    with_reseg: bool,
    opts: &RunOptions,
) -> Result<Vec<GridCell>> {
    let recs: Vec<(&String, &Vec<SegmentEmbedding>)> = recordings.iter().collect();
    let mut cells = Vec::new();

    for &energy in &grid.energies {
        // per recording: normalized vectors, projection, dendrogram
        struct Prepared<'a> {
            rec: &'a String,
            segments: &'a [SegmentEmbedding],
            vectors: Vec<Vec<f64>>,
            proj: plda::PcaProjection,
            dendrogram: Option<clustering::Dendrogram>,
        }
        let prepared: Vec<Prepared> = recs
            .par_iter()
            .map(|(rec, segments)| {
                let mut vectors: Vec<Vec<f64>> =
                    segments.iter().map(|s| s.vector.clone()).collect();
                if opts.length_norm {
                    plda::length_normalize_rows(&mut vectors)?;
                }
                if vectors.is_empty() {
                    return Err(Error::config(format!("recording {rec} has no segments")));
                }
                let proj = plda::recording_pca(&vectors, energy)?;
                let scores = plda::score_matrix_projected(model, &vectors, &proj)?;
                let dendrogram = Some(clustering::ahc_dendrogram(&scores)?);
                Ok(Prepared {
                    rec: *rec,
                    segments,
                    vectors,
                    proj,
                    dendrogram,
                })
            })
            .collect::<Result<_>>()?;

        for &threshold in &grid.thresholds {
            for &use_reseg in &[false, true] {
                if use_reseg && !with_reseg {
                    continue;
                }
                let hyps: Vec<(String, Annotation)> = prepared
                    .par_iter()
                    .map(|p| {
                        let assignment = p.dendrogram.as_ref().expect("built above").cut(threshold);
                        let mut labels = assignment.labels;
                        if use_reseg && p.segments.len() > 1 {
                            let vb = reseg::vb_resegment(
                                &p.vectors,
                                &labels,
                                model,
                                &p.proj,
                                &opts.vb,
                            )?;
                            labels = vb.labels;
                        }
                        let turns = labels_to_turns(p.rec, p.segments, &labels)?;
                        Ok((p.rec.clone(), Annotation::from_turns(p.rec.clone(), turns)?))
                    })
                    .collect::<Result<_>>()?;
                let hyp_map: BTreeMap<String, Annotation> = hyps.into_iter().collect();
                let report =
                    metrics::score_report(refs, &hyp_map, Some(uem), &Default::default())?;
                let jer_count: usize = report
                    .per_recording
                    .values()
                    .map(|r| r.speaker_jers.len())
                    .sum();
                let jer_sum: f64 = report
                    .per_recording
                    .values()
                    .flat_map(|r| r.speaker_jers.iter().map(|(_, j)| *j))
                    .sum();
                cells.push(GridCell {
                    threshold,
                    energy,
                    reseg: use_reseg,
                    error_seconds: report.miss + report.false_alarm + report.confusion,
                    total_ref: report.total_ref,
                    jer_sum,
                    jer_count,
                });
            }
        }
    }
    Ok(cells)
}

fn argmin_cells<'a>(
    domain: &str,
    cells: impl Iterator<Item = &'a GridCell>,
) -> Option<(DomainProfile, f64)> {
    let mut best: Option<(&'a GridCell, f64)> = None;
    for cell in cells {
        let der = cell.der();
        if der.is_nan() {
            continue;
        }
        // strict improvement only: cells arrive in (energy asc, threshold
        // asc) order, so ties resolve to the smaller energy then threshold
        let better = match &best {
            None => true,
            Some((_, best_der)) => der < *best_der,
        };
        if better {
            best = Some((cell, der));
        }
    }
    best.map(|(cell, der)| {
        (
            DomainProfile {
                domain: domain.to_string(),
                ahc_threshold: cell.threshold,
                pca_energy: cell.energy,
            },
            der,
        )
    })
}

fn summarize(
    domain: &str,
    cells: Vec<GridCell>,
    grid: &SweepGrid,
    reseg_pass: bool,
) -> Result<DomainSweep> {
    let baseline = grid.baseline_energy();
    let pass_cells = || cells.iter().filter(|c| c.reseg == reseg_pass);
    let (best, best_der) = argmin_cells(domain, pass_cells())
        .ok_or_else(|| Error::config(format!("domain {domain}: no scoreable grid point")))?;
    let (best_b, best_b_der) = argmin_cells(domain, pass_cells().filter(|c| c.energy == baseline))
        .ok_or_else(|| Error::config(format!("domain {domain}: no baseline-energy grid point")))?;
    Ok(DomainSweep {
        domain: domain.to_string(),
        best,
        best_der,
        best_baseline_energy: best_b,
        best_baseline_der: best_b_der,
        table: cells.into_iter().filter(|c| c.reseg == reseg_pass).collect(),
    })
}

/// Sweep one domain group. `segments_by_recording` must contain only the
/// group's recordings.
pub fn sweep_domain(
    domain: &str,
    segments_by_recording: &BTreeMap<String, Vec<SegmentEmbedding>>,
    refs: &BTreeMap<String, Annotation>,
    uem: &BTreeMap<String, ScoringRegions>,
    model: &PldaModel,
    grid: &SweepGrid,
    with_reseg: bool,
    opts: &RunOptions,
) -> Result<DomainSweep> {
    grid.validate()?;
    if segments_by_recording.is_empty() {
        return Err(Error::config(format!("domain {domain}: empty recording group")));
    }
    let group_refs: BTreeMap<String, Annotation> = segments_by_recording
        .keys()
        .filter_map(|rec| refs.get(rec).map(|a| (rec.clone(), a.clone())))
        .collect();
    if group_refs.values().all(|a| a.is_empty()) {
        return Err(Error::config(format!(
            "domain {domain}: no recording has a non-empty reference"
        )));
    }
    let cells = evaluate_group(
        segments_by_recording,
        &group_refs,
        uem,
        model,
        grid,
        with_reseg,
        opts,
    )?;
    summarize(domain, cells, grid, with_reseg)
}

/// Sweep every domain separately, then derive the pooled-global sweep from
/// the same per-domain evaluations (summing error and reference seconds per
/// grid point), which keeps the structural guarantees exact: the per-domain
/// optimum never exceeds the global profile's DER on that domain, and the
/// tuned profiles never lose to the single global profile in pooled DER.
pub fn sweep_all(
    segments_by_recording: &BTreeMap<String, Vec<SegmentEmbedding>>,
    domain_map: &BTreeMap<String, String>,
    refs: &BTreeMap<String, Annotation>,
    uem: &BTreeMap<String, ScoringRegions>,
    model: &PldaModel,
    grid: &SweepGrid,
    with_reseg: bool,
    opts: &RunOptions,
) -> Result<SweepResult> {
    grid.validate()?;
    let mut groups: BTreeMap<String, BTreeMap<String, Vec<SegmentEmbedding>>> = BTreeMap::new();
    for (rec, segments) in segments_by_recording {
        let domain = domain_map.get(rec).ok_or_else(|| {
            Error::config(format!("recording {rec} has no domain label for the sweep"))
        })?;
        groups
            .entry(domain.clone())
            .or_default()
            .insert(rec.clone(), segments.clone());
    }
    if groups.is_empty() {
        return Err(Error::config("no recordings to sweep"));
    }

    let mut cells_by_domain: BTreeMap<String, Vec<GridCell>> = BTreeMap::new();
    for (domain, group) in &groups {
        let group_refs: BTreeMap<String, Annotation> = group
            .keys()
            .filter_map(|rec| refs.get(rec).map(|a| (rec.clone(), a.clone())))
            .collect();
        if group_refs.values().all(|a| a.is_empty()) {
            return Err(Error::config(format!(
                "domain {domain}: no recording has a non-empty reference"
            )));
        }
        let cells = evaluate_group(group, &group_refs, uem, model, grid, with_reseg, opts)?;
        cells_by_domain.insert(domain.clone(), cells);
    }

    // pooled-global table: sum the per-domain tables cell-wise
    let first = cells_by_domain.values().next().expect("non-empty");
    let mut global_cells: Vec<GridCell> = first
        .iter()
        .map(|c| GridCell {
            threshold: c.threshold,
            energy: c.energy,
            reseg: c.reseg,
            error_seconds: 0.0,
            total_ref: 0.0,
            jer_sum: 0.0,
            jer_count: 0,
        })
        .collect();
    for cells in cells_by_domain.values() {
        for (acc, cell) in global_cells.iter_mut().zip(cells) {
            debug_assert_eq!(acc.threshold, cell.threshold);
            debug_assert_eq!(acc.energy, cell.energy);
            debug_assert_eq!(acc.reseg, cell.reseg);
            acc.error_seconds += cell.error_seconds;
            acc.total_ref += cell.total_ref;
            acc.jer_sum += cell.jer_sum;
            acc.jer_count += cell.jer_count;
        }
    }

    let build_outcome = |reseg_pass: bool| -> Result<SweepOutcome> {
        let mut per_domain = BTreeMap::new();
        for (domain, cells) in &cells_by_domain {
            per_domain.insert(
                domain.clone(),
                summarize(domain, cells.clone(), grid, reseg_pass)?,
            );
        }
        let global = summarize("global", global_cells.clone(), grid, reseg_pass)?;
        Ok(SweepOutcome { per_domain, global })
    };

    Ok(SweepResult {
        first_pass: build_outcome(false)?,
        reseg: if with_reseg {
            Some(build_outcome(true)?)
        } else {
            None
        },
    })
}
