//! DER and JER computation with optimal speaker mapping. Scoring is
//! overlap-aware, restricted to the scoring regions, and uses an exact
//! interval sweep (no frame discretization). No collar by default and
//! overlap regions scored, the DIHARD convention; both are exposed as
//! options.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::formats::{Annotation, ScoringRegions};

/// Optimality-preservation comparisons use this slack to absorb float
/// rounding in re-solved assignment totals.
const ASSIGNMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DerComponents {
    pub miss: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub total_ref: f64,
}

impl DerComponents {
    pub fn der(&self) -> Option<f64> {
        if self.total_ref > 0.0 {
            Some((self.miss + self.false_alarm + self.confusion) / self.total_ref)
        } else {
            None
        }
    }

    pub fn error_seconds(&self) -> f64 {
        self.miss + self.false_alarm + self.confusion
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingScore {
    pub der: Option<f64>,
    pub jer: Option<f64>,
    pub miss: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub total_ref: f64,
    pub n_ref_speakers: usize,
    /// per-reference-speaker JER terms, used for speaker-mean pooling
    pub speaker_jers: Vec<(String, f64)>,
}

/// Pooled DER/JER plus the per-recording breakdown. Pooled DER is
/// time-weighted (sum of error seconds over sum of reference seconds);
/// pooled JER is the mean over all reference speakers of all recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub der: Option<f64>,
    pub jer: Option<f64>,
    pub miss: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub total_ref: f64,
    pub per_recording: BTreeMap<String, RecordingScore>,
}

impl ScoreReport {
    /// Flat CSV: recording_id, der, jer, miss, fa, conf, total_ref, with a
    /// trailing OVERALL row. DER/JER are fractions; empty when undefined.
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_default()
        }
        let mut out = String::from("recording_id,der,jer,miss,fa,conf,total_ref\n");
        for (rec, s) in &self.per_recording {
            out.push_str(&format!(
                "{rec},{},{},{:.3},{:.3},{:.3},{:.3}\n",
                opt(s.der),
                opt(s.jer),
                s.miss,
                s.false_alarm,
                s.confusion,
                s.total_ref
            ));
        }
        out.push_str(&format!(
            "OVERALL,{},{},{:.3},{:.3},{:.3},{:.3}\n",
            opt(self.der),
            opt(self.jer),
            self.miss,
            self.false_alarm,
            self.confusion,
            self.total_ref
        ));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    /// Seconds excluded around every reference turn boundary.
    pub collar: f64,
    /// Score intervals where the reference has overlapping speakers.
    pub score_overlaps: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            collar: 0.0,
            score_overlaps: true,
        }
    }
}

// ---------------------------------------------------------------------------
// interval arithmetic over sorted, disjoint [onset, offset) lists

fn merge_intervals(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.retain(|(a, b)| b > a);
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (a, b) in intervals {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn intersect_intervals(xs: &[(f64, f64)], ys: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < xs.len() && j < ys.len() {
        let lo = xs[i].0.max(ys[j].0);
        let hi = xs[i].1.min(ys[j].1);
        if hi > lo {
            out.push((lo, hi));
        }
        if xs[i].1 <= ys[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn subtract_intervals(xs: &[(f64, f64)], remove: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(mut a, b) in xs {
        for &(ra, rb) in remove {
            if rb <= a || ra >= b {
                continue;
            }
            if ra > a {
                out.push((a, ra));
            }
            a = a.max(rb);
            if a >= b {
                break;
            }
        }
        if a < b {
            out.push((a, b));
        }
    }
    merge_intervals(out)
}

fn total_length(xs: &[(f64, f64)]) -> f64 {
    xs.iter().map(|(a, b)| b - a).sum()
}

/// Per-speaker merged interval lists, clipped to the scoring regions.
fn speaker_supports(
    ann: &Annotation,
    regions: &[(f64, f64)],
) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut raw: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for t in ann.turns() {
        raw.entry(t.speaker.clone())
            .or_default()
            .push((t.onset, t.offset()));
    }
    raw.into_iter()
        .map(|(spk, intervals)| {
            let merged = merge_intervals(intervals);
            (spk, intersect_intervals(&merged, regions))
        })
        .collect()
}

// ---------------------------------------------------------------------------

/// One-to-one partial mapping from reference speakers to hypothesis speakers
/// maximizing the total overlap duration inside the scoring regions. Pairs
/// with zero overlap are never mapped. Among equally optimal mappings the
/// lexicographically smallest sorted (ref, hyp) pair list wins.
pub fn optimal_mapping(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &ScoringRegions,
) -> BTreeMap<String, String> {
    optimal_mapping_in(reference, hypothesis, regions.regions())
}

fn optimal_mapping_in(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &[(f64, f64)],
) -> BTreeMap<String, String> {
    let ref_support = speaker_supports(reference, regions);
    let hyp_support = speaker_supports(hypothesis, regions);
    let ref_names: Vec<&String> = ref_support.keys().collect();
    let hyp_names: Vec<&String> = hyp_support.keys().collect();
    if ref_names.is_empty() || hyp_names.is_empty() {
        return BTreeMap::new();
    }

    let overlap: Vec<Vec<f64>> = ref_names
        .iter()
        .map(|r| {
            hyp_names
                .iter()
                .map(|h| total_length(&intersect_intervals(&ref_support[*r], &hyp_support[*h])))
                .collect()
        })
        .collect();

    let solve = |active_rows: &[usize], active_cols: &[usize]| -> f64 {
        if active_rows.is_empty() || active_cols.is_empty() {
            return 0.0;
        }
        let sub: Vec<Vec<f64>> = active_rows
            .iter()
            .map(|&r| active_cols.iter().map(|&c| overlap[r][c]).collect())
            .collect();
        let assigned = assignment::max_weight_assignment(&sub);
        assignment::assignment_weight(&sub, &assigned)
    };

    let mut rows: Vec<usize> = (0..ref_names.len()).collect();
    let mut cols: Vec<usize> = (0..hyp_names.len()).collect();
    let mut target = solve(&rows, &cols);
    let mut mapping = BTreeMap::new();

    // fix ref speakers one at a time, in name order, choosing the smallest
    // hyp name that preserves global optimality
    while let Some(&r) = rows.first() {
        let mut chosen: Option<usize> = None;
        for &c in &cols {
            if overlap[r][c] <= 0.0 {
                continue;
            }
            let rest_rows: Vec<usize> = rows.iter().copied().filter(|&x| x != r).collect();
            let rest_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let with_fix = overlap[r][c] + solve(&rest_rows, &rest_cols);
            if with_fix >= target - ASSIGNMENT_EPS {
                chosen = Some(c);
                target -= overlap[r][c];
                break;
            }
        }
        rows.retain(|&x| x != r);
        if let Some(c) = chosen {
            mapping.insert(ref_names[r].clone(), hyp_names[c].clone());
            cols.retain(|&x| x != c);
        }
    }
    mapping
}

/// Decompose the region timeline into maximal intervals with constant
/// ref/hyp speaker sets and accumulate the DIHARD error decomposition:
/// per interval of length d with r reference speakers, h hypothesis
/// speakers and c correctly mapped matches,
///   miss += max(0, r - h) d, fa += max(0, h - r) d,
///   confusion += (min(r, h) - c) d, total_ref += r d.
pub fn compute_der(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &ScoringRegions,
    mapping: &BTreeMap<String, String>,
) -> DerComponents {
    compute_der_in(reference, hypothesis, regions.regions(), mapping)
}

fn compute_der_in(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &[(f64, f64)],
    mapping: &BTreeMap<String, String>,
) -> DerComponents {
    let ref_support = speaker_supports(reference, regions);
    let hyp_support = speaker_supports(hypothesis, regions);

    let mut boundaries: Vec<f64> = Vec::new();
    for &(a, b) in regions {
        boundaries.push(a);
        boundaries.push(b);
    }
    for support in ref_support.values().chain(hyp_support.values()) {
        for &(a, b) in support {
            boundaries.push(a);
            boundaries.push(b);
        }
    }
    boundaries.sort_by(f64::total_cmp);
    boundaries.dedup();

    let active = |support: &[(f64, f64)], t: f64| -> bool {
        support
            .binary_search_by(|&(a, _)| a.total_cmp(&t))
            .map(|_| true)
            .unwrap_or_else(|ins| ins > 0 && t < support[ins - 1].1)
    };
    let in_regions = |t: f64| -> bool { active(regions, t) };

    let mut out = DerComponents::default();
    for w in boundaries.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let d = t1 - t0;
        if d <= 0.0 || !in_regions(t0) {
            continue;
        }
        let ref_active: Vec<&String> = ref_support
            .iter()
            .filter(|(_, sup)| active(sup, t0))
            .map(|(name, _)| name)
            .collect();
        let hyp_active: Vec<&String> = hyp_support
            .iter()
            .filter(|(_, sup)| active(sup, t0))
            .map(|(name, _)| name)
            .collect();
        let r = ref_active.len() as f64;
        let h = hyp_active.len() as f64;
        let c = ref_active
            .iter()
            .filter(|name| {
                mapping
                    .get(**name)
                    .is_some_and(|m| hyp_active.iter().any(|hn| *hn == m))
            })
            .count() as f64;
        out.total_ref += r * d;
        out.miss += (r - h).max(0.0) * d;
        out.false_alarm += (h - r).max(0.0) * d;
        out.confusion += (r.min(h) - c) * d;
    }
    out
}

/// Per-reference-speaker Jaccard error terms and their mean. Unmapped
/// reference speakers score 1; speakers with no time inside the regions are
/// excluded. Returns None when no reference speaker remains.
pub fn compute_jer(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &ScoringRegions,
    mapping: &BTreeMap<String, String>,
) -> Option<(f64, Vec<(String, f64)>)> {
    compute_jer_in(reference, hypothesis, regions.regions(), mapping)
}

fn compute_jer_in(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &[(f64, f64)],
    mapping: &BTreeMap<String, String>,
) -> Option<(f64, Vec<(String, f64)>)> {
    let ref_support = speaker_supports(reference, regions);
    let hyp_support = speaker_supports(hypothesis, regions);
    let mut terms = Vec::new();
    for (name, support) in &ref_support {
        let ref_len = total_length(support);
        if ref_len <= 0.0 {
            continue;
        }
        let jer = match mapping.get(name).and_then(|m| hyp_support.get(m)) {
            Some(hyp) => {
                let inter = total_length(&intersect_intervals(support, hyp));
                let union = ref_len + total_length(hyp) - inter;
                1.0 - inter / union
            }
            None => 1.0,
        };
        terms.push((name.clone(), jer));
    }
    if terms.is_empty() {
        return None;
    }
    let mean = terms.iter().map(|(_, j)| j).sum::<f64>() / terms.len() as f64;
    Some((mean, terms))
}

/// Effective scoring regions for one recording: the UEM regions (or the
/// full reference extent when absent), minus collar zones around reference
/// turn boundaries, minus reference overlap intervals when overlap scoring
/// is off.
fn effective_regions(
    reference: &Annotation,
    uem: Option<&ScoringRegions>,
    opts: &ScoreOptions,
) -> Vec<(f64, f64)> {
    let mut regions: Vec<(f64, f64)> = match uem {
        Some(r) => r.regions().to_vec(),
        None => {
            let onset = reference
                .turns()
                .iter()
                .map(|t| t.onset)
                .fold(f64::INFINITY, f64::min);
            let offset = reference
                .turns()
                .iter()
                .map(|t| t.offset())
                .fold(0.0f64, f64::max);
            if onset.is_finite() && offset > onset {
                vec![(onset, offset)]
            } else {
                Vec::new()
            }
        }
    };
    if opts.collar > 0.0 {
        let mut zones = Vec::new();
        for t in reference.turns() {
            zones.push((t.onset - opts.collar, t.onset + opts.collar));
            zones.push((t.offset() - opts.collar, t.offset() + opts.collar));
        }
        regions = subtract_intervals(&regions, &merge_intervals(zones));
    }
    if !opts.score_overlaps {
        // intervals where two or more reference speakers are active
        let supports = speaker_supports(reference, &regions);
        let mut boundaries: Vec<f64> = Vec::new();
        for sup in supports.values() {
            for &(a, b) in sup {
                boundaries.push(a);
                boundaries.push(b);
            }
        }
        boundaries.sort_by(f64::total_cmp);
        boundaries.dedup();
        let mut overlaps = Vec::new();
        for w in boundaries.windows(2) {
            let t0 = w[0];
            let count = supports
                .values()
                .filter(|sup| {
                    sup.binary_search_by(|&(a, _)| a.total_cmp(&t0))
                        .map(|_| true)
                        .unwrap_or_else(|ins| ins > 0 && t0 < sup[ins - 1].1)
                })
                .count();
            if count >= 2 {
                overlaps.push((w[0], w[1]));
            }
        }
        regions = subtract_intervals(&regions, &merge_intervals(overlaps));
    }
    regions
}

/// Score a full corpus. A reference recording missing from the hypothesis
/// is treated as an empty hypothesis; hypothesis recordings not in the
/// reference are an error. Recordings with no reference time are excluded
/// from pooling with a warning.
pub fn score_report(
    references: &BTreeMap<String, Annotation>,
    hypotheses: &BTreeMap<String, Annotation>,
    uem: Option<&BTreeMap<String, ScoringRegions>>,
    opts: &ScoreOptions,
) -> Result<ScoreReport> {
    for rec in hypotheses.keys() {
        if !references.contains_key(rec) {
            return Err(Error::validation(format!(
                "hypothesis contains recording {rec:?} absent from the reference"
            )));
        }
    }

    let mut report = ScoreReport {
        der: None,
        jer: None,
        miss: 0.0,
        false_alarm: 0.0,
        confusion: 0.0,
        total_ref: 0.0,
        per_recording: BTreeMap::new(),
    };
    let mut jer_terms = 0usize;
    let mut jer_sum = 0.0f64;

    for (rec, reference) in references {
        let empty = Annotation::empty(rec.clone());
        let hypothesis = hypotheses.get(rec).unwrap_or(&empty);
        let rec_uem = uem.and_then(|m| m.get(rec));
        if uem.is_some() && rec_uem.is_none() {
            log::warn!("recording {rec}: no UEM entry, scoring over the full reference extent");
        }
        let regions = effective_regions(reference, rec_uem, opts);
        let mapping = optimal_mapping_in(reference, hypothesis, &regions);
        let der = compute_der_in(reference, hypothesis, &regions, &mapping);
        let jer = compute_jer_in(reference, hypothesis, &regions, &mapping);

        if der.total_ref > 0.0 {
            report.miss += der.miss;
            report.false_alarm += der.false_alarm;
            report.confusion += der.confusion;
            report.total_ref += der.total_ref;
        } else {
            log::warn!("recording {rec}: no reference speech inside scoring regions, DER undefined; excluded from pooling");
        }
        let (jer_mean, speaker_jers) = match &jer {
            Some((mean, terms)) => {
                jer_sum += terms.iter().map(|(_, j)| j).sum::<f64>();
                jer_terms += terms.len();
                (Some(*mean), terms.clone())
            }
            None => (None, Vec::new()),
        };
        report.per_recording.insert(
            rec.clone(),
            RecordingScore {
                der: der.der(),
                jer: jer_mean,
                miss: der.miss,
                false_alarm: der.false_alarm,
                confusion: der.confusion,
                total_ref: der.total_ref,
                n_ref_speakers: reference.speakers().len(),
                speaker_jers,
            },
        );
    }
    if report.total_ref > 0.0 {
        report.der = Some((report.miss + report.false_alarm + report.confusion) / report.total_ref);
    }
    if jer_terms > 0 {
        report.jer = Some(jer_sum / jer_terms as f64);
    }
    Ok(report)
}
