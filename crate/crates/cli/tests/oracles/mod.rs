//! Independent oracle implementations backing the acceptance suite: frame
//! discretization for DER/JER, exhaustive enumeration for mappings and HMM
//! paths, direct density evaluation for PLDA, and a from-scratch AHC
//! reference. Deliberately slow and simple; none of them share code with
//! the implementations they check.

use std::collections::BTreeMap;

use diarkit::formats::{Annotation, ScoringRegions};
use diarkit::metrics::DerComponents;
use diarkit::plda::{PldaMeta, PldaModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

const FRAME: f64 = 0.01;

fn frame_active(ann: &Annotation, speaker: &str, t: f64) -> bool {
    ann.turns()
        .iter()
        .any(|turn| turn.speaker == speaker && t >= turn.onset && t < turn.offset())
}

fn speakers(ann: &Annotation) -> Vec<String> {
    ann.speakers().into_iter().map(str::to_string).collect()
}

/// 10 ms frame-level DER decomposition.
pub fn frame_der(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &ScoringRegions,
    mapping: &BTreeMap<String, String>,
) -> DerComponents {
    let end = regions.regions().iter().map(|&(_, b)| b).fold(0.0f64, f64::max);
    let n_frames = (end / FRAME).round() as usize;
    let ref_speakers = speakers(reference);
    let hyp_speakers = speakers(hypothesis);
    let mut out = DerComponents::default();
    for f in 0..n_frames {
        let t = (f as f64 + 0.5) * FRAME;
        if !regions.regions().iter().any(|&(a, b)| t >= a && t < b) {
            continue;
        }
        let ref_active: Vec<&String> = ref_speakers
            .iter()
            .filter(|s| frame_active(reference, s, t))
            .collect();
        let hyp_active: Vec<&String> = hyp_speakers
            .iter()
            .filter(|s| frame_active(hypothesis, s, t))
            .collect();
        let r = ref_active.len() as f64;
        let h = hyp_active.len() as f64;
        let c = ref_active
            .iter()
            .filter(|s| {
                mapping
                    .get(**s)
                    .is_some_and(|m| hyp_active.iter().any(|hs| *hs == m))
            })
            .count() as f64;
        out.total_ref += r * FRAME;
        out.miss += (r - h).max(0.0) * FRAME;
        out.false_alarm += (h - r).max(0.0) * FRAME;
        out.confusion += (r.min(h) - c) * FRAME;
    }
    out
}

/// Frame-level per-reference-speaker JER terms under the given mapping,
/// sorted by speaker name. Speakers with no frames inside the regions are
/// excluded.
pub fn frame_jer(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &ScoringRegions,
    mapping: &BTreeMap<String, String>,
) -> Vec<(String, f64)> {
    let end = regions.regions().iter().map(|&(_, b)| b).fold(0.0f64, f64::max);
    let n_frames = (end / FRAME).round() as usize;
    let mut terms = Vec::new();
    for ref_speaker in speakers(reference) {
        let mapped = mapping.get(&ref_speaker);
        let mut n_ref = 0u64;
        let mut n_hyp = 0u64;
        let mut n_both = 0u64;
        for f in 0..n_frames {
            let t = (f as f64 + 0.5) * FRAME;
            if !regions.regions().iter().any(|&(a, b)| t >= a && t < b) {
                continue;
            }
            let in_ref = frame_active(reference, &ref_speaker, t);
            let in_hyp = mapped.is_some_and(|m| frame_active(hypothesis, m, t));
            n_ref += in_ref as u64;
            n_hyp += in_hyp as u64;
            n_both += (in_ref && in_hyp) as u64;
        }
        if n_ref == 0 {
            continue;
        }
        let jer = match mapped {
            Some(_) => {
                let union = n_ref + n_hyp - n_both;
                1.0 - n_both as f64 / union as f64
            }
            None => 1.0,
        };
        terms.push((ref_speaker, jer));
    }
    terms
}

/// Exhaustive search over all injective partial mappings (pairs restricted
/// to positive overlap). Among equal totals (within 1e-9), the mapping with
/// the lexicographically smallest sorted (ref, hyp) pair list wins.
pub fn enumerate_best_mapping(
    reference: &Annotation,
    hypothesis: &Annotation,
    regions: &ScoringRegions,
) -> BTreeMap<String, String> {
    let end = regions.regions().iter().map(|&(_, b)| b).fold(0.0f64, f64::max);
    let n_frames = (end / FRAME).round() as usize;
    let ref_names = speakers(reference);
    let hyp_names = speakers(hypothesis);

    // frame-count overlap matrix
    let mut overlap = vec![vec![0.0f64; hyp_names.len()]; ref_names.len()];
    for f in 0..n_frames {
        let t = (f as f64 + 0.5) * FRAME;
        if !regions.regions().iter().any(|&(a, b)| t >= a && t < b) {
            continue;
        }
        for (i, r) in ref_names.iter().enumerate() {
            if !frame_active(reference, r, t) {
                continue;
            }
            for (j, h) in hyp_names.iter().enumerate() {
                if frame_active(hypothesis, h, t) {
                    overlap[i][j] += FRAME;
                }
            }
        }
    }

    struct Search<'a> {
        overlap: &'a [Vec<f64>],
        ref_names: &'a [String],
        hyp_names: &'a [String],
        best_total: f64,
        best_pairs: Vec<(usize, usize)>,
    }
    impl Search<'_> {
        fn visit(&mut self, row: usize, used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, total: f64) {
            if row == self.ref_names.len() {
                if total > self.best_total + 1e-9 {
                    self.best_total = total;
                    self.best_pairs = pairs.clone();
                } else if (total - self.best_total).abs() <= 1e-9
                    && lex_smaller(pairs, &self.best_pairs, self.ref_names, self.hyp_names)
                {
                    self.best_pairs = pairs.clone();
                }
                return;
            }
            self.visit(row + 1, used, pairs, total); // row unmapped
            for col in 0..self.hyp_names.len() {
                if !used[col] && self.overlap[row][col] > 0.0 {
                    used[col] = true;
                    pairs.push((row, col));
                    self.visit(row + 1, used, pairs, total + self.overlap[row][col]);
                    pairs.pop();
                    used[col] = false;
                }
            }
        }
    }
    fn lex_smaller(
        a: &[(usize, usize)],
        b: &[(usize, usize)],
        ref_names: &[String],
        hyp_names: &[String],
    ) -> bool {
        let key = |pairs: &[(usize, usize)]| -> Vec<(String, String)> {
            let mut v: Vec<(String, String)> = pairs
                .iter()
                .map(|&(r, h)| (ref_names[r].clone(), hyp_names[h].clone()))
                .collect();
            v.sort();
            v
        };
        key(a) < key(b)
    }

    let mut search = Search {
        overlap: &overlap,
        ref_names: &ref_names,
        hyp_names: &hyp_names,
        best_total: f64::NEG_INFINITY,
        best_pairs: Vec::new(),
    };
    let mut used = vec![false; hyp_names.len()];
    let mut pairs = Vec::new();
    search.visit(0, &mut used, &mut pairs, 0.0);

    search
        .best_pairs
        .iter()
        .map(|&(r, h)| (ref_names[r].clone(), hyp_names[h].clone()))
        .collect()
}

// ---------------------------------------------------------------------
// PLDA

pub fn diag_model(mu: &[f64], b: &[f64], w: &[f64]) -> PldaModel {
    let d = mu.len();
    PldaModel {
        mu: DVector::from_row_slice(mu),
        sigma_b: DMatrix::from_fn(d, d, |i, j| if i == j { b[i] } else { 0.0 }),
        sigma_w: DMatrix::from_fn(d, d, |i, j| if i == j { w[i] } else { 0.0 }),
        meta: PldaMeta::default(),
    }
}

pub fn random_model(rng: &mut ChaCha20Rng, d: usize) -> PldaModel {
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut w = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            w[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    PldaModel {
        mu: DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)),
        sigma_b: &a * a.transpose(),
        sigma_w: &w * w.transpose() + DMatrix::identity(d, d) * 0.5,
        meta: PldaMeta::default(),
    }
}

fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let det = cov.determinant();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + (inv * &diff).dot(&diff))
}

/// Evaluate both hypotheses as explicit 2D-dimensional Gaussians.
pub fn direct_density_llr(model: &PldaModel, x1: &[f64], x2: &[f64]) -> f64 {
    let d = model.dim();
    let total = &model.sigma_b + &model.sigma_w;
    let mut joint_mu = DVector::zeros(2 * d);
    let mut same = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        joint_mu[i] = model.mu[i];
        joint_mu[d + i] = model.mu[i];
        for j in 0..d {
            same[(i, j)] = total[(i, j)];
            same[(d + i, d + j)] = total[(i, j)];
            same[(i, d + j)] = model.sigma_b[(i, j)];
            same[(d + i, j)] = model.sigma_b[(i, j)];
        }
    }
    let mut x = DVector::zeros(2 * d);
    for i in 0..d {
        x[i] = x1[i];
        x[d + i] = x2[i];
    }
    gaussian_logpdf(&x, &joint_mu, &same)
        - gaussian_logpdf(&DVector::from_row_slice(x1), &model.mu, &total)
        - gaussian_logpdf(&DVector::from_row_slice(x2), &model.mu, &total)
}

// ---------------------------------------------------------------------
// naive AHC reference: recompute every average linkage from the original
// matrix at every step

pub fn naive_ahc(scores: &DMatrix<f64>, threshold: f64) -> Vec<usize> {
    let n = scores.nrows();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        if clusters.len() <= 1 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += scores[(i.min(j), i.max(j))];
                    }
                }
                let avg = sum / (clusters[a].len() * clusters[b].len()) as f64;
                let key = (clusters[a][0], clusters[b][0]);
                let better = match best {
                    None => true,
                    Some((score, bi, bj)) => {
                        avg > score
                            || (avg == score && key < (clusters[bi][0], clusters[bj][0]))
                    }
                };
                if better {
                    best = Some((avg, a, b));
                }
            }
        }
        let (score, a, b) = best.expect("pair exists");
        if score < threshold {
            break;
        }
        let absorbed = clusters.remove(b);
        clusters[a].extend(absorbed);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    clusters.sort_by_key(|c| c[0]);
    let mut labels = vec![0usize; n];
    for (idx, cluster) in clusters.iter().enumerate() {
        for &member in cluster {
            labels[member] = idx;
        }
    }
    labels
}

// ---------------------------------------------------------------------
// brute-force HMM path enumeration

pub fn enumerate_hmm(log_emissions: &DMatrix<f64>, loop_probability: f64) -> (DMatrix<f64>, f64) {
    let (t_len, s_len) = log_emissions.shape();
    let log_pi = -(s_len as f64).ln();
    let (log_stay, log_switch) = if s_len == 1 {
        (0.0, f64::NEG_INFINITY)
    } else {
        (
            loop_probability.ln(),
            ((1.0 - loop_probability) / (s_len - 1) as f64).ln(),
        )
    };
    let n_paths = s_len.pow(t_len as u32);
    let mut logps = Vec::with_capacity(n_paths);
    let mut paths = Vec::with_capacity(n_paths);
    for code in 0..n_paths {
        let mut states = Vec::with_capacity(t_len);
        let mut rest = code;
        for _ in 0..t_len {
            states.push(rest % s_len);
            rest /= s_len;
        }
        let mut lp = log_pi + log_emissions[(0, states[0])];
        for t in 1..t_len {
            lp += if states[t] == states[t - 1] { log_stay } else { log_switch };
            lp += log_emissions[(t, states[t])];
        }
        logps.push(lp);
        paths.push(states);
    }
    let max = logps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logps.iter().map(|lp| (lp - max).exp()).sum::<f64>().ln();
    let mut post = DMatrix::zeros(t_len, s_len);
    for (states, lp) in paths.iter().zip(&logps) {
        let weight = (lp - log_z).exp();
        for (t, &s) in states.iter().enumerate() {
            post[(t, s)] += weight;
        }
    }
    (post, log_z)
}
