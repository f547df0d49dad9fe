//! Deterministic synthetic corpus generation: domain-labeled utterance
//! embeddings, segment tables, reference RTTM/UEM and a truth CSV. The
//! generative structure matches the PLDA backend's model (segment = domain
//! mean + speaker latent + noise), so desk-scale corpora exercise the whole
//! pipeline end to end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::formats::{
    self, Annotation, ScoringRegions, SegmentEmbedding, SegmentTable, Turn, UtteranceEmbedding,
    UtteranceTable,
};
use crate::rng::{
    derive_rng, STREAM_ADI_TABLE, STREAM_SYNTH_DOMAIN, STREAM_SYNTH_PLDA, STREAM_SYNTH_RECORDING,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_domains: usize,
    pub recordings_per_domain: usize,
    pub speakers_min: usize,
    pub speakers_max: usize,
    pub dim: usize,
    /// stddev of domain means
    pub domain_spread: f64,
    /// stddev of speaker latents
    pub between_scale: f64,
    /// stddev of per-segment noise
    pub within_scale: f64,
    pub turn_min: f64,
    pub turn_max: f64,
    pub recording_duration: f64,
    pub subsegment_hop: f64,
    /// fraction of each turn overlapped with its predecessor (0 disables)
    pub overlap_fraction: f64,
    /// background speakers for the PLDA training table
    pub plda_speakers: usize,
    pub plda_segments_per_speaker: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_domains: 3,
            recordings_per_domain: 4,
            speakers_min: 2,
            speakers_max: 4,
            dim: 16,
            domain_spread: 3.0,
            between_scale: 1.0,
            within_scale: 0.3,
            turn_min: 2.0,
            turn_max: 6.0,
            recording_duration: 120.0,
            subsegment_hop: 1.0,
            overlap_fraction: 0.0,
            plda_speakers: 60,
            plda_segments_per_speaker: 20,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_domains == 0
            || self.recordings_per_domain == 0
            || self.speakers_min == 0
            || self.dim == 0
            || self.plda_speakers == 0
            || self.plda_segments_per_speaker == 0
        {
            return Err(Error::config("all counts must be at least 1"));
        }
        if self.speakers_min > self.speakers_max {
            return Err(Error::config("speakers_min must not exceed speakers_max"));
        }
        if !(self.domain_spread > 0.0 && self.between_scale > 0.0 && self.within_scale > 0.0) {
            return Err(Error::config("scales must be positive"));
        }
        if !(self.turn_min > 0.0 && self.turn_min <= self.turn_max) {
            return Err(Error::config("turn duration range must be positive and ordered"));
        }
        if !(self.subsegment_hop > 0.0 && self.subsegment_hop <= self.turn_min) {
            return Err(Error::config(format!(
                "subsegment hop must lie in (0, {}], got {}",
                self.turn_min, self.subsegment_hop
            )));
        }
        if self.recording_duration <= 0.0 {
            return Err(Error::config("recording duration must be positive"));
        }
        if !(0.0..0.9).contains(&self.overlap_fraction) {
            return Err(Error::config("overlap_fraction must lie in [0, 0.9)"));
        }
        Ok(())
    }
}

/// Everything one desk-scale experiment needs, in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// one domain-labeled utterance embedding per recording (the mean of
    /// its segment embeddings)
    pub utterances: UtteranceTable,
    pub segments: SegmentTable,
    /// true speaker per segment row, parallel to `segments.rows`
    pub segment_speakers: Vec<String>,
    pub references: BTreeMap<String, Annotation>,
    pub uem: BTreeMap<String, ScoringRegions>,
    /// (recording_id, domain, n_speakers)
    pub truth: Vec<(String, String, usize)>,
    /// speaker-labeled background table for PLDA training (no domain
    /// offsets, same between/within scales)
    pub plda_train: UtteranceTable,
}

impl Corpus {
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("# recording_id,domain,n_speakers\n");
        for (rec, domain, n) in &self.truth {
            writeln!(out, "{rec},{domain},{n}").expect("string write");
        }
        out
    }

    pub fn segment_speakers_csv(&self) -> String {
        let mut out = String::from("# recording_id,onset,offset,speaker\n");
        for (row, spk) in self.segments.rows.iter().zip(&self.segment_speakers) {
            writeln!(out, "{},{},{},{spk}", row.recording_id, row.onset, row.offset)
                .expect("string write");
        }
        out
    }

    /// Write every artifact into a directory:
    /// utterances.txt, segments.txt, ref.rttm, all.uem, truth.csv,
    /// segments_truth.csv, plda_train.txt.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        formats::atomic_write(
            &dir.join("utterances.txt"),
            &formats::write_utterance_embeddings(&self.utterances),
        )?;
        formats::atomic_write(
            &dir.join("segments.txt"),
            &formats::write_segment_embeddings(&self.segments),
        )?;
        formats::atomic_write(&dir.join("ref.rttm"), &formats::write_rttm(&self.references))?;
        formats::atomic_write(&dir.join("all.uem"), &formats::write_uem(&self.uem))?;
        formats::atomic_write(&dir.join("truth.csv"), &self.truth_csv())?;
        formats::atomic_write(&dir.join("segments_truth.csv"), &self.segment_speakers_csv())?;
        formats::atomic_write(
            &dir.join("plda_train.txt"),
            &formats::write_utterance_embeddings(&self.plda_train),
        )?;
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha20Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn domain_name(d: usize) -> String {
    format!("dom{d:02}")
}

/// Generate the full corpus. Deterministic given the config: domain means,
/// each recording, and the PLDA background all draw from their own derived
/// RNG streams.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;

    let mut domain_rng = derive_rng(cfg.seed, STREAM_SYNTH_DOMAIN, 0);
    let domain_means: Vec<Vec<f64>> = (0..cfg.n_domains)
        .map(|_| gaussian_vec(&mut domain_rng, cfg.dim, cfg.domain_spread))
        .collect();

    let mut corpus = Corpus {
        utterances: UtteranceTable {
            rows: Vec::new(),
            dim: cfg.dim,
        },
        segments: SegmentTable {
            rows: Vec::new(),
            dim: cfg.dim,
        },
        segment_speakers: Vec::new(),
        references: BTreeMap::new(),
        uem: BTreeMap::new(),
        truth: Vec::new(),
        plda_train: UtteranceTable {
            rows: Vec::new(),
            dim: cfg.dim,
        },
    };

    for d in 0..cfg.n_domains {
        for r in 0..cfg.recordings_per_domain {
            let rec_id = format!("{}_rec{r:02}", domain_name(d));
            let substream = (d as u64) << 32 | r as u64;
            let mut rng = derive_rng(cfg.seed, STREAM_SYNTH_RECORDING, substream);

            let n_speakers = rng.random_range(cfg.speakers_min..=cfg.speakers_max);
            let latents: Vec<Vec<f64>> = (0..n_speakers)
                .map(|_| gaussian_vec(&mut rng, cfg.dim, cfg.between_scale))
                .collect();

            // round-robin turn sequence tiling [0, recording_duration)
            let mut turns: Vec<(f64, f64, usize)> = Vec::new(); // onset, offset, speaker
            let mut clock = 0.0f64;
            let mut speaker = 0usize;
            while clock < cfg.recording_duration {
                let mut dur = rng.random_range(cfg.turn_min..=cfg.turn_max);
                let overlap = if turns.is_empty() {
                    0.0
                } else {
                    cfg.overlap_fraction * dur.min(cfg.turn_min)
                };
                let onset = (clock - overlap).max(0.0);
                if clock + dur - overlap > cfg.recording_duration {
                    dur = cfg.recording_duration - onset;
                }
                if dur <= 1e-9 {
                    break;
                }
                turns.push((onset, onset + dur, speaker));
                clock = onset + dur;
                speaker = (speaker + 1) % n_speakers;
            }

            let mut rec_turns = Vec::new();
            let mut sum = vec![0.0f64; cfg.dim];
            let mut n_segments = 0usize;
            for &(onset, offset, spk) in &turns {
                let spk_name = format!("spk{spk}");
                rec_turns.push(Turn::new(&rec_id, onset, offset - onset, &spk_name)?);
                // subdivide at the hop; the last chunk keeps the remainder
                let mut seg_start = onset;
                while seg_start < offset - 1e-9 {
                    let seg_end = (seg_start + cfg.subsegment_hop).min(offset);
                    let vector: Vec<f64> = (0..cfg.dim)
                        .map(|i| {
                            domain_means[d][i]
                                + latents[spk][i]
                                + cfg.within_scale * rng.sample::<f64, _>(StandardNormal)
                        })
                        .collect();
                    for (acc, v) in sum.iter_mut().zip(&vector) {
                        *acc += v;
                    }
                    n_segments += 1;
                    corpus.segments.rows.push(SegmentEmbedding {
                        recording_id: rec_id.clone(),
                        onset: seg_start,
                        offset: seg_end,
                        vector,
                    });
                    corpus.segment_speakers.push(spk_name.clone());
                    seg_start = seg_end;
                }
            }

            let utterance: Vec<f64> = sum.iter().map(|v| v / n_segments as f64).collect();
            corpus.utterances.rows.push(UtteranceEmbedding {
                utterance_id: rec_id.clone(),
                label: Some(domain_name(d)),
                vector: utterance,
            });
            corpus
                .references
                .insert(rec_id.clone(), Annotation::from_turns(&rec_id, rec_turns)?);
            corpus.uem.insert(
                rec_id.clone(),
                ScoringRegions::new(&rec_id, vec![(0.0, cfg.recording_duration)])?,
            );
            corpus
                .truth
                .push((rec_id, domain_name(d), n_speakers));
        }
    }

    // background speakers without domain offsets: adaptation on the pooled
    // corpus then has genuine excess variance to redistribute
    for s in 0..cfg.plda_speakers {
        let mut rng = derive_rng(cfg.seed, STREAM_SYNTH_PLDA, s as u64);
        let speaker = format!("bspk{s:04}");
        let latent = gaussian_vec(&mut rng, cfg.dim, cfg.between_scale);
        for j in 0..cfg.plda_segments_per_speaker {
            let vector: Vec<f64> = latent
                .iter()
                .map(|&y| y + cfg.within_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            corpus.plda_train.rows.push(UtteranceEmbedding {
                utterance_id: format!("{speaker}_seg{j:03}"),
                label: Some(speaker.clone()),
                vector,
            });
        }
    }

    Ok(corpus)
}

/// Generate only a domain-labeled utterance table: `n_utterances` rows
/// spread round-robin over `n_domains` well-separated domain means. Used by
/// the domain-identification benchmark.
pub fn generate_adi_table(
    n_domains: usize,
    n_utterances: usize,
    dim: usize,
    domain_spread: f64,
    within_scale: f64,
    seed: u64,
) -> Result<UtteranceTable> {
    if n_domains == 0 || n_utterances == 0 || dim == 0 {
        return Err(Error::config("counts must be at least 1"));
    }
    if !(domain_spread > 0.0 && within_scale > 0.0) {
        return Err(Error::config("scales must be positive"));
    }
    let mut mean_rng = derive_rng(seed, STREAM_ADI_TABLE, 0);
    let means: Vec<Vec<f64>> = (0..n_domains)
        .map(|_| gaussian_vec(&mut mean_rng, dim, domain_spread))
        .collect();
    let mut rows = Vec::with_capacity(n_utterances);
    for u in 0..n_utterances {
        let d = u % n_domains;
        let mut rng = derive_rng(seed, STREAM_ADI_TABLE, 1 + u as u64);
        let vector: Vec<f64> = means[d]
            .iter()
            .map(|&m| m + within_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        rows.push(UtteranceEmbedding {
            utterance_id: format!("utt{u:04}"),
            label: Some(domain_name(d)),
            vector,
        });
    }
    Ok(UtteranceTable { rows, dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            recordings_per_domain: 2,
            recording_duration: 30.0,
            ..SynthConfig::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(
            formats::write_segment_embeddings(&a.segments),
            formats::write_segment_embeddings(&b.segments)
        );
        assert_eq!(formats::write_rttm(&a.references), formats::write_rttm(&b.references));
        assert_eq!(a.truth_csv(), b.truth_csv());
    }

    #[test]
    fn references_tile_scoring_regions_exactly() {
        let cfg = SynthConfig {
            recordings_per_domain: 2,
            recording_duration: 45.0,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for (rec, ann) in &corpus.references {
            let turns = ann.turns();
            assert!((turns[0].onset - 0.0).abs() < 1e-9);
            for w in turns.windows(2) {
                assert!(
                    (w[1].onset - w[0].offset()).abs() < 1e-9,
                    "{rec}: gap between {} and {}",
                    w[0].offset(),
                    w[1].onset
                );
            }
            assert!((turns.last().unwrap().offset() - 45.0).abs() < 1e-9);
        }
    }

    #[test]
    fn segment_count_matches_direct_computation() {
        let cfg = SynthConfig {
            recordings_per_domain: 1,
            recording_duration: 37.0,
            subsegment_hop: 0.75,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for (rec, ann) in &corpus.references {
            let expected: usize = ann
                .turns()
                .iter()
                .map(|t| (t.duration / cfg.subsegment_hop - 1e-9).ceil().max(1.0) as usize)
                .sum();
            let got = corpus
                .segments
                .rows
                .iter()
                .filter(|s| &s.recording_id == rec)
                .count();
            assert_eq!(got, expected, "recording {rec}");
        }
    }

    #[test]
    fn utterance_embedding_is_segment_mean() {
        let cfg = SynthConfig {
            n_domains: 1,
            recordings_per_domain: 1,
            recording_duration: 20.0,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let rec = &corpus.utterances.rows[0];
        let segs: Vec<&SegmentEmbedding> = corpus
            .segments
            .rows
            .iter()
            .filter(|s| s.recording_id == rec.utterance_id)
            .collect();
        for i in 0..cfg.dim {
            let mean: f64 =
                segs.iter().map(|s| s.vector[i]).sum::<f64>() / segs.len() as f64;
            assert!((mean - rec.vector[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_hop_rejected() {
        let cfg = SynthConfig {
            subsegment_hop: 3.0,
            turn_min: 2.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_corpus(&cfg).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn plda_training_table_recovers_generator_covariances() {
        // the background table follows the two-covariance model exactly, so
        // EM on it must find covariances near (between^2 I, within^2 I);
        // the between-class estimate cannot beat the 200-speaker sampling
        // noise, hence the low dimension here
        let cfg = SynthConfig {
            n_domains: 1,
            recordings_per_domain: 1,
            recording_duration: 10.0,
            dim: 3,
            between_scale: 1.5,
            within_scale: 0.6,
            plda_speakers: 200,
            plda_segments_per_speaker: 50,
            seed: 7,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let vectors: Vec<Vec<f64>> = corpus
            .plda_train
            .rows
            .iter()
            .map(|r| r.vector.clone())
            .collect();
        let labels: Vec<String> = corpus
            .plda_train
            .rows
            .iter()
            .map(|r| r.label.clone().unwrap())
            .collect();
        let training = crate::plda::train_em(&vectors, &labels, 12).unwrap();
        let d = cfg.dim;
        let true_b =
            nalgebra::DMatrix::<f64>::identity(d, d) * cfg.between_scale * cfg.between_scale;
        let true_w =
            nalgebra::DMatrix::<f64>::identity(d, d) * cfg.within_scale * cfg.within_scale;
        let rel_b = (&training.model.sigma_b - &true_b).norm() / true_b.norm();
        let rel_w = (&training.model.sigma_w - &true_w).norm() / true_w.norm();
        assert!(rel_b <= 0.15, "sigma_b relative error {rel_b}");
        assert!(rel_w <= 0.15, "sigma_w relative error {rel_w}");
    }

    #[test]
    fn adi_table_counts_and_determinism() {
        let a = generate_adi_table(11, 254, 8, 3.0, 0.3, 9).unwrap();
        assert_eq!(a.rows.len(), 254);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for row in &a.rows {
            *counts.entry(row.label.as_deref().unwrap()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 11);
        assert!(counts.values().all(|&c| c == 23 || c == 24));
        let b = generate_adi_table(11, 254, 8, 3.0, 0.3, 9).unwrap();
        assert_eq!(a, b);
    }
}
