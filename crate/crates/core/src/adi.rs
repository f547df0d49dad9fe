//! Acoustic domain identification: a labeled embedding store queried by
//! cosine nearest neighbor, plus the repeated-random-split benchmark over a
//! labeled utterance table.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::UtteranceTable;
use crate::rng::{derive_rng, STREAM_ADI_TRIAL};

/// Cosine similarity between two non-zero vectors of equal dimension,
/// clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::validation("zero-norm vector in cosine similarity"));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// A fitted domain-identification model: the labeled training rows stored
/// verbatim, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiModel {
    pub dim: usize,
    pub k: usize,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl AdiModel {
    /// Fit = memorize the labeled store. Every row must carry a label and a
    /// non-zero vector.
    pub fn fit(table: &UtteranceTable) -> Result<Self> {
        Self::fit_with_k(table, 1)
    }

    pub fn fit_with_k(table: &UtteranceTable, k: usize) -> Result<Self> {
        if table.rows.is_empty() {
            return Err(Error::validation("cannot fit on an empty table"));
        }
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        let mut ids = Vec::with_capacity(table.rows.len());
        let mut labels = Vec::with_capacity(table.rows.len());
        let mut vectors = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let label = row.label.as_ref().ok_or_else(|| {
                Error::validation(format!("row {:?} has no domain label", row.utterance_id))
            })?;
            if row.vector.iter().map(|v| v * v).sum::<f64>() == 0.0 {
                return Err(Error::validation(format!(
                    "row {:?} has a zero-norm vector",
                    row.utterance_id
                )));
            }
            ids.push(row.utterance_id.clone());
            labels.push(label.clone());
            vectors.push(row.vector.clone());
        }
        Ok(AdiModel {
            dim: table.dim,
            k,
            ids,
            labels,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Predict the domain of `query` by k-nearest-neighbor majority vote
    /// over cosine similarity (k = 1 by default, the plain nearest
    /// neighbor). Ties — equal similarity when selecting neighbors, or
    /// equal votes — resolve to the lexicographically smallest domain
    /// label, then the smallest training index. Returns the winning label
    /// and the best similarity among neighbors carrying it.
    pub fn predict(&self, query: &[f64]) -> Result<(String, f64)> {
        // (negated similarity for ascending sort, label, index)
        let mut ranked: Vec<(f64, &str, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| Ok((-cosine_similarity(query, v)?, self.labels[i].as_str(), i)))
            .collect::<Result<_>>()?;
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        let k = self.k.min(ranked.len());
        let neighbors = &ranked[..k];

        let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for &(neg_sim, label, _) in neighbors {
            let entry = votes.entry(label).or_insert((0, f64::NEG_INFINITY));
            entry.0 += 1;
            entry.1 = entry.1.max(-neg_sim);
        }
        let (label, (_, sim)) = votes
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then_with(|| b.0.cmp(a.0)))
            .expect("at least one neighbor");
        Ok((label.to_string(), sim))
    }
}

/// Configuration for the repeated-random-split benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_train: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub require_all_domains_in_train: bool,
    pub k: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            n_train: 200,
            n_trials: 1000,
            seed: 0,
            require_all_domains_in_train: false,
            k: 1,
        }
    }
}

/// Benchmark outcome. `per_domain_accuracy` only contains domains that were
/// scored at least once; `confusion` maps true domain -> predicted domain ->
/// count, accumulated over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiReport {
    pub mean_accuracy: f64,
    pub per_domain_accuracy: BTreeMap<String, f64>,
    pub per_domain_test_counts: BTreeMap<String, u64>,
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
    pub n_trials: usize,
    pub n_train: usize,
}

impl AdiReport {
    /// CSV with columns domain, accuracy, n_test.
    pub fn per_domain_csv(&self) -> String {
        let mut out = String::from("domain,accuracy,n_test\n");
        for (domain, acc) in &self.per_domain_accuracy {
            let n = self.per_domain_test_counts.get(domain).copied().unwrap_or(0);
            out.push_str(&format!("{domain},{acc:.6},{n}\n"));
        }
        out
    }
}

struct TrialOutcome {
    correct: u64,
    total: u64,
    per_domain: BTreeMap<String, (u64, u64)>,
    confusion: BTreeMap<(String, String), u64>,
}

/// Run the repeated-random-split benchmark: for each trial draw `n_train`
/// rows uniformly without replacement, classify the rest against them, and
/// accumulate accuracy, per-domain accuracy and the confusion table.
///
/// Each trial uses an RNG stream derived from `(seed, trial)`, so the output
/// is bit-identical for a fixed seed regardless of how trials are scheduled.
pub fn adi_benchmark(table: &UtteranceTable, cfg: &TrialConfig) -> Result<AdiReport> {
    let n = table.rows.len();
    if cfg.n_train == 0 || cfg.n_train >= n {
        return Err(Error::config(format!(
            "n_train must satisfy 0 < n_train < {n}, got {}",
            cfg.n_train
        )));
    }
    if cfg.n_trials == 0 {
        return Err(Error::config("n_trials must be at least 1"));
    }
    let model = AdiModel::fit_with_k(table, cfg.k)?; // validates labels and vectors

    let mut domains: Vec<&str> = model.labels.iter().map(String::as_str).collect();
    domains.sort_unstable();
    domains.dedup();

    let trials: Vec<Result<TrialOutcome>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| run_trial(&model, cfg, trial as u64, &domains))
        .collect();

    let mut accuracy_sum = 0.0;
    let mut per_domain: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut confusion: BTreeMap<(String, String), u64> = BTreeMap::new();
    for trial in trials {
        let t = trial?;
        accuracy_sum += t.correct as f64 / t.total as f64;
        for (domain, (c, n)) in t.per_domain {
            let entry = per_domain.entry(domain).or_insert((0, 0));
            entry.0 += c;
            entry.1 += n;
        }
        for (key, count) in t.confusion {
            *confusion.entry(key).or_insert(0) += count;
        }
    }

    let mut per_domain_accuracy = BTreeMap::new();
    let mut per_domain_test_counts = BTreeMap::new();
    for (domain, (correct, total)) in per_domain {
        if total > 0 {
            per_domain_accuracy.insert(domain.clone(), correct as f64 / total as f64);
            per_domain_test_counts.insert(domain, total);
        }
    }
    let mut confusion_nested: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for ((truth, pred), count) in confusion {
        confusion_nested.entry(truth).or_default().insert(pred, count);
    }
    Ok(AdiReport {
        mean_accuracy: accuracy_sum / cfg.n_trials as f64,
        per_domain_accuracy,
        per_domain_test_counts,
        confusion: confusion_nested,
        n_trials: cfg.n_trials,
        n_train: cfg.n_train,
    })
}

fn run_trial(
    model: &AdiModel,
    cfg: &TrialConfig,
    trial: u64,
    domains: &[&str],
) -> Result<TrialOutcome> {
    let n = model.len();
    let mut rng = derive_rng(cfg.seed, STREAM_ADI_TRIAL, trial);
    let mut in_train = vec![false; n];
    let mut indices: Vec<usize> = (0..n).collect();

    let mut accepted = false;
    for _attempt in 0..1000 {
        for flag in in_train.iter_mut() {
            *flag = false;
        }
        // partial Fisher-Yates; only the first n_train slots matter
        for i in 0..cfg.n_train {
            let j = rng.random_range(i..n);
            indices.swap(i, j);
        }
        for &idx in &indices[..cfg.n_train] {
            in_train[idx] = true;
        }
        if !cfg.require_all_domains_in_train {
            accepted = true;
            break;
        }
        let mut covered: Vec<&str> = indices[..cfg.n_train]
            .iter()
            .map(|&i| model.labels[i].as_str())
            .collect();
        covered.sort_unstable();
        covered.dedup();
        if covered.len() == domains.len() {
            accepted = true;
            break;
        }
    }
    if !accepted {
        let covered: std::collections::BTreeSet<&str> = indices[..cfg.n_train]
            .iter()
            .map(|&i| model.labels[i].as_str())
            .collect();
        let missing = domains
            .iter()
            .find(|d| !covered.contains(*d))
            .copied()
            .unwrap_or("<unknown>");
        return Err(Error::config(format!(
            "trial {trial}: could not draw a training split covering domain {missing:?} in 1000 attempts"
        )));
    }

    let train_table = UtteranceTable {
        rows: model
            .vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| in_train[*i])
            .map(|(i, v)| crate::formats::UtteranceEmbedding {
                utterance_id: model.ids[i].clone(),
                label: Some(model.labels[i].clone()),
                vector: v.clone(),
            })
            .collect(),
        dim: model.dim,
    };
    let trial_model = AdiModel::fit_with_k(&train_table, cfg.k)?;

    let mut outcome = TrialOutcome {
        correct: 0,
        total: 0,
        per_domain: BTreeMap::new(),
        confusion: BTreeMap::new(),
    };
    for i in 0..n {
        if in_train[i] {
            continue;
        }
        let truth = &model.labels[i];
        let (pred, _) = trial_model.predict(&model.vectors[i])?;
        outcome.total += 1;
        let entry = outcome.per_domain.entry(truth.clone()).or_insert((0, 0));
        entry.1 += 1;
        if &pred == truth {
            outcome.correct += 1;
            entry.0 += 1;
        }
        *outcome
            .confusion
            .entry((truth.clone(), pred))
            .or_insert(0) += 1;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::UtteranceEmbedding;
    use approx::assert_abs_diff_eq;

    fn labeled_table(rows: &[(&str, &str, Vec<f64>)]) -> UtteranceTable {
        UtteranceTable {
            dim: rows.first().map_or(0, |r| r.2.len()),
            rows: rows
                .iter()
                .map(|(id, label, v)| UtteranceEmbedding {
                    utterance_id: id.to_string(),
                    label: Some(label.to_string()),
                    vector: v.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn cosine_basics() {
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            0.70710678,
            epsilon = 1e-8
        );
    }

    #[test]
    fn cosine_errors() {
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn fit_stores_rows_in_order() {
        let table = labeled_table(&[
            ("u1", "court", vec![1.0, 0.0]),
            ("u2", "clinical", vec![0.0, 1.0]),
            ("u3", "court", vec![1.0, 1.0]),
        ]);
        let model = AdiModel::fit(&table).unwrap();
        assert_eq!(model.len(), 3);
        assert_eq!(model.ids, vec!["u1", "u2", "u3"]);
    }

    #[test]
    fn missing_label_rejected() {
        let mut table = labeled_table(&[("u1", "court", vec![1.0, 0.0])]);
        table.rows[0].label = None;
        assert!(matches!(
            AdiModel::fit(&table).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn zero_norm_vector_rejected() {
        let table = labeled_table(&[("u1", "court", vec![0.0, 0.0])]);
        assert!(AdiModel::fit(&table).is_err());
    }

    #[test]
    fn predicts_nearest_label() {
        let model = AdiModel::fit(&labeled_table(&[
            ("u1", "court", vec![1.0, 0.0]),
            ("u2", "clinical", vec![0.0, 1.0]),
        ]))
        .unwrap();
        let (label, _) = model.predict(&[0.9, 0.1]).unwrap();
        assert_eq!(label, "court");
        let (label, sim) = model.predict(&[0.0, 1.0]).unwrap();
        assert_eq!(label, "clinical");
        assert_abs_diff_eq!(sim, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn equidistant_tie_breaks_to_smaller_label() {
        // query (1, 1) is exactly equidistant from (1, 0) and (0, 1)
        let model = AdiModel::fit(&labeled_table(&[
            ("u1", "court", vec![1.0, 0.0]),
            ("u2", "clinical", vec![0.0, 1.0]),
        ]))
        .unwrap();
        let (label, _) = model.predict(&[1.0, 1.0]).unwrap();
        assert_eq!(label, "clinical");
    }

    #[test]
    fn self_prediction_recovers_own_label() {
        let table = labeled_table(&[
            ("u1", "court", vec![1.0, 0.1]),
            ("u2", "clinical", vec![0.1, 1.0]),
            ("u3", "webvideo", vec![-1.0, 0.4]),
        ]);
        let model = AdiModel::fit(&table).unwrap();
        for row in &table.rows {
            let (label, _) = model.predict(&row.vector).unwrap();
            assert_eq!(&label, row.label.as_ref().unwrap());
        }
    }

    #[test]
    fn prediction_invariant_to_positive_rescaling() {
        let model = AdiModel::fit(&labeled_table(&[
            ("u1", "court", vec![1.0, 0.2]),
            ("u2", "clinical", vec![0.3, 1.0]),
        ]))
        .unwrap();
        let query = [0.7, 0.5];
        let scaled: Vec<f64> = query.iter().map(|v| v * 1234.5).collect();
        assert_eq!(
            model.predict(&query).unwrap().0,
            model.predict(&scaled).unwrap().0
        );
    }

    fn synthetic_two_domain_table(n: usize) -> UtteranceTable {
        // two tight clusters far apart in angle
        let rows: Vec<(String, String, Vec<f64>)> = (0..n)
            .map(|i| {
                let wiggle = (i as f64) * 1e-3;
                if i % 2 == 0 {
                    (format!("a{i}"), "alpha".to_string(), vec![1.0, wiggle])
                } else {
                    (format!("b{i}"), "beta".to_string(), vec![wiggle, 1.0])
                }
            })
            .collect();
        UtteranceTable {
            dim: 2,
            rows: rows
                .into_iter()
                .map(|(id, label, vector)| UtteranceEmbedding {
                    utterance_id: id,
                    label: Some(label),
                    vector,
                })
                .collect(),
        }
    }

    #[test]
    fn benchmark_on_separated_clusters_is_accurate() {
        let table = synthetic_two_domain_table(100);
        let cfg = TrialConfig {
            n_train: 80,
            n_trials: 50,
            seed: 7,
            require_all_domains_in_train: false,
            k: 1,
        };
        let report = adi_benchmark(&table, &cfg).unwrap();
        assert!(report.mean_accuracy >= 0.99, "got {}", report.mean_accuracy);
        // confusion counts sum to n_trials * test-set size, and each row
        // sums to its domain's accumulated test count
        let total: u64 = report
            .confusion
            .values()
            .flat_map(|m| m.values())
            .sum();
        assert_eq!(total, 50 * 20);
        for (domain, row) in &report.confusion {
            let row_sum: u64 = row.values().sum();
            assert_eq!(row_sum, report.per_domain_test_counts[domain]);
        }
    }

    #[test]
    fn benchmark_is_deterministic() {
        let table = synthetic_two_domain_table(30);
        let cfg = TrialConfig {
            n_train: 20,
            n_trials: 2,
            seed: 42,
            require_all_domains_in_train: false,
            k: 1,
        };
        let a = adi_benchmark(&table, &cfg).unwrap();
        let b = adi_benchmark(&table, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn lone_domain_utterance_forced_into_train_is_never_scored() {
        let mut table = synthetic_two_domain_table(9);
        table.rows.push(UtteranceEmbedding {
            utterance_id: "lonely".to_string(),
            label: Some("gamma".to_string()),
            vector: vec![-1.0, -1.0],
        });
        let n = table.rows.len();
        let cfg = TrialConfig {
            n_train: n - 1,
            n_trials: 20,
            seed: 3,
            require_all_domains_in_train: true,
            k: 1,
        };
        let report = adi_benchmark(&table, &cfg).unwrap();
        assert!(!report.per_domain_accuracy.contains_key("gamma"));
        assert!(!report.per_domain_test_counts.contains_key("gamma"));
    }

    #[test]
    fn invalid_train_size_rejected() {
        let table = synthetic_two_domain_table(10);
        let cfg = TrialConfig {
            n_train: 10,
            n_trials: 1,
            seed: 0,
            require_all_domains_in_train: false,
            k: 1,
        };
        assert!(matches!(
            adi_benchmark(&table, &cfg).unwrap_err(),
            Error::Config(_)
        ));
    }
}
