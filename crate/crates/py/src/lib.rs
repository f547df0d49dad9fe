//! Python bindings for the diarization backend: embedding scoring, domain
//! identification, clustering, resegmentation and DER/JER scoring.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use diarkit::error::Error;
use diarkit::formats;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Numerical(_) => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix_to_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Cosine similarity between two equal-dimension, non-zero vectors.
#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    diarkit::adi::cosine_similarity(&a, &b).map_err(to_py_err)
}

/// Nearest-neighbor domain identification over a labeled embedding store.
#[pyclass]
struct AdiModel {
    inner: diarkit::adi::AdiModel,
}

#[pymethods]
impl AdiModel {
    /// Fit from parallel lists of ids, labels and vectors.
    #[staticmethod]
    #[pyo3(signature = (ids, labels, vectors, k = 1))]
    fn fit(
        ids: Vec<String>,
        labels: Vec<String>,
        vectors: Vec<Vec<f64>>,
        k: usize,
    ) -> PyResult<Self> {
        if ids.len() != labels.len() || ids.len() != vectors.len() {
            return Err(PyValueError::new_err(
                "ids, labels and vectors must have equal lengths",
            ));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let table = formats::UtteranceTable {
            rows: ids
                .into_iter()
                .zip(labels)
                .zip(vectors)
                .map(|((utterance_id, label), vector)| formats::UtteranceEmbedding {
                    utterance_id,
                    label: Some(label),
                    vector,
                })
                .collect(),
            dim,
        };
        Ok(AdiModel {
            inner: diarkit::adi::AdiModel::fit_with_k(&table, k).map_err(to_py_err)?,
        })
    }

    /// Predict (domain, similarity) for a query vector.
    fn predict(&self, query: Vec<f64>) -> PyResult<(String, f64)> {
        self.inner.predict(&query).map_err(to_py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(AdiModel {
            inner: serde_json::from_str(text)
                .map_err(|e| PyValueError::new_err(e.to_string()))?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Two-covariance PLDA model.
#[pyclass]
struct PldaModel {
    inner: diarkit::plda::PldaModel,
}

#[pymethods]
impl PldaModel {
    /// EM-train from vectors and parallel speaker labels. Returns the model
    /// and the per-iteration total log-likelihood trace.
    #[staticmethod]
    #[pyo3(signature = (vectors, speakers, iters = 10))]
    fn train(
        vectors: Vec<Vec<f64>>,
        speakers: Vec<String>,
        iters: usize,
    ) -> PyResult<(Self, Vec<f64>)> {
        let training = diarkit::plda::train_em(&vectors, &speakers, iters).map_err(to_py_err)?;
        Ok((
            PldaModel {
                inner: training.model,
            },
            training.loglik,
        ))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Unsupervised adaptation on pooled data: excess variance is split
    /// between the within and between covariances.
    #[pyo3(signature = (pooled, within_share = 0.75, between_share = 0.25))]
    fn adapt(
        &self,
        pooled: Vec<Vec<f64>>,
        within_share: f64,
        between_share: f64,
    ) -> PyResult<Self> {
        let cfg = diarkit::plda::AdaptationConfig {
            within_share,
            between_share,
        };
        Ok(PldaModel {
            inner: diarkit::plda::adapt(&self.inner, &pooled, &cfg).map_err(to_py_err)?,
        })
    }

    /// Same/different-speaker log-likelihood ratio for one pair.
    fn score_pair(&self, x1: Vec<f64>, x2: Vec<f64>) -> PyResult<f64> {
        diarkit::plda::score_pair(&self.inner, &x1, &x2).map_err(to_py_err)
    }

    /// Recording-dependent scoring: PCA at `energy`, then all pairwise
    /// scores. The diagonal carries +inf.
    fn score_matrix(&self, segments: Vec<Vec<f64>>, energy: f64) -> PyResult<Vec<Vec<f64>>> {
        let m = diarkit::plda::score_matrix(&self.inner, &segments, energy).map_err(to_py_err)?;
        Ok(matrix_to_rows(&m))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PldaModel {
            inner: diarkit::plda::PldaModel::from_json(text).map_err(to_py_err)?,
        })
    }
}

/// Agglomerative clustering of a symmetric similarity matrix with a stop
/// threshold. Returns contiguous labels.
#[pyfunction]
fn ahc_cluster(scores: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<usize>> {
    let n = scores.len();
    if scores.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("score matrix must be square"));
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| scores[i][j]);
    Ok(diarkit::clustering::ahc_cluster(&m, threshold)
        .map_err(to_py_err)?
        .labels)
}

/// VB-HMM refinement of first-pass labels. Returns the refined labels and
/// the ELBO trace.
#[pyfunction]
#[pyo3(signature = (segments, init_labels, model, energy, loop_probability = 0.9, ll_scale = 0.3, max_iters = 10))]
fn vb_resegment(
    segments: Vec<Vec<f64>>,
    init_labels: Vec<usize>,
    model: &PldaModel,
    energy: f64,
    loop_probability: f64,
    ll_scale: f64,
    max_iters: usize,
) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let proj = diarkit::plda::recording_pca(&segments, energy).map_err(to_py_err)?;
    let cfg = diarkit::reseg::VbConfig {
        loop_probability,
        ll_scale,
        max_iters,
        ..Default::default()
    };
    let out = diarkit::reseg::vb_resegment(&segments, &init_labels, &model.inner, &proj, &cfg)
        .map_err(to_py_err)?;
    Ok((out.labels, out.elbo_trace))
}

/// Parse RTTM text into {recording: [(onset, duration, speaker), ...]}.
#[pyfunction]
fn parse_rttm(text: &str) -> PyResult<BTreeMap<String, Vec<(f64, f64, String)>>> {
    let parsed = formats::parse_rttm(text).map_err(to_py_err)?;
    Ok(parsed
        .into_iter()
        .map(|(rec, ann)| {
            let turns = ann
                .turns()
                .iter()
                .map(|t| (t.onset, t.duration, t.speaker.clone()))
                .collect();
            (rec, turns)
        })
        .collect())
}

/// Write {recording: [(onset, duration, speaker), ...]} as RTTM text.
#[pyfunction]
fn write_rttm(annotations: BTreeMap<String, Vec<(f64, f64, String)>>) -> PyResult<String> {
    let mut map = BTreeMap::new();
    for (rec, turns) in annotations {
        let turns = turns
            .into_iter()
            .map(|(onset, duration, speaker)| {
                formats::Turn::new(&rec, onset, duration, speaker).map_err(to_py_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        map.insert(
            rec.clone(),
            formats::Annotation::from_turns(rec, turns).map_err(to_py_err)?,
        );
    }
    Ok(formats::write_rttm(&map))
}

/// Score hypothesis RTTM text against reference RTTM text. Returns a dict
/// with pooled der/jer/miss/false_alarm/confusion/total_ref and a
/// per_recording breakdown.
#[pyfunction]
#[pyo3(signature = (reference, hypothesis, uem = None, collar = 0.0, score_overlaps = true))]
fn score(
    py: Python<'_>,
    reference: &str,
    hypothesis: &str,
    uem: Option<&str>,
    collar: f64,
    score_overlaps: bool,
) -> PyResult<Py<PyAny>> {
    let refs = formats::parse_rttm(reference).map_err(to_py_err)?;
    let hyps = formats::parse_rttm(hypothesis).map_err(to_py_err)?;
    let uem = match uem {
        Some(text) => Some(formats::parse_uem(text).map_err(to_py_err)?),
        None => None,
    };
    let opts = diarkit::metrics::ScoreOptions {
        collar,
        score_overlaps,
    };
    let report =
        diarkit::metrics::score_report(&refs, &hyps, uem.as_ref(), &opts).map_err(to_py_err)?;
    let json = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let loads = py.import("json")?.getattr("loads")?;
    Ok(loads.call1((json,))?.unbind())
}

#[pymodule]
fn pydiarkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<AdiModel>()?;
    m.add_class::<PldaModel>()?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(ahc_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(vb_resegment, m)?)?;
    m.add_function(wrap_pyfunction!(parse_rttm, m)?)?;
    m.add_function(wrap_pyfunction!(write_rttm, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    Ok(())
}
