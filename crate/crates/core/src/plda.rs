//! Two-covariance PLDA backend: EM estimation, unsupervised adaptation on
//! pooled data, recording-dependent PCA, and pairwise log-likelihood-ratio
//! scoring.
//!
//! The generative model is `x = mu + y + e` with speaker latent
//! `y ~ N(0, sigma_b)` and residual `e ~ N(0, sigma_w)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// How pooled-data excess variance is split between the within- and
/// between-class covariances during adaptation. Shares must be
/// non-negative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub within_share: f64,
    pub between_share: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            within_share: 0.75,
            between_share: 0.25,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.within_share < 0.0 || self.between_share < 0.0 {
            return Err(Error::config("adaptation shares must be non-negative"));
        }
        if (self.within_share + self.between_share - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "adaptation shares must sum to 1, got {} + {}",
                self.within_share, self.between_share
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PldaMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationConfig>,
}

/// Global mean plus between- and within-class covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    pub sigma_b: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub meta: PldaMeta,
}

#[derive(Serialize, Deserialize)]
struct PldaModelFile {
    dim: usize,
    mu: Vec<f64>,
    sigma_b: Vec<f64>,
    sigma_w: Vec<f64>,
    #[serde(default)]
    meta: PldaMeta,
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, sigma_b: DMatrix<f64>, sigma_w: DMatrix<f64>) -> Result<Self> {
        let model = PldaModel {
            mu,
            sigma_b,
            sigma_w,
            meta: PldaMeta::default(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mu.len();
        if d == 0 {
            return Err(Error::validation("model dimension must be at least 1"));
        }
        for (name, m) in [("sigma_b", &self.sigma_b), ("sigma_w", &self.sigma_w)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::validation(format!(
                    "{name} must be {d}x{d}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if linalg::max_asymmetry(m) > 1e-10 {
                return Err(Error::validation(format!("{name} is not symmetric")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("{name} has non-finite entries")));
            }
        }
        if linalg::min_eigenvalue(&self.sigma_b) < -1e-8 {
            return Err(Error::validation("sigma_b is not positive semi-definite"));
        }
        if linalg::min_eigenvalue(&self.sigma_w) <= 1e-12 {
            return Err(Error::validation(
                "sigma_w is not positive definite (min eigenvalue <= 1e-12)",
            ));
        }
        Ok(())
    }

    /// Serialize as JSON with covariances as row-major arrays.
    pub fn to_json(&self) -> String {
        let d = self.dim();
        let file = PldaModelFile {
            dim: d,
            mu: self.mu.iter().copied().collect(),
            sigma_b: row_major(&self.sigma_b),
            sigma_w: row_major(&self.sigma_w),
            meta: self.meta.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("plda serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PldaModelFile = serde_json::from_str(text)?;
        let d = file.dim;
        if file.mu.len() != d || file.sigma_b.len() != d * d || file.sigma_w.len() != d * d {
            return Err(Error::validation(
                "model arrays do not match the declared dimension",
            ));
        }
        let model = PldaModel {
            mu: DVector::from_vec(file.mu),
            sigma_b: DMatrix::from_row_slice(d, d, &file.sigma_b),
            sigma_w: DMatrix::from_row_slice(d, d, &file.sigma_w),
            meta: file.meta,
        };
        model.validate()?;
        Ok(model)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// EM training output: the model plus the total log-likelihood trace
/// (entry 0 is the moment-initialized model, one entry per iteration after).
#[derive(Debug, Clone)]
pub struct PldaTraining {
    pub model: PldaModel,
    pub loglik: Vec<f64>,
}

/// Train the two-covariance model by EM. The global mean is fixed at the
/// data mean; `sigma_b`/`sigma_w` start from the between/within moment
/// estimates. The total log-likelihood is non-decreasing across iterations.
pub fn train_em(vectors: &[Vec<f64>], speakers: &[String], iters: usize) -> Result<PldaTraining> {
    if vectors.len() != speakers.len() {
        return Err(Error::validation(format!(
            "{} vectors but {} speaker labels",
            vectors.len(),
            speakers.len()
        )));
    }
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Training("need at least 2 samples".into()));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::validation("inconsistent vector dimensions"));
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite embedding value"));
    }

    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, spk) in speakers.iter().enumerate() {
        by_speaker.entry(spk.as_str()).or_default().push(i);
    }
    let n_speakers = by_speaker.len();
    if n_speakers < 2 {
        return Err(Error::Training(
            "need at least 2 distinct speakers to separate covariances".into(),
        ));
    }

    let data = linalg::rows_to_matrix(vectors);
    let mu = linalg::mean_row(&data);

    // per-speaker sufficient statistics on centered data
    let stats: Vec<SpeakerStats> = by_speaker
        .values()
        .map(|idx| {
            let count = idx.len() as f64;
            let mut mean = DVector::zeros(d);
            for &i in idx {
                mean += data.row(i).transpose() - &mu;
            }
            mean /= count;
            let mut scatter = DMatrix::zeros(d, d);
            for &i in idx {
                let z = data.row(i).transpose() - &mu - &mean;
                scatter.ger(1.0, &z, &z, 1.0);
            }
            linalg::symmetrize(&mut scatter);
            SpeakerStats {
                count,
                mean,
                scatter,
            }
        })
        .collect();

    // moment initialization
    let mut sigma_w = DMatrix::<f64>::zeros(d, d);
    let mut sigma_b = DMatrix::<f64>::zeros(d, d);
    for s in &stats {
        sigma_w += &s.scatter;
        sigma_b.ger(s.count / n as f64, &s.mean, &s.mean, 1.0);
    }
    sigma_w /= n as f64;
    linalg::symmetrize(&mut sigma_w);
    linalg::symmetrize(&mut sigma_b);
    linalg::stabilize_spd(&mut sigma_w, "plda init sigma_w");
    linalg::stabilize_spd(&mut sigma_b, "plda init sigma_b");

    let mut loglik = Vec::with_capacity(iters + 1);
    loglik.push(total_loglik(&stats, &sigma_b, &sigma_w, n, d)?);

    for _iter in 0..iters {
        // E-step: posterior of each speaker latent given its samples,
        // using the inverse-free, cancellation-free forms (they tolerate a
        // singular sigma_b and a vanishing sigma_w):
        //   G_n = (sigma_b + sigma_w / n)^-1
        //   m_s = sigma_b G_n zbar_s
        //   P_s = sigma_b G_n (sigma_w / n)
        //   zbar_s - m_s = (sigma_w / n) G_n zbar_s
        let mut g_cache: BTreeMap<u64, DMatrix<f64>> = BTreeMap::new();
        let mut new_b = DMatrix::<f64>::zeros(d, d);
        let mut new_w = DMatrix::<f64>::zeros(d, d);
        for s in &stats {
            let key = s.count as u64;
            if !g_cache.contains_key(&key) {
                let m = &sigma_b + &sigma_w / s.count;
                let inv = linalg::spd_inverse(&m).map_err(|_| {
                    Error::Training(
                        "singular accumulator while training; consider adding jitter".into(),
                    )
                })?;
                g_cache.insert(key, inv);
            }
            let g = &g_cache[&key];
            let sw_over_n = &sigma_w / s.count;
            let bg = &sigma_b * g;
            let m_s = &bg * &s.mean;
            let mut p_s = &bg * &sw_over_n;
            linalg::symmetrize(&mut p_s);

            let mut second_moment = p_s.clone();
            second_moment.ger(1.0, &m_s, &m_s, 1.0);
            new_b += &second_moment;

            // within accumulation:
            //   scatter_s + n (zbar - m)(zbar - m)^T + n P_s
            let resid = &sw_over_n * (g * &s.mean);
            new_w += &s.scatter;
            new_w.ger(s.count, &resid, &resid, 1.0);
            new_w += s.count * &p_s;
        }
        sigma_b = new_b / n_speakers as f64;
        sigma_w = new_w / n as f64;
        linalg::symmetrize(&mut sigma_b);
        linalg::symmetrize(&mut sigma_w);
        linalg::stabilize_spd(&mut sigma_w, "plda em sigma_w");

        loglik.push(total_loglik(&stats, &sigma_b, &sigma_w, n, d)?);
    }

    let model = PldaModel {
        mu,
        sigma_b,
        sigma_w,
        meta: PldaMeta::default(),
    };
    model.validate()?;
    Ok(PldaTraining { model, loglik })
}

struct SpeakerStats {
    count: f64,
    mean: DVector<f64>,
    // scatter around the speaker's own mean, constant across iterations
    scatter: DMatrix<f64>,
}

/// Total marginal log-likelihood of the data under the current model.
///
/// Per speaker with n samples, mean zbar and within scatter W (all centered
/// on the global mean), using the Helmert decomposition of the joint
/// covariance:
///   ll = -0.5 [ n d ln(2 pi) + (n - 1) ln|Sw| + ln|Sw + n Sb|
///               + tr(Sw^-1 W) + n zbar^T (Sw + n Sb)^-1 zbar ]
fn total_loglik(
    stats: &[SpeakerStats],
    sigma_b: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    n_total: usize,
    d: usize,
) -> Result<f64> {
    let w_inv = linalg::spd_inverse(sigma_w)
        .map_err(|_| Error::Training("sigma_w became singular".into()))?;
    let logdet_w = linalg::spd_logdet(sigma_w)?;
    let mut cache: BTreeMap<u64, (DMatrix<f64>, f64)> = BTreeMap::new();
    let mut ll = -0.5 * (n_total * d) as f64 * (2.0 * std::f64::consts::PI).ln();
    for s in stats {
        let key = s.count as u64;
        if !cache.contains_key(&key) {
            let m = sigma_w + sigma_b * s.count;
            let inv = linalg::spd_inverse(&m)?;
            let logdet = linalg::spd_logdet(&m)?;
            cache.insert(key, (inv, logdet));
        }
        let (tot_inv, tot_logdet) = &cache[&key];
        let quad_mean = s.count * (tot_inv * &s.mean).dot(&s.mean);
        let trace_term = (&w_inv * &s.scatter).trace();
        ll += -0.5 * ((s.count - 1.0) * logdet_w + tot_logdet + trace_term + quad_mean);
    }
    Ok(ll)
}

/// Kaldi-style unsupervised adaptation: whiten by the model's total
/// covariance, eigendecompose the whitened pooled-data covariance, and for
/// each direction with eigenvalue above 1 add the excess variance back,
/// split between `sigma_w` and `sigma_b` per the configured shares.
/// Directions at or below 1 are left unchanged; the mean is not updated.
pub fn adapt(model: &PldaModel, pooled: &[Vec<f64>], cfg: &AdaptationConfig) -> Result<PldaModel> {
    cfg.validate()?;
    let d = model.dim();
    let m = pooled.len();
    if m < d + 1 {
        return Err(Error::validation(format!(
            "adaptation needs at least {} pooled vectors, got {m}",
            d + 1
        )));
    }
    if pooled.iter().any(|v| v.len() != d) {
        return Err(Error::validation("pooled vector dimension mismatch"));
    }
    let data = linalg::rows_to_matrix(pooled);
    let mean = linalg::mean_row(&data);
    let cov = linalg::covariance(&data, &mean);

    let total = &model.sigma_b + &model.sigma_w;
    let white = linalg::inv_sqrt_spd(&total)?;
    let color = linalg::sqrt_spd(&total);
    let mut whitened = &white * &cov * &white;
    linalg::symmetrize(&mut whitened);
    let (vals, vecs) = linalg::sym_eigen_desc(&whitened);

    let mut sigma_w = model.sigma_w.clone();
    let mut sigma_b = model.sigma_b.clone();
    for (j, &lambda) in vals.iter().enumerate() {
        if lambda <= 1.0 {
            continue;
        }
        let excess = lambda - 1.0;
        let u = &color * vecs.column(j);
        sigma_w.ger(cfg.within_share * excess, &u, &u, 1.0);
        sigma_b.ger(cfg.between_share * excess, &u, &u, 1.0);
    }
    linalg::symmetrize(&mut sigma_w);
    linalg::symmetrize(&mut sigma_b);

    let adapted = PldaModel {
        mu: model.mu.clone(),
        sigma_b,
        sigma_w,
        meta: PldaMeta {
            training_hash: model.meta.training_hash.clone(),
            adaptation: Some(*cfg),
        },
    };
    adapted.validate()?;
    Ok(adapted)
}

/// A per-recording PCA basis: `k` orthonormal rows spanning the directions
/// that retain at least the requested eigenvalue energy fraction.
/// `degenerate` marks the documented fallback paths (fewer than 2 segments,
/// or zero total variance).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub basis: DMatrix<f64>,
    pub retained_fraction: f64,
    pub k: usize,
    pub degenerate: bool,
}

impl PcaProjection {
    pub fn identity(dim: usize) -> Self {
        PcaProjection {
            basis: DMatrix::identity(dim, dim),
            retained_fraction: 1.0,
            k: dim,
            degenerate: false,
        }
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_row_slice(v);
        (&self.basis * x).iter().copied().collect()
    }
}

/// Center the segments, eigendecompose their sample covariance, and keep the
/// smallest number of leading eigenvectors whose cumulative eigenvalue
/// fraction reaches `energy`.
pub fn recording_pca(segments: &[Vec<f64>], energy: f64) -> Result<PcaProjection> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::config(format!(
            "pca energy must lie in (0, 1], got {energy}"
        )));
    }
    let n = segments.len();
    if n == 0 {
        return Err(Error::validation("no segments for PCA"));
    }
    let d = segments[0].len();
    if d == 0 || segments.iter().any(|s| s.len() != d) {
        return Err(Error::validation("inconsistent segment dimensions"));
    }
    if n < 2 {
        let mut basis = DMatrix::zeros(1, d);
        basis[(0, 0)] = 1.0;
        return Ok(PcaProjection {
            basis,
            retained_fraction: 1.0,
            k: 1,
            degenerate: true,
        });
    }
    let data = linalg::rows_to_matrix(segments);
    let mean = linalg::mean_row(&data);
    let cov = linalg::covariance(&data, &mean);
    let (mut vals, vecs) = linalg::sym_eigen_desc(&cov);

    // clamp numerical noise: negatives and anything far below the leading
    // eigenvalue count as zero variance
    let lead = vals.first().copied().unwrap_or(0.0).max(0.0);
    for v in vals.iter_mut() {
        if *v < lead * 1e-12 {
            *v = 0.0;
        }
    }
    let mut cumulative = Vec::with_capacity(d);
    let mut running = 0.0;
    for &v in &vals {
        running += v;
        cumulative.push(running);
    }
    let total = running;
    if total <= 0.0 {
        log::warn!("recording_pca: zero total variance, falling back to an arbitrary unit basis");
        let mut basis = DMatrix::zeros(1, d);
        for c in 0..d {
            basis[(0, c)] = vecs[(c, 0)];
        }
        return Ok(PcaProjection {
            basis,
            retained_fraction: 1.0,
            k: 1,
            degenerate: true,
        });
    }
    let mut k = d;
    for (i, &cum) in cumulative.iter().enumerate() {
        if cum / total >= energy {
            k = i + 1;
            break;
        }
    }
    let mut basis = DMatrix::zeros(k, d);
    for r in 0..k {
        for c in 0..d {
            basis[(r, c)] = vecs[(c, r)];
        }
    }
    Ok(PcaProjection {
        basis,
        retained_fraction: cumulative[k - 1] / total,
        k,
        degenerate: false,
    })
}

/// Map a model into the projected space: `mu' = B mu`, `S' = B S B^T`.
pub fn project_model(model: &PldaModel, proj: &PcaProjection) -> Result<PldaModel> {
    if proj.basis.ncols() != model.dim() {
        return Err(Error::validation(format!(
            "projection expects dimension {}, model has {}",
            proj.basis.ncols(),
            model.dim()
        )));
    }
    let b = &proj.basis;
    let mut sigma_b = b * &model.sigma_b * b.transpose();
    let mut sigma_w = b * &model.sigma_w * b.transpose();
    linalg::symmetrize(&mut sigma_b);
    linalg::symmetrize(&mut sigma_w);
    linalg::stabilize_spd(&mut sigma_w, "projected sigma_w");
    let projected = PldaModel {
        mu: b * &model.mu,
        sigma_b,
        sigma_w,
        meta: model.meta.clone(),
    };
    projected.validate()?;
    Ok(projected)
}

/// Precomputed same/different-speaker scoring terms for one model.
///
/// With T = Sb + Sw, E = (T - Sb T^-1 Sb)^-1 and F = -T^-1 Sb E (symmetric),
/// the log-likelihood ratio for centered inputs a, b is
///   llr = -0.5 [ ln|E^-1| - ln|T| ] - 0.5 [ a'(E - T^-1)a + b'(E - T^-1)b
///                                           + a'Fb + b'Fa ].
/// The cross terms are evaluated in both orders so the score is exactly
/// symmetric in its arguments.
pub struct PairScorer {
    mu: DVector<f64>,
    g: DMatrix<f64>,
    f: DMatrix<f64>,
    constant: f64,
}

impl PairScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        model.validate()?;
        let total = &model.sigma_b + &model.sigma_w;
        let t_inv = linalg::spd_inverse(&total)?;
        let logdet_t = linalg::spd_logdet(&total)?;
        let mut e_inv = &total - &model.sigma_b * &t_inv * &model.sigma_b;
        linalg::symmetrize(&mut e_inv);
        let e = linalg::spd_inverse(&e_inv)?;
        let logdet_e_inv = linalg::spd_logdet(&e_inv)?;
        let mut f = -(&t_inv * &model.sigma_b * &e);
        linalg::symmetrize(&mut f);
        let mut g = &e - &t_inv;
        linalg::symmetrize(&mut g);
        Ok(PairScorer {
            mu: model.mu.clone(),
            g,
            f,
            constant: -0.5 * (logdet_e_inv - logdet_t),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn score(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let d = self.mu.len();
        if x1.len() != d || x2.len() != d {
            return Err(Error::validation("scoring dimension mismatch"));
        }
        if x1.iter().chain(x2).any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite scoring input"));
        }
        let a = DVector::from_row_slice(x1) - &self.mu;
        let b = DVector::from_row_slice(x2) - &self.mu;
        let quad = (&self.g * &a).dot(&a)
            + (&self.g * &b).dot(&b)
            + (&self.f * &b).dot(&a)
            + (&self.f * &a).dot(&b);
        Ok(self.constant - 0.5 * quad)
    }
}

/// Same/different-speaker log-likelihood ratio for one pair.
pub fn score_pair(model: &PldaModel, x1: &[f64], x2: &[f64]) -> Result<f64> {
    PairScorer::new(model)?.score(x1, x2)
}

/// Fill the full pairwise score matrix in an already projected space.
/// The diagonal carries a +inf sentinel which clustering ignores.
pub fn score_matrix_projected(
    model: &PldaModel,
    segments: &[Vec<f64>],
    proj: &PcaProjection,
) -> Result<DMatrix<f64>> {
    let n = segments.len();
    if n == 0 {
        return Err(Error::validation("no segments to score"));
    }
    let projected_model = project_model(model, proj)?;
    let scorer = PairScorer::new(&projected_model)?;
    let projected: Vec<Vec<f64>> = segments.iter().map(|s| proj.project(s)).collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for j in (i + 1)..n {
                row[j] = scorer.score(&projected[i], &projected[j])?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = f64::INFINITY;
        for j in (i + 1)..n {
            out[(i, j)] = rows[i][j];
            out[(j, i)] = rows[i][j];
        }
    }
    Ok(out)
}

/// Recording-dependent scoring: run PCA at the requested energy, project the
/// model and segments, and score all pairs.
pub fn score_matrix(model: &PldaModel, segments: &[Vec<f64>], energy: f64) -> Result<DMatrix<f64>> {
    let proj = recording_pca(segments, energy)?;
    score_matrix_projected(model, segments, &proj)
}

/// Scale each row to norm sqrt(dim), the usual PLDA length normalization.
pub fn length_normalize_rows(rows: &mut [Vec<f64>]) -> Result<()> {
    for row in rows.iter_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::validation(
                "cannot length-normalize a zero vector",
            ));
        }
        let scale = (row.len() as f64).sqrt() / norm;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn diag_model(mu: &[f64], b: &[f64], w: &[f64]) -> PldaModel {
        let d = mu.len();
        PldaModel::new(
            DVector::from_row_slice(mu),
            DMatrix::from_fn(d, d, |i, j| if i == j { b[i] } else { 0.0 }),
            DMatrix::from_fn(d, d, |i, j| if i == j { w[i] } else { 0.0 }),
        )
        .unwrap()
    }

    /// Log-density of a multivariate normal, evaluated the slow direct way.
    fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let d = x.len() as f64;
        let diff = x - mean;
        let inv = cov.clone().try_inverse().unwrap();
        let det = cov.determinant();
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + (inv * &diff).dot(&diff))
    }

    /// Independent oracle: evaluate both hypotheses as explicit 2D-dim
    /// Gaussians and subtract.
    fn oracle_llr(model: &PldaModel, x1: &[f64], x2: &[f64]) -> f64 {
        let d = model.dim();
        let mut joint_mu = DVector::zeros(2 * d);
        let mut same = DMatrix::zeros(2 * d, 2 * d);
        let total = &model.sigma_b + &model.sigma_w;
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
        let log_same = gaussian_logpdf(&x, &joint_mu, &same);
        let log_diff = gaussian_logpdf(&DVector::from_row_slice(x1), &model.mu, &total)
            + gaussian_logpdf(&DVector::from_row_slice(x2), &model.mu, &total);
        log_same - log_diff
    }

    #[test]
    fn d1_analytic_llr() {
        let model = diag_model(&[0.0], &[1.0], &[1.0]);
        let llr = score_pair(&model, &[0.0], &[0.0]).unwrap();
        assert_abs_diff_eq!(llr, 0.5 * (4.0_f64 / 3.0).ln(), epsilon = 1e-9);
    }

    #[test]
    fn score_is_exactly_symmetric() {
        let model = diag_model(&[0.3, -0.2], &[2.0, 0.7], &[1.0, 1.5]);
        let scorer = PairScorer::new(&model).unwrap();
        let x1 = [0.4, -1.2];
        let x2 = [-0.9, 2.2];
        assert_eq!(
            scorer.score(&x1, &x2).unwrap().to_bits(),
            scorer.score(&x2, &x1).unwrap().to_bits()
        );
    }

    #[test]
    fn zero_between_class_gives_zero_llr() {
        let model = PldaModel {
            mu: DVector::zeros(2),
            sigma_b: DMatrix::zeros(2, 2),
            sigma_w: DMatrix::identity(2, 2),
            meta: PldaMeta::default(),
        };
        let llr = score_pair(&model, &[1.3, -0.4], &[0.2, 2.0]).unwrap();
        assert_abs_diff_eq!(llr, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_direct_density_oracle_on_random_models() {
        let mut rng = crate::rng::derive_rng(11, 99, 0);
        for _ in 0..100 {
            let d = rng.random_range(1..=4usize);
            let mut a = DMatrix::<f64>::zeros(d, d);
            let mut w = DMatrix::<f64>::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                    w[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            let sigma_b = &a * a.transpose();
            let sigma_w = &w * w.transpose() + DMatrix::identity(d, d) * 0.5;
            let mu = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let model = PldaModel::new(mu, sigma_b, sigma_w).unwrap();
            let x1: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x2: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let got = score_pair(&model, &x1, &x2).unwrap();
            let want = oracle_llr(&model, &x1, &x2);
            assert_abs_diff_eq!(got, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let model = diag_model(&[0.0], &[1.0], &[1.0]);
        assert!(score_pair(&model, &[f64::NAN], &[0.0]).is_err());
    }

    fn sample_speakers(
        rng: &mut impl Rng,
        n_speakers: usize,
        per_speaker: usize,
        d: usize,
        between: f64,
        within: f64,
    ) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for s in 0..n_speakers {
            let y: Vec<f64> = (0..d)
                .map(|_| between * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for _ in 0..per_speaker {
                let x: Vec<f64> = y
                    .iter()
                    .map(|&yi| yi + within * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                vectors.push(x);
                labels.push(format!("spk{s}"));
            }
        }
        (vectors, labels)
    }

    #[test]
    fn em_recovers_generating_covariances() {
        // quick smoke check; the stricter D=8, 200x50 variant lives in the
        // acceptance suite. Sampling error of the between-class estimate is
        // ~sqrt((D+1)/S), hence the speaker-heavy split here.
        let mut rng = crate::rng::derive_rng(5, 98, 0);
        let d = 4;
        let (vectors, labels) = sample_speakers(&mut rng, 400, 10, d, 1.4, 0.8);
        let training = train_em(&vectors, &labels, 12).unwrap();
        let model = &training.model;
        // log-likelihood non-decreasing
        for w in training.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "loglik decreased: {} -> {}", w[0], w[1]);
        }
        let true_b = DMatrix::<f64>::identity(d, d) * 1.4f64.powi(2);
        let true_w = DMatrix::<f64>::identity(d, d) * 0.8f64.powi(2);
        let rel = |got: &DMatrix<f64>, want: &DMatrix<f64>| {
            (got - want).norm() / want.norm()
        };
        assert!(rel(&model.sigma_b, &true_b) < 0.2, "sigma_b off: {}", rel(&model.sigma_b, &true_b));
        assert!(rel(&model.sigma_w, &true_w) < 0.2, "sigma_w off: {}", rel(&model.sigma_w, &true_w));
    }

    #[test]
    fn em_is_deterministic() {
        let mut rng = crate::rng::derive_rng(6, 98, 1);
        let (vectors, labels) = sample_speakers(&mut rng, 10, 5, 3, 1.0, 0.5);
        let a = train_em(&vectors, &labels, 5).unwrap();
        let b = train_em(&vectors, &labels, 5).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loglik, b.loglik);
    }

    #[test]
    fn em_degenerate_within_class_shrinks_sigma_w() {
        // every speaker's samples identical, speaker means spread out
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for s in 0..6 {
            let y = [s as f64 * 2.0, -(s as f64)];
            for _ in 0..4 {
                vectors.push(y.to_vec());
                labels.push(format!("spk{s}"));
            }
        }
        let training = train_em(&vectors, &labels, 20).unwrap();
        let tw: f64 = training.model.sigma_w.diagonal().iter().sum();
        let tb: f64 = training.model.sigma_b.diagonal().iter().sum();
        assert!(tw <= 1e-6 * tb, "trace(sigma_w)={tw} vs trace(sigma_b)={tb}");
    }

    #[test]
    fn em_single_speaker_rejected() {
        let vectors = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let labels = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            train_em(&vectors, &labels, 3).unwrap_err(),
            Error::Training(_)
        ));
    }

    #[test]
    fn adapt_matching_data_is_a_noop() {
        // pooled data drawn from the model's own marginal: all whitened
        // eigenvalues sit at ~1, so nothing should change
        let model = diag_model(&[0.0; 4], &[1.0, 0.5, 0.8, 0.3], &[0.6, 0.8, 0.4, 1.0]);
        let mut rng = crate::rng::derive_rng(7, 98, 2);
        let total = [1.6f64, 1.3, 1.2, 1.3];
        let pooled: Vec<Vec<f64>> = (0..50_000)
            .map(|_| {
                (0..4)
                    .map(|i| total[i].sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let adapted = adapt(&model, &pooled, &AdaptationConfig::default()).unwrap();
        let drift_w = (&adapted.sigma_w - &model.sigma_w).norm() / model.sigma_w.norm();
        let drift_b = (&adapted.sigma_b - &model.sigma_b).norm() / model.sigma_b.norm();
        assert!(drift_w < 0.05, "sigma_w drifted by {drift_w}");
        assert!(drift_b < 0.05, "sigma_b drifted by {drift_b}");
    }

    #[test]
    fn adapt_assigns_excess_variance_to_within() {
        // model total covariance = diag(2, 2); pooled data variance
        // doubled along the first axis -> excess 2 on axis 0 only
        let model = diag_model(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0]);
        let a = 2.0f64; // pooled stddev on axis 0 => variance 4 = 2 * total
        let b = 2.0f64.sqrt(); // matches total variance on axis 1
        let pooled = vec![
            vec![a, b],
            vec![a, -b],
            vec![-a, b],
            vec![-a, -b],
        ];
        let cfg = AdaptationConfig {
            within_share: 1.0,
            between_share: 0.0,
        };
        let adapted = adapt(&model, &pooled, &cfg).unwrap();
        // excess variance along axis 0: 4 - 2 = 2, all into sigma_w
        assert_abs_diff_eq!(adapted.sigma_w[(0, 0)], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(adapted.sigma_w[(1, 1)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(adapted.sigma_b[(0, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(adapted.sigma_b[(1, 1)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn adapt_splits_excess_variance_by_share() {
        let model = diag_model(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0]);
        let a = 2.0f64;
        let b = 2.0f64.sqrt();
        let pooled = vec![
            vec![a, b],
            vec![a, -b],
            vec![-a, b],
            vec![-a, -b],
        ];
        let cfg = AdaptationConfig {
            within_share: 0.75,
            between_share: 0.25,
        };
        let adapted = adapt(&model, &pooled, &cfg).unwrap();
        assert_abs_diff_eq!(adapted.sigma_w[(0, 0)], 1.0 + 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(adapted.sigma_b[(0, 0)], 1.0 + 0.5, epsilon = 1e-9);
    }

    #[test]
    fn adapt_requires_enough_data() {
        let model = diag_model(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0]);
        let pooled = vec![vec![1.0, 0.0]];
        assert!(adapt(&model, &pooled, &AdaptationConfig::default()).is_err());
    }

    #[test]
    fn pca_energy_thresholds() {
        // per-axis variances (9, 1)
        let segments = vec![
            vec![3.0, 1.0],
            vec![-3.0, -1.0],
            vec![3.0, -1.0],
            vec![-3.0, 1.0],
        ];
        let p30 = recording_pca(&segments, 0.30).unwrap();
        assert_eq!(p30.k, 1);
        assert!(p30.retained_fraction >= 0.30);
        let p95 = recording_pca(&segments, 0.95).unwrap();
        assert_eq!(p95.k, 2);
        let p100 = recording_pca(&segments, 1.0).unwrap();
        assert_eq!(p100.k, 2);
    }

    #[test]
    fn pca_full_energy_stops_at_rank() {
        // rank-1 data embedded in 3 dimensions
        let segments = vec![
            vec![1.0, 2.0, -1.0],
            vec![2.0, 4.0, -2.0],
            vec![-1.0, -2.0, 1.0],
        ];
        let p = recording_pca(&segments, 1.0).unwrap();
        assert_eq!(p.k, 1);
    }

    #[test]
    fn pca_degenerate_paths() {
        let single = recording_pca(&[vec![1.0, 2.0]], 0.5).unwrap();
        assert_eq!(single.k, 1);
        assert!(single.degenerate);

        let constant = recording_pca(&vec![vec![3.0, 3.0]; 5], 0.5).unwrap();
        assert_eq!(constant.k, 1);
        assert!(constant.degenerate);
        let norm: f64 = constant.basis.row(0).iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pca_basis_rows_orthonormal() {
        let mut rng = crate::rng::derive_rng(8, 98, 3);
        let segments: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let proj = recording_pca(&segments, 0.8).unwrap();
        let gram = &proj.basis * proj.basis.transpose();
        for i in 0..proj.k {
            for j in 0..proj.k {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn project_model_identity_basis_is_identity() {
        let model = diag_model(&[1.0, -2.0], &[2.0, 1.0], &[0.5, 0.7]);
        let projected = project_model(&model, &PcaProjection::identity(2)).unwrap();
        assert_abs_diff_eq!((projected.mu - &model.mu).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((projected.sigma_b - &model.sigma_b).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((projected.sigma_w - &model.sigma_w).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn project_model_to_one_dimension_selects_diagonal() {
        let model = diag_model(&[1.0, -2.0], &[2.0, 1.0], &[0.5, 0.7]);
        let mut basis = DMatrix::zeros(1, 2);
        basis[(0, 1)] = 1.0;
        let proj = PcaProjection {
            basis,
            retained_fraction: 1.0,
            k: 1,
            degenerate: false,
        };
        let projected = project_model(&model, &proj).unwrap();
        assert_abs_diff_eq!(projected.mu[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(projected.sigma_b[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(projected.sigma_w[(0, 0)], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn projection_preserves_symmetry_and_psd() {
        let mut rng = crate::rng::derive_rng(9, 98, 4);
        for _ in 0..100 {
            let d = 4;
            let mut a = DMatrix::<f64>::zeros(d, d);
            let mut w = DMatrix::<f64>::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                    w[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            let model = PldaModel::new(
                DVector::zeros(d),
                &a * a.transpose(),
                &w * w.transpose() + DMatrix::identity(d, d),
            )
            .unwrap();
            let segments: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let proj = recording_pca(&segments, 0.7).unwrap();
            let projected = project_model(&model, &proj).unwrap();
            assert!(linalg::max_asymmetry(&projected.sigma_b) < 1e-10);
            assert!(linalg::min_eigenvalue(&projected.sigma_b) > -1e-8);
        }
    }

    #[test]
    fn score_matrix_single_segment() {
        let model = diag_model(&[0.0], &[1.0], &[1.0]);
        let m = score_matrix(&model, &[vec![0.4]], 0.5).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert!(m[(0, 0)].is_infinite());
    }

    #[test]
    fn score_matrix_is_exactly_symmetric() {
        let model = diag_model(&[0.0, 0.0, 0.0], &[1.0, 0.5, 0.2], &[1.0, 1.0, 1.0]);
        let mut rng = crate::rng::derive_rng(10, 98, 5);
        let segments: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let m = score_matrix(&model, &segments, 0.9).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
                }
            }
        }
    }

    #[test]
    fn full_energy_matches_direct_scoring() {
        let model = diag_model(&[0.1, -0.3], &[1.5, 0.4], &[0.9, 1.1]);
        let mut rng = crate::rng::derive_rng(12, 98, 6);
        let segments: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let with_pca = score_matrix(&model, &segments, 1.0).unwrap();
        let scorer = PairScorer::new(&model).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    let direct = scorer.score(&segments[i], &segments[j]).unwrap();
                    assert_abs_diff_eq!(with_pca[(i, j)], direct, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn model_json_roundtrip() {
        let mut model = diag_model(&[0.1, -0.3], &[1.5, 0.4], &[0.9, 1.1]);
        model.meta.training_hash = Some("abc123".to_string());
        model.meta.adaptation = Some(AdaptationConfig::default());
        let text = model.to_json();
        let back = PldaModel::from_json(&text).unwrap();
        assert_eq!(model, back);
    }
}
