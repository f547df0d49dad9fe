//! VB-HMM resegmentation: refine a first-pass diarization by soft
//! reassignment of sub-segment embeddings under a PLDA-derived HMM.
//!
//! The generative model lives in the PCA-projected space: speaker latents
//! `y_s ~ N(0, sigma_b')`, observations `x_t | s ~ N(mu' + y_s, sigma_w')`,
//! and the hidden speaker sequence follows an HMM with a stay probability
//! and uniform switching. Variational EM alternates Gaussian `q(y)` updates
//! with a forward-backward `q(z)` update; the emission log-likelihoods are
//! scaled by `ll_scale` (the usual acoustic scaling), which appears in both
//! updates so the evidence lower bound stays monotone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::plda::{PcaProjection, PldaModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    pub loop_probability: f64,
    pub ll_scale: f64,
    pub max_iters: usize,
    pub elbo_tol: f64,
    pub min_speaker_posterior: f64,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            loop_probability: 0.9,
            ll_scale: 0.3,
            max_iters: 10,
            elbo_tol: 1e-4,
            min_speaker_posterior: 0.05,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loop_probability > 0.0 && self.loop_probability < 1.0) {
            return Err(Error::config(format!(
                "loop_probability must lie in (0, 1), got {}",
                self.loop_probability
            )));
        }
        if !(self.ll_scale > 0.0) {
            return Err(Error::config("ll_scale must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.min_speaker_posterior) {
            return Err(Error::config("min_speaker_posterior must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Resegmentation result. `labels` use the caller's original speaker
/// indices; `posteriors` has one column per surviving speaker, in
/// `speaker_ids` order. `elbo_trace` covers the main VB loop.
#[derive(Debug, Clone)]
pub struct VbResult {
    pub labels: Vec<usize>,
    pub posteriors: DMatrix<f64>,
    pub speaker_ids: Vec<usize>,
    pub elbo_trace: Vec<f64>,
}

/// Exact HMM posteriors (log-space forward-backward) under a uniform initial
/// distribution and a stay/switch transition matrix; also returns the log
/// evidence.
pub fn forward_backward(
    log_emissions: &DMatrix<f64>,
    loop_probability: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let (t_len, s_len) = log_emissions.shape();
    if t_len == 0 || s_len == 0 {
        return Err(Error::validation("empty emission matrix"));
    }
    if log_emissions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite log emission".into()));
    }
    if !(loop_probability > 0.0 && loop_probability < 1.0) {
        return Err(Error::config(format!(
            "loop_probability must lie in (0, 1), got {loop_probability}"
        )));
    }

    let log_pi = -(s_len as f64).ln();
    let (log_stay, log_switch) = if s_len == 1 {
        (0.0, f64::NEG_INFINITY)
    } else {
        (
            loop_probability.ln(),
            ((1.0 - loop_probability) / (s_len - 1) as f64).ln(),
        )
    };

    let mut alpha = DMatrix::zeros(t_len, s_len);
    for s in 0..s_len {
        alpha[(0, s)] = log_pi + log_emissions[(0, s)];
    }
    let mut scratch = vec![0.0f64; s_len];
    for t in 1..t_len {
        for s in 0..s_len {
            for (p, slot) in scratch.iter_mut().enumerate() {
                let trans = if p == s { log_stay } else { log_switch };
                *slot = alpha[(t - 1, p)] + trans;
            }
            alpha[(t, s)] = linalg::logsumexp(&scratch) + log_emissions[(t, s)];
        }
    }
    let log_evidence = {
        let last: Vec<f64> = (0..s_len).map(|s| alpha[(t_len - 1, s)]).collect();
        linalg::logsumexp(&last)
    };

    let mut beta = DMatrix::zeros(t_len, s_len);
    for t in (0..t_len.saturating_sub(1)).rev() {
        for s in 0..s_len {
            for (nx, slot) in scratch.iter_mut().enumerate() {
                let trans = if nx == s { log_stay } else { log_switch };
                *slot = trans + log_emissions[(t + 1, nx)] + beta[(t + 1, nx)];
            }
            beta[(t, s)] = linalg::logsumexp(&scratch);
        }
    }

    let mut posteriors = DMatrix::zeros(t_len, s_len);
    for t in 0..t_len {
        for s in 0..s_len {
            posteriors[(t, s)] = (alpha[(t, s)] + beta[(t, s)] - log_evidence).exp();
        }
        let row_sum: f64 = posteriors.row(t).iter().sum();
        if !(row_sum.is_finite() && row_sum > 0.0) {
            return Err(Error::Numerical(format!(
                "posterior row {t} failed to normalize"
            )));
        }
        for s in 0..s_len {
            posteriors[(t, s)] /= row_sum;
        }
    }
    Ok((posteriors, log_evidence))
}

struct ProjectedModel {
    dim: usize,
    sigma_b_inv: DMatrix<f64>,
    sigma_b_logdet: f64,
    sigma_w_inv: DMatrix<f64>,
    sigma_w_logdet: f64,
}

struct SpeakerPosterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    cov_logdet: f64,
    // tr(sigma_w^-1 cov), reused by every frame's emission
    trace_w: f64,
}

/// Refine `init_labels` over `segments` (given in the model's original
/// space and projected internally with `proj`, consistently with scoring).
/// Speakers whose total posterior mass falls below
/// `min_speaker_posterior * T` after convergence are removed, followed by
/// one final E-step. Segment boundaries are never altered, only labels.
pub fn vb_resegment(
    segments: &[Vec<f64>],
    init_labels: &[usize],
    model: &PldaModel,
    proj: &PcaProjection,
    cfg: &VbConfig,
) -> Result<VbResult> {
    cfg.validate()?;
    let t_len = segments.len();
    if t_len == 0 {
        return Err(Error::validation("no segments to resegment"));
    }
    if init_labels.len() != t_len {
        return Err(Error::validation(format!(
            "{} init labels for {} segments",
            init_labels.len(),
            t_len
        )));
    }

    // original speaker ids, sorted; column index = position in this list
    let mut speaker_ids: Vec<usize> = init_labels.to_vec();
    speaker_ids.sort_unstable();
    speaker_ids.dedup();
    let s_len = speaker_ids.len();
    let col_of = |orig: usize| speaker_ids.binary_search(&orig).expect("known speaker");

    let projected = crate::plda::project_model(model, proj)?;
    let dim = projected.dim();
    let mut sigma_b = projected.sigma_b.clone();
    linalg::stabilize_spd(&mut sigma_b, "vb prior sigma_b");
    let pm = ProjectedModel {
        dim,
        sigma_b_inv: linalg::spd_inverse(&sigma_b)?,
        sigma_b_logdet: linalg::spd_logdet(&sigma_b)?,
        sigma_w_inv: linalg::spd_inverse(&projected.sigma_w)?,
        sigma_w_logdet: linalg::spd_logdet(&projected.sigma_w)?,
    };

    // centered, projected observations
    let centered: Vec<DVector<f64>> = segments
        .iter()
        .map(|s| DVector::from_vec(proj.project(s)) - &projected.mu)
        .collect();

    // initial responsibilities: hard assignment from the first pass
    let mut gamma = DMatrix::zeros(t_len, s_len);
    for (t, &orig) in init_labels.iter().enumerate() {
        gamma[(t, col_of(orig))] = 1.0;
    }

    let mut elbo_trace: Vec<f64> = Vec::new();
    for iter in 0..cfg.max_iters {
        let speakers = update_speaker_posteriors(&pm, &centered, &gamma, cfg.ll_scale)?;
        let log_emissions = emission_matrix(&pm, &centered, &speakers, cfg.ll_scale)
            .map_err(|e| match e {
                Error::Numerical(msg) => {
                    Error::Numerical(format!("iteration {iter}: {msg}"))
                }
                other => other,
            })?;
        let (new_gamma, log_evidence) = forward_backward(&log_emissions, cfg.loop_probability)?;
        gamma = new_gamma;

        let kl: f64 = speakers.iter().map(|sp| gaussian_kl(&pm, sp)).sum();
        let elbo = log_evidence - kl;
        let done = elbo_trace
            .last()
            .is_some_and(|prev| (elbo - prev).abs() < cfg.elbo_tol);
        elbo_trace.push(elbo);
        if done {
            break;
        }
    }

    // prune weak speakers once, then one final E-step
    let masses: Vec<f64> = (0..s_len).map(|s| gamma.column(s).sum()).collect();
    let threshold = cfg.min_speaker_posterior * t_len as f64;
    let mut kept: Vec<usize> = (0..s_len).filter(|&s| masses[s] >= threshold).collect();
    if kept.is_empty() {
        let top = (0..s_len)
            .max_by(|&a, &b| masses[a].total_cmp(&masses[b]))
            .expect("at least one speaker");
        kept.push(top);
    }
    if kept.len() < s_len {
        let mut reduced = DMatrix::zeros(t_len, kept.len());
        for t in 0..t_len {
            let mut row_sum = 0.0;
            for (c, &s) in kept.iter().enumerate() {
                reduced[(t, c)] = gamma[(t, s)];
                row_sum += gamma[(t, s)];
            }
            if row_sum > 0.0 {
                for c in 0..kept.len() {
                    reduced[(t, c)] /= row_sum;
                }
            } else {
                let uniform = 1.0 / kept.len() as f64;
                for c in 0..kept.len() {
                    reduced[(t, c)] = uniform;
                }
            }
        }
        let speakers = update_speaker_posteriors(&pm, &centered, &reduced, cfg.ll_scale)?;
        let log_emissions = emission_matrix(&pm, &centered, &speakers, cfg.ll_scale)?;
        let (final_gamma, _) = forward_backward(&log_emissions, cfg.loop_probability)?;
        gamma = final_gamma;
    }

    let surviving: Vec<usize> = kept.iter().map(|&c| speaker_ids[c]).collect();
    let labels: Vec<usize> = (0..t_len)
        .map(|t| {
            let mut best = 0usize;
            for c in 1..gamma.ncols() {
                if gamma[(t, c)] > gamma[(t, best)] {
                    best = c;
                }
            }
            surviving[best]
        })
        .collect();

    Ok(VbResult {
        labels,
        posteriors: gamma,
        speaker_ids: surviving,
        elbo_trace,
    })
}

/// q(y_s) update from responsibility-weighted statistics. With scaled
/// emissions the natural parameters pick up the same scale factor:
///   Lambda_s = sigma_b^-1 + ll_scale * n_s * sigma_w^-1
///   alpha_s  = ll_scale * Lambda_s^-1 sigma_w^-1 sum_t gamma_ts x_t
fn update_speaker_posteriors(
    pm: &ProjectedModel,
    centered: &[DVector<f64>],
    gamma: &DMatrix<f64>,
    ll_scale: f64,
) -> Result<Vec<SpeakerPosterior>> {
    let s_len = gamma.ncols();
    let mut out = Vec::with_capacity(s_len);
    for s in 0..s_len {
        let mass: f64 = gamma.column(s).sum();
        let mut weighted = DVector::zeros(pm.dim);
        for (t, x) in centered.iter().enumerate() {
            weighted += x * gamma[(t, s)];
        }
        let mut precision = &pm.sigma_b_inv + &pm.sigma_w_inv * (ll_scale * mass);
        linalg::symmetrize(&mut precision);
        let cov = linalg::spd_inverse(&precision)?;
        let mean = &cov * (&pm.sigma_w_inv * weighted) * ll_scale;
        let trace_w = (&pm.sigma_w_inv * &cov).trace();
        out.push(SpeakerPosterior {
            mean,
            cov_logdet: -linalg::spd_logdet(&precision)?,
            cov,
            trace_w,
        });
    }
    Ok(out)
}

/// Scaled expected log emission:
///   ll_scale * ( ln N(x_t; alpha_s, sigma_w) - tr(sigma_w^-1 P_s) / 2 )
fn emission_matrix(
    pm: &ProjectedModel,
    centered: &[DVector<f64>],
    speakers: &[SpeakerPosterior],
    ll_scale: f64,
) -> Result<DMatrix<f64>> {
    let norm_const = pm.dim as f64 * (2.0 * std::f64::consts::PI).ln() + pm.sigma_w_logdet;
    let mut out = DMatrix::zeros(centered.len(), speakers.len());
    for (s, sp) in speakers.iter().enumerate() {
        for (t, x) in centered.iter().enumerate() {
            let diff = x - &sp.mean;
            let quad = (&pm.sigma_w_inv * &diff).dot(&diff);
            let value = ll_scale * (-0.5 * (norm_const + quad + sp.trace_w));
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite emission for segment {t}, speaker {s}"
                )));
            }
            out[(t, s)] = value;
        }
    }
    Ok(out)
}

/// KL( N(alpha, P) || N(0, sigma_b) ).
fn gaussian_kl(pm: &ProjectedModel, sp: &SpeakerPosterior) -> f64 {
    let trace = (&pm.sigma_b_inv * &sp.cov).trace();
    let quad = (&pm.sigma_b_inv * &sp.mean).dot(&sp.mean);
    0.5 * (trace + quad - pm.dim as f64 + pm.sigma_b_logdet - sp.cov_logdet)
}
