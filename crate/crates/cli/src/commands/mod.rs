pub mod adi;
pub mod diarize;
pub mod plda;
pub mod score;
pub mod sweep;
pub mod synth;

use diarkit::error::{Error, Result};
use diarkit::reseg::VbConfig;

/// VB-HMM knobs shared by `diarize` and `sweep`.
#[derive(Debug, clap::Args)]
pub struct VbArgs {
    /// HMM stay probability
    #[arg(long = "vb-loop", default_value_t = 0.9)]
    pub vb_loop: f64,
    /// emission log-likelihood scale
    #[arg(long = "vb-scale", default_value_t = 0.3)]
    pub vb_scale: f64,
    /// maximum VB iterations
    #[arg(long = "vb-iters", default_value_t = 10)]
    pub vb_iters: usize,
    /// ELBO improvement tolerance
    #[arg(long = "vb-tol", default_value_t = 1e-4)]
    pub vb_tol: f64,
    /// minimum speaker posterior mass fraction before pruning
    #[arg(long = "vb-min-posterior", default_value_t = 0.05)]
    pub vb_min_posterior: f64,
}

impl VbArgs {
    pub fn to_config(&self) -> VbConfig {
        VbConfig {
            loop_probability: self.vb_loop,
            ll_scale: self.vb_scale,
            max_iters: self.vb_iters,
            elbo_tol: self.vb_tol,
            min_speaker_posterior: self.vb_min_posterior,
        }
    }
}

/// Parse a grid axis: either a comma list `0.1,0.2,0.3` or an inclusive
/// range `start:stop:step`.
pub fn parse_axis(spec: &str) -> Result<Vec<f64>> {
    let parse = |tok: &str| -> Result<f64> {
        tok.trim()
            .parse::<f64>()
            .map_err(|_| Error::config(format!("invalid number {tok:?} in grid spec {spec:?}")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "range spec must be start:stop:step, got {spec:?}"
            )));
        }
        let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 || stop < start {
            return Err(Error::config(format!("invalid range {spec:?}")));
        }
        let mut out = Vec::new();
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        for i in 0..=n {
            out.push(start + i as f64 * step);
        }
        Ok(out)
    } else {
        spec.split(',').map(parse).collect()
    }
}
