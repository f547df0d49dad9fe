//! Domain-aware speaker diarization backend.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`formats`]: RTTM / UEM / embedding-table / profile parsing and writing
//! - [`adi`]: acoustic domain identification (cosine nearest neighbor)
//! - [`plda`]: two-covariance PLDA training, pooled-data adaptation,
//!   recording-dependent PCA and pairwise log-likelihood-ratio scoring
//! - [`clustering`]: agglomerative hierarchical clustering with a stop threshold
//! - [`reseg`]: VB-HMM resegmentation of a first-pass diarization
//! - [`metrics`]: DER / JER scoring with optimal speaker mapping
//! - [`sweep`]: per-domain grid search over (threshold, PCA energy)
//! - [`synth`]: deterministic synthetic corpus generation for testing and demos

pub mod adi;
pub mod assignment;
pub mod clustering;
pub mod error;
pub mod formats;
pub mod linalg;
pub mod metrics;
pub mod plda;
pub mod reseg;
mod rng;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use formats::{
    Annotation, DomainProfile, ProfileSet, ScoringRegions, SegmentEmbedding, SegmentTable, Turn,
    UtteranceEmbedding, UtteranceTable,
};
pub use plda::{AdaptationConfig, PcaProjection, PldaModel};

/// PCA energy fraction used by the baseline configuration.
pub const BASELINE_PCA_ENERGY: f64 = 0.30;
