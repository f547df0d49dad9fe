use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuned per-domain parameters: AHC stop threshold (raw PLDA-score units)
/// and the PCA energy fraction used for recording-dependent dimensionality
/// reduction during scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub domain: String,
    pub ahc_threshold: f64,
    pub pca_energy: f64,
}

impl DomainProfile {
    pub fn new(domain: impl Into<String>, ahc_threshold: f64, pca_energy: f64) -> Result<Self> {
        let profile = DomainProfile {
            domain: domain.into(),
            ahc_threshold,
            pca_energy,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        super::check_token("domain", &self.domain)?;
        if !self.ahc_threshold.is_finite() {
            return Err(Error::validation(format!(
                "ahc_threshold must be finite, got {}",
                self.ahc_threshold
            )));
        }
        if !(self.pca_energy > 0.0 && self.pca_energy <= 1.0) {
            return Err(Error::validation(format!(
                "pca_energy must lie in (0, 1], got {}",
                self.pca_energy
            )));
        }
        Ok(())
    }
}

/// A set of domain profiles plus an optional fallback applied to recordings
/// whose domain is unknown.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileSet {
    pub profiles: BTreeMap<String, DomainProfile>,
    pub fallback: Option<DomainProfile>,
}

impl ProfileSet {
    pub fn insert(&mut self, profile: DomainProfile) -> Result<()> {
        profile.validate()?;
        if self.profiles.contains_key(&profile.domain) {
            return Err(Error::validation(format!(
                "duplicate domain {:?}",
                profile.domain
            )));
        }
        self.profiles.insert(profile.domain.clone(), profile);
        Ok(())
    }

    pub fn get(&self, domain: &str) -> Option<&DomainProfile> {
        self.profiles.get(domain)
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    profiles: Vec<DomainProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fallback: Option<DomainProfile>,
}

/// Read a profile JSON document: `{"profiles": [...], "fallback": {...}}`.
pub fn read_profiles(text: &str) -> Result<ProfileSet> {
    let file: ProfileFile = serde_json::from_str(text)?;
    let mut set = ProfileSet::default();
    for profile in file.profiles {
        set.insert(profile)?;
    }
    if let Some(fb) = file.fallback {
        fb.validate()?;
        set.fallback = Some(fb);
    }
    Ok(set)
}

/// Write profiles as pretty JSON, sorted by domain. Write-then-read is the
/// identity.
pub fn write_profiles(set: &ProfileSet) -> String {
    let file = ProfileFile {
        profiles: set.profiles.values().cloned().collect(),
        fallback: set.fallback.clone(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("profile serialization");
    out.push('\n');
    out
}
