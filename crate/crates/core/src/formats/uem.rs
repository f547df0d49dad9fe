use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::check_token;

/// The time regions of one recording over which scoring is performed.
/// Regions are half-open `[onset, offset)` intervals, sorted and
/// non-overlapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringRegions {
    pub recording_id: String,
    regions: Vec<(f64, f64)>,
}

impl ScoringRegions {
    pub fn new(recording_id: impl Into<String>, mut regions: Vec<(f64, f64)>) -> Result<Self> {
        let recording_id = recording_id.into();
        check_token("recording id", &recording_id)?;
        for &(onset, offset) in &regions {
            if !onset.is_finite() || !offset.is_finite() || onset < 0.0 {
                return Err(Error::validation(format!(
                    "region [{onset}, {offset}) must be finite and non-negative"
                )));
            }
            if offset <= onset {
                return Err(Error::validation(format!(
                    "region offset {offset} must exceed onset {onset}"
                )));
            }
        }
        regions.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in regions.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::validation(format!(
                    "overlapping regions [{}, {}) and [{}, {}) in recording {}",
                    w[0].0, w[0].1, w[1].0, w[1].1, recording_id
                )));
            }
        }
        Ok(ScoringRegions {
            recording_id,
            regions,
        })
    }

    pub fn regions(&self) -> &[(f64, f64)] {
        &self.regions
    }

    pub fn total_duration(&self) -> f64 {
        self.regions.iter().map(|(a, b)| b - a).sum()
    }
}

/// Parse UEM text: one `<recording> <channel> <onset> <offset>` line per
/// region. The channel field is ignored.
pub fn parse_uem(text: &str) -> Result<BTreeMap<String, ScoringRegions>> {
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let onset: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-numeric onset {:?}", fields[2])))?;
        let offset: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-numeric offset {:?}", fields[3])))?;
        if offset <= onset {
            return Err(Error::validation(format!(
                "line {lineno}: offset {offset} must exceed onset {onset}"
            )));
        }
        grouped
            .entry(fields[0].to_string())
            .or_default()
            .push((onset, offset));
    }
    grouped
        .into_iter()
        .map(|(rec, regions)| ScoringRegions::new(rec.clone(), regions).map(|r| (rec, r)))
        .collect()
}

pub fn write_uem(regions: &BTreeMap<String, ScoringRegions>) -> String {
    let mut out = String::new();
    for sr in regions.values() {
        for &(onset, offset) in sr.regions() {
            writeln!(out, "{} 1 {:.3} {:.3}", sr.recording_id, onset, offset)
                .expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_region() {
        let map = parse_uem("rec1 1 0.0 300.0\n").unwrap();
        assert_eq!(map["rec1"].regions(), &[(0.0, 300.0)]);
    }

    #[test]
    fn disjoint_regions_sorted() {
        let map = parse_uem("rec1 1 100.0 200.0\nrec1 1 0.0 50.0\n").unwrap();
        assert_eq!(map["rec1"].regions(), &[(0.0, 50.0), (100.0, 200.0)]);
    }

    #[test]
    fn inverted_region_rejected() {
        assert!(matches!(
            parse_uem("rec1 1 5.0 2.0").unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn overlapping_regions_rejected() {
        assert!(matches!(
            parse_uem("rec1 1 0.0 10.0\nrec1 1 5.0 20.0").unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn touching_regions_allowed() {
        let map = parse_uem("rec1 1 0.0 10.0\nrec1 1 10.0 20.0").unwrap();
        assert_eq!(map["rec1"].regions().len(), 2);
    }
}
