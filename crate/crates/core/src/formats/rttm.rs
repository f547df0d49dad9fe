use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::check_token;

/// One speaker turn: who spoke when within a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub recording_id: String,
    pub onset: f64,
    pub duration: f64,
    pub speaker: String,
}

impl Turn {
    pub fn new(
        recording_id: impl Into<String>,
        onset: f64,
        duration: f64,
        speaker: impl Into<String>,
    ) -> Result<Self> {
        let turn = Turn {
            recording_id: recording_id.into(),
            onset,
            duration,
            speaker: speaker.into(),
        };
        turn.validate()?;
        Ok(turn)
    }

    fn validate(&self) -> Result<()> {
        check_token("recording id", &self.recording_id)?;
        check_token("speaker", &self.speaker)?;
        if !self.onset.is_finite() || self.onset < 0.0 {
            return Err(Error::validation(format!(
                "onset must be a non-negative finite number, got {}",
                self.onset
            )));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Error::validation(format!(
                "duration must be a positive finite number, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    pub fn offset(&self) -> f64 {
        self.onset + self.duration
    }
}

/// A recording's speaker turns, kept sorted by (onset, speaker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub recording_id: String,
    turns: Vec<Turn>,
}

impl Annotation {
    pub fn empty(recording_id: impl Into<String>) -> Self {
        Annotation {
            recording_id: recording_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn from_turns(recording_id: impl Into<String>, mut turns: Vec<Turn>) -> Result<Self> {
        let recording_id = recording_id.into();
        for t in &turns {
            t.validate()?;
            if t.recording_id != recording_id {
                return Err(Error::validation(format!(
                    "turn for recording {:?} cannot join annotation {:?}",
                    t.recording_id, recording_id
                )));
            }
        }
        turns.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then_with(|| a.speaker.cmp(&b.speaker))
        });
        Ok(Annotation {
            recording_id,
            turns,
        })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Distinct speaker tokens, sorted.
    pub fn speakers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.turns.iter().map(|t| t.speaker.as_str()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Parse RTTM text into one [`Annotation`] per recording.
///
/// Each non-empty line must have at least 9 whitespace-separated fields and
/// start with the literal `SPEAKER`. Fields 2/4/5/8 (1-based) carry the
/// recording id, onset, duration and speaker; the rest are ignored.
pub fn parse_rttm(text: &str) -> Result<BTreeMap<String, Annotation>> {
    let mut grouped: BTreeMap<String, Vec<Turn>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 9 {
            return Err(Error::parse(
                lineno,
                format!("expected at least 9 fields, got {}", fields.len()),
            ));
        }
        if fields[0] != "SPEAKER" {
            return Err(Error::parse(
                lineno,
                format!("expected SPEAKER record, got {:?}", fields[0]),
            ));
        }
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-numeric onset {:?}", fields[3])))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-numeric duration {:?}", fields[4])))?;
        let turn = Turn::new(fields[1], onset, duration, fields[7]).map_err(|e| {
            Error::validation(format!("line {lineno}: {e}"))
        })?;
        grouped.entry(turn.recording_id.clone()).or_default().push(turn);
    }
    grouped
        .into_iter()
        .map(|(rec, turns)| Annotation::from_turns(rec.clone(), turns).map(|a| (rec, a)))
        .collect()
}

/// Write annotations as RTTM, one line per turn, onset/duration with exactly
/// three decimal places. Round-trips through [`parse_rttm`] within 1 ms.
pub fn write_rttm(annotations: &BTreeMap<String, Annotation>) -> String {
    let mut out = String::new();
    for ann in annotations.values() {
        for t in ann.turns() {
            writeln!(
                out,
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
                t.recording_id, t.onset, t.duration, t.speaker
            )
            .expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_line() {
        let map = parse_rttm("SPEAKER rec1 1 0.50 2.00 <NA> <NA> spkA <NA> <NA>\n").unwrap();
        let ann = &map["rec1"];
        assert_eq!(ann.turns().len(), 1);
        let t = &ann.turns()[0];
        assert_eq!(t.recording_id, "rec1");
        assert_eq!(t.onset, 0.5);
        assert_eq!(t.duration, 2.0);
        assert_eq!(t.speaker, "spkA");
    }

    #[test]
    fn empty_input_gives_empty_mapping() {
        assert!(parse_rttm("").unwrap().is_empty());
        assert!(parse_rttm("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn negative_duration_is_a_validation_error() {
        let err = parse_rttm("SPEAKER rec1 1 0.50 -1.0 <NA> <NA> spkA <NA> <NA>").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "got {err:?}");
    }

    #[test]
    fn malformed_line_names_the_line_number() {
        let text = "SPEAKER rec1 1 0.5 2.0 <NA> <NA> spkA <NA> <NA>\nSPEAKER rec1 1 oops 2.0 <NA> <NA> spkA <NA> <NA>\n";
        match parse_rttm(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("expected parse error, got {e:?}"),
        }
    }

    #[test]
    fn short_line_rejected() {
        match parse_rttm("SPEAKER rec1 1 0.5 2.0 <NA>").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("expected parse error, got {e:?}"),
        }
    }

    #[test]
    fn writes_the_documented_layout() {
        let mut map = BTreeMap::new();
        map.insert(
            "rec1".to_string(),
            Annotation::from_turns(
                "rec1",
                vec![Turn::new("rec1", 0.5, 2.0, "spkA").unwrap()],
            )
            .unwrap(),
        );
        assert_eq!(
            write_rttm(&map),
            "SPEAKER rec1 1 0.500 2.000 <NA> <NA> spkA <NA> <NA>\n"
        );
        assert_eq!(write_rttm(&BTreeMap::new()), "");
    }

    #[test]
    fn turns_sorted_regardless_of_input_order() {
        let text = "\
SPEAKER rec1 1 5.0 1.0 <NA> <NA> spkB <NA> <NA>
SPEAKER rec1 1 1.0 1.0 <NA> <NA> spkA <NA> <NA>
SPEAKER rec1 1 5.0 1.0 <NA> <NA> spkA <NA> <NA>
";
        let map = parse_rttm(text).unwrap();
        let speakers: Vec<_> = map["rec1"]
            .turns()
            .iter()
            .map(|t| (t.onset, t.speaker.clone()))
            .collect();
        assert_eq!(
            speakers,
            vec![
                (1.0, "spkA".to_string()),
                (5.0, "spkA".to_string()),
                (5.0, "spkB".to_string())
            ]
        );
    }
}
