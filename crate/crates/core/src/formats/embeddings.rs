use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance-level embedding row. `label` carries a domain token (for
/// domain identification) or a speaker token (for PLDA training); rows may
/// also be unlabeled. Labels must not parse as numbers, otherwise the text
/// form would be ambiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEmbedding {
    pub utterance_id: String,
    pub label: Option<String>,
    pub vector: Vec<f64>,
}

/// One sub-segment embedding row, the clustering unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEmbedding {
    pub recording_id: String,
    pub onset: f64,
    pub offset: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UtteranceTable {
    pub rows: Vec<UtteranceEmbedding>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentTable {
    pub rows: Vec<SegmentEmbedding>,
    pub dim: usize,
}

impl SegmentTable {
    /// Group rows per recording, each group sorted by onset (time order).
    pub fn group_by_recording(&self) -> BTreeMap<String, Vec<SegmentEmbedding>> {
        let mut out: BTreeMap<String, Vec<SegmentEmbedding>> = BTreeMap::new();
        for row in &self.rows {
            out.entry(row.recording_id.clone()).or_default().push(row.clone());
        }
        for group in out.values_mut() {
            group.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.offset.total_cmp(&b.offset)));
        }
        out
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_value(lineno: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(lineno, format!("expected a number, got {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(lineno, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn check_dim(lineno: usize, dim: &mut usize, got: usize) -> Result<()> {
    if got == 0 {
        return Err(Error::parse(lineno, "row has no vector components"));
    }
    if *dim == 0 {
        *dim = got;
    } else if got != *dim {
        return Err(Error::parse(
            lineno,
            format!("inconsistent dimension: expected {dim}, got {got}"),
        ));
    }
    Ok(())
}

/// Parse an utterance-form table: `<utt_id> [<label>] <v1> ... <vD>` per
/// line. `#` starts a comment. The second field is a label when it does not
/// parse as a number.
pub fn parse_utterance_embeddings(text: &str) -> Result<UtteranceTable> {
    let mut rows = Vec::new();
    let mut dim = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::parse(lineno, "expected an id and vector components"));
        }
        let (label, first_value) = if fields[1].parse::<f64>().is_ok() {
            (None, 1)
        } else {
            if fields.len() < 3 {
                return Err(Error::parse(lineno, "labeled row has no vector components"));
            }
            (Some(fields[1].to_string()), 2)
        };
        let vector: Vec<f64> = fields[first_value..]
            .iter()
            .map(|tok| parse_value(lineno, tok))
            .collect::<Result<_>>()?;
        check_dim(lineno, &mut dim, vector.len())?;
        rows.push(UtteranceEmbedding {
            utterance_id: fields[0].to_string(),
            label,
            vector,
        });
    }
    Ok(UtteranceTable { rows, dim })
}

/// Parse a segment-form table: `<recording_id> <onset> <offset> <v1> ... <vD>`.
pub fn parse_segment_embeddings(text: &str) -> Result<SegmentTable> {
    let mut rows = Vec::new();
    let mut dim = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(Error::parse(
                lineno,
                "expected recording, onset, offset and vector components",
            ));
        }
        let onset = parse_value(lineno, fields[1])?;
        let offset = parse_value(lineno, fields[2])?;
        if offset <= onset {
            return Err(Error::validation(format!(
                "line {lineno}: segment offset {offset} must exceed onset {onset}"
            )));
        }
        let vector: Vec<f64> = fields[3..]
            .iter()
            .map(|tok| parse_value(lineno, tok))
            .collect::<Result<_>>()?;
        check_dim(lineno, &mut dim, vector.len())?;
        rows.push(SegmentEmbedding {
            recording_id: fields[0].to_string(),
            onset,
            offset,
            vector,
        });
    }
    Ok(SegmentTable { rows, dim })
}

/// Write an utterance table. Values use Rust's shortest round-trip float
/// formatting, so write-then-parse is exact.
pub fn write_utterance_embeddings(table: &UtteranceTable) -> String {
    let mut out = String::new();
    for row in &table.rows {
        out.push_str(&row.utterance_id);
        if let Some(label) = &row.label {
            out.push(' ');
            out.push_str(label);
        }
        for v in &row.vector {
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn write_segment_embeddings(table: &SegmentTable) -> String {
    let mut out = String::new();
    for row in &table.rows {
        write!(out, "{} {} {}", row.recording_id, row.onset, row.offset).expect("string write");
        for v in &row.vector {
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utterance_form_basic() {
        let table = parse_utterance_embeddings("u1 1.0 0.0\nu2 0.0 1.0\n").unwrap();
        assert_eq!(table.dim, 2);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].vector, vec![1.0, 0.0]);
        assert!(table.rows[0].label.is_none());
    }

    #[test]
    fn utterance_form_with_label() {
        let table = parse_utterance_embeddings("u1 court 1.0 0.0\n").unwrap();
        assert_eq!(table.rows[0].label.as_deref(), Some("court"));
        assert_eq!(table.rows[0].vector, vec![1.0, 0.0]);
    }

    #[test]
    fn segment_form_basic() {
        let table = parse_segment_embeddings("rec1 0.0 1.5 0.3 0.4\n").unwrap();
        let row = &table.rows[0];
        assert_eq!(row.recording_id, "rec1");
        assert_eq!((row.onset, row.offset), (0.0, 1.5));
        assert_eq!(row.vector, vec![0.3, 0.4]);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let err = parse_utterance_embeddings("u1 1.0 2.0\nu2 1.0 2.0 3.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "got {err:?}");
    }

    #[test]
    fn non_finite_rejected() {
        let err = parse_utterance_embeddings("u1 1.0 nan\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "got {err:?}");
        let err = parse_utterance_embeddings("u1 inf 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "got {err:?}");
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let table =
            parse_utterance_embeddings("# header\nu1 1.0 2.0 # trailing\n\n").unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].vector, vec![1.0, 2.0]);
    }

    #[test]
    fn inverted_segment_rejected() {
        assert!(matches!(
            parse_segment_embeddings("rec1 2.0 1.0 0.5").unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn write_parse_exact() {
        let table = parse_utterance_embeddings("u1 court 0.1 -2.5e-3\nu2 1 2\n").unwrap();
        let rewritten = write_utterance_embeddings(&table);
        assert_eq!(parse_utterance_embeddings(&rewritten).unwrap(), table);
    }
}
