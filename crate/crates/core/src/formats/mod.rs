//! Parsing and writing of every on-disk artifact: RTTM speaker turns, UEM
//! scoring regions, embedding tables, domain-label maps and domain-profile
//! files. All formats are plain text; the exact layouts are pinned down in
//! `docs/formats.md`.
//!
//! Parsers reject invariant-violating input with a located error and never
//! silently repair. Parsed collections are grouped and sorted
//! deterministically regardless of input line order.

mod domains;
mod embeddings;
mod profiles;
mod rttm;
mod uem;

pub use domains::{parse_domain_map, write_domain_map};
pub use embeddings::{
    parse_segment_embeddings, parse_utterance_embeddings, write_segment_embeddings,
    write_utterance_embeddings, SegmentEmbedding, SegmentTable, UtteranceEmbedding,
    UtteranceTable,
};
pub use profiles::{read_profiles, write_profiles, DomainProfile, ProfileSet};
pub use rttm::{parse_rttm, write_rttm, Annotation, Turn};
pub use uem::{parse_uem, write_uem, ScoringRegions};

use crate::error::{Error, Result};

pub(crate) fn check_token(what: &str, tok: &str) -> Result<()> {
    if tok.is_empty() {
        return Err(Error::validation(format!("{what} must be non-empty")));
    }
    if tok.chars().any(char::is_whitespace) {
        return Err(Error::validation(format!(
            "{what} {tok:?} must not contain whitespace"
        )));
    }
    Ok(())
}

/// Write a file atomically (temp file in the same directory + rename) so
/// partial runs never leave a corrupt artifact behind.
pub fn atomic_write(path: &std::path::Path, content: &str) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile_path(path);
    let mut attempt = 0;
    let file = loop {
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&tmp)
        {
            Ok(f) => break f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists && attempt < 100 => {
                attempt += 1;
                tmp = tempfile_path(path);
            }
            Err(e) => return Err(e.into()),
        }
    };
    let mut file = std::io::BufWriter::new(file);
    file.write_all(content.as_bytes())?;
    file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tempfile_path(path: &std::path::Path) -> std::path::PathBuf {
    use std::time::{SystemTime, UNIX_EPOCH};
    let nonce = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}.{nonce}", std::process::id()));
    path.with_file_name(name)
}
