use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Parse a domain-label map: CSV lines `<id>,<domain>[,...]`. Extra columns
/// are ignored so truth CSVs with trailing metadata can be passed directly.
/// `#` starts a comment line. Conflicting duplicate ids are rejected.
pub fn parse_domain_map(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let id = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(lineno, "missing id column"))?;
        let domain = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(lineno, "missing domain column"))?;
        if let Some(previous) = map.insert(id.to_string(), domain.to_string()) {
            if previous != domain {
                return Err(Error::validation(format!(
                    "line {lineno}: id {id:?} mapped to both {previous:?} and {domain:?}"
                )));
            }
        }
    }
    Ok(map)
}

pub fn write_domain_map(map: &BTreeMap<String, String>) -> String {
    let mut out = String::from("# id,domain\n");
    for (id, domain) in map {
        writeln!(out, "{id},{domain}").expect("string write");
    }
    out
}
