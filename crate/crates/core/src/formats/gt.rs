//! Ground-truth text files, one query per line:
//! `query_id<TAB>relevant: id,id,...<TAB>junk: id,id,...`.
//! Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::eval::{GroundTruth, GtEntry};

fn ids(field: &str, key: &str, offset: u64) -> Result<Vec<String>> {
    let rest = field
        .strip_prefix(key)
        .ok_or_else(|| Error::parse(offset, format!("expected field '{key}'")))?;
    Ok(rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect())
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let mut gt = GroundTruth::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len() as u64;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                at,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let query = fields[0].trim();
        if query.is_empty() {
            return Err(Error::parse(at, "empty query id"));
        }
        let relevant = ids(fields[1].trim(), "relevant:", at)?;
        let junk = ids(fields[2].trim(), "junk:", at)?;
        let entry = GtEntry::new(relevant, junk).map_err(|e| Error::parse(at, e.to_string()))?;
        if gt.get(query).is_some() {
            return Err(Error::parse(at, format!("duplicate query '{query}'")));
        }
        gt.insert(query, entry);
    }
    Ok(gt)
}

pub fn format_ground_truth(gt: &GroundTruth) -> String {
    let mut out = String::new();
    for (q, e) in &gt.entries {
        let join = |s: &std::collections::BTreeSet<String>| {
            s.iter().map(String::as_str).collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!(
            "{q}\trelevant: {}\tjunk: {}\n",
            join(e.relevant()),
            join(e.junk())
        ));
    }
    out
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::parse(e.valid_up_to() as u64, "ground truth is not UTF-8"))?;
    parse_ground_truth(text)
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    write_atomic(path, format_ground_truth(gt).as_bytes())
}
