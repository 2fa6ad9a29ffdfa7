//! Rating records as JSON lines.

use std::path::Path;

use rlgaf_core::eval::RatingRecord;

use crate::error::{Result, RunError};

pub fn parse_ratings(text: &str) -> Result<Vec<RatingRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| rlgaf_core::Error::Parse { line: i + 1, message: e.to_string() }.into())
        })
        .collect()
}

pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    parse_ratings(&text)
}

pub fn ratings_to_jsonl(records: &[RatingRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("rating serializes"));
        out.push('\n');
    }
    out
}

pub fn write_ratings(path: &Path, records: &[RatingRecord]) -> Result<()> {
    std::fs::write(path, ratings_to_jsonl(records)).map_err(|e| RunError::io(path, e))
}
