//! One JSON document per line.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::FormatError;

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|it| serde_json::to_string(it).expect("serializable") + "\n")
        .collect()
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_jsonl<T: DeserializeOwned>(s: &str) -> Result<Vec<T>, FormatError> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| FormatError { line: i + 1, reason: e.to_string() }))
        .collect()
}
