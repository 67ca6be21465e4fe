//! Flat `key = value` files. `#` starts a comment; keys are
//! case-insensitive and `-` and `_` are interchangeable, so every CLI flag
//! name is also a valid key.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// `--learning-rate` → `learning_rate`.
pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

/// Parses `text`; `path` only labels errors. A repeated key is an error.
pub fn parse(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, format!("expected key = value, got '{line}'")))?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::parse(path, i + 1, "empty key"));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::parse(path, i + 1, format!("'{key}' already set on line {}", prev.line)));
        }
        out.push(Entry { key, value: value.trim().to_string(), line: i + 1 });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}
