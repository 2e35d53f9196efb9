use std::path::Path;

use crate::error::{Error, Result};

/// One `key=value` entry with its 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits flat `key=value` text. Blank lines and `#` comments are skipped;
/// repeated keys are an error.
pub(crate) fn parse(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(path, i + 1, format!("expected key=value, got `{line}`"))
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::parse(path, i + 1, "empty key"));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::parse(
                path,
                i + 1,
                format!("`{key}` already set on line {}", prev.line),
            ));
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

impl Entry {
    pub fn parsed<T: std::str::FromStr>(&self, path: &Path) -> Result<T> {
        self.value.parse().map_err(|_| {
            Error::parse(
                path,
                self.line,
                format!("bad value `{}` for `{}`", self.value, self.key),
            )
        })
    }

    pub fn flag(&self, path: &Path) -> Result<bool> {
        match self.value.as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(Error::parse(
                path,
                self.line,
                format!("`{}` expects a boolean", self.key),
            )),
        }
    }

    /// Comma-separated list; empty items are dropped.
    pub fn list<T: std::str::FromStr>(&self, path: &Path) -> Result<Vec<T>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    Error::parse(
                        path,
                        self.line,
                        format!("bad list item `{s}` for `{}`", self.key),
                    )
                })
            })
            .collect()
    }
}
