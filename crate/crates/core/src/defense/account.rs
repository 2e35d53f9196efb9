use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};

pub const ACCOUNT_HEADER: &str = "#adage-account v1";

/// Per-account diversity record: the set `I` of communities touched so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountState {
    occupied: BTreeSet<usize>,
    query_count: u64,
    transform_seed: u64,
}

impl AccountState {
    pub fn new(transform_seed: u64) -> Self {
        Self {
            occupied: BTreeSet::new(),
            query_count: 0,
            transform_seed,
        }
    }

    pub fn occupied(&self) -> &BTreeSet<usize> {
        &self.occupied
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn transform_seed(&self) -> u64 {
        self.transform_seed
    }

    /// `τ = |I| / K`.
    pub fn tau(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.occupied.len() as f64 / k as f64
    }

    /// Adds `idx` to `I`, counts the query, and returns the new `τ`.
    pub fn record_query(&mut self, idx: usize, k: usize) -> Result<f64> {
        if idx >= k {
            return Err(invalid(format!("community {idx} out of range for K = {k}")));
        }
        self.occupied.insert(idx);
        self.query_count += 1;
        Ok(self.tau(k))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{ACCOUNT_HEADER}\n{}\n", self.transform_seed);
        for i in &self.occupied {
            out.push_str(&format!("{i}\n"));
        }
        out
    }

    /// Parses the persisted form. The query count is not stored and restarts at
    /// the number of occupied communities.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, ACCOUNT_HEADER)) => {}
            _ => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected `{ACCOUNT_HEADER}`"),
                ))
            }
        }
        let (n, seed_line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 2, "missing transform seed"))?;
        let transform_seed = seed_line
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad transform seed `{seed_line}`")))?;
        let mut occupied = BTreeSet::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let idx = line
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad community index `{line}`")))?;
            occupied.insert(idx);
        }
        Ok(Self {
            query_count: occupied.len() as u64,
            occupied,
            transform_seed,
        })
    }

    pub fn save(&self, dir: &Path, id: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = state_path(dir, id)?;
        fs::write(&path, self.to_text())?;
        Ok(path)
    }

    pub fn load(dir: &Path, id: &str) -> Result<Self> {
        let path = state_path(dir, id)?;
        let text = fs::read_to_string(&path)?;
        Self::from_text(&text, &path)
    }
}

fn state_path(dir: &Path, id: &str) -> Result<PathBuf> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if !ok {
        return Err(invalid(format!(
            "account id `{id}` is not a safe file name"
        )));
    }
    Ok(dir.join(format!("{id}.state")))
}
