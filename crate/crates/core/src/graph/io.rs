//! Plain-text graph files.
//!
//! * edges: one `u v` pair per line, whitespace separated
//! * features: one comma-separated row per node
//! * labels: one class index per line
//!
//! Files written here start with a `#adage-graph v1` line; any line starting
//! with `#` is skipped when reading.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Graph;
use crate::error::{Error, Result};

pub const GRAPH_HEADER: &str = "#adage-graph v1";

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads an edge list, rejecting self-loops and duplicate undirected edges.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut it = l.split_whitespace();
        let mut id = |what: &str| -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| Error::parse(path, line, format!("missing {what} node id")))?;
            tok.parse()
                .map_err(|_| Error::parse(path, line, format!("malformed node id `{tok}`")))
        };
        let u = id("first")?;
        let v = id("second")?;
        if it.next().is_some() {
            return Err(Error::parse(path, line, "expected exactly two node ids"));
        }
        if u == v {
            return Err(Error::parse(path, line, format!("self-loop on node {u}")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate edge ({u}, {v})"),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, l) in content_lines(&text) {
        let before = data.len();
        for tok in l.split(',') {
            let tok = tok.trim();
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, line, format!("malformed value `{tok}`")))?;
            if !x.is_finite() {
                return Err(Error::parse(path, line, "non-finite feature value"));
            }
            data.push(x);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("row has {w} values, expected {expected}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data)
        .map_err(|e| Error::InvalidGraph(e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    content_lines(&text)
        .map(|(line, l)| {
            l.parse()
                .map_err(|_| Error::parse(path, line, format!("malformed class index `{l}`")))
        })
        .collect()
}

/// Loads and validates a graph. The node count comes from the feature file.
pub fn load_graph(edges: &Path, features: &Path, labels: Option<&Path>) -> Result<Graph> {
    let x = read_features(features)?;
    let n = x.nrows();
    let text = fs::read_to_string(edges)?;
    let list = read_edges(edges)?;
    // Re-walk the lines so range errors can name the offending line.
    for ((line, _), &(u, v)) in content_lines(&text).zip(&list) {
        if u >= n || v >= n {
            return Err(Error::parse(
                edges,
                line,
                format!("node id {} out of range for {n} feature rows", u.max(v)),
            ));
        }
    }
    let labels = labels.map(read_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} labels but {n} feature rows",
                l.len()
            )));
        }
    }
    Graph::new(list, x, labels, None)
}

pub fn save_graph(g: &Graph, edges: &Path, features: &Path, labels: Option<&Path>) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{GRAPH_HEADER}").unwrap();
    for &(u, v) in g.edges() {
        writeln!(out, "{u} {v}").unwrap();
    }
    fs::write(edges, &out)?;

    out.clear();
    writeln!(out, "{GRAPH_HEADER}").unwrap();
    for row in g.features().rows() {
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // `Display` for f64 is the shortest string that parses back exactly.
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    fs::write(features, &out)?;

    if let Some(path) = labels {
        let l = g.require_labels("saving labels")?;
        out.clear();
        writeln!(out, "{GRAPH_HEADER}").unwrap();
        for c in l {
            writeln!(out, "{c}").unwrap();
        }
        fs::write(path, &out)?;
    }
    Ok(())
}
