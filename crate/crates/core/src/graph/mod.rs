//! Undirected attributed graphs and the operations that build them.

mod adjacency;
mod io;
mod sbm;
mod split;

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub use adjacency::{normalized_adjacency, NormAdj};
pub use io::{load_graph, read_edges, read_features, read_labels, save_graph};
pub use sbm::{generate_sbm, SbmParams};
pub(crate) use split::fraction_of;
pub use split::{split, Split, SplitSpec, Subgraph};

/// Undirected, unweighted graph with a dense feature matrix and optional labels.
///
/// Edges are stored once with `u < v`. Self-loops and duplicates are rejected
/// at construction.
#[derive(Debug)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    class_count: Option<usize>,
    neighbors: Vec<Vec<usize>>,
    adjacency: OnceLock<NormAdj>,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        Graph {
            edges: self.edges.clone(),
            features: self.features.clone(),
            labels: self.labels.clone(),
            class_count: self.class_count,
            neighbors: self.neighbors.clone(),
            adjacency: OnceLock::new(),
        }
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges
            && self.features == other.features
            && self.labels == other.labels
            && self.class_count == other.class_count
    }
}

impl Graph {
    /// Builds and validates a graph. The node count is the feature row count.
    pub fn new(
        edges: Vec<(usize, usize)>,
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
        class_count: Option<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut canonical = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); n];
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {i} ({u}, {v}) references a node id >= {n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!(
                    "edge {i} is a self-loop on {u}"
                )));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            canonical.push((a, b));
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for (v, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    v.min(w[0]),
                    v.max(w[0])
                )));
            }
        }

        let class_count = match (&labels, class_count) {
            (Some(l), cc) => {
                if l.len() != n {
                    return Err(Error::InvalidGraph(format!(
                        "{} labels for {n} nodes",
                        l.len()
                    )));
                }
                let needed = l.iter().max().map_or(0, |&m| m + 1);
                let cc = cc.unwrap_or(needed);
                if needed > cc {
                    return Err(Error::InvalidGraph(format!(
                        "label {} not below class count {cc}",
                        needed - 1
                    )));
                }
                Some(cc)
            }
            (None, cc) => cc,
        };
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGraph("non-finite feature value".into()));
        }

        Ok(Graph {
            edges: canonical,
            features,
            labels,
            class_count,
            neighbors,
            adjacency: OnceLock::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> ArrayView1<'_, f64> {
        self.features.row(v)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or an error naming the operation that needed them.
    pub fn require_labels(&self, what: &str) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidGraph(format!("{what} needs node labels")))
    }

    pub fn class_count(&self) -> Option<usize> {
        self.class_count
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    /// Symmetric normalized adjacency with self-loops, computed once.
    pub fn adjacency(&self) -> &NormAdj {
        self.adjacency.get_or_init(|| normalized_adjacency(self))
    }

    /// Subgraph induced on `nodes` (in the given order); edges leaving the set are dropped.
    pub fn induced(&self, nodes: &[usize]) -> Result<Graph> {
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            if v >= self.node_count() {
                return Err(Error::InvalidArgument(format!("node {v} out of range")));
            }
            if local[v] != usize::MAX {
                return Err(Error::InvalidArgument(format!("node {v} listed twice")));
            }
            local[v] = i;
        }
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|&&(u, v)| local[u] != usize::MAX && local[v] != usize::MAX)
            .map(|&(u, v)| (local[u], local[v]))
            .collect();
        edges.sort_unstable_by_key(|&(u, v)| (u.min(v), u.max(v)));
        let features = self.features.select(Axis(0), nodes);
        let labels = self
            .labels
            .as_ref()
            .map(|l| nodes.iter().map(|&v| l[v]).collect());
        Graph::new(edges, features, labels, self.class_count)
    }
}
