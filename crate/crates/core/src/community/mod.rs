//! Community detection on the target's training graph and the community
//! model the defense consults at serve time.

mod cnm;
mod kmeans;
mod louvain;
mod modularity;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::par::Exec;

pub use cnm::cnm_greedy;
pub use kmeans::{kmeans, nearest_centroid, wcss, KMeans, MAX_ITERATIONS};
pub use louvain::{louvain, louvain_observed};
pub use modularity::modularity;

pub const COMMUNITY_HEADER: &str = "#adage-communities v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    Louvain,
    Cnm,
}

impl FromStr for Detector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "louvain" => Ok(Detector::Louvain),
            "cnm" => Ok(Detector::Cnm),
            other => Err(invalid(format!("unknown community detector `{other}`"))),
        }
    }
}

impl Detector {
    pub fn detect(self, g: &Graph, seed: u64) -> Vec<usize> {
        match self {
            Detector::Louvain => louvain(g, seed),
            Detector::Cnm => cnm_greedy(g),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Detector::Louvain => "louvain",
            Detector::Cnm => "cnm",
        }
    }
}

/// Relabels communities `0..k` in order of first appearance.
pub(crate) fn renumber(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = assignment
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Mean embedding of every community. Fails if some index below the
/// maximum has no members.
pub fn centroids(assignment: &[usize], embeddings: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if assignment.len() != embeddings.nrows() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} embeddings",
            assignment.len(),
            embeddings.nrows()
        )));
    }
    let k = assignment.iter().max().map_or(0, |&c| c + 1);
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(invalid(format!("community {c} has no members")));
    }
    Ok(kmeans::means(embeddings, assignment, k))
}

/// Coerces a partition to exactly `k_target` non-empty communities.
///
/// Too many: merge the two communities whose centroids are closest. Too
/// few: split the largest with 2-means on its members' embeddings. The
/// `i`-th split uses seed `seed + i`.
pub fn enforce_k(
    g: &Graph,
    assignment: &[usize],
    embeddings: ArrayView2<'_, f64>,
    k_target: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = g.node_count();
    if assignment.len() != n || embeddings.nrows() != n {
        return Err(Error::Dimension(format!(
            "graph has {n} nodes, assignment {}, embeddings {}",
            assignment.len(),
            embeddings.nrows()
        )));
    }
    if k_target == 0 || k_target > n {
        return Err(invalid(format!(
            "cannot form {k_target} communities from {n} nodes"
        )));
    }
    let (mut current, mut k) = renumber(assignment);

    while k > k_target {
        let c = kmeans::means(embeddings, &current, k);
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..k {
            for b in a + 1..k {
                let d = kmeans::sq_dist(c.row(a), c.row(b));
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, keep, gone) = best;
        for x in current.iter_mut() {
            if *x == gone {
                *x = keep;
            } else if *x > gone {
                *x -= 1;
            }
        }
        k -= 1;
    }

    let mut splits = 0u64;
    while k < k_target {
        let mut sizes = vec![0usize; k];
        for &x in &current {
            sizes[x] += 1;
        }
        let largest = (0..k)
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .unwrap();
        let members: Vec<usize> = (0..n).filter(|&v| current[v] == largest).collect();
        let sub = embeddings.select(ndarray::Axis(0), &members);
        let fit = kmeans(sub.view(), 2, seed.wrapping_add(splits), Exec::Sequential)?;
        for (&v, &half) in members.iter().zip(&fit.assignment) {
            if half == 1 {
                current[v] = k;
            }
        }
        k += 1;
        splits += 1;
    }
    Ok(current)
}

/// Community assignment of the training graph plus centroids in embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityModel {
    assignment: Vec<usize>,
    centroids: Array2<f64>,
}

impl CommunityModel {
    pub fn new(assignment: Vec<usize>, embeddings: ArrayView2<'_, f64>) -> Result<Self> {
        let centroids = centroids(&assignment, embeddings)?;
        Ok(CommunityModel {
            assignment,
            centroids,
        })
    }

    /// Detect, coerce to `k_target`, and take centroids of `embeddings`.
    pub fn build(
        g: &Graph,
        embeddings: ArrayView2<'_, f64>,
        detector: Detector,
        k_target: usize,
        seed: u64,
    ) -> Result<Self> {
        let raw = detector.detect(g, seed);
        let fixed = enforce_k(g, &raw, embeddings, k_target, seed)?;
        Self::new(fixed, embeddings)
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{COMMUNITY_HEADER}").unwrap();
        writeln!(out, "K={}", self.k()).unwrap();
        for c in &self.assignment {
            writeln!(out, "{c}").unwrap();
        }
        for row in self.centroids.rows() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        match lines.first() {
            Some((_, h)) if *h == COMMUNITY_HEADER => {}
            _ => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected `{COMMUNITY_HEADER}`"),
                ))
            }
        }
        let (kline, kstr) = lines
            .get(1)
            .ok_or_else(|| Error::parse(path, 2, "missing K line"))?;
        let k: usize = kstr
            .strip_prefix("K=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, *kline, "expected `K=<int>`"))?;
        let body = &lines[2..];
        if body.len() < k {
            return Err(Error::parse(path, *kline, "fewer lines than centroids"));
        }
        let (assign_lines, centroid_lines) = body.split_at(body.len() - k);
        let assignment = assign_lines
            .iter()
            .map(|(line, l)| {
                l.parse::<usize>()
                    .map_err(|_| Error::parse(path, *line, format!("bad community index `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::new();
        let mut width = None;
        for (line, l) in centroid_lines {
            let row = l
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(path, *line, "bad centroid row"))?;
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(Error::parse(path, *line, "ragged centroid rows"));
            }
            data.extend(row);
        }
        let centroids = Array2::from_shape_vec((k, width.unwrap_or(0)), data)
            .map_err(|e| Error::parse(path, *kline, e.to_string()))?;
        if let Some((i, &c)) = assignment.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::parse(
                path,
                assign_lines[i].0,
                format!("index {c} >= K"),
            ));
        }
        Ok(CommunityModel {
            assignment,
            centroids,
        })
    }
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use ndarray::Array2;

    use super::modularity;
    use crate::graph::Graph;
    use crate::seed;
    use rand::Rng;

    /// Two `size`-cliques joined by a single edge.
    pub fn bridged_cliques(size: usize) -> Graph {
        let mut edges = Vec::new();
        for base in [0, size] {
            for i in 0..size {
                for j in i + 1..size {
                    edges.push((base + i, base + j));
                }
            }
        }
        edges.push((size - 1, size));
        Graph::new(edges, Array2::zeros((2 * size, 1)), None, None).unwrap()
    }

    pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = seed::rng(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Graph::new(edges, Array2::zeros((n, 1)), None, None).unwrap()
    }

    /// Exhaustive search over all set partitions (restricted growth strings).
    pub fn best_partition_by_enumeration(g: &Graph) -> (Vec<usize>, f64) {
        let n = g.node_count();
        let mut rgs = vec![0usize; n];
        let mut best = (rgs.clone(), f64::NEG_INFINITY);
        loop {
            let q = modularity(g, &rgs).unwrap();
            if q > best.1 + 1e-12 {
                best = (rgs.clone(), q);
            }
            // Next restricted growth string.
            let mut i = n - 1;
            loop {
                let max_prefix = rgs[..i].iter().max().copied().unwrap_or(0);
                if i > 0 && rgs[i] <= max_prefix {
                    rgs[i] += 1;
                    for r in rgs.iter_mut().skip(i + 1) {
                        *r = 0;
                    }
                    break;
                }
                if i == 0 {
                    return best;
                }
                i -= 1;
            }
        }
    }
}
