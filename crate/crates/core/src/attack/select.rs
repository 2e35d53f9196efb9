use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use crate::community::{enforce_k, kmeans, Detector};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::par::Exec;
use crate::seed;

/// What the attacker knows about the defender's communities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnowledgeProfile {
    /// Perfect attacker: sees the defender's own community assignment.
    pub knows_train_graph: bool,
    pub knows_k: bool,
    pub knows_algorithm: bool,
}

impl KnowledgeProfile {
    pub const PA: Self = Self::new(true, true, true);
    pub const KA_AA: Self = Self::new(false, true, true);
    pub const KA_AB: Self = Self::new(false, true, false);
    pub const KA_BA: Self = Self::new(false, false, true);
    pub const KA_BB: Self = Self::new(false, false, false);
    pub const ALL: [Self; 5] = [Self::PA, Self::KA_AA, Self::KA_AB, Self::KA_BA, Self::KA_BB];

    pub const fn new(knows_train_graph: bool, knows_k: bool, knows_algorithm: bool) -> Self {
        Self {
            knows_train_graph,
            knows_k,
            knows_algorithm,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.knows_train_graph, self.knows_k, self.knows_algorithm) {
            (true, _, _) => "PA",
            (false, true, true) => "KA_aa",
            (false, true, false) => "KA_ab",
            (false, false, true) => "KA_ba",
            (false, false, false) => "KA_bb",
        }
    }
}

impl fmt::Display for KnowledgeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KnowledgeProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown knowledge profile `{s}`")))
    }
}

/// `floor(δ · n)`, rejecting an empty budget.
pub fn budget(delta: f64, n: usize) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid(format!(
            "query rate δ must lie in (0, 1], got {delta}"
        )));
    }
    let b = crate::graph::fraction_of(delta, n);
    if b == 0 {
        return Err(invalid(format!("δ = {delta} selects no node out of {n}")));
    }
    Ok(b)
}

/// Uniform sample of `floor(δ · n_Q)` distinct nodes.
pub fn select_random(g: &Graph, delta: f64, seed: u64) -> Result<Vec<usize>> {
    let b = budget(delta, g.node_count())?;
    let mut nodes: Vec<usize> = (0..g.node_count()).collect();
    nodes.shuffle(&mut seed::rng(seed));
    nodes.truncate(b);
    Ok(nodes)
}

/// `round(√n)`, the cluster count an attacker guesses without knowing `K`.
pub fn guessed_k(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

/// The attacker's community labelling of its own query graph.
///
/// A perfect attacker uses `defender_view` (the defender's nearest-community
/// labels of the query nodes). Otherwise communities are detected on the
/// query graph: with the defender's algorithm plus `enforce_k` on raw
/// features when the algorithm is known, k-means on raw features when not.
pub fn community_view(
    g: &Graph,
    profile: KnowledgeProfile,
    true_k: usize,
    true_alg: Detector,
    defender_view: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<usize>> {
    if profile.knows_train_graph {
        let view = defender_view
            .ok_or_else(|| invalid("perfect attacker needs the defender's assignment"))?;
        if view.len() != g.node_count() {
            return Err(Error::Dimension(format!(
                "assignment covers {} nodes, query graph has {}",
                view.len(),
                g.node_count()
            )));
        }
        return Ok(view.to_vec());
    }
    let n = g.node_count();
    if n == 0 {
        return Err(invalid("empty query graph"));
    }
    let k = if profile.knows_k {
        true_k
    } else {
        guessed_k(n)
    }
    .min(n);
    let x: ArrayView2<'_, f64> = g.features().view();
    if profile.knows_algorithm {
        let raw = true_alg.detect(g, seed);
        enforce_k(g, &raw, x, k, seed)
    } else {
        Ok(kmeans(x, k, seed, Exec::Sequential)?.assignment)
    }
}

/// Fills the budget community by community, largest community first.
/// Nodes within a community are taken in seeded random order.
pub fn fill_by_community(view: &[usize], budget: usize, seed: u64) -> Result<Vec<usize>> {
    if view.is_empty() {
        return Err(invalid("community view is empty"));
    }
    let k = view.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (v, &c) in view.iter().enumerate() {
        members[c].push(v);
    }
    let mut order: Vec<usize> = (0..k).filter(|&c| !members[c].is_empty()).collect();
    order.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(budget);
    for c in order {
        let mut nodes = std::mem::take(&mut members[c]);
        nodes.shuffle(&mut rng);
        let take = (budget - out.len()).min(nodes.len());
        out.extend_from_slice(&nodes[..take]);
        if out.len() == budget {
            break;
        }
    }
    Ok(out)
}

/// Queries concentrated in as few (attacker-perceived) communities as possible.
pub fn select_concentrated(
    g: &Graph,
    delta: f64,
    profile: KnowledgeProfile,
    true_k: usize,
    true_alg: Detector,
    defender_view: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<usize>> {
    let b = budget(delta, g.node_count())?;
    let view = community_view(g, profile, true_k, true_alg, defender_view, seed)?;
    fill_by_community(&view, b, seed::child_seed(seed, "fill", 0))
}
