//! Louvain modularity maximization: greedy local moves, then coarsening,
//! repeated while any move helps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::renumber;
use crate::graph::Graph;
use crate::seed;

/// Weighted graph for one coarsening level. `adj` excludes self-loops.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    strength: Vec<f64>,
}

impl Level {
    fn from_graph(g: &Graph) -> Self {
        let n = g.node_count();
        let adj: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|v| g.neighbors(v).iter().map(|&u| (u, 1.0)).collect())
            .collect();
        let strength = adj.iter().map(|r| r.len() as f64).collect();
        Level {
            adj,
            self_loop: vec![0.0; n],
            strength,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn coarsen(&self, comm: &[usize], k: usize) -> Level {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loop = vec![0.0; k];
        let mut strength = vec![0.0; k];
        for v in 0..self.len() {
            let c = comm[v];
            self_loop[c] += self.self_loop[v];
            strength[c] += self.strength[v];
            for &(u, w) in &self.adj[v] {
                let cu = comm[u];
                if cu == c {
                    // Each internal edge is seen from both endpoints.
                    self_loop[c] += w / 2.0;
                } else {
                    *maps[c].entry(cu).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
            strength,
        }
    }
}

/// Runs local moves on one level. Returns whether any node moved.
fn local_moves(
    level: &Level,
    comm: &mut [usize],
    two_m: f64,
    order: &[usize],
    on_move: &mut dyn FnMut(&[usize]),
) -> bool {
    let mut total: Vec<f64> = level.strength.clone();
    let mut links = vec![0.0; level.len()];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &v in order {
            let own = comm[v];
            let k_v = level.strength[v];
            for &(u, w) in &level.adj[v] {
                let c = comm[u];
                if links[c] == 0.0 {
                    touched.push(c);
                }
                links[c] += w;
            }
            total[own] -= k_v;
            let gain = |c: usize, links: &[f64]| links[c] - total[c] * k_v / two_m;
            let stay = gain(own, &links);
            touched.sort_unstable();
            let mut best = own;
            let mut best_gain = stay;
            for &c in &touched {
                if c == own {
                    continue;
                }
                let gc = gain(c, &links);
                // Strictly better than staying; equal candidates keep the lower index.
                if gc > best_gain + 1e-12 * (1.0 + best_gain.abs())
                    && (best == own || gc > best_gain)
                {
                    best = c;
                    best_gain = gc;
                }
            }
            total[best] += k_v;
            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
            if best != own {
                comm[v] = best;
                moved = true;
                moved_any = true;
                on_move(comm);
            }
        }
        if !moved {
            return moved_any;
        }
    }
}

/// Louvain community detection. Node visit order is shuffled by `seed`;
/// the result is renumbered densely in order of first appearance.
pub fn louvain(g: &Graph, seed: u64) -> Vec<usize> {
    louvain_observed(g, seed, |_| {})
}

/// [`louvain`] with a callback receiving the flat node assignment after
/// every accepted move.
pub fn louvain_observed(g: &Graph, seed: u64, mut observe: impl FnMut(&[usize])) -> Vec<usize> {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return (0..n).collect();
    }
    let two_m = 2.0 * g.edge_count() as f64;
    let mut rng = seed::rng(seed);
    let mut level = Level::from_graph(g);
    // Which level-node each original node currently lives in.
    let mut super_of: Vec<usize> = (0..n).collect();
    loop {
        let mut comm: Vec<usize> = (0..level.len()).collect();
        let mut order: Vec<usize> = (0..level.len()).collect();
        order.shuffle(&mut rng);
        let mut flat = vec![0; n];
        let moved = local_moves(&level, &mut comm, two_m, &order, &mut |c| {
            for (f, &s) in flat.iter_mut().zip(&super_of) {
                *f = c[s];
            }
            observe(&flat);
        });
        if !moved {
            break;
        }
        let (dense, k) = renumber(&comm);
        level = level.coarsen(&dense, k);
        for s in super_of.iter_mut() {
            *s = dense[*s];
        }
        if k == 1 {
            break;
        }
    }
    renumber(&super_of).0
}
