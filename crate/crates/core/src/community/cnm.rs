//! Clauset–Newman–Moore greedy agglomeration.

use std::collections::BTreeMap;

use super::renumber;
use crate::graph::Graph;

/// Repeatedly merges the adjacent community pair with the largest modularity
/// gain `ΔQ = 2(e_ij − a_i a_j)` until no pair gains. Ties go to the
/// lexicographically smallest pair.
pub fn cnm_greedy(g: &Graph) -> Vec<usize> {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return (0..n).collect();
    }
    let two_m = 2.0 * g.edge_count() as f64;
    // e[i][j]: fraction of edge ends joining communities i and j (one direction).
    let mut e: Vec<BTreeMap<usize, f64>> = (0..n)
        .map(|v| g.neighbors(v).iter().map(|&u| (u, 1.0 / two_m)).collect())
        .collect();
    let mut a: Vec<f64> = (0..n).map(|v| g.degree(v) as f64 / two_m).collect();
    let mut alive = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| alive[i]) {
            for (&j, &eij) in e[i].range(i + 1..) {
                let dq = 2.0 * (eij - a[i] * a[j]);
                if best.is_none_or(|(b, _, _)| dq > b) {
                    best = Some((dq, i, j));
                }
            }
        }
        let Some((dq, i, j)) = best else { break };
        if dq <= 0.0 {
            break;
        }
        // Merge j into i.
        let row_j = std::mem::take(&mut e[j]);
        for (k, w) in row_j {
            if k == i {
                continue;
            }
            *e[i].entry(k).or_insert(0.0) += w;
            let back = e[k].remove(&j).unwrap_or(0.0);
            *e[k].entry(i).or_insert(0.0) += back;
        }
        e[i].remove(&j);
        a[i] += a[j];
        a[j] = 0.0;
        alive[j] = false;
        for o in owner.iter_mut().filter(|o| **o == j) {
            *o = i;
        }
    }
    renumber(&owner).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::test_graphs::{best_partition_by_enumeration, bridged_cliques};
    use crate::community::{louvain, modularity};
    use crate::graph::{generate_sbm, SbmParams};
    use ndarray::Array2;

    #[test]
    fn recovers_bridged_cliques() {
        let (oracle, _) = best_partition_by_enumeration(&bridged_cliques(3));
        assert_eq!(cnm_greedy(&bridged_cliques(3)), oracle);
        for size in 3..=8 {
            let expected: Vec<usize> = (0..2 * size).map(|v| v / size).collect();
            assert_eq!(
                cnm_greedy(&bridged_cliques(size)),
                expected,
                "clique size {size}"
            );
        }
    }

    #[test]
    fn single_edge_merges() {
        let g = Graph::new(vec![(0, 1)], Array2::zeros((2, 1)), None, None).unwrap();
        assert_eq!(cnm_greedy(&g), vec![0, 0]);
    }

    #[test]
    fn close_to_louvain_on_sbm() {
        for seed in 0..4 {
            let g = generate_sbm(&SbmParams::new(300, 3, 0.06, 0.004, 1, 0.0), seed).unwrap();
            let qc = modularity(&g, &cnm_greedy(&g)).unwrap();
            let ql = modularity(&g, &louvain(&g, seed)).unwrap();
            assert!((qc - ql).abs() <= 0.1, "seed {seed}: cnm {qc} louvain {ql}");
        }
    }
}
