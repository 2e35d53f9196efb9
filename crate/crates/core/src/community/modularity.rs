use crate::error::{Error, Result};
use crate::graph::Graph;

/// Newman modularity `Σ_c (e_c/m − (d_c/2m)²)` of a hard partition.
pub fn modularity(g: &Graph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != g.node_count() {
        return Err(Error::Dimension(format!(
            "assignment covers {} of {} nodes",
            assignment.len(),
            g.node_count()
        )));
    }
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::NoEdges);
    }
    let k = assignment.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for &(u, v) in g.edges() {
        if assignment[u] == assignment[v] {
            internal[assignment[u]] += 1;
        }
    }
    for (v, &c) in assignment.iter().enumerate() {
        degree[c] += g.degree(v);
    }
    let m = m as f64;
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| e as f64 / m - (d as f64 / (2.0 * m)).powi(2))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::test_graphs::{bridged_cliques, random_graph};
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn whole_graph_is_zero() {
        let g = bridged_cliques(3);
        assert!(modularity(&g, &[0; 6]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_triangles_with_bridge() {
        let g = bridged_cliques(3);
        let q = modularity(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
        // m = 7, each side has 3 internal edges and degree sum 7.
        let expected = 2.0 * (3.0 / 7.0 - (7.0_f64 / 14.0).powi(2));
        assert!((q - expected).abs() < 1e-15);
        assert!((q - 0.357142857).abs() < 1e-9);
    }

    #[test]
    fn edgeless_is_undefined() {
        let g = Graph::new(vec![], Array2::zeros((3, 1)), None, None).unwrap();
        assert!(matches!(modularity(&g, &[0, 1, 2]), Err(Error::NoEdges)));
    }

    #[test]
    fn bounded_on_random_partitions() {
        let mut rng = crate::seed::rng(11);
        for trial in 0..300 {
            let n = rng.random_range(2..40);
            let g = random_graph(n, rng.random_range(0.05..0.9), trial);
            if g.edge_count() == 0 {
                continue;
            }
            let k = rng.random_range(1..=n);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let q = modularity(&g, &a).unwrap();
            assert!((-0.5..=1.0).contains(&q), "Q = {q}");
        }
    }
}
