use ndarray::{Array1, Array2, ArrayView2};

use super::Graph;
use crate::par::Exec;

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` in CSR form, `D̂` the degree matrix of `A + I`.
#[derive(Debug, Clone)]
pub struct NormAdj {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    loop_degree: Vec<usize>,
}

pub fn normalized_adjacency(g: &Graph) -> NormAdj {
    let n = g.node_count();
    let loop_degree: Vec<usize> = (0..n).map(|v| g.degree(v) + 1).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * g.edge_count() + n);
    let mut values = Vec::with_capacity(2 * g.edge_count() + n);
    row_ptr.push(0);
    for v in 0..n {
        let nbrs = g.neighbors(v);
        let split = nbrs.partition_point(|&u| u < v);
        let row = nbrs[..split]
            .iter()
            .copied()
            .chain(std::iter::once(v))
            .chain(nbrs[split..].iter().copied());
        for u in row {
            cols.push(u);
            // Product order is irrelevant: multiplication commutes exactly.
            values.push(1.0 / ((loop_degree[v] * loop_degree[u]) as f64).sqrt());
        }
        row_ptr.push(cols.len());
    }
    NormAdj {
        row_ptr,
        cols,
        values,
        loop_degree,
    }
}

impl NormAdj {
    pub fn node_count(&self) -> usize {
        self.loop_degree.len()
    }

    /// Degree of `v` in `A + I`.
    pub fn loop_degree(&self, v: usize) -> usize {
        self.loop_degree[v]
    }

    /// Non-zeros of row `v` as `(column, value)` pairs, columns ascending.
    pub fn row(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[v]..self.row_ptr[v + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.node_count();
        let mut out = Array2::zeros((n, n));
        for v in 0..n {
            for (u, w) in self.row(v) {
                out[[v, u]] = w;
            }
        }
        out
    }

    /// `Â · x`.
    pub fn multiply(&self, x: ArrayView2<'_, f64>, exec: Exec) -> Array2<f64> {
        assert_eq!(
            x.nrows(),
            self.node_count(),
            "row count must match node count"
        );
        let cols = x.ncols();
        let mut out = vec![0.0; self.node_count() * cols];
        if cols == 0 {
            return Array2::zeros((self.node_count(), 0));
        }
        exec.for_each_chunk(&mut out, cols, |v, dst| {
            for (u, w) in self.row(v) {
                for (d, s) in dst.iter_mut().zip(x.row(u).iter()) {
                    *d += w * s;
                }
            }
        });
        Array2::from_shape_vec((self.node_count(), cols), out).expect("shape is consistent")
    }

    /// `Â^steps · x`.
    pub fn propagate(&self, x: ArrayView2<'_, f64>, steps: usize, exec: Exec) -> Array2<f64> {
        let mut cur = x.to_owned();
        for _ in 0..steps {
            cur = self.multiply(cur.view(), exec);
        }
        cur
    }

    /// Row `v` of `Â^steps` as sorted `(node, weight)` pairs. Only the
    /// `steps`-hop ball around `v` can be non-zero.
    pub fn power_row(&self, v: usize, steps: usize) -> Vec<(usize, f64)> {
        let mut cur = vec![(v, 1.0)];
        let mut acc = vec![0.0; self.node_count()];
        let mut seen = vec![false; self.node_count()];
        let mut touched = Vec::new();
        for _ in 0..steps {
            for &(u, cu) in &cur {
                // Â is symmetric, so row u doubles as column u.
                for (w, a) in self.row(u) {
                    if !seen[w] {
                        seen[w] = true;
                        touched.push(w);
                    }
                    acc[w] += cu * a;
                }
            }
            touched.sort_unstable();
            cur.clear();
            for &w in &touched {
                cur.push((w, acc[w]));
                acc[w] = 0.0;
                seen[w] = false;
            }
            touched.clear();
        }
        cur
    }

    /// Row `v` of `Â^steps · x` without touching the rest of the graph.
    pub fn propagate_row(&self, x: ArrayView2<'_, f64>, v: usize, steps: usize) -> Array1<f64> {
        let mut out = Array1::zeros(x.ncols());
        for (u, w) in self.power_row(v, steps) {
            out.scaled_add(w, &x.row(u));
        }
        out
    }
}
