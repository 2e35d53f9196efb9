use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::Graph;
use crate::error::{invalid, Result};
use crate::seed;

/// Planted-partition parameters. Block id doubles as the node label.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    pub n: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
}

impl SbmParams {
    pub fn new(
        n: usize,
        blocks: usize,
        p_in: f64,
        p_out: f64,
        feature_dim: usize,
        feature_shift: f64,
    ) -> Self {
        SbmParams {
            n,
            blocks,
            p_in,
            p_out,
            feature_dim,
            feature_shift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 2 {
            return Err(invalid("an SBM needs at least two blocks"));
        }
        if self.n < self.blocks {
            return Err(invalid(format!(
                "{} nodes cannot fill {} blocks",
                self.n, self.blocks
            )));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(invalid("edge probabilities must lie in [0, 1]"));
        }
        if self.p_in <= self.p_out {
            return Err(invalid(format!(
                "p_in ({}) must exceed p_out ({})",
                self.p_in, self.p_out
            )));
        }
        if self.feature_dim == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        Ok(())
    }

    /// Block of node `v`: contiguous blocks, the first `n % blocks` one node larger.
    pub fn block_of(&self, v: usize) -> usize {
        let base = self.n / self.blocks;
        let extra = self.n % self.blocks;
        let big = extra * (base + 1);
        if v < big {
            v / (base + 1)
        } else {
            extra + (v - big) / base
        }
    }
}

/// Samples a stochastic block model graph.
///
/// Features are standard Gaussian noise plus `feature_shift` on every
/// coordinate `j` with `j % blocks == block`.
pub fn generate_sbm(p: &SbmParams, seed: u64) -> Result<Graph> {
    p.validate()?;

    let mut rng = seed::rng(seed);
    let labels: Vec<usize> = (0..p.n).map(|v| p.block_of(v)).collect();
    let mut edges = Vec::new();
    for u in 0..p.n {
        for v in u + 1..p.n {
            let prob = if labels[u] == labels[v] {
                p.p_in
            } else {
                p.p_out
            };
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }
    let mut x = Array2::<f64>::zeros((p.n, p.feature_dim));
    for ((v, j), slot) in x.indexed_iter_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        *slot = noise
            + if j % p.blocks == labels[v] {
                p.feature_shift
            } else {
                0.0
            };
    }
    Graph::new(edges, x, Some(labels), Some(p.blocks))
}
