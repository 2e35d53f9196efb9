use rand::seq::SliceRandom;

use super::Graph;
use crate::error::{invalid, Result};
use crate::seed;

/// Node fractions for the inductive train / query / test partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub query_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train_frac) || !ok(self.query_frac) || self.train_frac + self.query_frac >= 1.0
        {
            return Err(invalid(format!(
                "split fractions ({}, {}) must be in (0,1) with sum < 1",
                self.train_frac, self.query_frac
            )));
        }
        Ok(())
    }
}

/// An induced subgraph together with the parent ids of its nodes.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: Graph,
    pub parent_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Subgraph,
    pub query: Subgraph,
    pub test: Subgraph,
}

/// `floor(frac * n)`, tolerant of products like `0.29 * 100 = 28.999…`.
pub(crate) fn fraction_of(frac: f64, n: usize) -> usize {
    (frac * n as f64 + 1e-9).floor() as usize
}

/// Seeded three-way node partition; each part is the induced subgraph on its nodes.
pub fn split(g: &Graph, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = g.node_count();
    let n_train = fraction_of(spec.train_frac, n);
    let n_query = fraction_of(spec.query_frac, n);
    if n_train == 0 || n_query == 0 || n_train + n_query >= n {
        return Err(invalid(format!(
            "split of {n} nodes into ({n_train}, {n_query}, {}) leaves a part empty",
            n.saturating_sub(n_train + n_query)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(spec.seed));
    let part = |ids: &[usize]| -> Result<Subgraph> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        Ok(Subgraph {
            graph: g.induced(&ids)?,
            parent_ids: ids,
        })
    };
    Ok(Split {
        train: part(&order[..n_train])?,
        query: part(&order[n_train..n_train + n_query])?,
        test: part(&order[n_train + n_query..])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};
    use proptest::prelude::*;

    fn spec(seed: u64) -> SplitSpec {
        SplitSpec {
            train_frac: 0.2,
            query_frac: 0.3,
            seed,
        }
    }

    #[test]
    fn sizes_for_ten_nodes() {
        let g = generate_sbm(&SbmParams::new(10, 2, 0.6, 0.1, 2, 1.0), 3).unwrap();
        let s = split(&g, &spec(1)).unwrap();
        assert_eq!(
            (
                s.train.graph.node_count(),
                s.query.graph.node_count(),
                s.test.graph.node_count()
            ),
            (2, 3, 5)
        );
        let again = split(&g, &spec(1)).unwrap();
        assert_eq!(s.train.parent_ids, again.train.parent_ids);
        assert_eq!(s.query.parent_ids, again.query.parent_ids);
    }

    #[test]
    fn rejects_empty_parts() {
        let g = generate_sbm(&SbmParams::new(4, 2, 0.6, 0.1, 2, 1.0), 3).unwrap();
        assert!(split(&g, &spec(0)).is_err());
        let bad = SplitSpec {
            train_frac: 0.6,
            query_frac: 0.4,
            seed: 0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cross_partition_edges_are_dropped() {
        let g = generate_sbm(&SbmParams::new(60, 2, 0.5, 0.1, 2, 1.0), 8).unwrap();
        let s = split(&g, &spec(2)).unwrap();
        let kept: usize = [&s.train, &s.query, &s.test]
            .iter()
            .map(|p| p.graph.edge_count())
            .sum();
        let mut part = vec![0; 60];
        for (k, p) in [&s.train, &s.query, &s.test].iter().enumerate() {
            for &v in &p.parent_ids {
                part[v] = k;
            }
        }
        let internal = g
            .edges()
            .iter()
            .filter(|&&(u, v)| part[u] == part[v])
            .count();
        assert_eq!(kept, internal);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(n in 3usize..200, seed in 0u64..10_000) {
            let g = Graph::new(vec![], ndarray::Array2::zeros((n, 1)), None, None).unwrap();
            let spec = SplitSpec { train_frac: 0.34, query_frac: 0.33, seed };
            match split(&g, &spec) {
                Ok(s) => {
                    let mut all: Vec<usize> = s.train.parent_ids.iter()
                        .chain(&s.query.parent_ids)
                        .chain(&s.test.parent_ids)
                        .copied()
                        .collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                    prop_assert_eq!(s.train.parent_ids.len(), fraction_of(0.34, n));
                }
                Err(_) => prop_assert!(fraction_of(0.34, n) == 0 || fraction_of(0.33, n) == 0),
            }
        }
    }
}
