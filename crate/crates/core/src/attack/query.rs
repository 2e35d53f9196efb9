use ndarray::{Array1, Array2};

use crate::defense::{Defense, Setup};
use crate::error::{invalid, Result};
use crate::graph::Graph;

/// Running mean `m_k = m_{k−1} + (x − m_{k−1}) / k`; exact when every draw is equal.
fn accumulate(mean: &mut Array1<f64>, x: &Array1<f64>, k: usize) {
    let inv = 1.0 / k as f64;
    ndarray::Zip::from(mean)
        .and(x)
        .for_each(|m, &v| *m += (v - *m) * inv);
}

/// Queries each node `rep` times and returns the per-node mean response.
///
/// Posterior rows are renormalized when averaging drifts their sum from 1.
pub fn averaged_responses(
    defense: &Defense,
    account: &str,
    g: &Graph,
    nodes: &[usize],
    setup: Setup,
    rep: usize,
) -> Result<Array2<f64>> {
    if rep == 0 {
        return Err(invalid("REP must be at least 1"));
    }
    let mut rows = Vec::with_capacity(nodes.len());
    for &v in nodes {
        let mut mean = defense
            .respond(account, g, v, setup)?
            .response
            .into_values();
        for k in 2..=rep {
            let next = defense
                .respond(account, g, v, setup)?
                .response
                .into_values();
            accumulate(&mut mean, &next, k);
        }
        if rep > 1 && setup == Setup::A {
            let s = mean.sum();
            if (s - 1.0).abs() > 1e-12 && s > 0.0 {
                mean /= s;
            }
        }
        rows.push(mean);
    }
    stack(rows, width(defense, setup))
}

/// Routes query `i` through `accounts[i % accounts.len()]`.
pub fn sybil_responses(
    defense: &Defense,
    accounts: &[String],
    g: &Graph,
    nodes: &[usize],
    setup: Setup,
) -> Result<Array2<f64>> {
    if accounts.is_empty() {
        return Err(invalid("no accounts"));
    }
    let rows = nodes
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            Ok(defense
                .respond(&accounts[i % accounts.len()], g, v, setup)?
                .response
                .into_values())
        })
        .collect::<Result<Vec<_>>>()?;
    stack(rows, width(defense, setup))
}

fn width(defense: &Defense, setup: Setup) -> usize {
    match setup {
        Setup::A => defense.model().classifier.head.classes(),
        Setup::B => defense.model().classifier.encoder.dim(),
        Setup::C => 2,
    }
}

pub(crate) fn stack(rows: Vec<Array1<f64>>, width: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, width), flat).map_err(|e| crate::Error::Dimension(e.to_string()))
}
