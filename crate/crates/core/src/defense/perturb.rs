use ndarray::{Array1, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::model::argmax;
use crate::seed::Rng;

/// Swaps the top class with a uniformly chosen other class with probability `rho`.
///
/// Returns the output and the index swapped in, if a swap happened. The other
/// class is drawn from the `|C| − 1` non-top indices, so every fired swap
/// changes the argmax.
pub fn perturb_probabilities(
    p: ArrayView1<'_, f64>,
    rho: f64,
    rng: &mut Rng,
) -> (Array1<f64>, Option<usize>) {
    let mut out = p.to_owned();
    let classes = p.len();
    if classes < 2 {
        return (out, None);
    }
    if rng.random::<f64>() >= rho {
        return (out, None);
    }
    let top = argmax(p);
    let r = rng.random_range(0..classes - 1);
    let j = if r >= top { r + 1 } else { r };
    out.swap(top, j);
    (out, Some(j))
}

/// `e + N(0, σ² I)`, one independent draw per component.
pub fn perturb_embedding(e: ArrayView1<'_, f64>, sigma: f64, rng: &mut Rng) -> Array1<f64> {
    if sigma == 0.0 {
        return e.to_owned();
    }
    e.mapv(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
}
