use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Floor inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

fn same_shape(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean over rows of `−Σ_c t_c log(p_c + 1e−12)`.
pub fn cross_entropy(targets: ArrayView2<'_, f64>, preds: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(targets, preds)?;
    if targets.nrows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = targets
        .iter()
        .zip(preds.iter())
        .map(|(&t, &p)| -t * (p + LOG_FLOOR).ln())
        .sum();
    Ok(total / targets.nrows() as f64)
}

/// Root of the mean squared difference over all entries.
pub fn rmse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &c) in labels.iter().enumerate() {
        out[[i, c]] = 1.0;
    }
    out
}
