use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Linear 2-D projection `(e − mean) · P`, fitted once and then frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// `d × 2`, orthonormal columns.
    pub p: Array2<f64>,
    pub mean: Array1<f64>,
}

impl ProjectionHead {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

/// Top-2 principal axes of `e`. Each axis is signed so that its
/// largest-magnitude entry is positive.
pub fn fit_projection(e: ArrayView2<'_, f64>) -> Result<ProjectionHead> {
    let (rows, d) = e.dim();
    if rows < 3 {
        return Err(Error::InvalidArgument(format!(
            "projection needs 3 rows, got {rows}"
        )));
    }
    if d < 2 {
        return Err(Error::Dimension(
            "projection needs at least 2 columns".into(),
        ));
    }
    let mean = e.mean_axis(Axis(0)).expect("rows > 0");
    let centered = &e - &mean;
    let scatter = centered.t().dot(&centered);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| scatter[[i, j]]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]];
    let second = eig.eigenvalues[order[1]];
    if top.is_nan() || top <= 0.0 || second <= 1e-12 * top {
        return Err(Error::Numeric(format!(
            "centred embeddings have rank < 2 (leading eigenvalues {top:e}, {second:e})"
        )));
    }
    let mut p = Array2::zeros((d, 2));
    for (col, &k) in order[..2].iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut lead = 0;
        for i in 1..d {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            p[[i, col]] = sign * v[i];
        }
    }
    Ok(ProjectionHead { p, mean })
}

pub fn project(h: &ProjectionHead, e: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if e.ncols() != h.dim() {
        return Err(Error::Dimension(format!(
            "projection expects width {}, got {}",
            h.dim(),
            e.ncols()
        )));
    }
    Ok((&e - &h.mean).dot(&h.p))
}
