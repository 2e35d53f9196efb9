use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::model::{Optimizer, Stepper};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct RemapConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
}

impl Default for RemapConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam { lr: 0.01 },
            epochs: 2000,
        }
    }
}

/// `y = ((x − μ_x)/s_x · W1 + b1) · W2 + b2` rescaled to the output units.
///
/// The per-column standardisation is fixed from the training rows; `W1, b1,
/// W2, b2` are learned.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapper {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    in_mean: Array1<f64>,
    in_scale: Array1<f64>,
    out_mean: Array1<f64>,
    out_scale: Array1<f64>,
}

fn standardizer(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let scale = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, scale)
}

impl LinearMapper {
    fn hidden(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        xs.dot(&self.w1) + &self.b1
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let xs = (&x - &self.in_mean) / &self.in_scale;
        let ys = self.hidden(xs.view()).dot(&self.w2) + &self.b2;
        ys * &self.out_scale + &self.out_mean
    }

    /// The end-to-end affine map as `(M, c)` with `y = x M + c`.
    pub fn collapse(&self) -> (Array2<f64>, Array1<f64>) {
        let d_in = self.in_mean.len();
        let inv = Array2::from_diag(&self.in_scale.mapv(|s| 1.0 / s));
        let m = inv.dot(&self.w1).dot(&self.w2) * &self.out_scale;
        let zero = Array2::zeros((1, d_in));
        let c = self.apply(zero.view()).row(0).to_owned();
        (m, c)
    }
}

/// Fits the mapper by gradient descent on mean squared error.
pub fn fit_mapper(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    cfg: &RemapConfig,
    seed: u64,
) -> Result<LinearMapper> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "{} inputs vs {} targets",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(invalid(format!(
            "remapping needs at least 2 overlapping rows, got {}",
            x.nrows()
        )));
    }
    let (d_in, d_out) = (x.ncols(), y.ncols());
    let hidden = d_in.max(d_out);
    let mut rng = seed::rng(seed);
    let mut gauss = |r: usize, c: usize| {
        let s = 1.0 / (r as f64).sqrt();
        Array2::from_shape_fn((r, c), |_| s * rng.sample::<f64, _>(StandardNormal))
    };
    let (in_mean, in_scale) = standardizer(x);
    let (out_mean, out_scale) = standardizer(y);
    let mut m = LinearMapper {
        w1: gauss(d_in, hidden),
        b1: Array1::zeros(hidden),
        w2: gauss(hidden, d_out),
        b2: Array1::zeros(d_out),
        in_mean,
        in_scale,
        out_mean,
        out_scale,
    };
    let xs = (&x - &m.in_mean) / &m.in_scale;
    let ys = (&y - &m.out_mean) / &m.out_scale;
    let n = x.nrows() as f64;
    let mut opt = Stepper::new(
        cfg.optimizer,
        &[(d_in, hidden), (1, hidden), (hidden, d_out), (1, d_out)],
    );
    for _ in 0..cfg.epochs {
        let h = m.hidden(xs.view());
        let r = h.dot(&m.w2) + &m.b2 - &ys;
        let dy = r * (2.0 / n);
        let gw2 = h.t().dot(&dy);
        let gb2 = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dh = dy.dot(&m.w2.t());
        let gw1 = xs.t().dot(&dh);
        let gb1 = dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        opt.tick();
        opt.apply(0, m.w1.view_mut(), gw1.view());
        opt.apply(1, m.b1.view_mut().insert_axis(Axis(0)), gb1.view());
        opt.apply(2, m.w2.view_mut(), gw2.view());
        opt.apply(3, m.b2.view_mut().insert_axis(Axis(0)), gb2.view());
    }
    if m.w1.iter().chain(m.w2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("remapping diverged".into()));
    }
    Ok(m)
}

/// `1 − cos(a, b)`; a zero vector counts as orthogonal to everything.
pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - a.dot(&b) / (na * nb)
}

#[derive(Debug, Clone)]
pub struct RemapOutcome {
    pub mapper: LinearMapper,
    pub overlap: usize,
    /// Per test query: distance between account 1's row and account 2's remapped row.
    pub distances: Vec<f64>,
    pub mean_distance: f64,
}

/// Learns to carry account 2's responses into account 1's space.
///
/// `pool1`/`pool2` are row-aligned responses of both accounts to the same
/// queries; the first `floor(f · rows)` rows of a seeded permutation form the
/// overlap, so larger fractions see supersets. `test1`/`test2` are the
/// held-out queries answered through both accounts.
pub fn sybil_remap(
    pool1: ArrayView2<'_, f64>,
    pool2: ArrayView2<'_, f64>,
    test1: ArrayView2<'_, f64>,
    test2: ArrayView2<'_, f64>,
    overlap_fraction: f64,
    cfg: &RemapConfig,
    seed: u64,
) -> Result<RemapOutcome> {
    if !(overlap_fraction > 0.0 && overlap_fraction <= 1.0) {
        return Err(invalid(format!(
            "overlap fraction must lie in (0, 1], got {overlap_fraction}"
        )));
    }
    if pool1.dim() != pool2.dim() || test1.dim() != test2.dim() {
        return Err(Error::Dimension(
            "account responses are not row-aligned".into(),
        ));
    }
    let mut order: Vec<usize> = (0..pool1.nrows()).collect();
    order.shuffle(&mut seed::rng(seed::child_seed(seed, "overlap", 0)));
    let overlap = crate::graph::fraction_of(overlap_fraction, pool1.nrows());
    let rows = &order[..overlap];
    let mapper = fit_mapper(
        pool2.select(Axis(0), rows).view(),
        pool1.select(Axis(0), rows).view(),
        cfg,
        seed,
    )?;
    let mapped = mapper.apply(test2);
    let distances: Vec<f64> = test1
        .rows()
        .into_iter()
        .zip(mapped.rows())
        .map(|(a, b)| cosine_distance(a, b))
        .collect();
    if distances.is_empty() {
        return Err(invalid("no held-out test queries"));
    }
    let mean_distance = distances.iter().sum::<f64>() / distances.len() as f64;
    Ok(RemapOutcome {
        mapper,
        overlap,
        distances,
        mean_distance,
    })
}
