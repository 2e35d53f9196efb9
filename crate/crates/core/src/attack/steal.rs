use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::model::{
    encoder_rmse_grad, fit_encoder_rmse, fit_head, fit_projected_rmse, init_encoder, init_head,
    one_hot, train_classifier, Classifier, EncoderParams, Optimizer, ProjectedEncoder,
};
use crate::par::Exec;
use crate::seed;

/// Surrogate architecture and optimisation recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub dim: usize,
    pub steps: usize,
    /// Encoder fitting (setups B/C) and joint training (setup A).
    pub optimizer: Optimizer,
    pub epochs: usize,
    /// Head fitting on query labels over a frozen encoder (setups B/C).
    pub head_optimizer: Optimizer,
    pub head_epochs: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            steps: 2,
            optimizer: Optimizer::Adam { lr: 0.01 },
            epochs: 300,
            head_optimizer: Optimizer::Adam { lr: 0.01 },
            head_epochs: 300,
        }
    }
}

/// Trained surrogate with the loss curves of both phases.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub classifier: Classifier,
    /// Setup A: cross-entropy; B/C: RMSE to the returned rows.
    pub fit_losses: Vec<f64>,
    /// Head cross-entropy on query labels (empty for setup A).
    pub head_losses: Vec<f64>,
    /// Setup C only: the learned `d × 2` map onto the returned plane.
    pub projection: Option<ProjectedEncoder>,
}

fn check_rows(
    g: &Graph,
    queries: &[usize],
    responses: ArrayView2<'_, f64>,
    classes: usize,
) -> Result<()> {
    if queries.len() != responses.nrows() {
        return Err(Error::Dimension(format!(
            "{} queries but {} response rows",
            queries.len(),
            responses.nrows()
        )));
    }
    if let Some(&v) = queries.iter().find(|&&v| v >= g.node_count()) {
        return Err(invalid(format!("query node {v} outside the query graph")));
    }
    if queries.len() < classes {
        return Err(invalid(format!(
            "{} queries cannot cover {classes} classes",
            queries.len()
        )));
    }
    Ok(())
}

/// Propagated features of the queried rows. Propagation runs over the whole
/// query graph, which the attacker owns.
fn query_features(g: &Graph, queries: &[usize], steps: usize, exec: Exec) -> Array2<f64> {
    g.adjacency()
        .propagate(g.features().view(), steps, exec)
        .select(Axis(0), queries)
}

fn classes_of(g: &Graph) -> Result<usize> {
    g.class_count()
        .ok_or_else(|| invalid("query graph has no class count"))
}

/// Setup A: encoder and head trained jointly on cross-entropy to the returned
/// posterior rows.
pub fn steal_setup_a(
    g: &Graph,
    queries: &[usize],
    responses: ArrayView2<'_, f64>,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<Surrogate> {
    let classes = responses.ncols();
    check_rows(g, queries, responses, classes)?;
    let mut rng = seed::rng(seed);
    let encoder = init_encoder(g.feature_dim(), cfg.dim, cfg.steps, &mut rng);
    let head = init_head(cfg.dim, classes, &mut rng);
    let h = query_features(g, queries, cfg.steps, Exec::default());
    let fitted = train_classifier(
        h.view(),
        responses,
        Classifier { encoder, head },
        cfg.optimizer,
        cfg.epochs,
    )?;
    Ok(Surrogate {
        classifier: fitted.params,
        fit_losses: fitted.losses,
        head_losses: Vec::new(),
        projection: None,
    })
}

fn fit_label_head(
    g: &Graph,
    queries: &[usize],
    encoder: EncoderParams,
    h: &Array2<f64>,
    cfg: &SurrogateConfig,
    rng: &mut seed::Rng,
) -> Result<(Classifier, Vec<f64>)> {
    let labels = g.require_labels("surrogate head fitting")?;
    let classes = classes_of(g)?;
    let targets = one_hot(
        &queries.iter().map(|&v| labels[v]).collect::<Vec<_>>(),
        classes,
    );
    let e = encoder.embed(h.view());
    let head = init_head(encoder.dim(), classes, rng);
    let fitted = fit_head(
        e.view(),
        targets.view(),
        head,
        cfg.head_optimizer,
        cfg.head_epochs,
    )?;
    Ok((
        Classifier {
            encoder,
            head: fitted.params,
        },
        fitted.losses,
    ))
}

/// `argmin_w ‖H w − t‖² + ε‖w‖²` with `ε = 1e-8 · tr(HᵀH) / m`.
pub fn ridge_solve(h: ArrayView2<'_, f64>, t: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let m = h.ncols();
    let mut gram = h.t().dot(&h);
    let eps = 1e-8 * gram.diag().sum().max(f64::MIN_POSITIVE) / m.max(1) as f64;
    gram.diag_mut().mapv_inplace(|x| x + eps);
    let rhs = h.t().dot(&t);
    let a = DMatrix::from_fn(m, m, |i, j| gram[[i, j]]);
    let b = DVector::from_fn(m, |i, _| rhs[i]);
    let x = a
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge system is not positive definite".into()))?
        .solve(&b);
    Ok(Array1::from_shape_fn(m, |i| x[i]))
}

/// Closed-form start for a ReLU layer: each column is the ridge fit of the
/// rows where that returned unit is positive, since those rows expose the
/// pre-activation directly. Columns with no positive row keep `fallback`.
pub fn active_set_init(
    h: ArrayView2<'_, f64>,
    t: ArrayView2<'_, f64>,
    fallback: &Array2<f64>,
) -> Result<Array2<f64>> {
    let mut w = fallback.clone();
    for j in 0..t.ncols() {
        let rows: Vec<usize> = (0..t.nrows()).filter(|&i| t[[i, j]] > 0.0).collect();
        if rows.is_empty() {
            continue;
        }
        let col = ridge_solve(
            h.select(Axis(0), &rows).view(),
            t.column(j).select(Axis(0), &rows).view(),
        )?;
        w.column_mut(j).assign(&col);
    }
    Ok(w)
}

/// Setup B: encoder regressed onto the returned embeddings, then a head fitted
/// on the attacker's query labels with the encoder frozen.
///
/// The regression starts with one closed-form step from the random
/// initialisation (see [`active_set_init`]); `fit_losses[0]` is the loss at the
/// random initialisation.
pub fn steal_setup_b(
    g: &Graph,
    queries: &[usize],
    responses: ArrayView2<'_, f64>,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<Surrogate> {
    check_rows(g, queries, responses, classes_of(g)?)?;
    if responses.ncols() != cfg.dim {
        return Err(Error::Dimension(format!(
            "returned embeddings have width {}, surrogate {}",
            responses.ncols(),
            cfg.dim
        )));
    }
    let mut rng = seed::rng(seed);
    let h = query_features(g, queries, cfg.steps, Exec::default());
    let random = init_encoder(g.feature_dim(), cfg.dim, cfg.steps, &mut rng);
    let (start_loss, _) = encoder_rmse_grad(h.view(), &random, responses);
    let init = EncoderParams {
        w1: active_set_init(h.view(), responses, &random.w1)?,
        steps: cfg.steps,
    };
    let mut fitted = fit_encoder_rmse(h.view(), responses, init, cfg.optimizer, cfg.epochs)?;
    fitted.losses.insert(0, start_loss);
    let (classifier, head_losses) = fit_label_head(g, queries, fitted.params, &h, cfg, &mut rng)?;
    Ok(Surrogate {
        classifier,
        fit_losses: fitted.losses,
        head_losses,
        projection: None,
    })
}

/// Setup C: encoder plus trainable linear map regressed onto the returned
/// 2-D projections, then a head on the frozen encoder's embeddings.
pub fn steal_setup_c(
    g: &Graph,
    queries: &[usize],
    responses: ArrayView2<'_, f64>,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<Surrogate> {
    check_rows(g, queries, responses, classes_of(g)?)?;
    let out = responses.ncols();
    let mut rng = seed::rng(seed);
    let encoder = init_encoder(g.feature_dim(), cfg.dim, cfg.steps, &mut rng);
    let map = init_encoder(cfg.dim, out, 0, &mut rng).w1;
    let init = ProjectedEncoder {
        encoder,
        map,
        bias: Array1::zeros(out),
    };
    let h = query_features(g, queries, cfg.steps, Exec::default());
    let fitted = fit_projected_rmse(h.view(), responses, init, cfg.optimizer, cfg.epochs)?;
    let projected = fitted.params;
    let (classifier, head_losses) =
        fit_label_head(g, queries, projected.encoder.clone(), &h, cfg, &mut rng)?;
    Ok(Surrogate {
        classifier,
        fit_losses: fitted.losses,
        head_losses,
        projection: Some(projected),
    })
}
