//! Full-batch training with hand-derived gradients.
//!
//! All trainers take propagated features `H = Â^k X` (rows already selected
//! for the nodes that carry a loss) so propagation happens once per graph.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{loss, softmax_rows, Classifier, EncoderParams, HeadParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::Exec;
use crate::seed;

/// Update rule. `Sgd` is plain gradient descent; `Adam` uses the usual
/// (0.9, 0.999, 1e-8) moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64 },
}

impl Optimizer {
    pub fn lr(self) -> f64 {
        match self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr } => lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub steps: usize,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            steps: 2,
            optimizer: Optimizer::Sgd { lr: 0.05 },
            epochs: 200,
            seed: 0,
        }
    }
}

/// Trained parameters plus the loss seen at the start of every epoch.
#[derive(Debug, Clone)]
pub struct Fitted<T> {
    pub params: T,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-parameter optimizer state.
pub(crate) struct Stepper {
    rule: Optimizer,
    moments: Vec<(Array2<f64>, Array2<f64>)>,
    t: i32,
}

impl Stepper {
    pub(crate) fn new(rule: Optimizer, shapes: &[(usize, usize)]) -> Self {
        Stepper {
            rule,
            moments: shapes
                .iter()
                .map(|&s| (Array2::zeros(s), Array2::zeros(s)))
                .collect(),
            t: 0,
        }
    }

    pub(crate) fn tick(&mut self) {
        self.t += 1;
    }

    pub(crate) fn apply(
        &mut self,
        slot: usize,
        mut param: ArrayViewMut2<'_, f64>,
        grad: ArrayView2<'_, f64>,
    ) {
        match self.rule {
            Optimizer::Sgd { lr } => param.scaled_add(-lr, &grad),
            Optimizer::Adam { lr } => {
                let (m, v) = &mut self.moments[slot];
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                Zip::from(&mut param)
                    .and(m)
                    .and(v)
                    .and(&grad)
                    .for_each(|p, m, v, &g| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    });
            }
        }
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut seed::Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        rng.sample::<f64, _>(StandardNormal) * scale
    })
}

/// Gaussian init scaled by `1/√fan_in`.
pub fn init_encoder(
    feature_dim: usize,
    dim: usize,
    steps: usize,
    rng: &mut seed::Rng,
) -> EncoderParams {
    EncoderParams {
        w1: gaussian(feature_dim, dim, 1.0 / (feature_dim as f64).sqrt(), rng),
        steps,
    }
}

pub fn init_head(dim: usize, classes: usize, rng: &mut seed::Rng) -> HeadParams {
    HeadParams {
        w2: gaussian(dim, classes, 1.0 / (dim as f64).sqrt(), rng),
        b2: Array1::zeros(classes),
    }
}

fn relu_mask(z: &Array2<f64>, upstream: &mut Array2<f64>) {
    Zip::from(upstream).and(z).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
}

fn finite_or_abort(what: &str, epoch: usize, loss: f64, params: &[&Array2<f64>]) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    let norms: Vec<String> = params
        .iter()
        .map(|p| format!("{:.3e}", p.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    Err(Error::Numeric(format!(
        "{what}: loss became {loss} at epoch {epoch} (parameter norms {})",
        norms.join(", ")
    )))
}

/// Cross-entropy of `softmax(relu(H W1) W2 + b2)` against `targets` and its gradients.
pub fn classifier_loss_grad(
    h: ArrayView2<'_, f64>,
    clf: &Classifier,
    targets: ArrayView2<'_, f64>,
) -> (f64, ClassifierGrads) {
    let n = h.nrows().max(1) as f64;
    let z = h.dot(&clf.encoder.w1);
    let e = z.mapv(|x| x.max(0.0));
    let p = softmax_rows(&(e.dot(&clf.head.w2) + &clf.head.b2));
    let loss = loss::cross_entropy(targets, p.view()).expect("shapes agree");
    let g = (&p - &targets) / n;
    let w2 = e.t().dot(&g);
    let b2 = g.sum_axis(Axis(0));
    let mut de = g.dot(&clf.head.w2.t());
    relu_mask(&z, &mut de);
    let w1 = h.t().dot(&de);
    (loss, ClassifierGrads { w1, w2, b2 })
}

/// Trains encoder and head together on soft or one-hot `targets`.
pub fn train_classifier(
    h: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    init: Classifier,
    optimizer: Optimizer,
    epochs: usize,
) -> Result<Fitted<Classifier>> {
    if h.nrows() != targets.nrows() {
        return Err(Error::Dimension(format!(
            "{} feature rows vs {} target rows",
            h.nrows(),
            targets.nrows()
        )));
    }
    let mut clf = init;
    let (d, c) = clf.head.w2.dim();
    let mut opt = Stepper::new(optimizer, &[clf.encoder.w1.dim(), (d, c), (1, c)]);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, g) = classifier_loss_grad(h, &clf, targets);
        finite_or_abort(
            "classifier training",
            epoch,
            loss,
            &[&clf.encoder.w1, &clf.head.w2],
        )?;
        losses.push(loss);
        opt.tick();
        opt.apply(0, clf.encoder.w1.view_mut(), g.w1.view());
        opt.apply(1, clf.head.w2.view_mut(), g.w2.view());
        let b2 = clf
            .head
            .b2
            .view_mut()
            .into_shape_with_order((1, c))
            .expect("row vector");
        opt.apply(
            2,
            b2,
            g.b2.view()
                .into_shape_with_order((1, c))
                .expect("row vector"),
        );
    }
    Ok(Fitted {
        params: clf,
        losses,
    })
}

/// Trains the target classifier on the labelled training graph.
pub fn train_target(train: &Graph, cfg: &TrainConfig) -> Result<Fitted<Classifier>> {
    let labels = train.require_labels("target training")?;
    let classes = train.class_count().unwrap_or(1);
    if cfg.dim < 2 {
        return Err(Error::InvalidArgument(
            "embedding dimension must be at least 2".into(),
        ));
    }
    let mut rng = seed::rng(cfg.seed);
    let encoder = init_encoder(train.feature_dim(), cfg.dim, cfg.steps, &mut rng);
    let head = init_head(cfg.dim, classes, &mut rng);
    let h = encoder.propagate(train, Exec::default())?;
    let targets = loss::one_hot(labels, classes);
    train_classifier(
        h.view(),
        targets.view(),
        Classifier { encoder, head },
        cfg.optimizer,
        cfg.epochs,
    )
}

/// Trains a softmax head on frozen embeddings.
pub fn fit_head(
    e: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    init: HeadParams,
    optimizer: Optimizer,
    epochs: usize,
) -> Result<Fitted<HeadParams>> {
    let n = e.nrows().max(1) as f64;
    let mut head = init;
    let c = head.classes();
    let mut opt = Stepper::new(optimizer, &[head.w2.dim(), (1, c)]);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let p = softmax_rows(&head.logits(e)?);
        let loss = loss::cross_entropy(targets, p.view())?;
        finite_or_abort("head training", epoch, loss, &[&head.w2])?;
        losses.push(loss);
        let g = (&p - &targets) / n;
        let gw = e.t().dot(&g);
        let gb = g.sum_axis(Axis(0));
        opt.tick();
        opt.apply(0, head.w2.view_mut(), gw.view());
        let b2 = head
            .b2
            .view_mut()
            .into_shape_with_order((1, c))
            .expect("row vector");
        opt.apply(
            1,
            b2,
            gb.view().into_shape_with_order((1, c)).expect("row vector"),
        );
    }
    Ok(Fitted {
        params: head,
        losses,
    })
}

/// RMSE between `relu(H W1)` and `target` with its gradient in `W1`.
pub fn encoder_rmse_grad(
    h: ArrayView2<'_, f64>,
    enc: &EncoderParams,
    target: ArrayView2<'_, f64>,
) -> (f64, Array2<f64>) {
    let z = h.dot(&enc.w1);
    let e = z.mapv(|x| x.max(0.0));
    let r = &e - &target;
    let count = r.len().max(1) as f64;
    let loss = (r.iter().map(|x| x * x).sum::<f64>() / count).sqrt();
    if loss == 0.0 {
        return (0.0, Array2::zeros(enc.w1.dim()));
    }
    let mut de = r / (count * loss);
    relu_mask(&z, &mut de);
    (loss, h.t().dot(&de))
}

/// Fits an encoder so that its embeddings match `target` in RMSE.
pub fn fit_encoder_rmse(
    h: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    init: EncoderParams,
    optimizer: Optimizer,
    epochs: usize,
) -> Result<Fitted<EncoderParams>> {
    if h.nrows() != target.nrows() || target.ncols() != init.dim() {
        return Err(Error::Dimension(format!(
            "features {:?}, targets {:?}, encoder width {}",
            h.dim(),
            target.dim(),
            init.dim()
        )));
    }
    let mut enc = init;
    let mut opt = Stepper::new(optimizer, &[enc.w1.dim()]);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, g) = encoder_rmse_grad(h, &enc, target);
        finite_or_abort("embedding regression", epoch, loss, &[&enc.w1])?;
        losses.push(loss);
        opt.tick();
        opt.apply(0, enc.w1.view_mut(), g.view());
    }
    Ok(Fitted {
        params: enc,
        losses,
    })
}

/// Encoder followed by a trainable affine map to the target's output width.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedEncoder {
    pub encoder: EncoderParams,
    pub map: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProjectedEncoder {
    pub fn output(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        self.encoder.embed(h).dot(&self.map) + &self.bias
    }
}

pub struct ProjectedGrads {
    pub w1: Array2<f64>,
    pub map: Array2<f64>,
    pub bias: Array1<f64>,
}

pub fn projected_rmse_grad(
    h: ArrayView2<'_, f64>,
    model: &ProjectedEncoder,
    target: ArrayView2<'_, f64>,
) -> (f64, ProjectedGrads) {
    let z = h.dot(&model.encoder.w1);
    let e = z.mapv(|x| x.max(0.0));
    let y = e.dot(&model.map) + &model.bias;
    let r = &y - &target;
    let count = r.len().max(1) as f64;
    let loss = (r.iter().map(|x| x * x).sum::<f64>() / count).sqrt();
    if loss == 0.0 {
        return (
            0.0,
            ProjectedGrads {
                w1: Array2::zeros(model.encoder.w1.dim()),
                map: Array2::zeros(model.map.dim()),
                bias: Array1::zeros(model.bias.len()),
            },
        );
    }
    let dy = r / (count * loss);
    let map = e.t().dot(&dy);
    let bias = dy.sum_axis(Axis(0));
    let mut de = dy.dot(&model.map.t());
    relu_mask(&z, &mut de);
    (
        loss,
        ProjectedGrads {
            w1: h.t().dot(&de),
            map,
            bias,
        },
    )
}

pub fn fit_projected_rmse(
    h: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    init: ProjectedEncoder,
    optimizer: Optimizer,
    epochs: usize,
) -> Result<Fitted<ProjectedEncoder>> {
    if h.nrows() != target.nrows() || target.ncols() != init.map.ncols() {
        return Err(Error::Dimension(format!(
            "features {:?}, targets {:?}, output width {}",
            h.dim(),
            target.dim(),
            init.map.ncols()
        )));
    }
    let mut model = init;
    let out = model.map.ncols();
    let mut opt = Stepper::new(
        optimizer,
        &[model.encoder.w1.dim(), model.map.dim(), (1, out)],
    );
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, g) = projected_rmse_grad(h, &model, target);
        finite_or_abort(
            "projection regression",
            epoch,
            loss,
            &[&model.encoder.w1, &model.map],
        )?;
        losses.push(loss);
        opt.tick();
        opt.apply(0, model.encoder.w1.view_mut(), g.w1.view());
        opt.apply(1, model.map.view_mut(), g.map.view());
        let b = model
            .bias
            .view_mut()
            .into_shape_with_order((1, out))
            .expect("row vector");
        opt.apply(
            2,
            b,
            g.bias
                .view()
                .into_shape_with_order((1, out))
                .expect("row vector"),
        );
    }
    Ok(Fitted {
        params: model,
        losses,
    })
}
