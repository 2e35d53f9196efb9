//! Feature-propagation encoder, softmax head, and frozen 2-D projection.
//!
//! The encoder is `relu(Â^k X W1)`: `k` rounds of normalized neighborhood
//! averaging followed by one linear layer. Since propagation has no
//! parameters, training works on the precomputed `Â^k X`.

mod loss;
mod persist;
mod projection;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::Exec;

pub use loss::{cross_entropy, one_hot, rmse};
pub use persist::{load_model, save_model, MODEL_HEADER};
pub use projection::{fit_projection, project, ProjectionHead};
pub(crate) use train::Stepper;
pub use train::{
    classifier_loss_grad, encoder_rmse_grad, fit_encoder_rmse, fit_head, fit_projected_rmse,
    init_encoder, init_head, projected_rmse_grad, train_classifier, train_target, ClassifierGrads,
    Fitted, Optimizer, ProjectedEncoder, ProjectedGrads, TrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `m × d` weights applied after propagation.
    pub w1: Array2<f64>,
    /// Propagation rounds `k`.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `d × |C|`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Encoder plus classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub encoder: EncoderParams,
    pub head: HeadParams,
}

/// Everything the serving side needs: classifier and projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub classifier: Classifier,
    pub projection: ProjectionHead,
}

pub(crate) fn relu_in_place(z: &mut Array2<f64>) {
    z.mapv_inplace(|x| x.max(0.0));
}

impl EncoderParams {
    pub fn feature_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    fn check(&self, m: usize) -> Result<()> {
        if m != self.feature_dim() {
            return Err(Error::Dimension(format!(
                "encoder expects {} features, graph has {m}",
                self.feature_dim()
            )));
        }
        Ok(())
    }

    /// `Â^k X` for every node of `g`.
    pub fn propagate(&self, g: &Graph, exec: Exec) -> Result<Array2<f64>> {
        self.check(g.feature_dim())?;
        Ok(g.adjacency()
            .propagate(g.features().view(), self.steps, exec))
    }

    /// `relu(H W1)` for already propagated features `H`.
    pub fn embed(&self, propagated: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = propagated.dot(&self.w1);
        relu_in_place(&mut z);
        z
    }

    pub fn encode(&self, g: &Graph, exec: Exec) -> Result<Array2<f64>> {
        Ok(self.embed(self.propagate(g, exec)?.view()))
    }

    /// Embedding of one node, computed from its `k`-hop ball only.
    pub fn encode_node(&self, g: &Graph, v: usize) -> Result<Array1<f64>> {
        self.check(g.feature_dim())?;
        if v >= g.node_count() {
            return Err(Error::InvalidArgument(format!(
                "node {v} out of range for {} nodes",
                g.node_count()
            )));
        }
        let h = g
            .adjacency()
            .propagate_row(g.features().view(), v, self.steps);
        Ok(h.dot(&self.w1).mapv_into(|x| x.max(0.0)))
    }
}

/// `E = relu(Â^k X W1)`.
pub fn encode(params: &EncoderParams, g: &Graph) -> Result<Array2<f64>> {
    params.encode(g, Exec::default())
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out = logits.mapv(|x| (x - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let s = softmax(row.view());
        row.assign(&s);
    }
    out
}

impl HeadParams {
    pub fn dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    pub fn logits(&self, e: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if e.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "head expects width {}, got {}",
                self.dim(),
                e.ncols()
            )));
        }
        Ok(e.dot(&self.w2) + &self.b2)
    }

    pub fn probabilities_row(&self, e: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if e.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "head expects width {}, got {}",
                self.dim(),
                e.len()
            )));
        }
        Ok(softmax((e.dot(&self.w2) + &self.b2).view()))
    }
}

/// Row-wise `softmax(E W2 + b2)`.
pub fn classify(head: &HeadParams, e: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(softmax_rows(&head.logits(e)?))
}

/// Row argmax, lowest index on ties.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0)).map(argmax).collect()
}

impl Classifier {
    pub fn probabilities(&self, g: &Graph, exec: Exec) -> Result<Array2<f64>> {
        let e = self.encoder.encode(g, exec)?;
        classify(&self.head, e.view())
    }

    pub fn predict(&self, g: &Graph, exec: Exec) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.probabilities(g, exec)?))
    }
}
