use ndarray::Array2;
use rand::seq::SliceRandom;

use super::config::{ExperimentConfig, GraphSource};
use crate::community::CommunityModel;
use crate::defense::{
    nearest_community, AccountTransform, Defense, DefenseConfig, DefenseMode, Response, Setup,
};
use crate::error::{invalid, Result};
use crate::graph::{generate_sbm, load_graph, split, Graph, Split};
use crate::model::{
    argmax, fit_head, fit_projection, init_head, one_hot, project, train_target, EncoderParams,
    HeadParams, Optimizer, TargetModel, TrainConfig,
};
use crate::par::Exec;
use crate::seed::{self, child_seed};

/// Communities need this many test members to be eligible for the
/// per-community downstream columns.
pub const MIN_DOWNSTREAM_MEMBERS: usize = 5;

const PROJECTION_HEAD_EPOCHS: usize = 300;
const PROJECTION_HEAD_LR: f64 = 0.05;

pub fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

pub fn stage_seed(cfg: &ExperimentConfig, stage: &str, trial: usize) -> u64 {
    child_seed(cfg.seed, stage, trial as u64)
}

/// The experiment graph: generated from the master seed or read from files.
pub fn experiment_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    match &cfg.graph {
        GraphSource::Sbm(p) => generate_sbm(p, child_seed(cfg.seed, "graph", 0)),
        GraphSource::Files {
            edges,
            features,
            labels,
        } => load_graph(edges, features, labels.as_deref()),
    }
}

/// Rows of `E` computed the way the serving path computes them (one node at a time).
pub fn serving_embeddings(encoder: &EncoderParams, g: &Graph) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((g.node_count(), encoder.dim()));
    for v in 0..g.node_count() {
        out.row_mut(v).assign(&encoder.encode_node(g, v)?);
    }
    Ok(out)
}

/// Everything built once per trial and shared by all attack cells.
pub struct TrialContext {
    pub index: usize,
    pub seed: u64,
    pub split: Split,
    pub target: TargetModel,
    pub communities: CommunityModel,
    /// Defender's community of each query-graph node.
    pub query_view: Vec<usize>,
    /// Defender's community of each test node.
    pub test_membership: Vec<usize>,
    /// Communities used for the downstream columns.
    pub downstream: Vec<usize>,
    /// Head a benign user fits on 2-D projections of the training graph.
    pub projection_head: HeadParams,
}

fn memberships(communities: &CommunityModel, e: &Array2<f64>) -> Result<Vec<usize>> {
    e.rows()
        .into_iter()
        .map(|r| nearest_community(r, communities.centroids().view()))
        .collect()
}

fn pick_downstream(membership: &[usize], k: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &c in membership {
        sizes[c] += 1;
    }
    let mut eligible: Vec<usize> = (0..k)
        .filter(|&c| sizes[c] >= MIN_DOWNSTREAM_MEMBERS)
        .collect();
    if eligible.len() >= count {
        eligible.shuffle(&mut seed::rng(seed));
        eligible.truncate(count);
        return eligible;
    }
    let mut by_size: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    by_size.truncate(count);
    by_size
}

impl TrialContext {
    pub fn build(cfg: &ExperimentConfig, graph: &Graph, trial: usize) -> Result<Self> {
        let parts = split(graph, &cfg.split_spec(stage_seed(cfg, "split", trial)))
            .map_err(|e| e.at_stage("split"))?;
        let train = &parts.train.graph;
        let tcfg = TrainConfig {
            seed: stage_seed(cfg, "target", trial),
            ..cfg.model.clone()
        };
        let classifier = train_target(train, &tcfg)
            .map_err(|e| e.at_stage("train"))?
            .params;
        let train_e =
            serving_embeddings(&classifier.encoder, train).map_err(|e| e.at_stage("train"))?;
        let projection = fit_projection(train_e.view()).map_err(|e| e.at_stage("projection"))?;
        let communities = CommunityModel::build(
            train,
            train_e.view(),
            cfg.detector,
            cfg.k_target,
            stage_seed(cfg, "communities", trial),
        )
        .map_err(|e| e.at_stage("communities"))?;

        let labels = train.require_labels("downstream projection head")?;
        let classes = train.class_count().unwrap_or(1);
        let y = project(&projection, train_e.view())?;
        let mut rng = seed::rng(stage_seed(cfg, "projection-head", trial));
        let projection_head = fit_head(
            y.view(),
            one_hot(labels, classes).view(),
            init_head(2, classes, &mut rng),
            Optimizer::Adam {
                lr: PROJECTION_HEAD_LR,
            },
            PROJECTION_HEAD_EPOCHS,
        )
        .map_err(|e| e.at_stage("projection"))?
        .params;

        let query_e = serving_embeddings(&classifier.encoder, &parts.query.graph)?;
        let test_e = serving_embeddings(&classifier.encoder, &parts.test.graph)?;
        let query_view =
            memberships(&communities, &query_e).map_err(|e| e.at_stage("communities"))?;
        let test_membership =
            memberships(&communities, &test_e).map_err(|e| e.at_stage("communities"))?;
        let downstream = pick_downstream(
            &test_membership,
            communities.k(),
            cfg.downstream_communities,
            stage_seed(cfg, "downstream", trial),
        );
        Ok(Self {
            index: trial,
            seed: trial_seed(cfg, trial),
            split: parts,
            target: TargetModel {
                classifier,
                projection,
            },
            communities,
            query_view,
            test_membership,
            downstream,
            projection_head,
        })
    }

    pub fn query(&self) -> &Graph {
        &self.split.query.graph
    }

    pub fn test(&self) -> &Graph {
        &self.split.test.graph
    }

    pub fn defense(&self, cfg: &ExperimentConfig, mode: DefenseMode) -> Result<Defense> {
        let dcfg = DefenseConfig {
            mode,
            seed: child_seed(cfg.defense.seed, "deployment", self.index as u64),
            ..cfg.defense.clone()
        };
        Defense::new(self.target.clone(), self.communities.clone(), dcfg)
    }

    /// Offline `τ` of a query set: occupied defender communities over `K`.
    pub fn offline_tau(&self, nodes: &[usize]) -> f64 {
        let mut seen = vec![false; self.communities.k()];
        for &v in nodes {
            seen[self.query_view[v]] = true;
        }
        seen.iter().filter(|&&s| s).count() as f64 / self.communities.k() as f64
    }

    /// How a benign user turns a response into a class: argmax of posteriors,
    /// the target head on embeddings, the projection head on 2-D outputs.
    /// Per-account transforms are undone first; for linear heads this equals
    /// fitting the head in the account's own space.
    pub fn downstream_prediction(
        &self,
        response: &Response,
        embedding_map: &AccountTransform,
        projection_map: &AccountTransform,
    ) -> Result<usize> {
        Ok(match response {
            Response::Probabilities(p) => argmax(p.view()),
            Response::Embedding(e) => {
                let raw = embedding_map.invert(e.view())?;
                argmax(
                    self.target
                        .classifier
                        .head
                        .probabilities_row(raw.view())?
                        .view(),
                )
            }
            Response::Projection(y) => {
                let raw = projection_map.invert(y.view())?;
                argmax(self.projection_head.probabilities_row(raw.view())?.view())
            }
        })
    }

    /// Accuracy of the (possibly defended) target for benign users whose
    /// queries stay inside one downstream community each.
    pub fn downstream_accuracy(&self, defense: &Defense, setup: Setup) -> Result<Vec<f64>> {
        let test = self.test();
        let labels = test.require_labels("downstream evaluation")?;
        self.downstream
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let account = format!("benign-{setup}-{i}");
                let members: Vec<usize> = (0..test.node_count())
                    .filter(|&v| self.test_membership[v] == c)
                    .collect();
                if members.is_empty() {
                    return Err(invalid(format!("community {c} has no test members")));
                }
                let em = defense.embedding_transform(&account);
                let pm = defense.projection_transform(&account);
                let mut hits = 0;
                for &v in &members {
                    let r = defense.respond(&account, test, v, setup)?.response;
                    hits += usize::from(self.downstream_prediction(&r, &em, &pm)? == labels[v]);
                }
                Ok(hits as f64 / members.len() as f64)
            })
            .collect()
    }

    /// Target predictions on the test graph, full batch.
    pub fn target_predictions(&self, exec: Exec) -> Result<Vec<usize>> {
        self.target.classifier.predict(self.test(), exec)
    }

    pub fn query_embeddings(&self) -> Result<Array2<f64>> {
        serving_embeddings(&self.target.classifier.encoder, self.query())
    }

    /// Test nodes of community `c`.
    pub fn test_members(&self, c: usize) -> Vec<usize> {
        (0..self.test().node_count())
            .filter(|&v| self.test_membership[v] == c)
            .collect()
    }

    pub fn largest_test_community(&self) -> usize {
        let mut sizes = vec![0usize; self.communities.k()];
        for &c in &self.test_membership {
            sizes[c] += 1;
        }
        (0..sizes.len())
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }
}
