use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::trial::{experiment_graph, stage_seed, TrialContext};
use crate::attack::{self, AttackContext, AttackPlan, Evaluation, Strategy, Transcript};
use crate::defense::{Defense, DefenseMode, Setup};
use crate::error::{Error, Result};
use crate::graph::{save_graph, Graph};
use crate::model::save_model;
use crate::par::Exec;

pub const METRICS_HEADER: &str =
    "experiment,trial,setup,mode,delta,rep,strategy,surr_acc,surr_fid,c1_acc,c2_acc,c3_acc,final_tau,latency_us";
pub const MANIFEST_HEADER: &str = "#adage-manifest v1";
pub const DOWNSTREAM_COLUMNS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub trial: usize,
    pub setup: Setup,
    pub mode: DefenseMode,
    pub delta: f64,
    pub rep: usize,
    pub strategy: Strategy,
    pub surr_acc: f64,
    pub surr_fid: f64,
    /// Up to three downstream community accuracies.
    pub community_acc: Vec<f64>,
    pub final_tau: f64,
    pub latency_us: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut cells = vec![
            self.experiment.clone(),
            self.trial.to_string(),
            self.setup.to_string(),
            self.mode.to_string(),
            self.delta.to_string(),
            self.rep.to_string(),
            self.strategy.to_string(),
            self.surr_acc.to_string(),
            self.surr_fid.to_string(),
        ];
        for i in 0..DOWNSTREAM_COLUMNS {
            cells.push(opt(self.community_acc.get(i).copied()));
        }
        cells.push(self.final_tau.to_string());
        cells.push(opt(self.latency_us));
        cells.join(",")
    }
}

/// Account ids allow only `[A-Za-z0-9._-]`.
pub fn account_name(prefix: &str, parts: &[String]) -> String {
    let raw = std::iter::once(prefix.to_string())
        .chain(parts.iter().cloned())
        .collect::<Vec<_>>()
        .join("-");
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Mean offline `τ` over the accounts an attack used.
fn attack_tau(ctx: &TrialContext, plan: &AttackPlan, nodes: &[usize]) -> f64 {
    match plan.strategy {
        Strategy::Adaptive { accounts } => {
            let total: f64 = (0..accounts)
                .map(|a| {
                    let own: Vec<usize> = nodes.iter().copied().skip(a).step_by(accounts).collect();
                    ctx.offline_tau(&own)
                })
                .sum();
            total / accounts as f64
        }
        _ => ctx.offline_tau(nodes),
    }
}

/// Outcome of one attack against one deployment.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub transcript: Transcript,
    pub evaluation: Evaluation,
    pub final_tau: f64,
    pub latency_us: Option<f64>,
}

/// Selects queries for `plan`, collects the answers through `defense` under
/// `account`, trains the surrogate and scores it against `reference`
/// (the target's test predictions).
pub fn attack_cell(
    cfg: &ExperimentConfig,
    ctx: &TrialContext,
    defense: &Defense,
    plan: &AttackPlan,
    account: &str,
    reference: &[usize],
    exec: Exec,
) -> Result<CellResult> {
    let actx = AttackContext {
        true_k: ctx.communities.k(),
        true_alg: cfg.detector,
        defender_view: Some(&ctx.query_view),
    };
    plan.validate(ctx.query().node_count())
        .map_err(|e| e.at_stage("attack"))?;
    let nodes = attack::select(plan, ctx.query(), &actx).map_err(|e| e.at_stage("attack"))?;
    let start = Instant::now();
    let responses = attack::collect(plan, defense, account, ctx.query(), &nodes)
        .map_err(|e| e.at_stage("query"))?;
    let elapsed = start.elapsed();
    let latency_us = cfg
        .timing
        .then(|| elapsed.as_secs_f64() * 1e6 / (nodes.len() * plan.rep) as f64);
    let surrogate = attack::steal(plan, ctx.query(), &nodes, &responses, &cfg.surrogate)
        .map_err(|e| e.at_stage("surrogate"))?;
    let labels = ctx.test().require_labels("evaluation")?;
    let predicted = surrogate
        .classifier
        .predict(ctx.test(), exec)
        .map_err(|e| e.at_stage("evaluate"))?;
    let evaluation = attack::evaluate_predictions(&predicted, reference, labels)
        .map_err(|e| e.at_stage("evaluate"))?;
    let final_tau = attack_tau(ctx, plan, &nodes);
    Ok(CellResult {
        transcript: Transcript::new(plan.setup, nodes, responses.view())?,
        evaluation,
        final_tau,
        latency_us,
    })
}

struct TrialOutput {
    rows: Vec<MetricsRow>,
    target_accuracy: f64,
    seeds: Vec<(String, u64)>,
}

fn trial_dir(cfg: &ExperimentConfig, trial: usize) -> PathBuf {
    cfg.output.join(format!("trial-{trial}"))
}

fn run_trial(cfg: &ExperimentConfig, graph: &Graph, t: usize, exec: Exec) -> Result<TrialOutput> {
    let ctx = TrialContext::build(cfg, graph, t)?;
    let mut seeds: Vec<(String, u64)> = [
        "split",
        "target",
        "communities",
        "projection-head",
        "downstream",
    ]
    .iter()
    .map(|s| (s.to_string(), stage_seed(cfg, s, t)))
    .collect();
    let dir = trial_dir(cfg, t);
    if cfg.artifacts {
        fs::create_dir_all(dir.join("transcripts"))?;
        save_model(&ctx.target, &dir.join("model.txt")).map_err(|e| e.at_stage("artifacts"))?;
        ctx.communities
            .save(&dir.join("communities.txt"))
            .map_err(|e| e.at_stage("artifacts"))?;
    }
    let reference = ctx
        .target_predictions(exec)
        .map_err(|e| e.at_stage("evaluate"))?;
    let labels = ctx.test().require_labels("evaluation")?;
    let target_accuracy = attack::evaluate_predictions(&reference, &reference, labels)?.accuracy;
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        let defense: Defense = ctx.defense(cfg, mode).map_err(|e| e.at_stage("defense"))?;
        seeds.push((format!("defense:{mode}"), defense.config().seed));
        for &setup in &cfg.setups {
            let community_acc = ctx
                .downstream_accuracy(&defense, setup)
                .map_err(|e| e.at_stage("downstream"))?;
            for &delta in &cfg.deltas {
                for strategy in &cfg.strategies {
                    let stage = format!("attack:{delta}:{strategy}");
                    let plan_seed = stage_seed(cfg, &stage, t);
                    for &rep in &cfg.reps {
                        let plan = AttackPlan {
                            setup,
                            delta,
                            strategy: *strategy,
                            rep,
                            seed: plan_seed,
                        };
                        let account = account_name(
                            "att",
                            &[
                                setup.to_string(),
                                delta.to_string(),
                                strategy.to_string(),
                                rep.to_string(),
                            ],
                        );
                        let cell =
                            attack_cell(cfg, &ctx, &defense, &plan, &account, &reference, exec)?;
                        if cfg.artifacts {
                            let name = format!("{mode}-{account}.csv").replace(':', "_");
                            cell.transcript.save(&dir.join("transcripts").join(name))?;
                        }
                        rows.push(MetricsRow {
                            experiment: cfg.experiment.clone(),
                            trial: t,
                            setup,
                            mode,
                            delta,
                            rep,
                            strategy: *strategy,
                            surr_acc: cell.evaluation.accuracy,
                            surr_fid: cell.evaluation.fidelity,
                            community_acc: community_acc.clone(),
                            final_tau: cell.final_tau,
                            latency_us: cell.latency_us,
                        });
                    }
                    seeds.push((stage, plan_seed));
                }
            }
        }
        if cfg.artifacts {
            let accounts = dir.join(format!("accounts-{mode}").replace(':', "_"));
            defense
                .save_accounts(&accounts)
                .map_err(|e| e.at_stage("artifacts"))?;
        }
    }
    seeds.sort();
    seeds.dedup();
    Ok(TrialOutput {
        rows,
        target_accuracy,
        seeds,
    })
}

fn manifest(cfg: &ExperimentConfig, seeds: &[Vec<(String, u64)>]) -> String {
    let mut out = String::new();
    writeln!(out, "{MANIFEST_HEADER}").unwrap();
    writeln!(out, "metrics_columns={METRICS_HEADER}").unwrap();
    writeln!(out, "model_format={}", crate::model::MODEL_HEADER).unwrap();
    writeln!(
        out,
        "community_format={}",
        crate::community::COMMUNITY_HEADER
    )
    .unwrap();
    writeln!(out, "account_format={}", crate::defense::ACCOUNT_HEADER).unwrap();
    writeln!(out, "seed.master={}", cfg.seed).unwrap();
    writeln!(
        out,
        "seed.graph={}",
        crate::seed::child_seed(cfg.seed, "graph", 0)
    )
    .unwrap();
    for (t, list) in seeds.iter().enumerate() {
        writeln!(out, "seed.trial.{t}={}", super::trial::trial_seed(cfg, t)).unwrap();
        for (stage, s) in list {
            writeln!(out, "seed.trial.{t}.{stage}={s}").unwrap();
        }
    }
    writeln!(out, "[config]").unwrap();
    out.push_str(&cfg.to_text());
    out
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    /// Test accuracy of the target model, per trial.
    pub target_accuracy: Vec<f64>,
    pub metrics_path: PathBuf,
}

/// Runs every (trial, mode, setup, δ, strategy, REP) cell of `cfg` and writes
/// `metrics.csv`, `manifest.txt` and per-trial artifacts under `cfg.output`.
///
/// Trials run concurrently when `cfg.parallel` is set; rows are written in
/// trial order. If a trial fails, rows of the trials before it are still
/// written before the error is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    fs::create_dir_all(&cfg.output)?;
    let graph = experiment_graph(cfg).map_err(|e| e.at_stage("graph"))?;
    if cfg.artifacts {
        let dir = cfg.output.join("graph");
        fs::create_dir_all(&dir)?;
        let labels = dir.join("labels.txt");
        save_graph(
            &graph,
            &dir.join("edges.txt"),
            &dir.join("features.csv"),
            graph.labels().map(|_| labels.as_path()),
        )?;
    }
    let exec = if cfg.parallel {
        Exec::default()
    } else {
        Exec::Sequential
    };
    let results = exec.map(cfg.trials, |t| run_trial(cfg, &graph, t, Exec::Sequential));
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    let mut target_accuracy = Vec::new();
    let mut failure: Option<Error> = None;
    for r in results {
        match r {
            Ok(out) => {
                rows.extend(out.rows);
                target_accuracy.push(out.target_accuracy);
                seeds.push(out.seeds);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let metrics_path = cfg.output.join("metrics.csv");
    write_metrics(&metrics_path, &rows)?;
    fs::write(cfg.output.join("manifest.txt"), manifest(cfg, &seeds))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(RunOutcome {
            rows,
            target_accuracy,
            metrics_path,
        }),
    }
}
