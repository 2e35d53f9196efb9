use std::fs;
use std::path::{Path, PathBuf};

use crate::attack::{Strategy, SurrogateConfig};
use crate::community::Detector;
use crate::defense::{DefenseConfig, DefenseMode, Setup};
use crate::error::{invalid, Error, Result};
use crate::graph::{SbmParams, SplitSpec};
use crate::kv;
use crate::model::{Optimizer, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Sbm(SbmParams),
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: Option<PathBuf>,
    },
}

/// Everything one experiment run needs. Parsed from flat `key=value` text
/// with dotted sections; see [`ExperimentConfig::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub graph: GraphSource,
    pub train_frac: f64,
    pub query_frac: f64,
    pub model: TrainConfig,
    pub detector: Detector,
    pub k_target: usize,
    /// Shared defense knobs; `mode` is overridden by each entry of `modes`.
    pub defense: DefenseConfig,
    pub modes: Vec<DefenseMode>,
    pub setups: Vec<Setup>,
    pub deltas: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub reps: Vec<usize>,
    pub surrogate: SurrogateConfig,
    /// Communities sampled for the per-community downstream columns.
    pub downstream_communities: usize,
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Record wall-clock response latency (makes metrics.csv non-reproducible).
    pub timing: bool,
    /// Persist models, communities, accounts and transcripts per trial.
    pub artifacts: bool,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "default".into(),
            graph: GraphSource::Sbm(SbmParams::new(900, 3, 0.05, 0.002, 32, 5.0)),
            train_frac: 0.2,
            query_frac: 0.3,
            model: TrainConfig::default(),
            detector: Detector::Louvain,
            k_target: 30,
            defense: DefenseConfig {
                beta: 0.5,
                ..Default::default()
            },
            modes: vec![DefenseMode::None, DefenseMode::Adage],
            setups: Setup::ALL.to_vec(),
            deltas: vec![0.25],
            strategies: vec![Strategy::Random],
            reps: vec![1],
            surrogate: SurrogateConfig::default(),
            downstream_communities: 3,
            trials: 5,
            seed: 0,
            output: PathBuf::from("out"),
            timing: false,
            artifacts: true,
            parallel: true,
        }
    }
}

fn optimizer(kind: &str, lr: f64) -> Result<Optimizer> {
    match kind {
        "sgd" => Ok(Optimizer::Sgd { lr }),
        "adam" => Ok(Optimizer::Adam { lr }),
        _ => Err(invalid(format!("unknown optimizer `{kind}`"))),
    }
}

fn optimizer_parts(o: Optimizer) -> (&'static str, f64) {
    match o {
        Optimizer::Sgd { lr } => ("sgd", lr),
        Optimizer::Adam { lr } => ("adam", lr),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "experiment",
        "graph.source",
        "graph.n",
        "graph.blocks",
        "graph.p_in",
        "graph.p_out",
        "graph.features",
        "graph.shift",
        "graph.edges",
        "graph.feature_file",
        "graph.labels",
        "split.train",
        "split.query",
        "model.dim",
        "model.steps",
        "model.optimizer",
        "model.lr",
        "model.epochs",
        "community.detector",
        "community.k",
        "defense.modes",
        "defense.eta",
        "defense.alpha",
        "defense.beta",
        "defense.lambda",
        "defense.deterministic_noise",
        "defense.transform",
        "defense.seed",
        "attack.setups",
        "attack.deltas",
        "attack.strategies",
        "attack.reps",
        "surrogate.dim",
        "surrogate.optimizer",
        "surrogate.lr",
        "surrogate.epochs",
        "surrogate.head_lr",
        "surrogate.head_epochs",
        "downstream.communities",
        "trials",
        "seed",
        "output",
        "timing",
        "artifacts",
        "parallel",
    ];

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let entries = kv::parse(text, path)?;
        let get = |k: &str| entries.iter().find(|e| e.key == k);
        if let Some(e) = entries
            .iter()
            .find(|e| !Self::KEYS.contains(&e.key.as_str()))
        {
            return Err(Error::parse(
                path,
                e.line,
                format!("unknown key `{}`", e.key),
            ));
        }
        let mut c = Self::default();
        macro_rules! num {
            ($key:literal, $dst:expr) => {
                if let Some(e) = get($key) {
                    $dst = e.parsed(path)?;
                }
            };
        }
        macro_rules! flag {
            ($key:literal, $dst:expr) => {
                if let Some(e) = get($key) {
                    $dst = e.flag(path)?;
                }
            };
        }
        macro_rules! list {
            ($key:literal, $dst:expr) => {
                if let Some(e) = get($key) {
                    $dst = e.list(path)?;
                }
            };
        }
        if let Some(e) = get("experiment") {
            c.experiment = e.value.clone();
        }
        let source = get("graph.source").map_or("sbm", |e| e.value.as_str());
        match source {
            "sbm" => {
                let GraphSource::Sbm(mut p) = c.graph.clone() else {
                    unreachable!()
                };
                num!("graph.n", p.n);
                num!("graph.blocks", p.blocks);
                num!("graph.p_in", p.p_in);
                num!("graph.p_out", p.p_out);
                num!("graph.features", p.feature_dim);
                num!("graph.shift", p.feature_shift);
                c.graph = GraphSource::Sbm(p);
            }
            "files" => {
                let need = |k: &str| {
                    get(k).map(|e| PathBuf::from(&e.value)).ok_or_else(|| {
                        Error::parse(path, 0, format!("graph.source=files needs `{k}`"))
                    })
                };
                c.graph = GraphSource::Files {
                    edges: need("graph.edges")?,
                    features: need("graph.feature_file")?,
                    labels: get("graph.labels").map(|e| PathBuf::from(&e.value)),
                };
            }
            other => {
                let line = get("graph.source").map_or(0, |e| e.line);
                return Err(Error::parse(
                    path,
                    line,
                    format!("unknown graph source `{other}`"),
                ));
            }
        }
        num!("split.train", c.train_frac);
        num!("split.query", c.query_frac);
        num!("model.dim", c.model.dim);
        num!("model.steps", c.model.steps);
        num!("model.epochs", c.model.epochs);
        let (mut kind, mut lr) = optimizer_parts(c.model.optimizer);
        if let Some(e) = get("model.optimizer") {
            kind = match e.value.as_str() {
                "sgd" => "sgd",
                "adam" => "adam",
                _ => {
                    return Err(Error::parse(
                        path,
                        e.line,
                        format!("unknown optimizer `{}`", e.value),
                    ))
                }
            };
        }
        num!("model.lr", lr);
        c.model.optimizer = optimizer(kind, lr)?;
        if let Some(e) = get("community.detector") {
            c.detector = e.parsed(path)?;
        }
        num!("community.k", c.k_target);
        for key in [
            "eta",
            "alpha",
            "beta",
            "lambda",
            "deterministic_noise",
            "transform",
            "seed",
        ] {
            if let Some(e) = entries.iter().find(|e| e.key == format!("defense.{key}")) {
                c.defense
                    .set(key, &e.value)
                    .map_err(|err| Error::parse(path, e.line, err.to_string()))?;
            }
        }
        list!("defense.modes", c.modes);
        list!("attack.setups", c.setups);
        list!("attack.deltas", c.deltas);
        list!("attack.strategies", c.strategies);
        list!("attack.reps", c.reps);
        num!("surrogate.dim", c.surrogate.dim);
        num!("surrogate.epochs", c.surrogate.epochs);
        num!("surrogate.head_epochs", c.surrogate.head_epochs);
        let (mut skind, mut slr) = optimizer_parts(c.surrogate.optimizer);
        if let Some(e) = get("surrogate.optimizer") {
            skind = if e.value == "sgd" { "sgd" } else { "adam" };
            optimizer(&e.value, slr).map_err(|err| Error::parse(path, e.line, err.to_string()))?;
        }
        num!("surrogate.lr", slr);
        c.surrogate.optimizer = optimizer(skind, slr)?;
        let (hkind, mut hlr) = optimizer_parts(c.surrogate.head_optimizer);
        num!("surrogate.head_lr", hlr);
        c.surrogate.head_optimizer = optimizer(if skind == "sgd" { "sgd" } else { hkind }, hlr)?;
        num!("downstream.communities", c.downstream_communities);
        num!("trials", c.trials);
        num!("seed", c.seed);
        if let Some(e) = get("output") {
            c.output = PathBuf::from(&e.value);
        }
        flag!("timing", c.timing);
        flag!("artifacts", c.artifacts);
        flag!("parallel", c.parallel);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            query_frac: self.query_frac,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec(0).validate()?;
        self.defense.validate()?;
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.k_target == 0 {
            return Err(invalid("community.k must be at least 1"));
        }
        if self.modes.is_empty() || self.setups.is_empty() || self.deltas.is_empty() {
            return Err(invalid("modes, setups and deltas must be non-empty"));
        }
        if self.strategies.is_empty() || self.reps.is_empty() {
            return Err(invalid("strategies and reps must be non-empty"));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
            return Err(invalid(format!("query rate {d} outside (0, 1]")));
        }
        if self.reps.contains(&0) {
            return Err(invalid("REP must be at least 1"));
        }
        if self.surrogate.dim == 0 || self.model.dim < 2 {
            return Err(invalid("model.dim must be ≥ 2 and surrogate.dim ≥ 1"));
        }
        if let GraphSource::Sbm(p) = &self.graph {
            p.validate()?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut lines = vec![format!("experiment={}", self.experiment)];
        match &self.graph {
            GraphSource::Sbm(p) => {
                lines.push("graph.source=sbm".into());
                lines.push(format!("graph.n={}", p.n));
                lines.push(format!("graph.blocks={}", p.blocks));
                lines.push(format!("graph.p_in={}", p.p_in));
                lines.push(format!("graph.p_out={}", p.p_out));
                lines.push(format!("graph.features={}", p.feature_dim));
                lines.push(format!("graph.shift={}", p.feature_shift));
            }
            GraphSource::Files {
                edges,
                features,
                labels,
            } => {
                lines.push("graph.source=files".into());
                lines.push(format!("graph.edges={}", edges.display()));
                lines.push(format!("graph.feature_file={}", features.display()));
                if let Some(l) = labels {
                    lines.push(format!("graph.labels={}", l.display()));
                }
            }
        }
        let (mk, mlr) = optimizer_parts(self.model.optimizer);
        let (sk, slr) = optimizer_parts(self.surrogate.optimizer);
        let (_, hlr) = optimizer_parts(self.surrogate.head_optimizer);
        let d = &self.defense;
        lines.extend([
            format!("split.train={}", self.train_frac),
            format!("split.query={}", self.query_frac),
            format!("model.dim={}", self.model.dim),
            format!("model.steps={}", self.model.steps),
            format!("model.optimizer={mk}"),
            format!("model.lr={mlr}"),
            format!("model.epochs={}", self.model.epochs),
            format!("community.detector={}", self.detector.name()),
            format!("community.k={}", self.k_target),
            format!("defense.modes={}", join(&self.modes)),
            format!("defense.eta={}", d.eta),
            format!("defense.alpha={}", d.alpha),
            format!("defense.beta={}", d.beta),
            format!("defense.lambda={}", d.lambda),
            format!("defense.deterministic_noise={}", d.deterministic_noise),
            format!("defense.transform={}", d.transform),
            format!("defense.seed={}", d.seed),
            format!("attack.setups={}", join(&self.setups)),
            format!("attack.deltas={}", join(&self.deltas)),
            format!("attack.strategies={}", join(&self.strategies)),
            format!("attack.reps={}", join(&self.reps)),
            format!("surrogate.dim={}", self.surrogate.dim),
            format!("surrogate.optimizer={sk}"),
            format!("surrogate.lr={slr}"),
            format!("surrogate.epochs={}", self.surrogate.epochs),
            format!("surrogate.head_lr={hlr}"),
            format!("surrogate.head_epochs={}", self.surrogate.head_epochs),
            format!("downstream.communities={}", self.downstream_communities),
            format!("trials={}", self.trials),
            format!("seed={}", self.seed),
            format!("output={}", self.output.display()),
            format!("timing={}", self.timing),
            format!("artifacts={}", self.artifacts),
            format!("parallel={}", self.parallel),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
