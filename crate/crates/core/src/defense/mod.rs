//! Per-account query-diversity tracking and calibrated output perturbation.
//!
//! Every query is encoded, matched to its nearest community centroid, and
//! added to the account's occupied set. The occupied fraction `τ` sets the
//! label-flip probability (posterior outputs) or the Gaussian noise scale
//! (embedding and projection outputs).

mod account;
mod calibrate;
mod config;
mod perturb;
mod transform;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::community::{nearest_centroid, CommunityModel};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::model::{project, TargetModel};
use crate::seed::{self, StableHasher};

pub use account::{AccountState, ACCOUNT_HEADER};
pub use calibrate::{flip_probability, noise_sigma};
pub use config::{DefenseConfig, DefenseMode};
pub use perturb::{perturb_embedding, perturb_probabilities};
pub use transform::{random_rotation, AccountTransform, TransformKind, OFFSET_SCALE};

/// What the API returns: posteriors (A), embeddings (B) or 2-D projections (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setup {
    A,
    B,
    C,
}

impl Setup {
    pub const ALL: [Setup; 3] = [Setup::A, Setup::B, Setup::C];
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::A => "A",
            Setup::B => "B",
            Setup::C => "C",
        })
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Setup::A),
            "B" | "b" => Ok(Setup::B),
            "C" | "c" => Ok(Setup::C),
            _ => Err(invalid(format!("unknown setup `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Probabilities(Array1<f64>),
    Embedding(Array1<f64>),
    Projection(Array1<f64>),
}

impl Response {
    pub fn setup(&self) -> Setup {
        match self {
            Response::Probabilities(_) => Setup::A,
            Response::Embedding(_) => Setup::B,
            Response::Projection(_) => Setup::C,
        }
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        match self {
            Response::Probabilities(v) | Response::Embedding(v) | Response::Projection(v) => {
                v.view()
            }
        }
    }

    pub fn into_values(self) -> Array1<f64> {
        match self {
            Response::Probabilities(v) | Response::Embedding(v) | Response::Projection(v) => v,
        }
    }
}

/// A response with the bookkeeping behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub response: Response,
    /// Nearest community of the query; `None` when the defense is off.
    pub community: Option<usize>,
    /// Account `τ` after this query; `None` when the defense is off.
    pub tau: Option<f64>,
    /// Class swapped into the top slot (setup A only).
    pub flipped_to: Option<usize>,
}

/// `argmin_k ‖e − ω_k‖`, ties to the lowest index.
pub fn nearest_community(e: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> Result<usize> {
    if e.len() != centroids.ncols() {
        return Err(Error::Dimension(format!(
            "query width {} vs centroid width {}",
            e.len(),
            centroids.ncols()
        )));
    }
    if centroids.nrows() == 0 {
        return Err(invalid("no centroids"));
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite query embedding".into()));
    }
    Ok(nearest_centroid(e, centroids))
}

/// Noise source keyed on the account and the query's feature bytes.
pub fn deterministic_noise_rng(account_id: &str, fingerprint: ArrayView1<'_, f64>) -> seed::Rng {
    let mut h = StableHasher::new();
    h.str("noise").str(account_id);
    for x in fingerprint {
        h.bytes(&x.to_le_bytes());
    }
    seed::rng(h.finish())
}

struct Account {
    state: AccountState,
    rng: seed::Rng,
    embedding_map: AccountTransform,
    projection_map: AccountTransform,
}

/// Serving-side defense: immutable model state plus mutable per-account records.
///
/// Each account sits behind its own mutex, so queries from one account are
/// linearized while distinct accounts proceed in parallel.
pub struct Defense {
    model: TargetModel,
    communities: CommunityModel,
    config: DefenseConfig,
    accounts: RwLock<HashMap<String, Arc<Mutex<Account>>>>,
}

impl Defense {
    pub fn new(
        model: TargetModel,
        communities: CommunityModel,
        config: DefenseConfig,
    ) -> Result<Self> {
        config.validate()?;
        let d = model.classifier.encoder.dim();
        if communities.centroids().ncols() != d {
            return Err(Error::Dimension(format!(
                "centroids have width {}, encoder {d}",
                communities.centroids().ncols()
            )));
        }
        Ok(Self {
            model,
            communities,
            config,
            accounts: RwLock::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &TargetModel {
        &self.model
    }

    pub fn communities(&self) -> &CommunityModel {
        &self.communities
    }

    pub fn config(&self) -> &DefenseConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.communities.k()
    }

    pub fn transform_seed(&self, account_id: &str) -> u64 {
        StableHasher::new()
            .u64(self.config.seed)
            .str("transform")
            .str(account_id)
            .finish()
    }

    fn account(&self, id: &str) -> Arc<Mutex<Account>> {
        if let Some(a) = self.accounts.read().expect("account map poisoned").get(id) {
            return a.clone();
        }
        let mut map = self.accounts.write().expect("account map poisoned");
        map.entry(id.to_string())
            .or_insert_with(|| {
                let ts = self.transform_seed(id);
                let d = self.model.classifier.encoder.dim();
                let kind = self.config.transform;
                Arc::new(Mutex::new(Account {
                    state: AccountState::new(ts),
                    rng: seed::rng(StableHasher::new().u64(ts).str("stream").finish()),
                    embedding_map: AccountTransform::new(kind, d, ts),
                    projection_map: AccountTransform::new(kind, 2, ts),
                }))
            })
            .clone()
    }

    /// Snapshot of an account's state, if it has queried.
    pub fn account_state(&self, id: &str) -> Option<AccountState> {
        let map = self.accounts.read().expect("account map poisoned");
        map.get(id)
            .map(|a| a.lock().expect("account poisoned").state.clone())
    }

    pub fn account_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .accounts
            .read()
            .expect("account map poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// The embedding-width map the account's setup-B outputs pass through.
    pub fn embedding_transform(&self, id: &str) -> AccountTransform {
        self.account(id)
            .lock()
            .expect("account poisoned")
            .embedding_map
            .clone()
    }

    pub fn projection_transform(&self, id: &str) -> AccountTransform {
        self.account(id)
            .lock()
            .expect("account poisoned")
            .projection_map
            .clone()
    }

    /// Writes every account to `dir/<id>.state`.
    pub fn save_accounts(&self, dir: &std::path::Path) -> Result<()> {
        for id in self.account_ids() {
            if let Some(s) = self.account_state(&id) {
                s.save(dir, &id)?;
            }
        }
        Ok(())
    }

    /// Answers a query for node `v` of the query graph `g`.
    pub fn respond(&self, account_id: &str, g: &Graph, v: usize, setup: Setup) -> Result<Served> {
        let e = self.model.classifier.encoder.encode_node(g, v)?;
        self.respond_encoded(account_id, e.view(), g.feature_row(v), setup)
    }

    /// Same as [`Defense::respond`] for an already computed target embedding
    /// `e`. `fingerprint` identifies the query for deterministic noise.
    pub fn respond_encoded(
        &self,
        account_id: &str,
        e: ArrayView1<'_, f64>,
        fingerprint: ArrayView1<'_, f64>,
        setup: Setup,
    ) -> Result<Served> {
        let mode = self.config.mode;
        if mode.is_none() {
            if e.len() != self.model.classifier.encoder.dim() {
                return Err(Error::Dimension(format!("embedding width {}", e.len())));
            }
            return Ok(Served {
                response: self.raw(e, setup)?,
                community: None,
                tau: None,
                flipped_to: None,
            });
        }
        let community = nearest_community(e, self.communities.centroids().view())?;
        let account = self.account(account_id);
        let mut acct = account.lock().expect("account poisoned");
        let tau = acct.state.record_query(community, self.k())?;
        let mut fixed;
        let Account {
            rng,
            embedding_map,
            projection_map,
            ..
        } = &mut *acct;
        let rng = if self.config.deterministic_noise {
            fixed = deterministic_noise_rng(account_id, fingerprint);
            &mut fixed
        } else {
            rng
        };
        let sigma = match mode {
            DefenseMode::StaticNoise { sigma } => sigma,
            _ => noise_sigma(tau, self.config.alpha, self.config.beta, self.config.lambda)?,
        };
        let mut flipped_to = None;
        let response = match setup {
            Setup::A => {
                let p = self.model.classifier.head.probabilities_row(e)?;
                match mode {
                    DefenseMode::Adage => {
                        let rho = flip_probability(tau, self.config.eta)?;
                        let (out, j) = perturb_probabilities(p.view(), rho, rng);
                        flipped_to = j;
                        Response::Probabilities(out)
                    }
                    _ => Response::Probabilities(p),
                }
            }
            Setup::B => {
                let noisy = perturb_embedding(e, sigma, rng);
                Response::Embedding(embedding_map.apply(noisy.view())?)
            }
            Setup::C => {
                let noisy = perturb_embedding(e, sigma, rng);
                let y = self.project_row(noisy.view())?;
                Response::Projection(projection_map.apply(y.view())?)
            }
        };
        Ok(Served {
            response,
            community: Some(community),
            tau: Some(tau),
            flipped_to,
        })
    }

    fn project_row(&self, e: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let m = project(&self.model.projection, e.insert_axis(Axis(0)))?;
        Ok(m.row(0).to_owned())
    }

    /// Undefended model output for embedding `e`.
    pub fn raw(&self, e: ArrayView1<'_, f64>, setup: Setup) -> Result<Response> {
        Ok(match setup {
            Setup::A => Response::Probabilities(self.model.classifier.head.probabilities_row(e)?),
            Setup::B => Response::Embedding(e.to_owned()),
            Setup::C => Response::Projection(self.project_row(e)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::Detector;
    use crate::graph::{generate_sbm, SbmParams};
    use crate::model::{fit_projection, train_target, TrainConfig};
    use crate::par::Exec;
    use ndarray::{array, Array2};
    use rand::Rng as _;

    fn fixture(config: DefenseConfig, k: usize) -> (Defense, Graph) {
        let g = generate_sbm(&SbmParams::new(150, 3, 0.1, 0.005, 8, 3.0), 1).unwrap();
        let cfg = TrainConfig {
            dim: 6,
            epochs: 60,
            ..Default::default()
        };
        let classifier = train_target(&g, &cfg).unwrap().params;
        let e = classifier.encoder.encode(&g, Exec::Sequential).unwrap();
        let projection = fit_projection(e.view()).unwrap();
        let communities = CommunityModel::build(&g, e.view(), Detector::Louvain, k, 2).unwrap();
        let model = TargetModel {
            classifier,
            projection,
        };
        (Defense::new(model, communities, config).unwrap(), g)
    }

    #[test]
    fn nearest_examples() {
        let c = array![[0.0, 0.0], [10.0, 10.0]];
        assert_eq!(
            nearest_community(array![1.0, 1.0].view(), c.view()).unwrap(),
            0
        );
        assert_eq!(
            nearest_community(array![10.0, 10.0].view(), c.view()).unwrap(),
            1
        );
        assert_eq!(
            nearest_community(array![5.0, 5.0].view(), c.view()).unwrap(),
            0
        );
        assert!(nearest_community(array![f64::NAN, 0.0].view(), c.view()).is_err());
        assert!(nearest_community(array![1.0].view(), c.view()).is_err());
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = seed::rng(12);
        for _ in 0..300 {
            let k = rng.random_range(1..=500);
            let d = rng.random_range(1..=64);
            let c = Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0));
            let e = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
            let dists: Vec<f64> = c
                .rows()
                .into_iter()
                .map(|r| (&r - &e).mapv(|x: f64| x * x).sum().sqrt())
                .collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let want = dists.iter().position(|&x| x == min).unwrap();
            assert_eq!(nearest_community(e.view(), c.view()).unwrap(), want);
        }
    }

    #[test]
    fn none_mode_is_passthrough() {
        let cfg = DefenseConfig {
            mode: DefenseMode::None,
            transform: TransformKind::AffineShuffle,
            ..Default::default()
        };
        let (d, g) = fixture(cfg, 5);
        let m = d.model();
        let batch = m.classifier.probabilities(&g, Exec::Sequential).unwrap();
        for v in [0, 17, 149] {
            let e = m.classifier.encoder.encode_node(&g, v).unwrap();
            let p = m.classifier.head.probabilities_row(e.view()).unwrap();
            let y = project(&m.projection, e.view().insert_axis(Axis(0))).unwrap();
            let a = d.respond("u", &g, v, Setup::A).unwrap();
            assert_eq!(a.response, Response::Probabilities(p.clone()));
            assert_eq!(a.tau, None);
            assert_eq!(
                d.respond("u", &g, v, Setup::B).unwrap().response,
                Response::Embedding(e)
            );
            assert_eq!(
                d.respond("u", &g, v, Setup::C).unwrap().response.values(),
                y.row(0)
            );
            for (x, z) in p.iter().zip(batch.row(v)) {
                assert!((x - z).abs() < 1e-12);
            }
        }
        assert!(d.account_ids().is_empty());
    }

    #[test]
    fn first_query_is_almost_surely_clean() {
        let (d, g) = fixture(DefenseConfig::default(), 30);
        let s = d.respond("u", &g, 0, Setup::A).unwrap();
        let tau = s.tau.unwrap();
        assert_eq!(tau, 1.0 / 30.0);
        assert!(flip_probability(tau, 10.0).unwrap() < 1e-4);
        let sum: f64 = s.response.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_coverage_reaches_unit_sigma() {
        let (d, g) = fixture(DefenseConfig::default(), 10);
        for v in 0..g.node_count() {
            d.respond("x", &g, v, Setup::B).unwrap();
        }
        let tau = d.account_state("x").unwrap().tau(10);
        assert!(tau >= 0.9, "τ = {tau}");
        assert!(noise_sigma(tau, 1.0, 0.9, 1e-6).unwrap() >= 0.999999 - 1e-12);
    }

    #[test]
    fn deterministic_noise_repeats_exactly() {
        let cfg = DefenseConfig {
            deterministic_noise: true,
            transform: TransformKind::Affine,
            ..Default::default()
        };
        let (d, g) = fixture(cfg, 5);
        for v in 0..30 {
            d.respond("warm", &g, v, Setup::B).unwrap();
        }
        for setup in Setup::ALL {
            let first = d.respond("warm", &g, 3, setup).unwrap().response;
            for _ in 0..5 {
                assert_eq!(d.respond("warm", &g, 3, setup).unwrap().response, first);
            }
        }
    }

    #[test]
    fn accounts_draw_independent_noise() {
        let cfg = DefenseConfig {
            mode: DefenseMode::StaticNoise { sigma: 1.0 },
            deterministic_noise: true,
            ..Default::default()
        };
        let (d, g) = fixture(cfg, 5);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let e = d
            .model()
            .classifier
            .encoder
            .encode(&g, Exec::Sequential)
            .unwrap();
        'outer: for round in 0.. {
            for v in 0..g.node_count() {
                let fp = Array1::from_shape_fn(1, |_| (round * 1000 + v) as f64);
                let a = d
                    .respond_encoded("a", e.row(v), fp.view(), Setup::B)
                    .unwrap();
                let b = d
                    .respond_encoded("b", e.row(v), fp.view(), Setup::B)
                    .unwrap();
                xs.extend((&a.response.values() - &e.row(v)).to_vec());
                ys.extend((&b.response.values() - &e.row(v)).to_vec());
                if xs.len() >= 10_000 {
                    break 'outer;
                }
            }
        }
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        assert!((cov / (sx * sy)).abs() < 0.05);
    }

    #[test]
    fn static_noise_leaves_labels_alone() {
        let cfg = DefenseConfig {
            mode: DefenseMode::StaticNoise { sigma: 5.0 },
            ..Default::default()
        };
        let (d, g) = fixture(cfg, 5);
        for v in 0..20 {
            let e = d.model().classifier.encoder.encode_node(&g, v).unwrap();
            let s = d.respond("u", &g, v, Setup::A).unwrap();
            assert_eq!(s.response, d.raw(e.view(), Setup::A).unwrap());
        }
    }

    #[test]
    fn transforms_apply_per_account() {
        let cfg = DefenseConfig {
            mode: DefenseMode::StaticNoise { sigma: 0.0 },
            transform: TransformKind::Shuffle,
            seed: 4,
            ..Default::default()
        };
        let (d, g) = fixture(cfg, 5);
        let e = d.model().classifier.encoder.encode_node(&g, 9).unwrap();
        let a = d
            .respond("a", &g, 9, Setup::B)
            .unwrap()
            .response
            .into_values();
        assert_eq!(a, d.embedding_transform("a").apply(e.view()).unwrap());
        let back = d.embedding_transform("a").invert(a.view()).unwrap();
        assert_eq!(back, e);
        assert_ne!(d.transform_seed("a"), d.transform_seed("b"));
    }

    #[test]
    fn concurrent_queries_are_linearized_per_account() {
        let (d, g) = fixture(DefenseConfig::default(), 10);
        let d = Arc::new(d);
        let g = Arc::new(g);
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let (d, g) = (d.clone(), g.clone());
                std::thread::spawn(move || {
                    let mut taus = Vec::new();
                    for i in 0..50 {
                        let v = (t * 50 + i) % g.node_count();
                        let shared = d.respond("shared", &g, v, Setup::B).unwrap();
                        d.respond(&format!("own{t}"), &g, v, Setup::A).unwrap();
                        taus.push(shared.tau.unwrap());
                    }
                    taus
                })
            })
            .collect();
        for h in handles {
            let taus = h.join().unwrap();
            assert!(taus.windows(2).all(|w| w[0] <= w[1]));
        }
        let shared = d.account_state("shared").unwrap();
        assert_eq!(shared.query_count(), 400);
        // Sequential replay of the same multiset of queries gives the same occupied set.
        let (seq, _) = fixture(DefenseConfig::default(), 10);
        for v in 0..g.node_count() {
            if (0..8).any(|t| (0..50).any(|i| (t * 50 + i) % g.node_count() == v)) {
                seq.respond("s", &g, v, Setup::B).unwrap();
            }
        }
        assert_eq!(
            seq.account_state("s").unwrap().occupied(),
            shared.occupied()
        );
        for t in 0..8 {
            assert_eq!(
                d.account_state(&format!("own{t}")).unwrap().query_count(),
                50
            );
        }
    }
}
