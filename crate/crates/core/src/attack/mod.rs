//! Extraction adversaries: query selection, surrogate training per output
//! setup, noise averaging, Sybil remapping, and evaluation.

mod eval;
mod query;
mod remap;
mod select;
mod steal;
mod transcript;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::community::Detector;
use crate::defense::{Defense, Setup};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;

pub use eval::{community_accuracy, evaluate, evaluate_predictions, Evaluation};
pub use query::{averaged_responses, sybil_responses};
pub use remap::{
    cosine_distance, fit_mapper, sybil_remap, LinearMapper, RemapConfig, RemapOutcome,
};
pub use select::{
    budget, community_view, fill_by_community, guessed_k, select_concentrated, select_random,
    KnowledgeProfile,
};
pub use steal::{steal_setup_a, steal_setup_b, steal_setup_c, Surrogate, SurrogateConfig};
pub use transcript::Transcript;

/// Default number of accounts an adaptive (Sybil) attacker spreads queries over.
pub const SYBIL_ACCOUNTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    Concentrated(KnowledgeProfile),
    /// Random selection spread round-robin over several accounts.
    Adaptive {
        accounts: usize,
    },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Random => f.write_str("random"),
            Strategy::Concentrated(p) => write!(f, "concentrated:{p}"),
            Strategy::Adaptive { accounts } => write!(f, "adaptive:{accounts}"),
        }
    }
}

/// `random`, `concentrated:<PA|KA_aa|KA_ab|KA_ba|KA_bb>`, `adaptive[:<accounts>]`.
impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("random", None) => Ok(Strategy::Random),
            ("concentrated", None) => Ok(Strategy::Concentrated(KnowledgeProfile::PA)),
            ("concentrated", Some(p)) => Ok(Strategy::Concentrated(p.parse()?)),
            ("adaptive", None) => Ok(Strategy::Adaptive {
                accounts: SYBIL_ACCOUNTS,
            }),
            ("adaptive", Some(n)) => match n.parse::<usize>() {
                Ok(accounts) if accounts > 0 => Ok(Strategy::Adaptive { accounts }),
                _ => Err(invalid(format!("bad account count `{n}`"))),
            },
            _ => Err(invalid(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub setup: Setup,
    pub delta: f64,
    pub strategy: Strategy,
    pub rep: usize,
    pub seed: u64,
}

impl AttackPlan {
    pub fn validate(&self, query_nodes: usize) -> Result<()> {
        if self.rep == 0 {
            return Err(invalid("REP must be at least 1"));
        }
        budget(self.delta, query_nodes).map(|_| ())
    }
}

/// What the simulation hands the attacker besides its own query graph.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub true_k: usize,
    pub true_alg: Detector,
    /// Defender's community of every query-graph node, for the perfect attacker.
    pub defender_view: Option<&'a [usize]>,
}

/// Query nodes chosen by `plan`'s strategy.
pub fn select(plan: &AttackPlan, g: &Graph, ctx: &AttackContext<'_>) -> Result<Vec<usize>> {
    match plan.strategy {
        Strategy::Random | Strategy::Adaptive { .. } => select_random(g, plan.delta, plan.seed),
        Strategy::Concentrated(p) => select_concentrated(
            g,
            plan.delta,
            p,
            ctx.true_k,
            ctx.true_alg,
            ctx.defender_view,
            plan.seed,
        ),
    }
}

/// Account names used by an attack whose base name is `account`.
pub fn attack_accounts(plan: &AttackPlan, account: &str) -> Vec<String> {
    match plan.strategy {
        Strategy::Adaptive { accounts } => {
            (0..accounts).map(|i| format!("{account}-{i}")).collect()
        }
        _ => vec![account.to_string()],
    }
}

/// Issues the plan's queries and returns the (averaged) responses.
pub fn collect(
    plan: &AttackPlan,
    defense: &Defense,
    account: &str,
    g: &Graph,
    nodes: &[usize],
) -> Result<Array2<f64>> {
    let accounts = attack_accounts(plan, account);
    if accounts.len() == 1 {
        averaged_responses(defense, &accounts[0], g, nodes, plan.setup, plan.rep)
    } else if plan.rep == 1 {
        sybil_responses(defense, &accounts, g, nodes, plan.setup)
    } else {
        Err(invalid("adaptive strategy does not combine with REP > 1"))
    }
}

/// Trains the surrogate for the plan's setup from collected responses.
pub fn steal(
    plan: &AttackPlan,
    g: &Graph,
    nodes: &[usize],
    responses: &Array2<f64>,
    cfg: &SurrogateConfig,
) -> Result<Surrogate> {
    let seed = crate::seed::child_seed(plan.seed, "surrogate", 0);
    match plan.setup {
        Setup::A => steal_setup_a(g, nodes, responses.view(), cfg, seed),
        Setup::B => steal_setup_b(g, nodes, responses.view(), cfg, seed),
        Setup::C => steal_setup_c(g, nodes, responses.view(), cfg, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names() {
        for s in [
            "random",
            "concentrated:PA",
            "concentrated:KA_bb",
            "adaptive:3",
        ] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        assert_eq!(
            "adaptive".parse::<Strategy>().unwrap(),
            Strategy::Adaptive {
                accounts: SYBIL_ACCOUNTS
            }
        );
        assert!("adaptive:0".parse::<Strategy>().is_err());
        assert!("greedy".parse::<Strategy>().is_err());
    }
}
