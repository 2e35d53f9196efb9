use std::path::Path;

use adage::attack::Transcript;
use adage::defense::{AccountState, DefenseMode, Response, Setup};
use adage::harness::{experiment_graph, ExperimentConfig, TrialContext};

fn context() -> (ExperimentConfig, TrialContext) {
    let cfg = ExperimentConfig::parse("graph.n=300\ntrials=1\nartifacts=false", Path::new("s.cfg"))
        .unwrap();
    let g = experiment_graph(&cfg).unwrap();
    let ctx = TrialContext::build(&cfg, &g, 0).unwrap();
    (cfg, ctx)
}

#[test]
fn undefended_answers_are_the_model_outputs() {
    let (cfg, ctx) = context();
    let d = ctx.defense(&cfg, DefenseMode::None).unwrap();
    let enc = &ctx.target.classifier.encoder;
    for v in 0..20 {
        let e = enc.encode_node(ctx.query(), v).unwrap();
        for setup in Setup::ALL {
            let served = d.respond("u", ctx.query(), v, setup).unwrap();
            assert!(served.tau.is_none());
            assert_eq!(served.response, d.raw(e.view(), setup).unwrap());
        }
    }
    assert!(d.account_ids().is_empty());
}

#[test]
fn account_state_survives_a_restart() {
    let (cfg, ctx) = context();
    let d = ctx.defense(&cfg, DefenseMode::Adage).unwrap();
    let mut last = 0.0;
    for v in 0..40 {
        let tau = d
            .respond("alice", ctx.query(), v, Setup::A)
            .unwrap()
            .tau
            .unwrap();
        assert!(tau >= last);
        last = tau;
    }
    let dir = tempfile::tempdir().unwrap();
    d.save_accounts(dir.path()).unwrap();
    let back = AccountState::load(dir.path(), "alice").unwrap();
    assert_eq!(
        back.occupied(),
        d.account_state("alice").unwrap().occupied()
    );
    assert_eq!(back.tau(d.k()), last);
}

#[test]
fn transcripts_round_trip() {
    let (cfg, ctx) = context();
    let d = ctx.defense(&cfg, DefenseMode::Adage).unwrap();
    let nodes: Vec<usize> = (0..10).collect();
    let rows =
        adage::attack::averaged_responses(&d, "bob", ctx.query(), &nodes, Setup::C, 1).unwrap();
    let t = Transcript::new(Setup::C, nodes, rows.view()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    t.save(&path).unwrap();
    assert_eq!(Transcript::load(&path).unwrap(), t);
    assert!(matches!(
        d.respond("bob", ctx.query(), 0, Setup::C).unwrap().response,
        Response::Projection(ref y) if y.len() == 2
    ));
}
