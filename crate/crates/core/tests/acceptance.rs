//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! The process exits non-zero on a failing criterion only when
//! `ACCEPTANCE_STRICT=1` is set, so `cargo test` reports the lines without
//! aborting the rest of the suite.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use adage::attack::{averaged_responses, sybil_remap, RemapConfig};
use adage::community::modularity;
use adage::defense::{
    flip_probability, nearest_community, noise_sigma, perturb_probabilities, Defense, DefenseMode,
    Setup, TransformKind,
};
use adage::graph::{generate_sbm, SbmParams};
use adage::harness::{
    bench, diversity, experiment_graph, run, ExperimentConfig, MetricsRow, RunOutcome, TrialContext,
};
use adage::model::{classifier_loss_grad, init_encoder, init_head, one_hot, Classifier};
use adage::par::Exec;
use adage::seed;
use adage::Graph;
use ndarray::{Array1, Array2};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn config(lines: &[&str]) -> ExperimentConfig {
    ExperimentConfig::parse(&lines.join("\n"), Path::new("acceptance")).expect("acceptance config")
}

fn efficacy_config(output: &Path) -> ExperimentConfig {
    let out = format!("output={}", output.display());
    config(&[
        "experiment=efficacy",
        "graph.n=900",
        "graph.blocks=3",
        "graph.shift=5",
        "community.k=30",
        "defense.beta=0.5",
        "defense.modes=none,adage,static_noise:0.05,static_noise:5",
        "attack.setups=A,B,C",
        "attack.deltas=0.25",
        "trials=5",
        "artifacts=false",
        &out,
    ])
}

fn calibrators() -> Verdict {
    let mut fails = Vec::new();
    for eta in [1.0, 10.0, 50.0] {
        if flip_probability(0.5, eta).unwrap() != 0.5 {
            fails.push(format!("h({eta})(0.5) != 0.5"));
        }
    }
    let lo = flip_probability(0.0, 10.0).unwrap();
    let hi = flip_probability(1.0, 10.0).unwrap();
    if (lo - 4.53979e-5).abs() > 1e-9 {
        fails.push(format!("h(0)={lo}"));
    }
    // The reference value 0.9999546 is rounded to 7 decimals; the exact value is
    // 1/(1+e^-10) = 0.99995460213. Check that closed form to 1e-9 and the
    // stated digits to their own precision.
    if (hi - 1.0 / (1.0 + (-10.0f64).exp())).abs() > 1e-9 || (hi - 0.9999546).abs() > 5e-8 {
        fails.push(format!("h(1)={hi}"));
    }
    if noise_sigma(0.0, 1.0, 0.9, 1e-6).unwrap() != 0.0 {
        fails.push("sigma(0) != 0".into());
    }
    let s = noise_sigma(0.9, 1.0, 0.9, 1e-6).unwrap();
    if (s - 0.999999).abs() > 1e-12 {
        fails.push(format!("sigma(0.9)={s}"));
    }
    let mut prev = (-1.0, -1.0);
    for i in 0..=10_000 {
        let t = i as f64 * 1e-4;
        let cur = (
            flip_probability(t, 10.0).unwrap(),
            noise_sigma(t, 1.0, 0.9, 1e-6).unwrap(),
        );
        if cur.0 <= prev.0 || cur.1 <= prev.1 {
            fails.push(format!("not strictly increasing at tau={t}"));
            break;
        }
        prev = cur;
    }
    verdict(
        fails.is_empty(),
        format!(
            "h(0)={lo:.6e} h(1)={hi:.7} sigma(0.9)={s:.6} {}",
            fails.join("; ")
        ),
    )
}

fn flip_rates() -> Verdict {
    let n = 10_000;
    let p = Array1::from(vec![0.6, 0.25, 0.1, 0.05]);
    let mut rng = seed::rng(2024);
    let mut parts = Vec::new();
    let mut pass = true;
    for rho in [0.1, 0.5, 0.9] {
        let flips = (0..n)
            .filter(|_| perturb_probabilities(p.view(), rho, &mut rng).1.is_some())
            .count();
        let rate = flips as f64 / n as f64;
        let se = (rho * (1.0 - rho) / n as f64).sqrt();
        let z = (rate - rho) / se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("rho={rho}: {rate:.4} (z={z:+.2})"));
    }
    verdict(pass, parts.join(", "))
}

fn brute_nearest(e: &Array1<f64>, c: &Array2<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, row) in c.rows().into_iter().enumerate() {
        let d: f64 = row.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn two_triangles() -> Graph {
    let edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)];
    Graph::new(edges, Array2::zeros((6, 1)), None, None).unwrap()
}

fn oracles() -> Verdict {
    let mut rng = seed::rng(7);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..40);
        let d = rng.random_range(1..12);
        let mut draw =
            |rows: usize| Array2::from_shape_fn((rows, d), |_| rng.random_range(-3..=3) as f64);
        let c = draw(k);
        let e = draw(1).row(0).to_owned();
        if nearest_community(e.view(), c.view()).unwrap() != brute_nearest(&e, &c) {
            mismatches += 1;
        }
    }
    let g = two_triangles();
    let q_whole = modularity(&g, &[0; 6]).unwrap();
    let q_split = modularity(&g, &[0, 0, 0, 1, 1, 1]).unwrap();

    let sbm = generate_sbm(&SbmParams::new(20, 2, 0.4, 0.05, 6, 2.0), 3).unwrap();
    let h = sbm
        .adjacency()
        .propagate(sbm.features().view(), 2, Exec::Sequential);
    let mut grng = seed::rng(11);
    let clf = Classifier {
        encoder: init_encoder(6, 5, 2, &mut grng),
        head: init_head(5, 2, &mut grng),
    };
    let targets = one_hot(sbm.labels().unwrap(), 2);
    let (_, grads) = classifier_loss_grad(h.view(), &clf, targets.view());
    let loss_at = |c: &Classifier| classifier_loss_grad(h.view(), c, targets.view()).0;
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, bump: &dyn Fn(&mut Classifier, f64)| {
        let mut plus = clf.clone();
        bump(&mut plus, step);
        let mut minus = clf.clone();
        bump(&mut minus, -step);
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    };
    for ((i, j), &a) in grads.w1.indexed_iter() {
        check(a, &|c, s| c.encoder.w1[[i, j]] += s);
    }
    for ((i, j), &a) in grads.w2.indexed_iter() {
        check(a, &|c, s| c.head.w2[[i, j]] += s);
    }
    for (i, &a) in grads.b2.iter().enumerate() {
        check(a, &|c, s| c.head.b2[i] += s);
    }
    let pass = mismatches == 0
        && q_whole.abs() <= 1e-12
        && (q_split - 0.357142857).abs() <= 1e-9
        && worst <= 1e-4;
    verdict(
        pass,
        format!("nearest mismatches={mismatches}, Q(whole)={q_whole:.2e}, Q(two triangles)={q_split:.9}, worst grad rel err={worst:.2e}"),
    )
}

type Cell<'a> = BTreeMap<(String, Setup), Vec<&'a MetricsRow>>;

fn cells(rows: &[MetricsRow]) -> Cell<'_> {
    let mut out: Cell<'_> = BTreeMap::new();
    for r in rows {
        out.entry((r.mode.to_string(), r.setup))
            .or_default()
            .push(r);
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.trial);
    }
    out
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn pts(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn efficacy(out: &RunOutcome) -> Verdict {
    let c = cells(&out.rows);
    let mut pass = true;
    let mut parts = Vec::new();
    for setup in Setup::ALL {
        let none = &c[&("none".to_string(), setup)];
        let adage = &c[&("adage".to_string(), setup)];
        let ok_trials = (0..none.len())
            .filter(|&t| {
                none[t].surr_acc >= out.target_accuracy[t] - 0.05
                    && adage[t].surr_acc <= none[t].surr_acc - 0.30
            })
            .count();
        pass &= ok_trials >= 4;
        let accs: Vec<String> = adage.iter().map(|r| pts(r.surr_acc)).collect();
        parts.push(format!(
            "{setup}: {ok_trials}/5 trials ok (target {}, none {}, adage [{}])",
            pts(mean(out.target_accuracy.iter().copied())),
            pts(mean(none.iter().map(|r| r.surr_acc))),
            accs.join(" ")
        ));
    }
    verdict(pass, parts.join("; "))
}

fn utility(out: &RunOutcome) -> Verdict {
    let c = cells(&out.rows);
    let mut worst: f64 = 0.0;
    for setup in Setup::ALL {
        let none = &c[&("none".to_string(), setup)];
        let adage = &c[&("adage".to_string(), setup)];
        for (a, b) in none.iter().zip(adage) {
            for (x, y) in a.community_acc.iter().zip(&b.community_acc) {
                worst = worst.max(x - y);
            }
        }
    }
    verdict(
        worst <= 0.05,
        format!("largest per-community drop {} points", pts(worst)),
    )
}

fn static_noise(out: &RunOutcome) -> Verdict {
    let c = cells(&out.rows);
    let mut pass = true;
    let mut parts = Vec::new();
    let down =
        |rows: &[&MetricsRow]| mean(rows.iter().flat_map(|r| r.community_acc.iter().copied()));
    for setup in [Setup::B, Setup::C] {
        let get = |m: &str| c[&(m.to_string(), setup)].as_slice();
        let acc = |m: &str| mean(get(m).iter().map(|r| r.surr_acc));
        let (none, small, big, adage) = (
            acc("none"),
            acc("static_noise:0.05"),
            acc("static_noise:5"),
            acc("adage"),
        );
        let (d_none, d_big, d_adage) = (
            down(get("none")),
            down(get("static_noise:5")),
            down(get("adage")),
        );
        let small_ok = (small - none).abs() <= 0.05;
        let big_ok = big <= none - 0.30 && d_big <= d_none - 0.30;
        let adage_ok = none - adage >= (none - big) - 0.05 && d_none - d_adage <= 0.05;
        pass &= small_ok && big_ok && adage_ok;
        parts.push(format!(
            "{setup}: surrogate none {} / 0.05 {} / 5 {} / adage {}, downstream none {} / 5 {} / adage {}",
            pts(none),
            pts(small),
            pts(big),
            pts(adage),
            pts(d_none),
            pts(d_big),
            pts(d_adage)
        ));
    }
    verdict(pass, parts.join("; "))
}

fn diversity_separation() -> Verdict {
    let cfg = config(&["trials=5", "artifacts=false"]);
    let tr = diversity(&cfg).expect("diversity run");
    let mut pass = true;
    let mut parts = Vec::new();
    for pair in tr.chunks(2) {
        let (att, down) = (pair[0].final_tau(), pair[1].final_tau());
        pass &= att >= 2.0 * down;
        parts.push(format!("{att:.3}/{down:.3}"));
    }
    verdict(
        pass,
        format!(
            "attacker/downstream final tau per trial: {}",
            parts.join(" ")
        ),
    )
}

fn averaging() -> Verdict {
    let mut cfg = config(&["artifacts=false", "defense.deterministic_noise=true"]);
    let graph = experiment_graph(&cfg).unwrap();
    let ctx = TrialContext::build(&cfg, &graph, 0).unwrap();
    let nodes: Vec<usize> = (0..200).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for setup in Setup::ALL {
        let once = averaged_responses(
            &ctx.defense(&cfg, DefenseMode::Adage).unwrap(),
            "avg",
            ctx.query(),
            &nodes,
            setup,
            1,
        )
        .unwrap();
        let many = averaged_responses(
            &ctx.defense(&cfg, DefenseMode::Adage).unwrap(),
            "avg",
            ctx.query(),
            &nodes,
            setup,
            100,
        )
        .unwrap();
        let equal = once
            .iter()
            .zip(&many)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        pass &= equal;
        parts.push(format!("{setup} bit-equal={equal}"));
    }
    cfg.defense.deterministic_noise = false;
    let sigma = 1.0;
    let clean: Vec<Array1<f64>> = nodes
        .iter()
        .map(|&v| {
            ctx.target
                .classifier
                .encoder
                .encode_node(ctx.query(), v)
                .unwrap()
        })
        .collect();
    for rep in [10, 100] {
        let d: Defense = ctx
            .defense(&cfg, DefenseMode::StaticNoise { sigma })
            .unwrap();
        let avg = averaged_responses(&d, "avg", ctx.query(), &nodes, Setup::B, rep).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        for (row, e) in avg.rows().into_iter().zip(&clean) {
            for (a, b) in row.iter().zip(e) {
                sum += (a - b).powi(2);
                count += 1;
            }
        }
        let var = sum / count as f64;
        let expected = sigma * sigma / rep as f64;
        let rel = (var - expected).abs() / expected;
        pass &= rel <= 0.10;
        parts.push(format!(
            "REP={rep} var={var:.5} vs {expected:.5} ({:.1}%)",
            100.0 * rel
        ));
    }
    verdict(pass, parts.join(", "))
}

fn remap_curve(
    ctx: &TrialContext,
    cfg: &ExperimentConfig,
    setup: Setup,
    sigma: f64,
    kind: TransformKind,
) -> Vec<f64> {
    let mut dcfg = cfg.clone();
    dcfg.defense.transform = kind;
    let d = ctx
        .defense(&dcfg, DefenseMode::StaticNoise { sigma })
        .unwrap();
    let pool: Vec<usize> = (0..ctx.query().node_count()).collect();
    let test: Vec<usize> = (0..100).collect();
    let ask = |acct: &str, g: &Graph, nodes: &[usize]| {
        averaged_responses(&d, acct, g, nodes, setup, 1).unwrap()
    };
    let (p1, p2) = (
        ask("sybil-1", ctx.query(), &pool),
        ask("sybil-2", ctx.query(), &pool),
    );
    let (t1, t2) = (
        ask("sybil-1", ctx.test(), &test),
        ask("sybil-2", ctx.test(), &test),
    );
    [0.2, 0.4, 0.6, 0.8, 1.0]
        .iter()
        .map(|&f| {
            sybil_remap(
                p1.view(),
                p2.view(),
                t1.view(),
                t2.view(),
                f,
                &RemapConfig::default(),
                5,
            )
            .unwrap()
            .mean_distance
        })
        .collect()
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

/// Gated on the projection setup with transforms alone. Noisy variants are
/// printed for context only.
fn remap_sweep() -> Verdict {
    let cfg = config(&["artifacts=false"]);
    let graph = experiment_graph(&cfg).unwrap();
    let ctx = TrialContext::build(&cfg, &graph, 0).unwrap();
    let kinds = [
        TransformKind::Affine,
        TransformKind::Shuffle,
        TransformKind::AffineShuffle,
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in kinds {
        let dists = remap_curve(&ctx, &cfg, Setup::C, 0.0, kind);
        pass &= non_increasing(&dists);
        let shown: Vec<String> = dists.iter().map(|x| format!("{x:.1e}")).collect();
        parts.push(format!("{kind}: [{}]", shown.join(" ")));
    }
    for setup in [Setup::C, Setup::B] {
        let ok = kinds
            .iter()
            .filter(|&&k| non_increasing(&remap_curve(&ctx, &cfg, setup, 0.5, k)))
            .count();
        parts.push(format!(
            "context: {setup} with sigma 0.5 monotone for {ok}/3"
        ));
    }
    verdict(pass, parts.join("; "))
}

fn latency() -> Verdict {
    let cfg = config(&[
        "graph.n=3000",
        "graph.blocks=3",
        "graph.p_in=0.004",
        "graph.p_out=0.0004",
        "graph.features=500",
        "split.train=0.4",
        "split.query=0.3",
        "community.k=300",
        "artifacts=false",
    ]);
    let report = bench(&cfg, 10_000, Setup::B).expect("bench");
    let inc = report.relative_increase_pct();
    verdict(
        inc <= 10.0 && report.k == 300,
        format!(
            "K={} none {:.2}us (p99 {:.2}), adage {:.2}us (p99 {:.2}), increase {inc:.2}%",
            report.k,
            report.none_mean_us,
            report.none_p99_us,
            report.adage_mean_us,
            report.adage_p99_us
        ),
    )
}

fn reproducibility(first: &RunOutcome, root: &Path) -> Verdict {
    let again = run(&efficacy_config(&root.join("again"))).expect("rerun");
    let mut seq = efficacy_config(&root.join("sequential"));
    seq.parallel = false;
    let seq = run(&seq).expect("sequential rerun");
    let read = |o: &RunOutcome| std::fs::read(&o.metrics_path).unwrap();
    let (a, b, c) = (read(first), read(&again), read(&seq));
    verdict(
        a == b && a == c,
        format!(
            "{} bytes; rerun identical={}, sequential identical={}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let dir = tempfile::tempdir().expect("tempdir");
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let took = start.elapsed();
        let pass = v.pass && took <= limit;
        failures += usize::from(!pass);
        println!(
            "{} criterion {id:>2} {name} ({:.2}s, limit {}s): {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs(),
            v.detail
        );
    };
    let secs = Duration::from_secs;
    report(1, "calibrator exactness", secs(1), &mut calibrators);
    report(2, "flip-rate statistics", secs(5), &mut flip_rates);
    report(3, "oracle equivalences", secs(30), &mut oracles);
    let mut outcome = None;
    report(4, "defense efficacy", secs(180), &mut || {
        let out = run(&efficacy_config(&dir.path().join("efficacy"))).expect("efficacy run");
        let v = efficacy(&out);
        outcome = Some(out);
        v
    });
    let out = outcome.expect("efficacy outcome");
    report(5, "utility preservation", secs(180), &mut || utility(&out));
    report(
        6,
        "diversity separation",
        secs(30),
        &mut diversity_separation,
    );
    report(7, "averaging resistance", secs(60), &mut averaging);
    report(8, "static-noise baseline", secs(180), &mut || {
        static_noise(&out)
    });
    report(9, "sybil remap monotonicity", secs(120), &mut remap_sweep);
    report(10, "latency overhead", secs(60), &mut latency);
    report(11, "reproducibility", secs(180), &mut || {
        reproducibility(&out, dir.path())
    });
    println!("{} of 11 criteria passed", 11 - failures);
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
