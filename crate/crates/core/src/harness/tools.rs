use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::run::METRICS_HEADER;
use super::trial::{experiment_graph, stage_seed, TrialContext};
use crate::attack::select_random;
use crate::defense::{flip_probability, noise_sigma, AccountState, DefenseMode, Setup};
use crate::error::{invalid, Error, Result};

/// Number of `τ` samples per calibration curve (`τ = 0, 0.01, …, 1`).
pub const CALIBRATION_POINTS: usize = 101;

/// Noise-curve parameters `(α, β, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// Long-form CSV `curve,eta,alpha,beta,lambda,tau,value` with `flip` rows per
/// `η` and `noise` rows per parameter triple. Unused parameters are `NA`.
pub fn calibration_csv(etas: &[f64], noise: &[NoiseParams]) -> Result<String> {
    let mut out = String::from("curve,eta,alpha,beta,lambda,tau,value\n");
    let tau = |i: usize| i as f64 / (CALIBRATION_POINTS - 1) as f64;
    for &eta in etas {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(invalid(format!("eta must be positive, got {eta}")));
        }
        for i in 0..CALIBRATION_POINTS {
            let t = tau(i);
            writeln!(out, "flip,{eta},NA,NA,NA,{t},{}", flip_probability(t, eta)?).unwrap();
        }
    }
    for p in noise {
        for i in 0..CALIBRATION_POINTS {
            let t = tau(i);
            let v = noise_sigma(t, p.alpha, p.beta, p.lambda)?;
            writeln!(out, "noise,NA,{},{},{},{t},{v}", p.alpha, p.beta, p.lambda).unwrap();
        }
    }
    Ok(out)
}

/// `τ` after every query of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub trial: usize,
    pub stream: &'static str,
    pub tau: Vec<f64>,
}

impl Trajectory {
    pub fn final_tau(&self) -> f64 {
        self.tau.last().copied().unwrap_or(0.0)
    }
}

fn trajectory(
    trial: usize,
    stream: &'static str,
    communities: impl Iterator<Item = usize>,
    k: usize,
) -> Result<Trajectory> {
    let mut state = AccountState::new(0);
    let tau = communities
        .map(|c| state.record_query(c, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { trial, stream, tau })
}

/// Per trial: a random attacker over the query graph at the first `δ` of the
/// config, and a benign stream cycling through the largest test community,
/// with the same number of queries.
pub fn diversity(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let graph = experiment_graph(cfg).map_err(|e| e.at_stage("graph"))?;
    let delta = cfg.deltas[0];
    let mut out = Vec::with_capacity(2 * cfg.trials);
    for t in 0..cfg.trials {
        let ctx = TrialContext::build(cfg, &graph, t)?;
        let k = ctx.communities.k();
        let nodes = select_random(
            ctx.query(),
            delta,
            stage_seed(cfg, &format!("attack:{delta}:random"), t),
        )
        .map_err(|e| e.at_stage("attack"))?;
        out.push(trajectory(
            t,
            "attacker",
            nodes.iter().map(|&v| ctx.query_view[v]),
            k,
        )?);
        let members = ctx.test_members(ctx.largest_test_community());
        let benign = members
            .iter()
            .cycle()
            .take(nodes.len())
            .map(|&v| ctx.test_membership[v]);
        out.push(trajectory(t, "downstream", benign, k)?);
    }
    Ok(out)
}

pub fn diversity_csv(trajectories: &[Trajectory]) -> String {
    let mut out = String::from("trial,stream,query,tau\n");
    for tr in trajectories {
        for (i, tau) in tr.tau.iter().enumerate() {
            writeln!(out, "{},{},{},{tau}", tr.trial, tr.stream, i + 1).unwrap();
        }
    }
    out
}

/// Latency comparison of the undefended and defended serving paths.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub calls: usize,
    pub k: usize,
    pub setup: Setup,
    pub none_mean_us: f64,
    pub none_p99_us: f64,
    pub adage_mean_us: f64,
    pub adage_p99_us: f64,
}

impl BenchReport {
    /// Mean latency increase of the defended path, in percent.
    pub fn relative_increase_pct(&self) -> f64 {
        100.0 * (self.adage_mean_us - self.none_mean_us) / self.none_mean_us
    }

    pub fn to_text(&self) -> String {
        format!(
            "calls={}\nK={}\nsetup={}\nnone_mean_us={:.3}\nnone_p99_us={:.3}\nadage_mean_us={:.3}\nadage_p99_us={:.3}\nrelative_increase={:.2}%\n",
            self.calls,
            self.k,
            self.setup,
            self.none_mean_us,
            self.none_p99_us,
            self.adage_mean_us,
            self.adage_p99_us,
            self.relative_increase_pct()
        )
    }
}

fn mean_p99(mut samples: Vec<f64>) -> (f64, f64) {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    let idx = ((samples.len() as f64 * 0.99).ceil() as usize).clamp(1, samples.len()) - 1;
    (mean, samples[idx])
}

/// Times `calls` respond calls per mode on the trial-0 deployment. The
/// defended account is warmed on every query node first; calls of the two
/// modes are interleaved and alternate which goes first.
pub fn bench(cfg: &ExperimentConfig, calls: usize, setup: Setup) -> Result<BenchReport> {
    if calls == 0 {
        return Err(invalid("bench needs at least one call"));
    }
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let graph = experiment_graph(cfg).map_err(|e| e.at_stage("graph"))?;
    let ctx = TrialContext::build(cfg, &graph, 0)?;
    let plain = ctx.defense(cfg, DefenseMode::None)?;
    let guarded = ctx.defense(cfg, DefenseMode::Adage)?;
    let g = ctx.query();
    let n = g.node_count();
    for v in 0..n {
        guarded.respond("bench", g, v, setup)?;
        plain.respond("bench", g, v, setup)?;
    }
    let mut none_t = Vec::with_capacity(calls);
    let mut adage_t = Vec::with_capacity(calls);
    let time = |d: &crate::defense::Defense, v: usize, out: &mut Vec<f64>| -> Result<()> {
        let start = Instant::now();
        let served = d.respond("bench", g, v, setup)?;
        out.push(start.elapsed().as_secs_f64() * 1e6);
        std::hint::black_box(served);
        Ok(())
    };
    for i in 0..calls {
        let v = i % n;
        if i % 2 == 0 {
            time(&plain, v, &mut none_t)?;
            time(&guarded, v, &mut adage_t)?;
        } else {
            time(&guarded, v, &mut adage_t)?;
            time(&plain, v, &mut none_t)?;
        }
    }
    let (none_mean_us, none_p99_us) = mean_p99(none_t);
    let (adage_mean_us, adage_p99_us) = mean_p99(adage_t);
    Ok(BenchReport {
        calls,
        k: ctx.communities.k(),
        setup,
        none_mean_us,
        none_p99_us,
        adage_mean_us,
        adage_p99_us,
    })
}

/// Mean and sample standard deviation of one metric over a cell's trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, std })
    }
}

/// Aggregated metrics of one (experiment, setup, mode, δ, REP, strategy) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub key: [String; 6],
    pub trials: usize,
    /// surr_acc, surr_fid, c1_acc, c2_acc, c3_acc, final_tau; `None` when all NA.
    pub stats: [Option<Stat>; 6],
}

const REPORT_METRICS: [&str; 6] = [
    "surr_acc",
    "surr_fid",
    "c1_acc",
    "c2_acc",
    "c3_acc",
    "final_tau",
];

/// Groups metrics.csv rows by cell, keeping first-appearance order.
pub fn summarize(csv: &str, path: &Path) -> Result<Vec<CellSummary>> {
    let mut lines = csv.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "expected the metrics.csv header")),
    }
    let mut order: Vec<[String; 6]> = Vec::new();
    let mut values: BTreeMap<[String; 6], (usize, [Vec<f64>; 6])> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 14 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 14 columns, found {}", cells.len()),
            ));
        }
        let key = [0, 2, 3, 4, 5, 6].map(|c| cells[c].to_string());
        let entry = values.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, Default::default())
        });
        entry.0 += 1;
        for (slot, col) in [7, 8, 9, 10, 11, 12].into_iter().enumerate() {
            if cells[col] == "NA" {
                continue;
            }
            let x: f64 = cells[col]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad number `{}`", cells[col])))?;
            entry.1[slot].push(x);
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let (trials, cols) = &values[&key];
            CellSummary {
                trials: *trials,
                stats: std::array::from_fn(|i| Stat::of(&cols[i])),
                key,
            }
        })
        .collect())
}

/// Table with one line per cell and `mean±std` entries in percent
/// (`final_tau` stays a fraction).
pub fn report_table(cells: &[CellSummary]) -> String {
    let mut out = String::from("experiment\tsetup\tmode\tdelta\trep\tstrategy\ttrials");
    for m in REPORT_METRICS {
        write!(out, "\t{m}").unwrap();
    }
    out.push('\n');
    for c in cells {
        write!(out, "{}\t{}", c.key.join("\t"), c.trials).unwrap();
        for (i, s) in c.stats.iter().enumerate() {
            let scale = if i == 5 { 1.0 } else { 100.0 };
            match s {
                Some(s) if i == 5 => {
                    write!(out, "\t{:.3}±{:.3}", s.mean * scale, s.std * scale).unwrap()
                }
                Some(s) => write!(out, "\t{:.2}±{:.2}", s.mean * scale, s.std * scale).unwrap(),
                None => out.push_str("\tNA"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn report(metrics: &Path) -> Result<String> {
    Ok(report_table(&summarize(
        &fs::read_to_string(metrics)?,
        metrics,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_grid() {
        let csv = calibration_csv(
            &[10.0],
            &[NoiseParams {
                alpha: 1.0,
                beta: 0.9,
                lambda: 1e-6,
            }],
        )
        .unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * CALIBRATION_POINTS);
        assert_eq!(lines[1 + 50], "flip,10,NA,NA,NA,0.5,0.5");
        let at_beta = lines[1 + CALIBRATION_POINTS + 90];
        let v: f64 = at_beta.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 0.999999).abs() < 1e-12, "{at_beta}");
        assert!(calibration_csv(&[0.0], &[]).is_err());
    }

    #[test]
    fn percentile() {
        let (m, p) = mean_p99((1..=100).map(f64::from).collect());
        assert_eq!(m, 50.5);
        assert_eq!(p, 99.0);
    }

    #[test]
    fn summary_uses_sample_std() {
        let csv = format!(
            "{METRICS_HEADER}\ne,0,A,adage,0.25,1,random,0.4,0.5,1,1,NA,0.5,NA\ne,1,A,adage,0.25,1,random,0.6,0.5,0.9,1,NA,0.7,NA\ne,0,A,none,0.25,1,random,0.9,0.95,1,1,NA,0.5,NA\n"
        );
        let cells = summarize(&csv, Path::new("m.csv")).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].key[2], "adage");
        let acc = cells[0].stats[0].unwrap();
        assert!((acc.mean - 0.5).abs() < 1e-12);
        assert!((acc.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(cells[0].stats[4].is_none());
        let table = report_table(&cells);
        assert!(table.contains("50.00±14.14"), "{table}");
    }
}
