use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adage::attack::{AttackPlan, Strategy};
use adage::community::modularity;
use adage::defense::{DefenseMode, Setup};
use adage::graph::{generate_sbm, save_graph, SbmParams};
use adage::harness::{
    account_name, attack_cell, bench, calibration_csv, diversity, diversity_csv, experiment_graph,
    report, run, stage_seed, ExperimentConfig, NoiseParams, TrialContext,
};
use adage::model::save_model;
use adage::par::Exec;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adage",
    version,
    about = "Query-diversity defense and extraction-attack simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrialArgs {
    /// Experiment config (flat key=value).
    config: PathBuf,
    /// Trial index whose seeds are used.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment and write metrics.csv plus artifacts.
    Run {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample the flip and noise calibration curves on τ = 0, 0.01, …, 1.
    Calibrate {
        /// Comma-separated η values.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
        eta: Vec<f64>,
        /// Comma-separated α:β:λ triples.
        #[arg(long, value_delimiter = ',', default_value = "1:0.9:1e-6")]
        noise: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// τ after every query for a random attacker and a single-community user.
    Diversity {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Latency of respond with and without the defense.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        calls: usize,
        #[arg(long, default_value = "B")]
        setup: Setup,
    },
    /// Write a stochastic-block-model graph as edges.txt, features.csv, labels.txt.
    GenGraph {
        #[arg(long, default_value_t = 900)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, default_value_t = 0.05)]
        p_in: f64,
        #[arg(long, default_value_t = 0.002)]
        p_out: f64,
        #[arg(long, default_value_t = 32)]
        features: usize,
        #[arg(long, default_value_t = 5.0)]
        shift: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the target model of one trial and save it.
    Train {
        #[command(flatten)]
        trial: TrialArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Detect, coerce and save the defender's communities of one trial.
    Communities {
        #[command(flatten)]
        trial: TrialArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a single attack against one deployment and print its scores.
    Attack {
        #[command(flatten)]
        trial: TrialArgs,
        #[arg(long, default_value = "adage")]
        mode: DefenseMode,
        #[arg(long, default_value = "B")]
        setup: Setup,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value = "random")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        rep: usize,
        /// Save the query/response transcript as CSV.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Aggregate metrics.csv into mean±std per cell.
    Report { metrics: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn noise_params(spec: &str) -> Result<NoiseParams> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, l] = parts.as_slice() else {
        bail!("noise parameters must look like α:β:λ, got `{spec}`");
    };
    Ok(NoiseParams {
        alpha: a.parse().with_context(|| format!("bad α in `{spec}`"))?,
        beta: b.parse().with_context(|| format!("bad β in `{spec}`"))?,
        lambda: l.parse().with_context(|| format!("bad λ in `{spec}`"))?,
    })
}

fn trial_context(args: &TrialArgs) -> Result<(ExperimentConfig, TrialContext)> {
    let cfg = load(&args.config)?;
    cfg.validate()?;
    if args.trial >= cfg.trials {
        bail!("trial {} outside 0..{}", args.trial, cfg.trials);
    }
    let graph = experiment_graph(&cfg)?;
    let ctx = TrialContext::build(&cfg, &graph, args.trial)?;
    Ok((cfg, ctx))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, output } => {
            let mut cfg = load(&config)?;
            if let Some(o) = output {
                cfg.output = o;
            }
            let out = run(&cfg)?;
            println!(
                "{} rows written to {}",
                out.rows.len(),
                out.metrics_path.display()
            );
        }
        Command::Calibrate { eta, noise, output } => {
            let params = noise
                .iter()
                .map(|s| noise_params(s))
                .collect::<Result<Vec<_>>>()?;
            emit(&calibration_csv(&eta, &params)?, output.as_deref())?;
        }
        Command::Diversity { config, output } => {
            let tr = diversity(&load(&config)?)?;
            emit(&diversity_csv(&tr), output.as_deref())?;
        }
        Command::Bench {
            config,
            calls,
            setup,
        } => {
            print!("{}", bench(&load(&config)?, calls, setup)?.to_text());
        }
        Command::GenGraph {
            n,
            blocks,
            p_in,
            p_out,
            features,
            shift,
            seed,
            out,
        } => {
            let g = generate_sbm(
                &SbmParams::new(n, blocks, p_in, p_out, features, shift),
                seed,
            )?;
            fs::create_dir_all(&out)?;
            let labels = out.join("labels.txt");
            save_graph(
                &g,
                &out.join("edges.txt"),
                &out.join("features.csv"),
                Some(&labels),
            )?;
            println!(
                "{} nodes, {} edges written to {}",
                g.node_count(),
                g.edge_count(),
                out.display()
            );
        }
        Command::Train { trial, out } => {
            let (_, ctx) = trial_context(&trial)?;
            save_model(&ctx.target, &out)?;
            let acc = ctx.target_predictions(Exec::default())?;
            let labels = ctx.test().require_labels("evaluation")?;
            let hits = acc.iter().zip(labels).filter(|(a, b)| a == b).count();
            println!("test accuracy {:.4}", hits as f64 / labels.len() as f64);
        }
        Command::Communities { trial, out } => {
            let (_, ctx) = trial_context(&trial)?;
            ctx.communities.save(&out)?;
            let q = modularity(&ctx.split.train.graph, ctx.communities.assignment())?;
            println!("K={} modularity {q:.4}", ctx.communities.k());
        }
        Command::Attack {
            trial,
            mode,
            setup,
            delta,
            strategy,
            rep,
            transcript,
        } => {
            let (cfg, ctx) = trial_context(&trial)?;
            let defense = ctx.defense(&cfg, mode)?;
            let plan = AttackPlan {
                setup,
                delta,
                strategy,
                rep,
                seed: stage_seed(&cfg, &format!("attack:{delta}:{strategy}"), trial.trial),
            };
            let reference = ctx.target_predictions(Exec::default())?;
            let account = account_name(
                "att",
                &[
                    setup.to_string(),
                    delta.to_string(),
                    strategy.to_string(),
                    rep.to_string(),
                ],
            );
            let cell = attack_cell(
                &cfg,
                &ctx,
                &defense,
                &plan,
                &account,
                &reference,
                Exec::default(),
            )?;
            if let Some(p) = transcript {
                cell.transcript.save(&p)?;
            }
            println!(
                "accuracy {:.4} fidelity {:.4} final_tau {:.4} queries {}",
                cell.evaluation.accuracy,
                cell.evaluation.fidelity,
                cell.final_tau,
                cell.transcript.nodes.len()
            );
        }
        Command::Report { metrics } => print!("{}", report(&metrics)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
