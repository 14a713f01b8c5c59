use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sentigraph::estimation::{direct_estimate, train_ensemble, SampleRankConfig};
use sentigraph::eval::{evaluate, labels_from_tsv};
use sentigraph::inference::LbpConfig;
use sentigraph::influence::{graph_influence, PageRankConfig};
use sentigraph::pipeline::{
    infer_ensemble, infer_with_params, predictions_tsv, run_pipeline, split_seeds, Estimator,
    PipelineConfig,
};
use sentigraph::synth::{generate, truth_tsv, Homophily, SynthConfig};
use sentigraph::{HeterogeneousGraph, InfluenceScores, LinkType, ModelParams, Normalization};

mod exit;

#[derive(Parser)]
#[command(name = "sentigraph", version, about = "User-level sentiment over heterogeneous social graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph and its ground truth.
    Generate(GenerateArgs),
    /// Compute user influence scores with PageRank.
    Pagerank(PagerankArgs),
    /// Estimate parameters by smoothed counting over labeled edges.
    Estimate(EstimateArgs),
    /// Learn parameters with a single SampleRank chain.
    Train(TrainArgs),
    /// Infer user and tweet labels with loopy belief propagation.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Run generate, pagerank, estimate or train, infer and evaluate in one go.
    Pipeline(PipelineArgs),
    /// Repeat a run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON synth config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    positive_fraction: Option<f64>,
    /// Same-label link probability for mutual follows.
    #[arg(long)]
    intra: Option<f64>,
    /// Cross-label link probability for mutual follows.
    #[arg(long)]
    inter: Option<f64>,
    #[arg(long)]
    tweets_mean: Option<f64>,
    #[arg(long)]
    tweet_noise: Option<f64>,
    #[arg(long)]
    seed_fraction: Option<f64>,
    #[arg(long)]
    influence_skew: Option<f64>,
    #[arg(long)]
    topic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Graph JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Truth TSV output [default: <out>.truth.tsv]
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Raw,
    MeanOne,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Raw => Normalization::RawProbability,
            NormArg::MeanOne => Normalization::MeanOne,
        }
    }
}

#[derive(Args)]
struct PagerankArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Influence TSV output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    damping: f64,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "mean-one")]
    normalization: NormArg,
}

#[derive(Args, Clone, Copy)]
struct SplitArgs {
    /// Share of seed users hidden from estimation and inference.
    #[arg(long, default_value_t = 0.5)]
    holdout_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Params JSON output.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Clone, Copy)]
struct ChainArgs {
    #[arg(long, default_value_t = 20_000)]
    max_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    patience: usize,
    /// Chain seed; ensemble run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ChainArgs {
    fn config(&self, runs: usize) -> Result<SampleRankConfig> {
        Ok(SampleRankConfig::new(
            self.max_steps,
            self.learning_rate,
            self.patience,
            self.seed,
            runs,
        )?)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    influence: PathBuf,
    /// Params JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Train report JSON [default: <out>.report.json]
    #[arg(long)]
    report: Option<PathBuf>,
    /// Optional per-step CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Clone, Copy)]
struct LbpArgs {
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    /// Break exact 0.5 beliefs toward the negative label.
    #[arg(long)]
    prefer_negative: bool,
}

impl LbpArgs {
    fn config(&self) -> LbpConfig {
        LbpConfig {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            damping: self.damping,
            tie_break: if self.prefer_negative {
                sentigraph::TieBreak::PreferNegative
            } else {
                sentigraph::TieBreak::PreferPositive
            },
        }
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    influence: PathBuf,
    /// Params JSON; required unless --ensemble is given.
    #[arg(long, required_unless_present = "ensemble", conflicts_with = "ensemble")]
    params: Option<PathBuf>,
    /// Train N SampleRank chains (odd), infer under each, and majority-vote.
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    lbp: LbpArgs,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions TSV (id, label).
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// File of ids to score, one per line [default: every id in the truth file]
    #[arg(long)]
    eval_set: Option<PathBuf>,
    /// Report JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Direct,
    Samplerank,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Sets the graph, split and chain seeds at once.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    graph_seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// SampleRank chains to vote over (implies --estimator samplerank).
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    holdout_fraction: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct RerunArgs {
    manifest: PathBuf,
}

/// A fully resolved command: everything needed to reproduce its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
enum Job {
    Generate {
        synth: SynthConfig,
        out: PathBuf,
        truth: PathBuf,
    },
    Pagerank {
        graph: PathBuf,
        out: PathBuf,
        pagerank: PageRankConfig,
        normalization: Normalization,
    },
    Estimate {
        graph: PathBuf,
        out: PathBuf,
        holdout_fraction: f64,
        split_seed: u64,
    },
    Train {
        graph: PathBuf,
        influence: PathBuf,
        out: PathBuf,
        report: PathBuf,
        trace: Option<PathBuf>,
        samplerank: SampleRankConfig,
        holdout_fraction: f64,
        split_seed: u64,
    },
    Infer {
        graph: PathBuf,
        influence: PathBuf,
        params: Option<PathBuf>,
        samplerank: Option<SampleRankConfig>,
        lbp: LbpConfig,
        out_dir: PathBuf,
        holdout_fraction: f64,
        split_seed: u64,
    },
    Evaluate {
        predictions: PathBuf,
        truth: PathBuf,
        eval_set: Option<PathBuf>,
        out: PathBuf,
    },
    Pipeline {
        pipeline: PipelineConfig,
        out_dir: PathBuf,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    #[serde(flatten)]
    job: Job,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    version: String,
    duration_secs: f64,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(exit::Invalid::from_display)
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str, outputs: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

fn load_graph(path: &Path) -> Result<HeterogeneousGraph> {
    Ok(HeterogeneousGraph::load(path)?)
}

fn load_influence(path: &Path) -> Result<InfluenceScores> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    InfluenceScores::from_tsv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_params(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelParams::from_json(&text)
        .map_err(exit::Invalid::from_display)
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_labels(path: &Path) -> Result<sentigraph::eval::LabelMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    labels_from_tsv(&text)
        .map_err(exit::Invalid::from_display)
        .with_context(|| format!("parsing {}", path.display()))
}

fn log(stage: &str, msg: impl std::fmt::Display) {
    eprintln!("[{stage}] {msg}");
}

impl Job {
    fn name(&self) -> &'static str {
        match self {
            Job::Generate { .. } => "generate",
            Job::Pagerank { .. } => "pagerank",
            Job::Estimate { .. } => "estimate",
            Job::Train { .. } => "train",
            Job::Infer { .. } => "infer",
            Job::Evaluate { .. } => "evaluate",
            Job::Pipeline { .. } => "pipeline",
        }
    }

    fn manifest_path(&self) -> PathBuf {
        match self {
            Job::Generate { out, .. }
            | Job::Pagerank { out, .. }
            | Job::Estimate { out, .. }
            | Job::Train { out, .. }
            | Job::Evaluate { out, .. } => with_suffix(out, ".manifest.json"),
            Job::Infer { out_dir, .. } | Job::Pipeline { out_dir, .. } => out_dir.join("manifest.json"),
        }
    }

    fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        match self {
            Job::Generate { synth, .. } => {
                s.insert("graph".into(), synth.rng_seed);
            }
            Job::Estimate { split_seed, .. } => {
                s.insert("split".into(), *split_seed);
            }
            Job::Train {
                samplerank,
                split_seed,
                ..
            } => {
                s.insert("split".into(), *split_seed);
                s.insert("train".into(), samplerank.rng_seed);
            }
            Job::Infer {
                samplerank,
                split_seed,
                ..
            } => {
                s.insert("split".into(), *split_seed);
                if let Some(sr) = samplerank {
                    s.insert("train".into(), sr.rng_seed);
                }
            }
            Job::Pipeline { pipeline, .. } => {
                s.insert("graph".into(), pipeline.synth.rng_seed);
                s.insert("split".into(), pipeline.seed);
                if pipeline.estimator == Estimator::Samplerank {
                    s.insert("train".into(), pipeline.samplerank.rng_seed);
                }
            }
            Job::Pagerank { .. } | Job::Evaluate { .. } => {}
        }
        s
    }

    /// Executes the job, returning (inputs, outputs).
    fn execute(&self) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        match self {
            Job::Generate { synth, out, truth } => {
                let res = generate(synth)?;
                log(
                    "generate",
                    format_args!(
                        "{} users, {} tweets, {} links",
                        res.graph.user_count(),
                        res.graph.tweet_count(),
                        res.graph.edge_count()
                    ),
                );
                write_file(out, &res.graph.to_json(), &mut outputs)?;
                write_file(truth, &truth_tsv(&res.truth), &mut outputs)?;
            }
            Job::Pagerank {
                graph,
                out,
                pagerank,
                normalization,
            } => {
                inputs.push(graph.clone());
                let g = load_graph(graph)?;
                let scores = graph_influence(&g, pagerank, *normalization)?;
                let r = scores.report();
                log(
                    "pagerank",
                    format_args!("{} iterations, converged={}", r.iterations, r.converged),
                );
                write_file(out, &scores.to_tsv(), &mut outputs)?;
            }
            Job::Estimate {
                graph,
                out,
                holdout_fraction,
                split_seed,
            } => {
                inputs.push(graph.clone());
                let g = load_graph(graph)?;
                check_fraction(*holdout_fraction)?;
                let split = split_seeds(&g, *holdout_fraction, *split_seed);
                log("estimate", format_args!("{} seeds held out", split.heldout.len()));
                write_file(out, &direct_estimate(&split.evidence_graph).to_json(), &mut outputs)?;
            }
            Job::Train {
                graph,
                influence,
                out,
                report,
                trace,
                samplerank,
                holdout_fraction,
                split_seed,
            } => {
                inputs.extend([graph.clone(), influence.clone()]);
                let g = load_graph(graph)?;
                let inf = load_influence(influence)?;
                check_fraction(*holdout_fraction)?;
                let split = split_seeds(&g, *holdout_fraction, *split_seed);
                let cfg = SampleRankConfig {
                    ensemble_runs: 1,
                    ..*samplerank
                };
                let run = train_ensemble(&split.evidence_graph, &inf, &cfg)?.remove(0);
                let r = &run.report;
                log(
                    "train",
                    format_args!(
                        "{} steps, {} updates, perf {:.4} -> {:.4}",
                        r.steps_taken, r.parameter_update_count, r.initial_perf, r.final_perf
                    ),
                );
                write_file(out, &run.params.to_json(), &mut outputs)?;
                write_file(report, &r.to_json(), &mut outputs)?;
                if let Some(t) = trace {
                    write_file(t, &r.trace_csv(), &mut outputs)?;
                }
            }
            Job::Infer {
                graph,
                influence,
                params,
                samplerank,
                lbp,
                out_dir,
                holdout_fraction,
                split_seed,
            } => {
                inputs.extend([graph.clone(), influence.clone()]);
                let g = load_graph(graph)?;
                let inf = load_influence(influence)?;
                check_fraction(*holdout_fraction)?;
                let split = split_seeds(&g, *holdout_fraction, *split_seed);
                let eg = &split.evidence_graph;
                let outcome = match (params, samplerank) {
                    (Some(p), _) => {
                        inputs.push(p.clone());
                        infer_with_params(eg, &load_params(p)?, &inf, lbp)?
                    }
                    (None, Some(sr)) => infer_ensemble(eg, &inf, sr, lbp)?,
                    (None, None) => bail!(exit::Invalid("infer needs params or an ensemble".into())),
                };
                let m = &outcome.marginals;
                log(
                    "infer",
                    format_args!(
                        "{} variables, {} iterations, converged={}",
                        m.len(),
                        m.iterations,
                        m.converged
                    ),
                );
                write_file(&out_dir.join("marginals.tsv"), &m.to_tsv(), &mut outputs)?;
                write_file(
                    &out_dir.join("predictions.tsv"),
                    &predictions_tsv(eg, &outcome.labeling),
                    &mut outputs,
                )?;
                write_file(&out_dir.join("heldout.tsv"), &id_lines(&split.heldout), &mut outputs)?;
            }
            Job::Evaluate {
                predictions,
                truth,
                eval_set,
                out,
            } => {
                inputs.extend([predictions.clone(), truth.clone()]);
                let preds = load_labels(predictions)?;
                let truth_map = load_labels(truth)?;
                let set = match eval_set {
                    Some(p) => {
                        inputs.push(p.clone());
                        let text =
                            fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                        text.lines()
                            .map(str::trim)
                            .filter(|l| !l.is_empty())
                            .map(str::to_string)
                            .collect()
                    }
                    None => truth_map.keys().cloned().collect(),
                };
                let report = evaluate(&preds, &truth_map, &set)?;
                println!("{report}");
                write_file(out, &report.to_json(), &mut outputs)?;
            }
            Job::Pipeline { pipeline, out_dir } => {
                let res = run_pipeline(pipeline)?;
                log(
                    "pipeline",
                    format_args!(
                        "{} users, {} held out, lbp converged={}",
                        res.graph.user_count(),
                        res.split.heldout.len(),
                        res.inference.marginals.converged
                    ),
                );
                println!("{}", res.report);
                if let Some(b) = &res.baseline {
                    println!("baseline (tweet majority)\n{b}");
                }
                outputs.extend(res.write_outputs(pipeline, out_dir)?);
            }
        }
        Ok((inputs, outputs))
    }

    fn run(&self) -> Result<()> {
        let start = Instant::now();
        let (inputs, outputs) = self.execute()?;
        let manifest = RunManifest {
            job: self.clone(),
            inputs,
            outputs,
            seeds: self.seeds(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: start.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.manifest_path();
        write_file(&path, &text, &mut Vec::new())?;
        log(self.name(), format_args!("manifest written to {}", path.display()));
        Ok(())
    }
}

fn id_lines(ids: &std::collections::BTreeSet<String>) -> String {
    ids.iter().map(|id| format!("{id}\n")).collect()
}

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        bail!(exit::Invalid(format!("holdout fraction {f} outside [0,1]")));
    }
    Ok(())
}

fn resolve(command: Command) -> Result<Job> {
    Ok(match command {
        Command::Generate(a) => {
            let mut synth: SynthConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => SynthConfig::default(),
            };
            if let Some(v) = a.users {
                synth.n_users = v;
            }
            if let Some(v) = a.positive_fraction {
                synth.positive_fraction = v;
            }
            if a.intra.is_some() || a.inter.is_some() {
                let cur = synth
                    .link_probs
                    .get(&LinkType::MutualFollow)
                    .copied()
                    .unwrap_or(Homophily { intra: 0.0, inter: 0.0 });
                synth.link_probs.insert(
                    LinkType::MutualFollow,
                    Homophily {
                        intra: a.intra.unwrap_or(cur.intra),
                        inter: a.inter.unwrap_or(cur.inter),
                    },
                );
            }
            if let Some(v) = a.tweets_mean {
                synth.tweets_per_user_mean = v;
            }
            if let Some(v) = a.tweet_noise {
                synth.tweet_noise = v;
            }
            if let Some(v) = a.seed_fraction {
                synth.seed_fraction = v;
            }
            if a.influence_skew.is_some() {
                synth.influence_skew = a.influence_skew;
            }
            if let Some(v) = a.topic {
                synth.topic = v;
            }
            if let Some(v) = a.seed {
                synth.rng_seed = v;
            }
            let truth = a.truth.unwrap_or_else(|| with_suffix(&a.out, ".truth.tsv"));
            Job::Generate {
                synth,
                out: a.out,
                truth,
            }
        }
        Command::Pagerank(a) => Job::Pagerank {
            graph: a.graph,
            out: a.out,
            pagerank: PageRankConfig {
                damping: a.damping,
                tol: a.tol,
                max_iter: a.max_iter,
            },
            normalization: a.normalization.into(),
        },
        Command::Estimate(a) => Job::Estimate {
            graph: a.graph,
            out: a.out,
            holdout_fraction: a.split.holdout_fraction,
            split_seed: a.split.split_seed,
        },
        Command::Train(a) => {
            let report = a.report.unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
            Job::Train {
                graph: a.graph,
                influence: a.influence,
                out: a.out,
                report,
                trace: a.trace,
                samplerank: a.chain.config(1)?,
                holdout_fraction: a.split.holdout_fraction,
                split_seed: a.split.split_seed,
            }
        }
        Command::Infer(a) => {
            let lbp = a.lbp.config();
            lbp.validate()?;
            Job::Infer {
                graph: a.graph,
                influence: a.influence,
                params: a.params,
                samplerank: a.ensemble.map(|n| a.chain.config(n)).transpose()?,
                lbp,
                out_dir: a.out_dir,
                holdout_fraction: a.split.holdout_fraction,
                split_seed: a.split.split_seed,
            }
        }
        Command::Evaluate(a) => Job::Evaluate {
            predictions: a.predictions,
            truth: a.truth,
            eval_set: a.eval_set,
            out: a.out,
        },
        Command::Pipeline(a) => {
            let mut cfg: PipelineConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => PipelineConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.synth.rng_seed = s;
                cfg.seed = s;
                cfg.samplerank.rng_seed = s;
            }
            if let Some(s) = a.graph_seed {
                cfg.synth.rng_seed = s;
            }
            if let Some(s) = a.split_seed {
                cfg.seed = s;
            }
            if let Some(s) = a.train_seed {
                cfg.samplerank.rng_seed = s;
            }
            if let Some(n) = a.users {
                cfg.synth.n_users = n;
            }
            if let Some(e) = a.estimator {
                cfg.estimator = match e {
                    EstimatorArg::Direct => Estimator::Direct,
                    EstimatorArg::Samplerank => Estimator::Samplerank,
                };
            }
            if let Some(n) = a.ensemble {
                cfg.estimator = Estimator::Samplerank;
                cfg.samplerank.ensemble_runs = n;
            }
            if let Some(f) = a.holdout_fraction {
                cfg.holdout_fraction = f;
            }
            if let Some(v) = a.max_steps {
                cfg.samplerank.max_steps = v;
            }
            if let Some(v) = a.learning_rate {
                cfg.samplerank.learning_rate = v;
            }
            cfg.validate()?;
            Job::Pipeline {
                pipeline: cfg,
                out_dir: a.out_dir,
            }
        }
        Command::Rerun(a) => {
            let manifest: RunManifest = read_json(&a.manifest)?;
            manifest.job
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match resolve(cli.command).and_then(|job| job.run()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
