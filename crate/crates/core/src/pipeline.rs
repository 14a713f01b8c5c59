//! End-to-end runs: generate, rank, estimate or train, infer, evaluate.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimation::{
    direct_estimate, majority_vote_ensemble, train_ensemble, SampleRankConfig, TrainOutcome,
};
use crate::eval::{evaluate, tweet_majority_baseline, EvalReport, LabelMap};
use crate::graph::{HeterogeneousGraph, Label};
use crate::inference::{build_factor_graph, map_labels, run_lbp, LbpConfig, Marginals};
use crate::influence::{graph_influence, InfluenceScores, Normalization, PageRankConfig};
use crate::model::{Labeling, ModelParams};
use crate::synth::{generate, truth_tsv, SynthConfig};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Direct,
    Samplerank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub pagerank: PageRankConfig,
    pub normalization: Normalization,
    pub estimator: Estimator,
    pub samplerank: SampleRankConfig,
    pub lbp: LbpConfig,
    /// Share of seed users hidden from inference and used for scoring.
    pub holdout_fraction: f64,
    /// Seed for the holdout split.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            pagerank: PageRankConfig::default(),
            normalization: Normalization::MeanOne,
            estimator: Estimator::Direct,
            samplerank: SampleRankConfig::default(),
            lbp: LbpConfig::default(),
            holdout_fraction: 0.5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.synth.validate()?;
        self.samplerank.validate()?;
        self.lbp.validate()?;
        if !(0.0..=1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction {} outside [0,1]",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    /// The input graph with held-out seed labels removed.
    pub evidence_graph: HeterogeneousGraph,
    pub heldout: BTreeSet<String>,
}

/// Hides `round(fraction * n_c)` seeds of each class `c`, chosen uniformly.
pub fn split_seeds(graph: &HeterogeneousGraph, fraction: f64, seed: u64) -> HoldoutSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heldout = BTreeSet::new();
    for class in Label::BOTH {
        let mut members: Vec<&str> = graph
            .users()
            .iter()
            .filter(|u| u.seed_label == Some(class))
            .map(|u| u.id.as_str())
            .collect();
        let k = (fraction * members.len() as f64).round() as usize;
        members.shuffle(&mut rng);
        heldout.extend(members.into_iter().take(k).map(str::to_string));
    }
    HoldoutSplit {
        evidence_graph: graph.with_seeds_hidden(&heldout),
        heldout,
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    /// Mean beliefs across runs (a single run's beliefs when not ensembled).
    pub marginals: Marginals,
    /// Argmax labels, majority-voted across runs when ensembled.
    pub labeling: Labeling,
    pub params: Vec<ModelParams>,
    pub training: Vec<TrainOutcome>,
}

impl InferenceOutcome {
    pub fn user_predictions(&self, graph: &HeterogeneousGraph) -> LabelMap {
        self.labeling.user_map(graph)
    }
}

/// LBP with fixed parameters; seeds and labeled tweets are clamped.
pub fn infer_with_params(
    graph: &HeterogeneousGraph,
    params: &ModelParams,
    influence: &InfluenceScores,
    lbp: &LbpConfig,
) -> Result<InferenceOutcome, Error> {
    lbp.validate()?;
    let evidence = Labeling::evidence(graph, Label::Negative);
    let fg = build_factor_graph(graph, params, influence, &evidence)?;
    let marginals = run_lbp(&fg, lbp);
    let labeling = map_labels(&marginals, lbp);
    Ok(InferenceOutcome {
        marginals,
        labeling,
        params: vec![params.clone()],
        training: Vec::new(),
    })
}

/// Trains `config.ensemble_runs` SampleRank chains, runs LBP under each
/// learned parameter set, and majority-votes the argmax labels.
pub fn infer_ensemble(
    graph: &HeterogeneousGraph,
    influence: &InfluenceScores,
    config: &SampleRankConfig,
    lbp: &LbpConfig,
) -> Result<InferenceOutcome, Error> {
    let training = train_ensemble(graph, influence, config)?;
    let runs: Vec<InferenceOutcome> = training
        .iter()
        .map(|t| infer_with_params(graph, &t.params, influence, lbp))
        .collect::<Result<_, _>>()?;
    let labelings: Vec<Labeling> = runs.iter().map(|r| r.labeling.clone()).collect();
    let labeling = majority_vote_ensemble(&labelings)?;

    let mut marginals = runs[0].marginals.clone();
    let k = runs.len() as f64;
    for (v, p) in marginals.probs.iter_mut().enumerate() {
        let p1 = runs.iter().map(|r| r.marginals.probs[v][1]).sum::<f64>() / k;
        *p = [1.0 - p1, p1];
    }
    marginals.converged = runs.iter().all(|r| r.marginals.converged);
    marginals.iterations = runs.iter().map(|r| r.marginals.iterations).max().unwrap_or(0);
    marginals.max_residual = runs
        .iter()
        .map(|r| r.marginals.max_residual)
        .fold(0.0, f64::max);

    Ok(InferenceOutcome {
        marginals,
        labeling,
        params: training.iter().map(|t| t.params.clone()).collect(),
        training,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub graph: HeterogeneousGraph,
    pub truth: LabelMap,
    pub split: HoldoutSplit,
    pub influence: InfluenceScores,
    pub inference: InferenceOutcome,
    pub report: EvalReport,
    /// Tweet-majority baseline on the held-out users it covers.
    pub baseline: Option<EvalReport>,
}

/// Runs every stage in memory on a generated graph.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult, Error> {
    config.validate()?;
    let synth = generate(&config.synth)?;
    run_on_graph(config, synth.graph, synth.truth)
}

/// Runs rank, estimate or train, infer, and evaluate on an existing graph.
pub fn run_on_graph(
    config: &PipelineConfig,
    graph: HeterogeneousGraph,
    truth: LabelMap,
) -> Result<PipelineResult, Error> {
    let split = split_seeds(&graph, config.holdout_fraction, config.seed);
    let eg = &split.evidence_graph;
    let influence = graph_influence(eg, &config.pagerank, config.normalization)?;
    let inference = match config.estimator {
        Estimator::Direct => infer_with_params(eg, &direct_estimate(eg), &influence, &config.lbp)?,
        Estimator::Samplerank => infer_ensemble(eg, &influence, &config.samplerank, &config.lbp)?,
    };
    let preds = inference.user_predictions(eg);
    if split.heldout.is_empty() {
        return Err(Error::Config("holdout split left no users to evaluate".into()));
    }
    let report = evaluate(&preds, &truth, &split.heldout)?;
    let base = tweet_majority_baseline(eg, config.lbp.tie_break);
    let covered: BTreeSet<String> = split
        .heldout
        .iter()
        .filter(|id| base.predictions.contains_key(*id))
        .cloned()
        .collect();
    let baseline = if covered.is_empty() {
        None
    } else {
        Some(evaluate(&base.predictions, &truth, &covered)?)
    };
    Ok(PipelineResult {
        graph,
        truth,
        split,
        influence,
        inference,
        report,
        baseline,
    })
}

/// Predictions TSV over users: `user_id \t label`.
pub fn predictions_tsv(graph: &HeterogeneousGraph, labeling: &Labeling) -> String {
    crate::eval::labels_to_tsv(&labeling.user_map(graph))
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), Error> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

impl PipelineResult {
    /// Writes every artifact into `dir` and returns the paths written.
    pub fn write_outputs(&self, config: &PipelineConfig, dir: &Path) -> Result<Vec<PathBuf>, Error> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut out = Vec::new();
        write(dir, "graph.json", &self.graph.to_json(), &mut out)?;
        write(dir, "truth.tsv", &truth_tsv(&self.truth), &mut out)?;
        write(dir, "synth_config.json", &pretty_json(&config.synth), &mut out)?;
        write(
            dir,
            "heldout.tsv",
            &self.split.heldout.iter().map(|id| format!("{id}\n")).collect::<String>(),
            &mut out,
        )?;
        write(dir, "influence.tsv", &self.influence.to_tsv(), &mut out)?;
        if self.inference.params.len() == 1 {
            write(dir, "params.json", &self.inference.params[0].to_json(), &mut out)?;
        } else {
            for (i, p) in self.inference.params.iter().enumerate() {
                write(dir, &format!("params_run{i}.json"), &p.to_json(), &mut out)?;
            }
        }
        for (i, t) in self.inference.training.iter().enumerate() {
            write(dir, &format!("train_report_run{i}.json"), &t.report.to_json(), &mut out)?;
        }
        write(dir, "marginals.tsv", &self.inference.marginals.to_tsv(), &mut out)?;
        write(
            dir,
            "predictions.tsv",
            &predictions_tsv(&self.split.evidence_graph, &self.inference.labeling),
            &mut out,
        )?;
        write(dir, "report.json", &self.report.to_json(), &mut out)?;
        if let Some(b) = &self.baseline {
            write(dir, "baseline_report.json", &b.to_json(), &mut out)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified() {
        let out = generate(&SynthConfig::default()).unwrap();
        let split = split_seeds(&out.graph, 0.5, 3);
        for class in Label::BOTH {
            let seeds = out.graph.users().iter().filter(|u| u.seed_label == Some(class)).count();
            let held = split.heldout.iter().filter(|id| out.truth[*id] == class).count();
            assert_eq!(held, (0.5 * seeds as f64).round() as usize);
        }
        for id in &split.heldout {
            let i = split.evidence_graph.user_idx(id).unwrap();
            assert!(!split.evidence_graph.is_seed(i));
            assert!(out.graph.is_seed(i));
        }
    }

    #[test]
    fn direct_pipeline_runs() {
        let res = run_pipeline(&PipelineConfig::default()).unwrap();
        assert!(res.report.population > 0);
        assert!(res.baseline.is_some());
        // Visible seeds stay clamped in the predictions.
        for (i, u) in res.split.evidence_graph.users().iter().enumerate() {
            if let Some(l) = u.seed_label {
                assert_eq!(res.inference.labeling.user(i), l);
            }
        }
    }
}
