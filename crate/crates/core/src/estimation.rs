//! Parameter estimation: smoothed edge counting and SampleRank training.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{confusion, ConfusionCounts, EvalError, LabelMap};
use crate::graph::{HeterogeneousGraph, Label, LinkType};
use crate::influence::InfluenceScores;
use crate::model::{FactorSkeleton, Labeling, ModelError, ModelParams, PARAM_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("no free variables to flip")]
    NoFreeVariables,
    #[error("graph has no seed users")]
    NoSeedUsers,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("majority vote needs an odd, nonzero number of runs, got {0}")]
    EvenRunCount(usize),
    #[error("runs label different variable sets")]
    VariableSetMismatch,
    #[error("invalid samplerank config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per link type, `counts[g][k][l]` of stored ordered edges whose endpoints
/// are both seeds labeled `k` (source) and `l` (target).
pub fn labeled_edge_counts(graph: &HeterogeneousGraph) -> [[[usize; 2]; 2]; LinkType::COUNT] {
    let mut counts = [[[0usize; 2]; 2]; LinkType::COUNT];
    for (s, d, g) in graph.edge_indices() {
        if let (Some(k), Some(l)) = (graph.user(s).seed_label, graph.user(d).seed_label) {
            counts[g.index()][k.index()][l.index()] += 1;
        }
    }
    counts
}

/// Add-one smoothed share of each `(k, l)` pair among labeled edges of each
/// type with source label `k`; `mu` is the identity (users post tweets of
/// their own sentiment). Confidence weights take their defaults.
pub fn direct_estimate(graph: &HeterogeneousGraph) -> ModelParams {
    let counts = labeled_edge_counts(graph);
    let mut params = ModelParams {
        mu: [[1.0, 0.0], [0.0, 1.0]],
        ..ModelParams::default()
    };
    for g in LinkType::ALL {
        for k in 0..2 {
            let row = counts[g.index()][k];
            let denom = (row[0] + row[1] + 2) as f64;
            for l in 0..2 {
                params.lambda[g.index()][k][l] = (row[l] + 1) as f64 / denom;
            }
        }
    }
    params
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSampleRankConfig")]
pub struct SampleRankConfig {
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Consecutive steps without a parameter update that count as converged.
    pub convergence_patience: usize,
    pub rng_seed: u64,
    pub ensemble_runs: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSampleRankConfig {
    max_steps: usize,
    learning_rate: f64,
    convergence_patience: usize,
    rng_seed: u64,
    ensemble_runs: usize,
}

impl Default for RawSampleRankConfig {
    fn default() -> Self {
        let d = SampleRankConfig::default();
        Self {
            max_steps: d.max_steps,
            learning_rate: d.learning_rate,
            convergence_patience: d.convergence_patience,
            rng_seed: d.rng_seed,
            ensemble_runs: d.ensemble_runs,
        }
    }
}

impl TryFrom<RawSampleRankConfig> for SampleRankConfig {
    type Error = EstimationError;

    fn try_from(r: RawSampleRankConfig) -> Result<Self, Self::Error> {
        SampleRankConfig::new(
            r.max_steps,
            r.learning_rate,
            r.convergence_patience,
            r.rng_seed,
            r.ensemble_runs,
        )
    }
}

impl Default for SampleRankConfig {
    fn default() -> Self {
        Self {
            max_steps: 20_000,
            learning_rate: 0.1,
            convergence_patience: 500,
            rng_seed: 0,
            ensemble_runs: 5,
        }
    }
}

impl SampleRankConfig {
    pub fn new(
        max_steps: usize,
        learning_rate: f64,
        convergence_patience: usize,
        rng_seed: u64,
        ensemble_runs: usize,
    ) -> Result<Self, EstimationError> {
        let cfg = Self {
            max_steps,
            learning_rate,
            convergence_patience,
            rng_seed,
            ensemble_runs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |m: &str| Err(EstimationError::InvalidConfig(m.to_string()));
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.convergence_patience == 0 {
            return bad("convergence_patience must be at least 1");
        }
        if self.ensemble_runs.is_multiple_of(2) {
            return bad("ensemble_runs must be odd");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub perf: f64,
    pub updated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps_taken: usize,
    pub parameter_update_count: usize,
    /// Perf of the random starting labeling on the seed set.
    pub initial_perf: f64,
    pub final_perf: f64,
    pub converged: bool,
    pub perf_trace: Vec<StepRecord>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,perf,updated_flag\n");
        for r in &self.perf_trace {
            s.push_str(&format!("{},{},{}\n", r.step, r.perf, u8::from(r.updated)));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub labeling: Labeling,
    pub report: TrainReport,
}

fn pick_free<R: Rng + ?Sized>(free: &[usize], rng: &mut R) -> Result<usize, EstimationError> {
    if free.is_empty() {
        return Err(EstimationError::NoFreeVariables);
    }
    Ok(free[rng.random_range(0..free.len())])
}

/// A copy of `labeling` with one uniformly chosen free variable flipped,
/// together with the index of that variable.
pub fn sample_proposal<R: Rng + ?Sized>(
    labeling: &Labeling,
    rng: &mut R,
) -> Result<(Labeling, usize), EstimationError> {
    let var = pick_free(&labeling.free_variables(), rng)?;
    let mut out = labeling.clone();
    out.flip(var);
    Ok((out, var))
}

/// `Perf(y_new) - Perf(y_old)` on `eval_set`, with `Perf = Accuracy + MacroF1`
/// over user labels only.
pub fn rel_perf(
    graph: &HeterogeneousGraph,
    y_new: &Labeling,
    y_old: &Labeling,
    truth: &LabelMap,
    eval_set: &BTreeSet<String>,
) -> Result<f64, EstimationError> {
    if eval_set.is_empty() {
        return Err(EstimationError::EmptyEvalSet);
    }
    let new = confusion(&y_new.user_map(graph), truth, eval_set)?;
    let old = confusion(&y_old.user_map(graph), truth, eval_set)?;
    Ok(new.perf() - old.perf())
}

/// SampleRank: a single-flip chain over all users and unobserved tweets.
/// Parameters start from [`direct_estimate`] and take the step
/// `phi <- phi - eta * (F(Y_new) - F(Y))` whenever the performance change on
/// the seed users and the log-likelihood ratio have opposite nonzero signs.
/// The chain moves only on strict performance gains.
pub fn samplerank_train<R: Rng + ?Sized>(
    graph: &HeterogeneousGraph,
    influence: &InfluenceScores,
    config: &SampleRankConfig,
    rng: &mut R,
) -> Result<TrainOutcome, EstimationError> {
    config.validate()?;
    let seeds: Vec<Option<Label>> = graph.users().iter().map(|u| u.seed_label).collect();
    if seeds.iter().all(Option::is_none) {
        return Err(EstimationError::NoSeedUsers);
    }

    let mut y = Labeling::random_training(graph, rng);
    let mut params = direct_estimate(graph);
    let skeleton = FactorSkeleton::new(graph, &params, influence)?;
    let mut phi = params.to_vector();
    let free = y.free_variables();

    let mut counts = ConfusionCounts::default();
    for (i, s) in seeds.iter().enumerate() {
        if let Some(t) = s {
            counts.record(y.user(i), *t);
        }
    }
    let initial_perf = counts.perf();

    let mut grad = vec![0.0; PARAM_COUNT];
    let mut updates = 0;
    let mut since_update = 0;
    let mut converged = false;
    let mut steps = 0;
    let mut trace = Vec::with_capacity(config.max_steps.min(1 << 20));

    for step in 1..=config.max_steps {
        steps = step;
        let var = pick_free(&free, rng)?;

        let mut new_counts = counts;
        let rel = match seeds.get(var).copied().flatten() {
            Some(t) => {
                let cur = y.get(var);
                new_counts.adjust(cur, t, -1);
                new_counts.adjust(cur.flipped(), t, 1);
                new_counts.perf() - counts.perf()
            }
            None => 0.0,
        };
        let ratio = skeleton.flip_delta(&y, var, &phi);

        let updated = (rel > 0.0 && ratio < 0.0) || (rel < 0.0 && ratio > 0.0);
        if updated {
            grad.iter_mut().for_each(|x| *x = 0.0);
            skeleton.accumulate_flip_features(&y, var, 1.0, &mut grad);
            for (p, g) in phi.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            updates += 1;
            since_update = 0;
        } else {
            since_update += 1;
        }

        if since_update >= config.convergence_patience {
            converged = true;
            trace.push(StepRecord {
                step,
                perf: counts.perf(),
                updated,
            });
            break;
        }
        if rel > 0.0 {
            y.flip(var);
            counts = new_counts;
        }
        trace.push(StepRecord {
            step,
            perf: counts.perf(),
            updated,
        });
    }

    params = params.with_vector(&phi)?;
    Ok(TrainOutcome {
        params,
        labeling: y,
        report: TrainReport {
            steps_taken: steps,
            parameter_update_count: updates,
            initial_perf,
            final_perf: counts.perf(),
            converged,
            perf_trace: trace,
        },
    })
}

/// Runs `config.ensemble_runs` independent chains seeded `rng_seed + i`.
/// Output order follows the run index regardless of scheduling.
pub fn train_ensemble(
    graph: &HeterogeneousGraph,
    influence: &InfluenceScores,
    config: &SampleRankConfig,
) -> Result<Vec<TrainOutcome>, EstimationError> {
    config.validate()?;
    (0..config.ensemble_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(i as u64));
            samplerank_train(graph, influence, config, &mut rng)
        })
        .collect()
}

/// Per-variable majority label across an odd number of runs. Observation
/// flags are taken from the first run.
pub fn majority_vote_ensemble(runs: &[Labeling]) -> Result<Labeling, EstimationError> {
    if runs.len().is_multiple_of(2) {
        return Err(EstimationError::EvenRunCount(runs.len()));
    }
    let first = &runs[0];
    if runs
        .iter()
        .any(|r| r.len() != first.len() || r.user_count() != first.user_count())
    {
        return Err(EstimationError::VariableSetMismatch);
    }
    let half = runs.len() / 2;
    let labels = (0..first.len())
        .map(|v| {
            let pos = runs.iter().filter(|r| r.get(v) == Label::Positive).count();
            if pos > half {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    Ok(Labeling::from_parts(
        first.user_count(),
        labels,
        first.observed().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{TweetNode, UserNode, UserUserEdge};
    use Label::{Negative as N, Positive as P};

    fn seeded(ids: &[(&str, Option<Label>)]) -> Vec<UserNode> {
        ids.iter().map(|(i, l)| UserNode::new(*i, *l)).collect()
    }

    #[test]
    fn no_labeled_edges_gives_halves() {
        let g = HeterogeneousGraph::build(
            seeded(&[("a", Some(P)), ("b", None)]),
            vec![],
            vec![UserUserEdge::new("a", "b", LinkType::MutualFollow)],
        )
        .unwrap();
        let p = direct_estimate(&g);
        for block in p.lambda {
            assert_eq!(block, [[0.5, 0.5], [0.5, 0.5]]);
        }
        assert_eq!(p.mu, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!((p.w_labeled, p.w_unlabeled, p.w_relation), (1.0, 0.125, 0.6));
    }

    #[test]
    fn counted_shares() {
        // Three (1,1) and one (1,0) DirectedRetweet edges between seeds.
        let g = HeterogeneousGraph::build(
            seeded(&[("a", Some(P)), ("b", Some(P)), ("c", Some(P)), ("d", Some(P)), ("z", Some(N))]),
            vec![],
            vec![
                UserUserEdge::new("a", "b", LinkType::DirectedRetweet),
                UserUserEdge::new("a", "c", LinkType::DirectedRetweet),
                UserUserEdge::new("b", "d", LinkType::DirectedRetweet),
                UserUserEdge::new("c", "z", LinkType::DirectedRetweet),
            ],
        )
        .unwrap();
        let p = direct_estimate(&g);
        let g_ = LinkType::DirectedRetweet;
        assert_eq!(p.lambda(P, P, g_), 2.0 / 3.0);
        assert_eq!(p.lambda(P, N, g_), 1.0 / 3.0);
        assert_eq!(p.lambda(N, P, g_), 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(SampleRankConfig::new(0, 0.1, 10, 0, 5).is_err());
        assert!(SampleRankConfig::new(10, 0.0, 10, 0, 5).is_err());
        assert!(SampleRankConfig::new(10, 0.1, 10, 0, 4).is_err());
        assert!(SampleRankConfig::new(10, 0.1, 10, 0, 3).is_ok());
        let bad = r#"{"max_steps":0,"learning_rate":0.1,"convergence_patience":5,"rng_seed":1,"ensemble_runs":5}"#;
        assert!(serde_json::from_str::<SampleRankConfig>(bad).is_err());
    }

    #[test]
    fn proposal_flips_exactly_one_free_variable() {
        let mut y = Labeling::new(3, 2, N);
        y.set_observed(0, true);
        y.set_observed(1, true);
        y.set_observed(3, true);
        y.set_observed(4, true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (z, var) = sample_proposal(&y, &mut rng).unwrap();
        assert_eq!(var, 2);
        assert_eq!(z.get(2), P);
        let diffs = (0..5).filter(|&v| z.get(v) != y.get(v)).count();
        assert_eq!(diffs, 1);

        y.set_observed(2, true);
        assert_eq!(sample_proposal(&y, &mut rng).unwrap_err(), EstimationError::NoFreeVariables);
    }

    #[test]
    fn proposal_is_uniform() {
        let y = Labeling::new(5, 0, N);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = [0usize; 5];
        for _ in 0..10_000 {
            let (_, v) = sample_proposal(&y, &mut rng).unwrap();
            hits[v] += 1;
        }
        let chi2: f64 = hits
            .iter()
            .map(|&h| (h as f64 - 2000.0).powi(2) / 2000.0)
            .sum();
        // chi-square, 4 dof, 99.9% quantile
        assert!(chi2 < 18.47, "chi2 = {chi2}");
        for h in hits {
            assert!((h as f64 / 10_000.0 - 0.2).abs() <= 0.02);
        }
    }

    fn eight_users() -> (HeterogeneousGraph, LabelMap, BTreeSet<String>) {
        let truth: LabelMap = (0..8)
            .map(|i| (format!("u{i}"), if i % 3 == 0 { P } else { N }))
            .collect();
        let g = HeterogeneousGraph::build(
            truth.iter().map(|(id, l)| UserNode::new(id, Some(*l))).collect(),
            vec![],
            vec![],
        )
        .unwrap();
        let set = truth.keys().cloned().collect();
        (g, truth, set)
    }

    #[test]
    fn rel_perf_examples() {
        let (g, truth, set) = eight_users();
        let correct = Labeling::from_parts(8, g.users().iter().map(|u| u.seed_label.unwrap()).collect(), vec![false; 8]);
        let mut wrong = correct.clone();
        (0..8).for_each(|v| wrong.flip(v));
        assert_eq!(rel_perf(&g, &correct, &correct, &truth, &set).unwrap(), 0.0);
        assert_eq!(rel_perf(&g, &correct, &wrong, &truth, &set).unwrap(), 2.0);
        assert_eq!(
            rel_perf(&g, &correct, &wrong, &truth, &BTreeSet::new()).unwrap_err(),
            EstimationError::EmptyEvalSet
        );
    }

    #[test]
    fn rel_perf_matches_metric_oracle() {
        let (g, truth, set) = eight_users();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = Labeling::random_training(&g, &mut rng);
            let b = Labeling::random_training(&g, &mut rng);
            let perf = |y: &Labeling| {
                let m = y.user_map(&g);
                crate::eval::accuracy(&m, &truth, &set).unwrap()
                    + crate::eval::macro_f1(&m, &truth, &set).unwrap()
            };
            let got = rel_perf(&g, &a, &b, &truth, &set).unwrap();
            assert!((got - (perf(&a) - perf(&b))).abs() < 1e-15);
        }
    }

    #[test]
    fn already_optimal_start_never_moves() {
        // Two seeds of opposite classes and nothing else to flip.
        let g = HeterogeneousGraph::build(
            seeded(&[("a", Some(P)), ("b", Some(N))]),
            vec![TweetNode::new("t", "a", Some(P))],
            vec![UserUserEdge::new("a", "b", LinkType::MutualFollow)],
        )
        .unwrap();
        let inf = InfluenceScores::uniform(&g, 1.0);
        let cfg = SampleRankConfig::new(200, 0.1, 1000, 0, 1).unwrap();
        let mut optimal_starts = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = samplerank_train(&g, &inf, &cfg, &mut rng).unwrap();
            if out.report.initial_perf == 2.0 {
                optimal_starts += 1;
                assert!(out.report.perf_trace.iter().all(|r| r.perf == 2.0));
            }
            assert_eq!(out.report.final_perf, 2.0);
            assert_eq!(out.labeling.user_labels(), &[P, N]);
        }
        assert!(optimal_starts > 0);
    }

    #[test]
    fn no_seed_users_rejected() {
        let g = HeterogeneousGraph::build(seeded(&[("a", None)]), vec![], vec![]).unwrap();
        let inf = InfluenceScores::uniform(&g, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            samplerank_train(&g, &inf, &SampleRankConfig::default(), &mut rng).unwrap_err(),
            EstimationError::NoSeedUsers
        );
    }

    #[test]
    fn majority_vote() {
        let mk = |bits: &[u8]| {
            Labeling::from_parts(
                bits.len(),
                bits.iter().map(|&b| Label::from_index(b as usize)).collect(),
                vec![false; bits.len()],
            )
        };
        let a = mk(&[1, 0, 1]);
        assert_eq!(majority_vote_ensemble(&vec![a.clone(); 5]).unwrap(), a);
        let runs = [mk(&[1]), mk(&[1]), mk(&[1]), mk(&[0]), mk(&[0])];
        assert_eq!(majority_vote_ensemble(&runs).unwrap().get(0), P);
        assert_eq!(
            majority_vote_ensemble(&runs[..4]).unwrap_err(),
            EstimationError::EvenRunCount(4)
        );
        assert_eq!(
            majority_vote_ensemble(&[mk(&[1]), mk(&[1, 0]), mk(&[0])]).unwrap_err(),
            EstimationError::VariableSetMismatch
        );

        // Column-count oracle on a random 5 x 20 matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let matrix: Vec<Vec<u8>> = (0..5)
            .map(|_| (0..20).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        let runs: Vec<Labeling> = matrix.iter().map(|row| mk(row)).collect();
        let voted = majority_vote_ensemble(&runs).unwrap();
        for col in 0..20 {
            let ones: u8 = matrix.iter().map(|r| r[col]).sum();
            assert_eq!(voted.get(col).index(), usize::from(ones >= 3));
        }
    }
}
