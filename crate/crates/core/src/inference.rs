//! Sum-product loopy belief propagation on the pairwise factor graph, an
//! exhaustive enumerator for small instances, and MAP label extraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{HeterogeneousGraph, Label, TieBreak};
use crate::influence::InfluenceScores;
use crate::model::{Block, FactorSkeleton, Labeling, ModelError, ModelParams};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("no influence score for user {0:?}")]
    MissingInfluence(String),
    #[error("evidence labeling does not match the graph")]
    EvidenceMismatch,
    #[error("{free} free variables exceed the enumeration limit {limit}")]
    TooLarge { free: usize, limit: usize },
    #[error("invalid lbp config: {0}")]
    InvalidConfig(String),
}

impl From<ModelError> for InferenceError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MissingInfluence(id) => InferenceError::MissingInfluence(id),
            _ => InferenceError::EvidenceMismatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    User,
    Tweet,
}

impl VarKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarKind::User => "user",
            VarKind::Tweet => "tweet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub id: String,
    pub kind: VarKind,
}

/// A pairwise factor; `log_potential[x_a][x_b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFactor {
    pub a: usize,
    pub b: usize,
    pub log_potential: Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraphView {
    pub variables: Vec<Variable>,
    /// Clamped label per variable.
    pub evidence: Vec<Option<Label>>,
    pub factors: Vec<PairFactor>,
}

impl FactorGraphView {
    /// Anonymous user variables `x0, x1, ...` with the given evidence.
    pub fn anonymous(evidence: Vec<Option<Label>>, factors: Vec<PairFactor>) -> Self {
        let variables = (0..evidence.len())
            .map(|i| Variable {
                id: format!("x{i}"),
                kind: VarKind::User,
            })
            .collect();
        Self {
            variables,
            evidence,
            factors,
        }
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn free_count(&self) -> usize {
        self.evidence.iter().filter(|e| e.is_none()).count()
    }

    /// Sum of factor log-potentials under a complete assignment.
    pub fn score(&self, labels: &[Label]) -> f64 {
        self.factors
            .iter()
            .map(|f| f.log_potential[labels[f.a].index()][labels[f.b].index()])
            .sum()
    }
}

/// One factor per authorship pair and per ordered typed adjacency entry,
/// oriented with the bracket owner first. Evidence comes from the observed
/// entries of `evidence`.
pub fn build_factor_graph(
    graph: &HeterogeneousGraph,
    params: &ModelParams,
    influence: &InfluenceScores,
    evidence: &Labeling,
) -> Result<FactorGraphView, InferenceError> {
    if !evidence.covers(graph) {
        return Err(InferenceError::EvidenceMismatch);
    }
    let skeleton = FactorSkeleton::new(graph, params, influence)?;
    let phi = params.to_vector();
    let factors = skeleton
        .factors()
        .iter()
        .map(|f| {
            let mut m = [[0.0; 2]; 2];
            for k in Label::BOTH {
                for l in Label::BOTH {
                    m[k.index()][l.index()] = f.log_potential(&phi, k, l);
                }
            }
            PairFactor {
                a: f.a,
                b: f.b,
                log_potential: m,
            }
        })
        .collect();
    let variables = graph
        .users()
        .iter()
        .map(|u| Variable {
            id: u.id.clone(),
            kind: VarKind::User,
        })
        .chain(graph.tweets().iter().map(|t| Variable {
            id: t.id.clone(),
            kind: VarKind::Tweet,
        }))
        .collect();
    let ev = (0..evidence.len())
        .map(|v| evidence.is_observed(v).then(|| evidence.get(v)))
        .collect();
    Ok(FactorGraphView {
        variables,
        evidence: ev,
        factors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbpConfig {
    pub max_iterations: usize,
    /// Stop once the largest change of a normalized log-message is below this.
    pub tolerance: f64,
    /// Weight on the previous message, interpolated in log space.
    pub damping: f64,
    pub tie_break: TieBreak,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            damping: 0.5,
            tie_break: TieBreak::PreferPositive,
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(InferenceError::InvalidConfig(format!(
                "damping must be in [0,1), got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub variables: Vec<Variable>,
    /// `(P(label = 0), P(label = 1))` per variable.
    pub probs: Vec<[f64; 2]>,
    pub clamped: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
}

impl Marginals {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn user_count(&self) -> usize {
        self.variables
            .iter()
            .take_while(|v| v.kind == VarKind::User)
            .count()
    }

    /// Rows `variable_id, kind, p0, p1, clamped_flag`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for ((v, p), c) in self.variables.iter().zip(&self.probs).zip(&self.clamped) {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", v.id, v.kind.as_str(), p[0], p[1], u8::from(*c));
        }
        s
    }
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn normalize_log(m: [f64; 2]) -> [f64; 2] {
    let z = log_sum_exp2(m[0], m[1]);
    [m[0] - z, m[1] - z]
}

fn delta(label: Label) -> [f64; 2] {
    let mut m = [f64::NEG_INFINITY; 2];
    m[label.index()] = 0.0;
    m
}

fn belief_from_log(m: [f64; 2]) -> [f64; 2] {
    let n = normalize_log(m);
    let p1 = n[1].exp();
    [1.0 - p1, p1]
}

/// Synchronous damped sum-product in log space. Messages start uniform,
/// clamped variables send point masses, and every message of an iteration
/// is computed from the previous iteration's messages. Non-convergence is
/// reported through [`Marginals::converged`].
pub fn run_lbp(fg: &FactorGraphView, config: &LbpConfig) -> Marginals {
    let n = fg.variable_count();
    let nf = fg.factors.len();
    // msgs[f][0]: factor f -> variable a, msgs[f][1]: factor f -> variable b
    let mut msgs = vec![[[0.0f64; 2]; 2]; nf];
    let mut next = msgs.clone();
    let mut incoming = vec![[0.0f64; 2]; n];
    let mut iterations = 0;
    let mut residual = 0.0;
    let mut converged = nf == 0;

    let to_factor = |incoming: &[[f64; 2]], msgs: &[[[f64; 2]; 2]], f: usize, side: usize, var: usize| {
        match fg.evidence[var] {
            Some(l) => delta(l),
            None => {
                let own = msgs[f][side];
                normalize_log([incoming[var][0] - own[0], incoming[var][1] - own[1]])
            }
        }
    };

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        incoming.iter_mut().for_each(|m| *m = [0.0; 2]);
        for (f, fac) in fg.factors.iter().enumerate() {
            for x in 0..2 {
                incoming[fac.a][x] += msgs[f][0][x];
                incoming[fac.b][x] += msgs[f][1][x];
            }
        }
        residual = 0.0f64;
        for (f, fac) in fg.factors.iter().enumerate() {
            let qa = to_factor(&incoming, &msgs, f, 0, fac.a);
            let qb = to_factor(&incoming, &msgs, f, 1, fac.b);
            let t = &fac.log_potential;
            let to_a = normalize_log([
                log_sum_exp2(t[0][0] + qb[0], t[0][1] + qb[1]),
                log_sum_exp2(t[1][0] + qb[0], t[1][1] + qb[1]),
            ]);
            let to_b = normalize_log([
                log_sum_exp2(t[0][0] + qa[0], t[1][0] + qa[1]),
                log_sum_exp2(t[0][1] + qa[0], t[1][1] + qa[1]),
            ]);
            for (side, fresh) in [(0, to_a), (1, to_b)] {
                let old = msgs[f][side];
                let d = config.damping;
                let mixed = normalize_log([
                    (1.0 - d) * fresh[0] + d * old[0],
                    (1.0 - d) * fresh[1] + d * old[1],
                ]);
                let change = (mixed[0] - old[0]).abs().max((mixed[1] - old[1]).abs());
                residual = residual.max(change);
                next[f][side] = mixed;
            }
        }
        std::mem::swap(&mut msgs, &mut next);
        converged = residual < config.tolerance;
    }

    incoming.iter_mut().for_each(|m| *m = [0.0; 2]);
    for (f, fac) in fg.factors.iter().enumerate() {
        for x in 0..2 {
            incoming[fac.a][x] += msgs[f][0][x];
            incoming[fac.b][x] += msgs[f][1][x];
        }
    }
    let probs = (0..n)
        .map(|v| match fg.evidence[v] {
            Some(Label::Negative) => [1.0, 0.0],
            Some(Label::Positive) => [0.0, 1.0],
            None => belief_from_log(incoming[v]),
        })
        .collect();

    Marginals {
        variables: fg.variables.clone(),
        probs,
        clamped: fg.evidence.iter().map(Option::is_some).collect(),
        converged,
        iterations,
        max_residual: residual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub marginals: Marginals,
    /// Highest-scoring complete assignment; ties go to the first found in
    /// enumeration order.
    pub map: Vec<Label>,
    pub map_score: f64,
    pub log_partition: f64,
}

pub const DEFAULT_EXACT_LIMIT: usize = 20;

/// Marginals and MAP by enumerating every assignment of the free variables.
pub fn exact_marginals(fg: &FactorGraphView, limit: usize) -> Result<ExactSolution, InferenceError> {
    let free: Vec<usize> = (0..fg.variable_count())
        .filter(|&v| fg.evidence[v].is_none())
        .collect();
    if free.len() > limit {
        return Err(InferenceError::TooLarge {
            free: free.len(),
            limit,
        });
    }
    let mut labels: Vec<Label> = fg
        .evidence
        .iter()
        .map(|e| e.unwrap_or(Label::Negative))
        .collect();
    let n = fg.variable_count();
    let mut log_mass = vec![[f64::NEG_INFINITY; 2]; n];
    let mut log_z = f64::NEG_INFINITY;
    let mut best = (f64::NEG_INFINITY, labels.clone());

    for mask in 0u64..(1u64 << free.len()) {
        for (bit, &v) in free.iter().enumerate() {
            labels[v] = Label::from_index(((mask >> bit) & 1) as usize);
        }
        let s = fg.score(&labels);
        log_z = log_sum_exp2(log_z, s);
        for (v, &l) in labels.iter().enumerate() {
            let slot = &mut log_mass[v][l.index()];
            *slot = log_sum_exp2(*slot, s);
        }
        if s > best.0 {
            best = (s, labels.clone());
        }
    }

    let probs = log_mass
        .iter()
        .map(|m| {
            let p1 = (m[1] - log_z).exp();
            [1.0 - p1, p1]
        })
        .collect();
    Ok(ExactSolution {
        marginals: Marginals {
            variables: fg.variables.clone(),
            probs,
            clamped: fg.evidence.iter().map(Option::is_some).collect(),
            converged: true,
            iterations: 0,
            max_residual: 0.0,
        },
        map: best.1,
        map_score: best.0,
        log_partition: log_z,
    })
}

/// Per-variable argmax of the beliefs; exact ties follow `config.tie_break`.
pub fn map_labels(marginals: &Marginals, config: &LbpConfig) -> Labeling {
    let labels = marginals
        .probs
        .iter()
        .map(|p| {
            if p[1] > p[0] {
                Label::Positive
            } else if p[0] > p[1] {
                Label::Negative
            } else {
                config.tie_break.label()
            }
        })
        .collect();
    Labeling::from_parts(marginals.user_count(), labels, marginals.clamped.clone())
}
