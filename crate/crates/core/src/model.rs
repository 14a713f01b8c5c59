//! Influence-weighted factor model over users and tweets.
//!
//! The unnormalized log-score of a complete assignment is
//!
//! ```text
//! sum_v p_v * [ sum_{t in tweets(v)} sum_{k,l} mu[k][l] * f_kl(y_v, y_t)
//!             + sum_g sum_{u in N_v(g)} sum_{k,l} lambda[k][l][g] * h_klg(y_v, y_u) ]
//! ```
//!
//! which is linear in the 36 parameters `phi = (mu, lambda)`. Every factor
//! is pairwise, so the model is materialized once as a [`FactorSkeleton`]
//! (one entry per authorship pair and per ordered typed adjacency entry,
//! each carrying its constant scale) and then evaluated under any `phi`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{HeterogeneousGraph, Label, LinkType};
use crate::influence::{InfluenceError, InfluenceScores};

/// 4 tweet parameters plus 4 per link type.
pub const PARAM_COUNT: usize = 4 + 4 * LinkType::COUNT;

pub const DEFAULT_W_LABELED: f64 = 1.0;
pub const DEFAULT_W_UNLABELED: f64 = 0.125;
pub const DEFAULT_W_RELATION: f64 = 0.6;

pub type Block = [[f64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("tweet {tweet:?} is not authored by {user:?}")]
    AuthorMismatch { user: String, tweet: String },
    #[error("{u:?} is not a {g} neighbor of {v:?}")]
    NotANeighbor { v: String, u: String, g: LinkType },
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown tweet {0:?}")]
    UnknownTweet(String),
    #[error("labeling does not cover the graph: expected {expected_users} users and {expected_tweets} tweets")]
    IncompleteLabeling {
        expected_users: usize,
        expected_tweets: usize,
    },
    #[error("no influence score for user {0:?}")]
    MissingInfluence(String),
    #[error("parameter vector must have {PARAM_COUNT} entries, got {0}")]
    BadVectorLength(usize),
}

impl From<InfluenceError> for ModelError {
    fn from(e: InfluenceError) -> Self {
        match e {
            InfluenceError::MissingInfluence(id) => ModelError::MissingInfluence(id),
            other => ModelError::MissingInfluence(other.to_string()),
        }
    }
}

/// Global factor weights plus the confidence weights used by the features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// User-tweet weights, `mu[k][l]`.
    pub mu: Block,
    /// User-user weights, stored `lambda[g][k][l]`.
    pub lambda: [Block; LinkType::COUNT],
    pub w_labeled: f64,
    pub w_unlabeled: f64,
    pub w_relation: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu: [[0.0; 2]; 2],
            lambda: [[[0.0; 2]; 2]; LinkType::COUNT],
            w_labeled: DEFAULT_W_LABELED,
            w_unlabeled: DEFAULT_W_UNLABELED,
            w_relation: DEFAULT_W_RELATION,
        }
    }
}

/// Position of `mu[k][l]` in the flat parameter vector.
pub fn mu_index(k: Label, l: Label) -> usize {
    k.index() * 2 + l.index()
}

/// Position of `lambda[k][l][g]` in the flat parameter vector.
pub fn lambda_index(k: Label, l: Label, g: LinkType) -> usize {
    4 + g.index() * 4 + k.index() * 2 + l.index()
}

impl ModelParams {
    pub fn lambda(&self, k: Label, l: Label, g: LinkType) -> f64 {
        self.lambda[g.index()][k.index()][l.index()]
    }

    pub fn set_lambda(&mut self, k: Label, l: Label, g: LinkType, value: f64) {
        self.lambda[g.index()][k.index()][l.index()] = value;
    }

    pub fn mu(&self, k: Label, l: Label) -> f64 {
        self.mu[k.index()][l.index()]
    }

    /// The learnable vector `phi`: mu row-major, then lambda by link type.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_COUNT);
        v.extend(self.mu.iter().flatten());
        for block in &self.lambda {
            v.extend(block.iter().flatten());
        }
        v
    }

    /// Replaces `phi`, keeping the confidence weights.
    pub fn with_vector(&self, phi: &[f64]) -> Result<ModelParams, ModelError> {
        if phi.len() != PARAM_COUNT {
            return Err(ModelError::BadVectorLength(phi.len()));
        }
        let mut out = self.clone();
        for k in 0..2 {
            for l in 0..2 {
                out.mu[k][l] = phi[k * 2 + l];
                for g in 0..LinkType::COUNT {
                    out.lambda[g][k][l] = phi[4 + g * 4 + k * 2 + l];
                }
            }
        }
        Ok(out)
    }

    /// Label-swapped parameters: every block becomes `B'[a][b] = B[1-a][1-b]`.
    pub fn label_swapped(&self) -> ModelParams {
        let swap = |b: &Block| [[b[1][1], b[1][0]], [b[0][1], b[0][0]]];
        let mut out = self.clone();
        out.mu = swap(&self.mu);
        for (dst, src) in out.lambda.iter_mut().zip(&self.lambda) {
            *dst = swap(src);
        }
        out
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> ModelParams {
        let phi: Vec<f64> = (0..PARAM_COUNT).map(|_| rng.random_range(lo..=hi)).collect();
        ModelParams::default().with_vector(&phi).expect("length matches")
    }

    pub fn to_file(&self) -> ParamsFile {
        let l = |g: LinkType| self.lambda[g.index()];
        ParamsFile {
            mu: self.mu,
            lambda: LambdaFile {
                directed_follow: l(LinkType::DirectedFollow),
                mutual_follow: l(LinkType::MutualFollow),
                directed_retweet: l(LinkType::DirectedRetweet),
                mutual_retweet: l(LinkType::MutualRetweet),
                directed_like: l(LinkType::DirectedLike),
                mutual_like: l(LinkType::MutualLike),
                directed_comment: l(LinkType::DirectedComment),
                mutual_comment: l(LinkType::MutualComment),
            },
            w_labeled: self.w_labeled,
            w_unlabeled: self.w_unlabeled,
            w_relation: self.w_relation,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("params serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ModelParams, serde_json::Error> {
        let f: ParamsFile = serde_json::from_str(text)?;
        Ok(f.into())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<ModelParams> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// On-disk JSON layout of [`ModelParams`]. Fixed-size arrays enforce the 2x2
/// shape of every block; all eight link types are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub mu: Block,
    pub lambda: LambdaFile,
    pub w_labeled: f64,
    pub w_unlabeled: f64,
    pub w_relation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaFile {
    pub directed_follow: Block,
    pub mutual_follow: Block,
    pub directed_retweet: Block,
    pub mutual_retweet: Block,
    pub directed_like: Block,
    pub mutual_like: Block,
    pub directed_comment: Block,
    pub mutual_comment: Block,
}

impl From<ParamsFile> for ModelParams {
    fn from(f: ParamsFile) -> Self {
        let l = f.lambda;
        ModelParams {
            mu: f.mu,
            lambda: [
                l.directed_follow,
                l.mutual_follow,
                l.directed_retweet,
                l.mutual_retweet,
                l.directed_like,
                l.mutual_like,
                l.directed_comment,
                l.mutual_comment,
            ],
            w_labeled: f.w_labeled,
            w_unlabeled: f.w_unlabeled,
            w_relation: f.w_relation,
        }
    }
}

/// A complete assignment over users and tweets.
///
/// Variables are indexed users first (graph user order), then tweets (graph
/// tweet order). `observed` marks evidence that proposals never touch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    n_users: usize,
    labels: Vec<Label>,
    observed: Vec<bool>,
}

impl Labeling {
    pub fn new(n_users: usize, n_tweets: usize, fill: Label) -> Labeling {
        Labeling {
            n_users,
            labels: vec![fill; n_users + n_tweets],
            observed: vec![false; n_users + n_tweets],
        }
    }

    pub fn for_graph(graph: &HeterogeneousGraph, fill: Label) -> Labeling {
        Self::new(graph.user_count(), graph.tweet_count(), fill)
    }

    /// Evidence from the graph: seed users and labeled tweets are clamped to
    /// their observed labels; every other variable is free and set to `fill`.
    pub fn evidence(graph: &HeterogeneousGraph, fill: Label) -> Labeling {
        let mut y = Self::for_graph(graph, fill);
        for (i, u) in graph.users().iter().enumerate() {
            if let Some(l) = u.seed_label {
                y.labels[i] = l;
                y.observed[i] = true;
            }
        }
        for (j, t) in graph.tweets().iter().enumerate() {
            if let Some(l) = t.observed_label {
                y.labels[y.n_users + j] = l;
                y.observed[y.n_users + j] = true;
            }
        }
        y
    }

    /// Starting point for training: every user free with a uniform random
    /// label (seeds included), labeled tweets clamped, other tweets random.
    pub fn random_training<R: Rng + ?Sized>(graph: &HeterogeneousGraph, rng: &mut R) -> Labeling {
        let mut y = Self::for_graph(graph, Label::Negative);
        for i in 0..graph.user_count() {
            y.labels[i] = Label::from_index(rng.random_range(0..2));
        }
        for (j, t) in graph.tweets().iter().enumerate() {
            let v = y.n_users + j;
            match t.observed_label {
                Some(l) => {
                    y.labels[v] = l;
                    y.observed[v] = true;
                }
                None => y.labels[v] = Label::from_index(rng.random_range(0..2)),
            }
        }
        y
    }

    /// Builds a labeling from id maps; every graph user and tweet must appear.
    pub fn from_maps(
        graph: &HeterogeneousGraph,
        users: &BTreeMap<String, Label>,
        tweets: &BTreeMap<String, Label>,
    ) -> Result<Labeling, ModelError> {
        let mut y = Self::for_graph(graph, Label::Negative);
        let incomplete = || ModelError::IncompleteLabeling {
            expected_users: graph.user_count(),
            expected_tweets: graph.tweet_count(),
        };
        for (i, u) in graph.users().iter().enumerate() {
            y.labels[i] = *users.get(&u.id).ok_or_else(incomplete)?;
        }
        for (j, t) in graph.tweets().iter().enumerate() {
            y.labels[y.n_users + j] = *tweets.get(&t.id).ok_or_else(incomplete)?;
        }
        Ok(y)
    }

    pub fn from_parts(n_users: usize, labels: Vec<Label>, observed: Vec<bool>) -> Labeling {
        assert_eq!(labels.len(), observed.len());
        assert!(n_users <= labels.len());
        Labeling {
            n_users,
            labels,
            observed,
        }
    }

    pub fn user_count(&self) -> usize {
        self.n_users
    }

    pub fn tweet_count(&self) -> usize {
        self.labels.len() - self.n_users
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn get(&self, var: usize) -> Label {
        self.labels[var]
    }

    pub fn set(&mut self, var: usize, label: Label) {
        self.labels[var] = label;
    }

    pub fn flip(&mut self, var: usize) {
        self.labels[var] = self.labels[var].flipped();
    }

    pub fn user(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn tweet(&self, j: usize) -> Label {
        self.labels[self.n_users + j]
    }

    pub fn user_labels(&self) -> &[Label] {
        &self.labels[..self.n_users]
    }

    pub fn tweet_labels(&self) -> &[Label] {
        &self.labels[self.n_users..]
    }

    pub fn is_observed(&self, var: usize) -> bool {
        self.observed[var]
    }

    pub fn set_observed(&mut self, var: usize, observed: bool) {
        self.observed[var] = observed;
    }

    pub fn free_variables(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| !self.observed[v]).collect()
    }

    pub fn covers(&self, graph: &HeterogeneousGraph) -> bool {
        self.n_users == graph.user_count() && self.tweet_count() == graph.tweet_count()
    }

    pub fn user_map(&self, graph: &HeterogeneousGraph) -> BTreeMap<String, Label> {
        graph
            .users()
            .iter()
            .zip(self.user_labels())
            .map(|(u, &l)| (u.id.clone(), l))
            .collect()
    }

    pub fn tweet_map(&self, graph: &HeterogeneousGraph) -> BTreeMap<String, Label> {
        graph
            .tweets()
            .iter()
            .zip(self.tweet_labels())
            .map(|(t, &l)| (t.id.clone(), l))
            .collect()
    }
}

/// Which parameter block a factor reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Authorship,
    Link(LinkType),
}

/// One pairwise factor: variable `a` is always the user whose bracket the
/// factor belongs to, `b` is the tweet or neighbor. Its log-potential for
/// labels `(k, l)` is `scale * phi[param_index(k, l)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonFactor {
    pub a: usize,
    pub b: usize,
    pub kind: FactorKind,
    /// `p_v * w / |tweets_v|` or `p_v * w_relation / |N_v(g)|`.
    pub scale: f64,
}

impl SkeletonFactor {
    pub fn param_index(&self, k: Label, l: Label) -> usize {
        match self.kind {
            FactorKind::Authorship => mu_index(k, l),
            FactorKind::Link(g) => lambda_index(k, l, g),
        }
    }

    pub fn log_potential(&self, phi: &[f64], k: Label, l: Label) -> f64 {
        self.scale * phi[self.param_index(k, l)]
    }
}

/// The factor structure of a graph under fixed confidence weights and
/// influence, independent of `phi`.
#[derive(Debug, Clone)]
pub struct FactorSkeleton {
    n_users: usize,
    n_tweets: usize,
    factors: Vec<SkeletonFactor>,
    incident: Vec<Vec<usize>>,
}

impl FactorSkeleton {
    pub fn new(
        graph: &HeterogeneousGraph,
        params: &ModelParams,
        influence: &InfluenceScores,
    ) -> Result<FactorSkeleton, ModelError> {
        let p = influence.aligned_to(graph)?;
        let n_users = graph.user_count();
        let n_tweets = graph.tweet_count();
        let mut factors = Vec::new();
        for v in 0..n_users {
            let tweets = graph.tweets_of(v);
            if !tweets.is_empty() {
                let w = if graph.is_seed(v) {
                    params.w_labeled
                } else {
                    params.w_unlabeled
                };
                let scale = p[v] * w / tweets.len() as f64;
                for &t in tweets {
                    factors.push(SkeletonFactor {
                        a: v,
                        b: n_users + t,
                        kind: FactorKind::Authorship,
                        scale,
                    });
                }
            }
            for g in LinkType::ALL {
                let nbrs = graph.neighbors_of_type(v, g);
                if nbrs.is_empty() {
                    continue;
                }
                let scale = p[v] * params.w_relation / nbrs.len() as f64;
                for &u in nbrs {
                    factors.push(SkeletonFactor {
                        a: v,
                        b: u,
                        kind: FactorKind::Link(g),
                        scale,
                    });
                }
            }
        }
        let mut incident = vec![Vec::new(); n_users + n_tweets];
        for (fi, f) in factors.iter().enumerate() {
            incident[f.a].push(fi);
            incident[f.b].push(fi);
        }
        Ok(FactorSkeleton {
            n_users,
            n_tweets,
            factors,
            incident,
        })
    }

    pub fn factors(&self) -> &[SkeletonFactor] {
        &self.factors
    }

    pub fn incident(&self, var: usize) -> &[usize] {
        &self.incident[var]
    }

    pub fn variable_count(&self) -> usize {
        self.n_users + self.n_tweets
    }

    fn check(&self, y: &Labeling) -> Result<(), ModelError> {
        if y.user_count() != self.n_users || y.tweet_count() != self.n_tweets {
            return Err(ModelError::IncompleteLabeling {
                expected_users: self.n_users,
                expected_tweets: self.n_tweets,
            });
        }
        Ok(())
    }

    pub fn log_score(&self, y: &Labeling, phi: &[f64]) -> Result<f64, ModelError> {
        self.check(y)?;
        Ok(self
            .factors
            .iter()
            .map(|f| f.log_potential(phi, y.get(f.a), y.get(f.b)))
            .sum())
    }

    /// Sufficient statistics `F(Y)` with `log_score = phi . F(Y)`.
    pub fn features(&self, y: &Labeling) -> Result<Vec<f64>, ModelError> {
        self.check(y)?;
        let mut out = vec![0.0; PARAM_COUNT];
        for f in &self.factors {
            out[f.param_index(y.get(f.a), y.get(f.b))] += f.scale;
        }
        Ok(out)
    }

    /// `log_score(y with var flipped) - log_score(y)`, from the flipped
    /// variable's incident factors only.
    pub fn flip_delta(&self, y: &Labeling, var: usize, phi: &[f64]) -> f64 {
        let old = y.get(var);
        let new = old.flipped();
        self.incident[var]
            .iter()
            .map(|&fi| {
                let f = &self.factors[fi];
                let (ka, lb) = (y.get(f.a), y.get(f.b));
                let (na, nb) = if f.a == var { (new, lb) } else { (ka, new) };
                f.log_potential(phi, na, nb) - f.log_potential(phi, ka, lb)
            })
            .sum()
    }

    /// Adds `scale * (F(y with var flipped) - F(y))` into `acc`.
    pub fn accumulate_flip_features(&self, y: &Labeling, var: usize, scale: f64, acc: &mut [f64]) {
        let new = y.get(var).flipped();
        for &fi in &self.incident[var] {
            let f = &self.factors[fi];
            let (ka, lb) = (y.get(f.a), y.get(f.b));
            let (na, nb) = if f.a == var { (new, lb) } else { (ka, new) };
            acc[f.param_index(na, nb)] += scale * f.scale;
            acc[f.param_index(ka, lb)] -= scale * f.scale;
        }
    }
}

fn require_user(graph: &HeterogeneousGraph, id: &str) -> Result<usize, ModelError> {
    graph
        .user_idx(id)
        .ok_or_else(|| ModelError::UnknownUser(id.to_string()))
}

/// Value of the user-tweet feature `f_kl(y_v, y_t)`.
#[allow(clippy::too_many_arguments)]
pub fn tweet_feature(
    params: &ModelParams,
    graph: &HeterogeneousGraph,
    v: &str,
    t: &str,
    k: Label,
    l: Label,
    y_v: Label,
    y_t: Label,
) -> Result<f64, ModelError> {
    let vi = require_user(graph, v)?;
    let ti = graph
        .tweet_idx(t)
        .ok_or_else(|| ModelError::UnknownTweet(t.to_string()))?;
    if graph.tweet_author(ti) != vi {
        return Err(ModelError::AuthorMismatch {
            user: v.to_string(),
            tweet: t.to_string(),
        });
    }
    if y_v != k || y_t != l {
        return Ok(0.0);
    }
    let w = if graph.is_seed(vi) {
        params.w_labeled
    } else {
        params.w_unlabeled
    };
    Ok(w / graph.tweets_of(vi).len() as f64)
}

/// Value of the user-user feature `h_klg(y_v, y_u)` for `u` in `N_v(g)`.
#[allow(clippy::too_many_arguments)]
pub fn link_feature(
    params: &ModelParams,
    graph: &HeterogeneousGraph,
    v: &str,
    u: &str,
    g: LinkType,
    k: Label,
    l: Label,
    y_v: Label,
    y_u: Label,
) -> Result<f64, ModelError> {
    let vi = require_user(graph, v)?;
    let ui = require_user(graph, u)?;
    if !graph.has_edge(vi, ui, g) {
        return Err(ModelError::NotANeighbor {
            v: v.to_string(),
            u: u.to_string(),
            g,
        });
    }
    if y_v != k || y_u != l {
        return Ok(0.0);
    }
    Ok(params.w_relation / graph.neighbors_of_type(vi, g).len() as f64)
}

/// Unnormalized log-probability `log P(Y) + log Z`.
pub fn log_score(
    graph: &HeterogeneousGraph,
    labeling: &Labeling,
    params: &ModelParams,
    influence: &InfluenceScores,
) -> Result<f64, ModelError> {
    FactorSkeleton::new(graph, params, influence)?.log_score(labeling, &params.to_vector())
}

/// Sufficient statistics of length [`PARAM_COUNT`]. Only the confidence
/// weights of `params` are read.
pub fn feature_vector(
    graph: &HeterogeneousGraph,
    labeling: &Labeling,
    params: &ModelParams,
    influence: &InfluenceScores,
) -> Result<Vec<f64>, ModelError> {
    FactorSkeleton::new(graph, params, influence)?.features(labeling)
}

/// `log P(y_new) - log P(y_old)`; the partition function cancels.
pub fn llr(
    graph: &HeterogeneousGraph,
    y_new: &Labeling,
    y_old: &Labeling,
    params: &ModelParams,
    influence: &InfluenceScores,
) -> Result<f64, ModelError> {
    let sk = FactorSkeleton::new(graph, params, influence)?;
    let phi = params.to_vector();
    Ok(sk.log_score(y_new, &phi)? - sk.log_score(y_old, &phi)?)
}
