//! PageRank influence scores over the type-collapsed user digraph.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{HeterogeneousGraph, UserDigraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Scores form a probability distribution.
    RawProbability,
    /// Scores are multiplied by the user count so they average to one.
    #[default]
    MeanOne,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::RawProbability => "raw_probability",
            Normalization::MeanOne => "mean_one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-12,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub damping: f64,
    pub tol: f64,
    pub iterations: usize,
    pub converged: bool,
    /// L1 change of the final iteration.
    pub last_delta: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("pagerank on an empty graph")]
    EmptyGraph,
    #[error("damping must lie in (0,1), got {0}")]
    BadDamping(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("max_iter must be positive")]
    ZeroIterations,
    #[error("no influence score for user {0:?}")]
    MissingInfluence(String),
    #[error("malformed influence tsv at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceScores {
    ids: Vec<String>,
    scores: Vec<f64>,
    normalization: Normalization,
    report: ConvergenceReport,
}

impl InfluenceScores {
    /// Scores from explicit values; used for fixed or hand-built influence.
    pub fn from_values(
        ids: Vec<String>,
        scores: Vec<f64>,
        normalization: Normalization,
    ) -> InfluenceScores {
        assert_eq!(ids.len(), scores.len(), "one score per id");
        InfluenceScores {
            ids,
            scores,
            normalization,
            report: ConvergenceReport {
                damping: f64::NAN,
                tol: f64::NAN,
                iterations: 0,
                converged: true,
                last_delta: 0.0,
            },
        }
    }

    /// Every user of `graph` gets the same score `value`.
    pub fn uniform(graph: &HeterogeneousGraph, value: f64) -> InfluenceScores {
        let ids = graph.users().iter().map(|u| u.id.clone()).collect();
        Self::from_values(ids, vec![value; graph.user_count()], Normalization::MeanOne)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn report(&self) -> &ConvergenceReport {
        &self.report
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|x| x == id).map(|i| self.scores[i])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Every score multiplied by `c`.
    pub fn scaled(&self, c: f64) -> InfluenceScores {
        let mut out = self.clone();
        out.scores.iter_mut().for_each(|s| *s *= c);
        out
    }

    /// Scores in the graph's user index order.
    pub fn aligned_to(&self, graph: &HeterogeneousGraph) -> Result<Vec<f64>, InfluenceError> {
        if self.ids.len() == graph.user_count()
            && self.ids.iter().zip(graph.users()).all(|(a, u)| *a == u.id)
        {
            return Ok(self.scores.clone());
        }
        let lookup: std::collections::HashMap<&str, f64> = self
            .ids
            .iter()
            .map(String::as_str)
            .zip(self.scores.iter().copied())
            .collect();
        graph
            .users()
            .iter()
            .map(|u| {
                lookup
                    .get(u.id.as_str())
                    .copied()
                    .ok_or_else(|| InfluenceError::MissingInfluence(u.id.clone()))
            })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let r = &self.report;
        let mut out = format!(
            "# damping={}\ttol={}\titerations={}\tconverged={}\tnormalization={}\n",
            r.damping,
            r.tol,
            r.iterations,
            r.converged,
            self.normalization.as_str()
        );
        for (id, s) in self.ids.iter().zip(&self.scores) {
            let _ = writeln!(out, "{id}\t{s}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<InfluenceScores, InfluenceError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(InfluenceError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header.strip_prefix("# ").ok_or(InfluenceError::Parse {
            line: 1,
            msg: "header must start with '# '".into(),
        })?;
        let mut report = ConvergenceReport {
            damping: f64::NAN,
            tol: f64::NAN,
            iterations: 0,
            converged: false,
            last_delta: f64::NAN,
        };
        let mut normalization = None;
        let bad = |msg: String| InfluenceError::Parse { line: 1, msg };
        for field in header.split('\t') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field {field:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "damping" => report.damping = num(v)?,
                "tol" => report.tol = num(v)?,
                "iterations" => {
                    report.iterations = v.parse().map_err(|e| bad(format!("{k}: {e}")))?
                }
                "converged" => {
                    report.converged = v.parse().map_err(|e| bad(format!("{k}: {e}")))?
                }
                "normalization" => {
                    normalization = Some(match v {
                        "raw_probability" => Normalization::RawProbability,
                        "mean_one" => Normalization::MeanOne,
                        _ => return Err(bad(format!("unknown normalization {v:?}"))),
                    })
                }
                _ => return Err(bad(format!("unknown header key {k:?}"))),
            }
        }
        let mut ids = Vec::new();
        let mut scores = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| InfluenceError::Parse { line: i + 1, msg };
            let (id, s) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected id<TAB>score".into()))?;
            let s: f64 = s.parse().map_err(|e| parse_err(format!("{e}")))?;
            if !(s.is_finite() && s >= 0.0) {
                return Err(parse_err(format!("score must be finite and non-negative, got {s}")));
            }
            ids.push(id.to_string());
            scores.push(s);
        }
        Ok(InfluenceScores {
            ids,
            scores,
            normalization: normalization.ok_or_else(|| bad("missing normalization".into()))?,
            report,
        })
    }
}

/// Power iteration for `p <- (1-d)/N + d * A^T p` with a column-stochastic
/// transition matrix. Dangling nodes spread their mass uniformly. Stops when
/// the L1 change drops below `tol` or after `max_iter` sweeps; running out of
/// iterations is reported in the convergence report, not as an error.
pub fn compute_pagerank(
    subgraph: &UserDigraph,
    config: &PageRankConfig,
) -> Result<InfluenceScores, InfluenceError> {
    let n = subgraph.node_count();
    if n == 0 {
        return Err(InfluenceError::EmptyGraph);
    }
    let d = config.damping;
    if !(d > 0.0 && d < 1.0) {
        return Err(InfluenceError::BadDamping(d));
    }
    if !(config.tol > 0.0) {
        return Err(InfluenceError::BadTolerance(config.tol));
    }
    if config.max_iter == 0 {
        return Err(InfluenceError::ZeroIterations);
    }

    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut delta = f64::INFINITY;

    while iterations < config.max_iter {
        iterations += 1;
        let dangling: f64 = subgraph
            .out
            .iter()
            .zip(&rank)
            .filter(|(succ, _)| succ.is_empty())
            .map(|(_, r)| r)
            .sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for (v, succ) in subgraph.out.iter().enumerate() {
            if succ.is_empty() {
                continue;
            }
            let share = d * rank[v] / succ.len() as f64;
            for &u in succ {
                next[u] += share;
            }
        }
        // Renormalize against rounding drift.
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);

        delta = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    Ok(InfluenceScores {
        ids: subgraph.ids.clone(),
        scores: rank,
        normalization: Normalization::RawProbability,
        report: ConvergenceReport {
            damping: d,
            tol: config.tol,
            iterations,
            converged,
            last_delta: delta,
        },
    })
}

/// Rescales scores into the requested mode. Raw scores are recovered from
/// mean-one scores by dividing by the user count.
pub fn normalize_influence(scores: &InfluenceScores, mode: Normalization) -> InfluenceScores {
    let n = scores.len() as f64;
    let factor = match (scores.normalization, mode) {
        (a, b) if a == b => 1.0,
        (Normalization::RawProbability, Normalization::MeanOne) => n,
        (Normalization::MeanOne, Normalization::RawProbability) => 1.0 / n,
        _ => unreachable!(),
    };
    let mut out = scores.scaled(factor);
    out.normalization = mode;
    out
}

/// PageRank over the graph's user-user links, normalized to `mode`.
pub fn graph_influence(
    graph: &HeterogeneousGraph,
    config: &PageRankConfig,
    mode: Normalization,
) -> Result<InfluenceScores, InfluenceError> {
    let raw = compute_pagerank(&graph.user_user_subgraph(), config)?;
    Ok(normalize_influence(&raw, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn digraph(n: usize, edges: &[(usize, usize)]) -> UserDigraph {
        let mut out = vec![Vec::new(); n];
        for &(a, b) in edges {
            out[a].push(b);
        }
        out.iter_mut().for_each(|s| {
            s.sort();
            s.dedup();
        });
        UserDigraph {
            ids: (0..n).map(|i| format!("n{i}")).collect(),
            out,
        }
    }

    /// Dense Google-matrix power iteration, independent of the sparse loop.
    fn dense_oracle(g: &UserDigraph, d: f64) -> Vec<f64> {
        let n = g.node_count();
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            for i in 0..n {
                let link = if g.out[j].is_empty() {
                    1.0 / n as f64
                } else if g.out[j].contains(&i) {
                    1.0 / g.out[j].len() as f64
                } else {
                    0.0
                };
                m[i][j] = d * link + (1.0 - d) / n as f64;
            }
        }
        let mut p = vec![1.0 / n as f64; n];
        for _ in 0..5000 {
            p = (0..n).map(|i| (0..n).map(|j| m[i][j] * p[j]).sum()).collect();
        }
        p
    }

    #[test]
    fn isolated_node() {
        let s = compute_pagerank(&digraph(1, &[]), &PageRankConfig::default()).unwrap();
        assert_abs_diff_eq!(s.scores()[0], 1.0, epsilon = 1e-15);
        assert!(s.report().converged);
    }

    #[test]
    fn cycle_is_uniform() {
        let s = compute_pagerank(&digraph(3, &[(0, 1), (1, 2), (2, 0)]), &PageRankConfig::default())
            .unwrap();
        for &x in s.scores() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn star_matches_dense_oracle() {
        let g = digraph(4, &[(0, 1), (2, 1), (3, 1), (1, 0)]);
        let cfg = PageRankConfig {
            damping: 0.85,
            tol: 1e-12,
            max_iter: 10_000,
        };
        let s = compute_pagerank(&g, &cfg).unwrap();
        let oracle = dense_oracle(&g, 0.85);
        for (a, b) in s.scores().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(s.scores().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        for &x in s.scores() {
            assert!(x >= 0.15 / 4.0 - 1e-15);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = digraph(4, &[(0, 1), (2, 1), (3, 1), (1, 0)]);
        let cfg = PageRankConfig {
            damping: 0.85,
            tol: 1e-300,
            max_iter: 3,
        };
        let s = compute_pagerank(&g, &cfg).unwrap();
        assert!(!s.report().converged);
        assert_eq!(s.report().iterations, 3);
    }

    #[test]
    fn errors() {
        let cfg = PageRankConfig::default();
        assert_eq!(compute_pagerank(&digraph(0, &[]), &cfg).unwrap_err(), InfluenceError::EmptyGraph);
        let bad = PageRankConfig { damping: 1.0, ..cfg };
        assert!(matches!(compute_pagerank(&digraph(2, &[]), &bad), Err(InfluenceError::BadDamping(_))));
    }

    #[test]
    fn mean_one_examples() {
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let raw = InfluenceScores::from_values(ids, vec![0.1; 10], Normalization::RawProbability);
        let m = normalize_influence(&raw, Normalization::MeanOne);
        for &x in m.scores() {
            assert_abs_diff_eq!(x, 1.0, epsilon = 1e-12);
        }

        let raw = InfluenceScores::from_values(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.5, 0.3, 0.2],
            Normalization::RawProbability,
        );
        let m = normalize_influence(&raw, Normalization::MeanOne);
        for (x, e) in m.scores().iter().zip([1.5, 0.9, 0.6]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-12);
        }
        assert_eq!(normalize_influence(&raw, Normalization::RawProbability).scores(), raw.scores());
        let back = normalize_influence(&m, Normalization::RawProbability);
        for (a, b) in back.scores().iter().zip(raw.scores()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let edges = [(0, 1), (0, 2), (2, 1), (3, 4), (4, 0), (1, 3)];
        let perm = [3, 0, 4, 1, 2];
        let g = digraph(5, &edges);
        let pg = digraph(5, &edges.map(|(a, b)| (perm[a], perm[b])));
        let cfg = PageRankConfig::default();
        let s = compute_pagerank(&g, &cfg).unwrap();
        let ps = compute_pagerank(&pg, &cfg).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(s.scores()[i], ps.scores()[perm[i]], epsilon = 1e-12);
        }
    }

    #[test]
    fn tsv_round_trip() {
        let g = digraph(3, &[(0, 1), (1, 2)]);
        let s = compute_pagerank(&g, &PageRankConfig::default()).unwrap();
        let s = normalize_influence(&s, Normalization::MeanOne);
        let text = s.to_tsv();
        assert!(text.starts_with("# damping=0.85\t"));
        let back = InfluenceScores::from_tsv(&text).unwrap();
        assert_eq!(back.scores(), s.scores());
        assert_eq!(back.ids(), s.ids());
        assert_eq!(back.normalization(), Normalization::MeanOne);
        assert_eq!(back.report().iterations, s.report().iterations);
        assert!(InfluenceScores::from_tsv("n0\t1.0\n").is_err());
    }
}
