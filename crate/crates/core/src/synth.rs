//! Synthetic heterogeneous graphs with planted sentiment communities.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::LabelMap;
use crate::graph::{HeterogeneousGraph, Label, LinkType, TweetNode, UserNode, UserUserEdge};

#[derive(Debug, Error, PartialEq)]
#[error("invalid synth config: {0}")]
pub struct InvalidConfig(pub String);

/// Edge probabilities for same-label and different-label pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Homophily {
    pub intra: f64,
    pub inter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub positive_fraction: f64,
    /// Link types absent from the map generate no edges.
    pub link_probs: BTreeMap<LinkType, Homophily>,
    pub tweets_per_user_mean: f64,
    pub tweet_noise: f64,
    pub seed_fraction: f64,
    /// Power-law exponent for target popularity on directed links.
    pub influence_skew: Option<f64>,
    pub rng_seed: u64,
    pub topic: String,
}

fn default_topic() -> String {
    "synthetic".to_string()
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            positive_fraction: 0.5,
            link_probs: BTreeMap::from([(
                LinkType::MutualFollow,
                Homophily {
                    intra: 0.10,
                    inter: 0.01,
                },
            )]),
            tweets_per_user_mean: 3.0,
            tweet_noise: 0.2,
            seed_fraction: 0.2,
            influence_skew: None,
            rng_seed: 0,
            topic: default_topic(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let bad = |m: String| Err(InvalidConfig(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if !unit(self.positive_fraction) {
            return bad(format!("positive_fraction {} outside [0,1]", self.positive_fraction));
        }
        for (g, h) in &self.link_probs {
            if !unit(h.intra) || !unit(h.inter) {
                return bad(format!("{g}: probabilities must lie in [0,1]"));
            }
            if h.intra < h.inter {
                return bad(format!("{g}: intra {} below inter {}", h.intra, h.inter));
            }
        }
        if !(self.tweets_per_user_mean >= 1.0 && self.tweets_per_user_mean.is_finite()) {
            return bad(format!(
                "tweets_per_user_mean must be >= 1 (every user posts at least once), got {}",
                self.tweets_per_user_mean
            ));
        }
        if !(0.0..0.5).contains(&self.tweet_noise) {
            return bad(format!("tweet_noise {} outside [0, 0.5)", self.tweet_noise));
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return bad(format!("seed_fraction {} outside (0,1]", self.seed_fraction));
        }
        if let Some(s) = self.influence_skew {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("influence_skew must be non-negative, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub graph: HeterogeneousGraph,
    pub truth: LabelMap,
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// Generates a graph using `config.rng_seed`.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, InvalidConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    generate_with(config, &mut rng)
}

/// Draw order: user labels, then edges per link type, then tweets, then
/// seeds. Every link type is drawn per ordered pair; mutual types are then
/// symmetrized, so an unordered pair is linked with probability 1-(1-p)^2.
pub fn generate_with<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<SynthOutput, InvalidConfig> {
    config.validate()?;
    let n = config.n_users;
    let width = id_width(n);
    let ids: Vec<String> = (0..n).map(|i| format!("u{i:0width$}")).collect();
    let labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.random_bool(config.positive_fraction) {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();

    // Target popularity for directed links: rank^-skew, scaled to mean one.
    let popularity: Vec<f64> = match config.influence_skew {
        Some(s) if s > 0.0 => {
            let raw: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-s)).collect();
            let mean = raw.iter().sum::<f64>() / n as f64;
            raw.into_iter().map(|x| x / mean).collect()
        }
        _ => vec![1.0; n],
    };

    let mut edges = Vec::new();
    for (&g, h) in &config.link_probs {
        let prob = |a: usize, b: usize| {
            if labels[a] == labels[b] {
                h.intra
            } else {
                h.inter
            }
        };
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let mut p = prob(a, b);
                if g.is_directed() {
                    p = (p * popularity[b]).min(1.0);
                }
                if p > 0.0 && rng.random_bool(p) {
                    edges.push(UserUserEdge::new(&ids[a], &ids[b], g));
                }
            }
        }
    }

    let extra = config.tweets_per_user_mean - 1.0;
    let poisson = (extra > 0.0).then(|| Poisson::new(extra).expect("positive rate"));
    let counts: Vec<usize> = (0..n)
        .map(|_| 1 + poisson.as_ref().map_or(0, |d| d.sample(rng) as usize))
        .collect();
    let total: usize = counts.iter().sum();
    let tw = id_width(total);
    let mut tweets = Vec::with_capacity(total);
    for (u, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let label = if config.tweet_noise > 0.0 && rng.random_bool(config.tweet_noise) {
                labels[u].flipped()
            } else {
                labels[u]
            };
            tweets.push(TweetNode::new(format!("t{:0tw$}", tweets.len()), &ids[u], Some(label)));
        }
    }

    let mut seeded = vec![false; n];
    for class in Label::BOTH {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let k = (config.seed_fraction * members.len() as f64).round() as usize;
        for pick in sample(rng, members.len(), k.min(members.len())).into_iter() {
            seeded[members[pick]] = true;
        }
    }

    let users = ids
        .iter()
        .zip(&labels)
        .zip(&seeded)
        .map(|((id, &l), &s)| UserNode::new(id, s.then_some(l)))
        .collect();
    let graph = HeterogeneousGraph::build_with_topic(&config.topic, users, tweets, edges)
        .expect("generated graph is well formed");
    let truth = ids.into_iter().zip(labels).collect();
    Ok(SynthOutput { graph, truth })
}

pub fn truth_tsv(truth: &LabelMap) -> String {
    crate::eval::labels_to_tsv(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SynthConfig {
        SynthConfig::default()
    }

    #[test]
    fn single_user() {
        let out = generate(&SynthConfig {
            n_users: 1,
            seed_fraction: 1.0,
            ..cfg()
        })
        .unwrap();
        assert_eq!(out.graph.user_count(), 1);
        assert!(out.graph.is_seed(0));
        assert_eq!(out.graph.edge_count(), 0);
    }

    #[test]
    fn no_links_no_noise() {
        let out = generate(&SynthConfig {
            n_users: 40,
            link_probs: LinkType::ALL
                .into_iter()
                .map(|g| (g, Homophily { intra: 0.0, inter: 0.0 }))
                .collect(),
            tweet_noise: 0.0,
            ..cfg()
        })
        .unwrap();
        assert_eq!(out.graph.edge_count(), 0);
        for t in out.graph.tweets() {
            assert_eq!(t.observed_label, Some(out.truth[&t.author]));
        }
    }

    #[test]
    fn structure_invariants() {
        let mut c = cfg();
        c.link_probs.insert(LinkType::DirectedLike, Homophily { intra: 0.05, inter: 0.02 });
        c.influence_skew = Some(0.8);
        c.rng_seed = 17;
        let out = generate(&c).unwrap();
        let g = &out.graph;
        for (s, d, t) in g.edge_indices() {
            if t.is_mutual() {
                assert!(g.has_edge(d, s, t));
            }
        }
        for v in 0..g.user_count() {
            assert!(!g.tweets_of(v).is_empty());
        }
        for class in Label::BOTH {
            let size = out.truth.values().filter(|&&l| l == class).count();
            let seeds = g.users().iter().filter(|u| u.seed_label == Some(class)).count();
            assert_eq!(seeds, (0.2 * size as f64).round() as usize);
        }
        for u in g.users() {
            if let Some(l) = u.seed_label {
                assert_eq!(l, out.truth[&u.id]);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate(&SynthConfig { rng_seed: 5, ..cfg() }).unwrap();
        let b = generate(&SynthConfig { rng_seed: 5, ..cfg() }).unwrap();
        assert_eq!(a.graph.to_json(), b.graph.to_json());
        assert_eq!(truth_tsv(&a.truth), truth_tsv(&b.truth));
        let c = generate(&SynthConfig { rng_seed: 6, ..cfg() }).unwrap();
        assert_ne!(a.graph.to_json(), c.graph.to_json());
    }

    #[test]
    fn same_label_fraction_matches_binomial() {
        // Two ordered draws per unordered pair, then symmetrized: a pair is
        // linked with probability 1-(1-p)^2. Check both counts within 3 sigma.
        let out = generate(&SynthConfig { rng_seed: 99, ..cfg() }).unwrap();
        let pos = out.truth.values().filter(|&&l| l == Label::Positive).count();
        let n = out.truth.len();
        let same_pairs = pos * (pos - 1) / 2 + (n - pos) * (n - pos - 1) / 2;
        let diff_pairs = pos * (n - pos);
        let mut same_edges = 0usize;
        let mut diff_edges = 0usize;
        for (s, d, _) in out.graph.edge_indices().filter(|&(s, d, _)| s < d) {
            if out.truth[&out.graph.user(s).id] == out.truth[&out.graph.user(d).id] {
                same_edges += 1;
            } else {
                diff_edges += 1;
            }
        }
        let check = |count: usize, trials: usize, p: f64| {
            let mean = trials as f64 * p;
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (count as f64 - mean).abs() <= 3.0 * sd,
                "count {count} vs mean {mean} sd {sd}"
            );
        };
        let sym = |p: f64| 1.0 - (1.0 - p) * (1.0 - p);
        check(same_edges, same_pairs, sym(0.10));
        check(diff_edges, diff_pairs, sym(0.01));
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig { n_users: 0, ..cfg() }).is_err());
        assert!(generate(&SynthConfig { tweet_noise: 0.5, ..cfg() }).is_err());
        assert!(generate(&SynthConfig { seed_fraction: 0.0, ..cfg() }).is_err());
        assert!(generate(&SynthConfig { tweets_per_user_mean: 0.5, ..cfg() }).is_err());
        let mut c = cfg();
        c.link_probs.insert(LinkType::MutualLike, Homophily { intra: 0.01, inter: 0.2 });
        assert!(generate(&c).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = cfg();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SynthConfig>(&text).unwrap(), c);
    }
}
