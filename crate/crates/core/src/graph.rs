//! Heterogeneous user/tweet graph with typed user-user links.
//!
//! Users and tweets are stored sorted by id, and every adjacency list is kept
//! in ascending id order, so iteration is deterministic for identical input.
//! The graph is frozen after [`HeterogeneousGraph::build`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary sentiment label. `Positive` is the positive class for metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Negative, Label::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "0" => Ok(Label::Negative),
            "1" => Ok(Label::Positive),
            other => Err(format!("label must be 0 or 1, got {other:?}")),
        }
    }
}

/// Resolution rule for exact ties between the two labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    PreferPositive,
    PreferNegative,
}

impl TieBreak {
    pub fn label(self) -> Label {
        match self {
            TieBreak::PreferPositive => Label::Positive,
            TieBreak::PreferNegative => Label::Negative,
        }
    }
}

/// The eight user-user link types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkType {
    DirectedFollow,
    MutualFollow,
    DirectedRetweet,
    MutualRetweet,
    DirectedLike,
    MutualLike,
    DirectedComment,
    MutualComment,
}

impl LinkType {
    pub const COUNT: usize = 8;

    pub const ALL: [LinkType; LinkType::COUNT] = [
        LinkType::DirectedFollow,
        LinkType::MutualFollow,
        LinkType::DirectedRetweet,
        LinkType::MutualRetweet,
        LinkType::DirectedLike,
        LinkType::MutualLike,
        LinkType::DirectedComment,
        LinkType::MutualComment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_mutual(self) -> bool {
        matches!(
            self,
            LinkType::MutualFollow
                | LinkType::MutualRetweet
                | LinkType::MutualLike
                | LinkType::MutualComment
        )
    }

    pub fn is_directed(self) -> bool {
        !self.is_mutual()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LinkType::DirectedFollow => "directed_follow",
            LinkType::MutualFollow => "mutual_follow",
            LinkType::DirectedRetweet => "directed_retweet",
            LinkType::MutualRetweet => "mutual_retweet",
            LinkType::DirectedLike => "directed_like",
            LinkType::MutualLike => "mutual_like",
            LinkType::DirectedComment => "directed_comment",
            LinkType::MutualComment => "mutual_comment",
        }
    }
}

impl fmt::Display for LinkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LinkType::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown link type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserNode {
    pub id: String,
    /// Observed ground truth; present only for seed (root) users.
    #[serde(default)]
    pub seed_label: Option<Label>,
}

impl UserNode {
    pub fn new(id: impl Into<String>, seed_label: Option<Label>) -> Self {
        Self {
            id: id.into(),
            seed_label,
        }
    }

    pub fn is_seed(&self) -> bool {
        self.seed_label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetNode {
    pub id: String,
    pub author: String,
    #[serde(default, rename = "label")]
    pub observed_label: Option<Label>,
}

impl TweetNode {
    pub fn new(id: impl Into<String>, author: impl Into<String>, label: Option<Label>) -> Self {
        Self {
            id: id.into(),
            author: author.into(),
            observed_label: label,
        }
    }
}

/// A typed user-user edge. For directed types, `src -> dst` means `src` is
/// influenced by `dst` (the follower stores the followee as neighbor).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserUserEdge {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub link_type: LinkType,
}

impl UserUserEdge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, link_type: LinkType) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            link_type,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("dangling reference: {context} names unknown user {id:?}")]
    DanglingReference { context: String, id: String },
    #[error("self link on user {0:?}")]
    SelfLink(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
}

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph json")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] GraphError),
}

/// Typed out-neighborhood of one user: one ascending index list per link type.
pub type TypedNeighbors = [Vec<usize>; LinkType::COUNT];

/// Directed adjacency over users only, with link types erased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserDigraph {
    pub ids: Vec<String>,
    /// `out[v]` holds ascending, deduplicated successor indices.
    pub out: Vec<Vec<usize>>,
}

impl UserDigraph {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(v, succ)| succ.iter().map(move |&u| (v, u)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousGraph {
    topic: String,
    users: Vec<UserNode>,
    tweets: Vec<TweetNode>,
    user_index: HashMap<String, usize>,
    tweet_index: HashMap<String, usize>,
    /// Author index per tweet.
    tweet_author: Vec<usize>,
    /// Tweet indices per user, ascending.
    tweets_by_user: Vec<Vec<usize>>,
    neighbors: Vec<TypedNeighbors>,
}

impl HeterogeneousGraph {
    /// Validates the inputs and builds adjacency indexes. One direction of a
    /// mutual edge is enough: the reverse is added. Repeated triples collapse.
    pub fn build(
        users: Vec<UserNode>,
        tweets: Vec<TweetNode>,
        edges: Vec<UserUserEdge>,
    ) -> Result<Self, GraphError> {
        Self::build_with_topic(String::new(), users, tweets, edges)
    }

    pub fn build_with_topic(
        topic: impl Into<String>,
        mut users: Vec<UserNode>,
        mut tweets: Vec<TweetNode>,
        edges: Vec<UserUserEdge>,
    ) -> Result<Self, GraphError> {
        users.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = users.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GraphError::DuplicateId(w[0].id.clone()));
        }
        let user_index: HashMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.clone(), i))
            .collect();

        tweets.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = tweets.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GraphError::DuplicateId(w[0].id.clone()));
        }
        let mut tweet_author = Vec::with_capacity(tweets.len());
        let mut tweets_by_user = vec![Vec::new(); users.len()];
        for (ti, t) in tweets.iter().enumerate() {
            let a = *user_index
                .get(&t.author)
                .ok_or_else(|| GraphError::DanglingReference {
                    context: format!("tweet {:?}", t.id),
                    id: t.author.clone(),
                })?;
            tweet_author.push(a);
            tweets_by_user[a].push(ti);
        }
        let tweet_index = tweets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();

        let mut triples = BTreeSet::new();
        for e in &edges {
            let resolve = |id: &String| {
                user_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| GraphError::DanglingReference {
                        context: format!("edge {}->{} ({})", e.src, e.dst, e.link_type),
                        id: id.clone(),
                    })
            };
            let s = resolve(&e.src)?;
            let d = resolve(&e.dst)?;
            if s == d {
                return Err(GraphError::SelfLink(e.src.clone()));
            }
            triples.insert((s, d, e.link_type.index()));
            if e.link_type.is_mutual() {
                triples.insert((d, s, e.link_type.index()));
            }
        }
        let mut neighbors: Vec<TypedNeighbors> =
            (0..users.len()).map(|_| Default::default()).collect();
        // BTreeSet order is (src, dst, type), so every list comes out ascending.
        for (s, d, g) in triples {
            neighbors[s][g].push(d);
        }

        Ok(Self {
            topic: topic.into(),
            users,
            tweets,
            user_index,
            tweet_index,
            tweet_author,
            tweets_by_user,
            neighbors,
        })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn users(&self) -> &[UserNode] {
        &self.users
    }

    pub fn tweets(&self) -> &[TweetNode] {
        &self.tweets
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn tweet_count(&self) -> usize {
        self.tweets.len()
    }

    pub fn user_idx(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn tweet_idx(&self, id: &str) -> Option<usize> {
        self.tweet_index.get(id).copied()
    }

    pub fn require_user(&self, id: &str) -> Result<usize, GraphError> {
        self.user_idx(id)
            .ok_or_else(|| GraphError::UnknownUser(id.to_string()))
    }

    pub fn user(&self, idx: usize) -> &UserNode {
        &self.users[idx]
    }

    pub fn tweet(&self, idx: usize) -> &TweetNode {
        &self.tweets[idx]
    }

    pub fn tweet_author(&self, tweet_idx: usize) -> usize {
        self.tweet_author[tweet_idx]
    }

    pub fn tweets_of(&self, user_idx: usize) -> &[usize] {
        &self.tweets_by_user[user_idx]
    }

    pub fn is_seed(&self, user_idx: usize) -> bool {
        self.users[user_idx].is_seed()
    }

    /// Typed out-neighborhood of a user by index.
    pub fn typed_neighbors(&self, user_idx: usize) -> &TypedNeighbors {
        &self.neighbors[user_idx]
    }

    pub fn neighbors_of_type(&self, user_idx: usize, g: LinkType) -> &[usize] {
        &self.neighbors[user_idx][g.index()]
    }

    /// Every stored ordered edge as `(src, dst, type)` indices, ascending.
    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize, LinkType)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(s, typed)| {
            LinkType::ALL
                .into_iter()
                .flat_map(move |g| typed[g.index()].iter().map(move |&d| (s, d, g)))
        })
    }

    pub fn edges(&self) -> Vec<UserUserEdge> {
        let mut out: Vec<UserUserEdge> = self
            .edge_indices()
            .map(|(s, d, g)| UserUserEdge::new(&self.users[s].id, &self.users[d].id, g))
            .collect();
        out.sort();
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors
            .iter()
            .map(|typed| typed.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    pub fn has_edge(&self, src: usize, dst: usize, g: LinkType) -> bool {
        self.neighbors[src][g.index()].binary_search(&dst).is_ok()
    }

    /// For each link type, the users `u` with an edge `(v, u, g)`. Sets may
    /// overlap across types; absent types map to empty sets.
    pub fn partition_neighbors(
        &self,
        v: &str,
    ) -> Result<BTreeMap<LinkType, BTreeSet<String>>, GraphError> {
        let vi = self.require_user(v)?;
        Ok(LinkType::ALL
            .into_iter()
            .map(|g| {
                let set = self.neighbors[vi][g.index()]
                    .iter()
                    .map(|&u| self.users[u].id.clone())
                    .collect();
                (g, set)
            })
            .collect())
    }

    /// Collapses all link types into plain directed edges over users.
    pub fn user_user_subgraph(&self) -> UserDigraph {
        let out = self
            .neighbors
            .iter()
            .map(|typed| {
                let set: BTreeSet<usize> = typed.iter().flatten().copied().collect();
                set.into_iter().collect()
            })
            .collect();
        UserDigraph {
            ids: self.users.iter().map(|u| u.id.clone()).collect(),
            out,
        }
    }

    /// A copy of the graph with the given users' seed labels removed.
    pub fn with_seeds_hidden(&self, hidden: &BTreeSet<String>) -> HeterogeneousGraph {
        let mut g = self.clone();
        for u in &mut g.users {
            if hidden.contains(&u.id) {
                u.seed_label = None;
            }
        }
        g
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            topic: self.topic.clone(),
            users: self.users.clone(),
            tweets: self.tweets.clone(),
            edges: self.edges(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GraphIoError> {
        let file: GraphFile = serde_json::from_str(text)?;
        Ok(file.into_graph()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphIoError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphIoError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| GraphIoError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// On-disk JSON layout of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    #[serde(default)]
    pub topic: String,
    pub users: Vec<UserNode>,
    #[serde(default)]
    pub tweets: Vec<TweetNode>,
    #[serde(default)]
    pub edges: Vec<UserUserEdge>,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<HeterogeneousGraph, GraphError> {
        HeterogeneousGraph::build_with_topic(self.topic, self.users, self.tweets, self.edges)
    }
}
