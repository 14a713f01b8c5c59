//! User-level topical sentiment over superimposed heterogeneous social graphs.
//!
//! Users, their tweets, and eight kinds of typed user-user links form one
//! graph. Each user's factors are weighted by PageRank influence, factor
//! weights are estimated per link category (by smoothed counting or by
//! SampleRank), and labels are inferred with loopy belief propagation.

pub mod estimation;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod influence;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use graph::{HeterogeneousGraph, Label, LinkType, TieBreak, TweetNode, UserNode, UserUserEdge};
pub use influence::{InfluenceScores, Normalization};
pub use model::{Labeling, ModelParams};

use thiserror::Error;

/// Crate-level error for the end-to-end entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    GraphIo(#[from] graph::GraphIoError),
    #[error(transparent)]
    Influence(#[from] influence::InfluenceError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Estimation(#[from] estimation::EstimationError),
    #[error(transparent)]
    Inference(#[from] inference::InferenceError),
    #[error(transparent)]
    Synth(#[from] synth::InvalidConfig),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures reading or writing files, as opposed to invalid input.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::GraphIo(graph::GraphIoError::Io { .. })
        )
    }
}
