//! Accuracy, per-class F1, MacroF1, and the tweet-label majority baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{HeterogeneousGraph, Label, TieBreak};

pub type LabelMap = BTreeMap<String, Label>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("no prediction for {0:?}")]
    MissingPrediction(String),
    #[error("no ground truth for {0:?}")]
    MissingTruth(String),
}

/// Confusion counts with label 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn record(&mut self, pred: Label, truth: Label) {
        self.adjust(pred, truth, 1);
    }

    /// Adds (`delta = 1`) or removes (`delta = -1`) one outcome.
    pub fn adjust(&mut self, pred: Label, truth: Label, delta: isize) {
        let slot = match (pred, truth) {
            (Label::Positive, Label::Positive) => &mut self.tp,
            (Label::Negative, Label::Negative) => &mut self.tn,
            (Label::Positive, Label::Negative) => &mut self.fp,
            (Label::Negative, Label::Positive) => &mut self.fn_,
        };
        *slot = slot.checked_add_signed(delta).expect("confusion count underflow");
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / n as f64
    }

    /// Harmonic mean of precision and recall; zero when undefined.
    fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
        let denom = 2 * tp + fp + fn_;
        if tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    pub fn f1_pos(&self) -> f64 {
        Self::f1(self.tp, self.fp, self.fn_)
    }

    pub fn f1_neg(&self) -> f64 {
        Self::f1(self.tn, self.fn_, self.fp)
    }

    pub fn macro_f1(&self) -> f64 {
        (self.f1_pos() + self.f1_neg()) / 2.0
    }

    /// Accuracy + MacroF1, in [0, 2].
    pub fn perf(&self) -> f64 {
        self.accuracy() + self.macro_f1()
    }

    /// Counts with the class convention reversed.
    pub fn swapped(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

pub fn confusion<'a, I>(
    pred: &LabelMap,
    truth: &LabelMap,
    eval_set: I,
) -> Result<ConfusionCounts, EvalError>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut c = ConfusionCounts::default();
    for id in eval_set {
        let p = *pred
            .get(id)
            .ok_or_else(|| EvalError::MissingPrediction(id.clone()))?;
        let t = *truth
            .get(id)
            .ok_or_else(|| EvalError::MissingTruth(id.clone()))?;
        c.record(p, t);
    }
    if c.total() == 0 {
        return Err(EvalError::EmptyEvalSet);
    }
    Ok(c)
}

pub fn accuracy(pred: &LabelMap, truth: &LabelMap, eval_set: &BTreeSet<String>) -> Result<f64, EvalError> {
    Ok(confusion(pred, truth, eval_set)?.accuracy())
}

pub fn macro_f1(pred: &LabelMap, truth: &LabelMap, eval_set: &BTreeSet<String>) -> Result<f64, EvalError> {
    Ok(confusion(pred, truth, eval_set)?.macro_f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub id: String,
    pub truth: Label,
    pub predicted: Label,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1_pos: f64,
    pub f1_neg: f64,
    pub macro_f1: f64,
    pub population: usize,
    pub confusion: ConfusionCounts,
    pub per_user: Vec<UserOutcome>,
}

pub fn evaluate(
    pred: &LabelMap,
    truth: &LabelMap,
    eval_set: &BTreeSet<String>,
) -> Result<EvalReport, EvalError> {
    let c = confusion(pred, truth, eval_set)?;
    let per_user = eval_set
        .iter()
        .map(|id| {
            let (p, t) = (pred[id], truth[id]);
            UserOutcome {
                id: id.clone(),
                truth: t,
                predicted: p,
                correct: p == t,
            }
        })
        .collect();
    Ok(EvalReport {
        accuracy: c.accuracy(),
        f1_pos: c.f1_pos(),
        f1_neg: c.f1_neg(),
        macro_f1: c.macro_f1(),
        population: c.total(),
        confusion: c,
        per_user,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "population  {}", self.population)?;
        writeln!(f, "tp/tn/fp/fn {}/{}/{}/{}", c.tp, c.tn, c.fp, c.fn_)?;
        writeln!(f, "accuracy    {:.4}", self.accuracy)?;
        writeln!(f, "f1_pos      {:.4}", self.f1_pos)?;
        writeln!(f, "f1_neg      {:.4}", self.f1_neg)?;
        write!(f, "macro_f1    {:.4}", self.macro_f1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineOutput {
    pub predictions: LabelMap,
    /// Users with no observed-label tweets.
    pub excluded: Vec<String>,
}

/// Per-user majority over observed tweet labels.
pub fn tweet_majority_baseline(graph: &HeterogeneousGraph, tie_break: TieBreak) -> BaselineOutput {
    let mut out = BaselineOutput::default();
    for (i, u) in graph.users().iter().enumerate() {
        let (mut pos, mut neg) = (0usize, 0usize);
        for &t in graph.tweets_of(i) {
            match graph.tweet(t).observed_label {
                Some(Label::Positive) => pos += 1,
                Some(Label::Negative) => neg += 1,
                None => {}
            }
        }
        if pos + neg == 0 {
            out.excluded.push(u.id.clone());
            continue;
        }
        let label = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => Label::Positive,
            std::cmp::Ordering::Less => Label::Negative,
            std::cmp::Ordering::Equal => tie_break.label(),
        };
        out.predictions.insert(u.id.clone(), label);
    }
    out
}

pub fn labels_to_tsv(labels: &LabelMap) -> String {
    let mut s = String::new();
    for (id, l) in labels {
        s.push_str(id);
        s.push('\t');
        s.push_str(&l.to_string());
        s.push('\n');
    }
    s
}

pub fn labels_from_tsv(text: &str) -> Result<LabelMap, String> {
    let mut out = LabelMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, l) = line
            .split_once('\t')
            .ok_or_else(|| format!("line {}: expected id<TAB>label", i + 1))?;
        let l: Label = l.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        if out.insert(id.to_string(), l).is_some() {
            return Err(format!("line {}: duplicate id {id:?}", i + 1));
        }
    }
    Ok(out)
}
