use std::collections::BTreeMap;
use std::fs;

use sentigraph::eval::{labels_from_tsv, tweet_majority_baseline};
use sentigraph::pipeline::{run_on_graph, run_pipeline, PipelineConfig};
use sentigraph::synth::{generate, SynthConfig};
use sentigraph::{HeterogeneousGraph, InfluenceScores, Label, ModelParams, TieBreak};

#[test]
fn written_artifacts_reload_and_reproduce() {
    let cfg = PipelineConfig::default();
    let res = run_pipeline(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = res.write_outputs(&cfg, dir.path()).unwrap();
    assert!(written.iter().all(|p| p.exists()));

    let graph = HeterogeneousGraph::load(dir.path().join("graph.json")).unwrap();
    assert_eq!(graph, res.graph);
    let inf = InfluenceScores::from_tsv(&fs::read_to_string(dir.path().join("influence.tsv")).unwrap()).unwrap();
    assert_eq!(inf.scores(), res.influence.scores());
    let params = ModelParams::load(dir.path().join("params.json")).unwrap();
    assert_eq!(params, res.inference.params[0]);

    let truth = labels_from_tsv(&fs::read_to_string(dir.path().join("truth.tsv")).unwrap()).unwrap();
    assert_eq!(truth, res.truth);
    let preds = labels_from_tsv(&fs::read_to_string(dir.path().join("predictions.tsv")).unwrap()).unwrap();
    assert_eq!(preds.len(), graph.user_count());

    let again = run_on_graph(&cfg, graph, truth).unwrap();
    assert_eq!(again.report, res.report);
}

#[test]
fn baseline_matches_count_and_compare() {
    let out = generate(&SynthConfig {
        n_users: 100,
        rng_seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let g = &out.graph;
    let mut votes: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    for t in g.tweets() {
        if let Some(l) = t.observed_label {
            votes.entry(t.author.as_str()).or_default()[l.index()] += 1;
        }
    }
    for tie in [TieBreak::PreferPositive, TieBreak::PreferNegative] {
        let base = tweet_majority_baseline(g, tie);
        assert_eq!(base.predictions.len(), votes.len());
        for (user, [neg, pos]) in &votes {
            let want = if pos > neg {
                Label::Positive
            } else if neg > pos {
                Label::Negative
            } else {
                tie.label()
            };
            assert_eq!(base.predictions[*user], want, "{user}");
        }
    }
}
