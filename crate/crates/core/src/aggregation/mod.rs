//! Function aggregation: decide what empty outputs mean, score candidates
//! against the model's extractions on a small sample, drop worse-than-random
//! candidates, bucket each document's votes into a fixed number of classes,
//! and combine them with a label model or majority vote.

mod label_model;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evaluation::text_f1;
use crate::text::mentions;

pub use label_model::{fit_label_model, Fallback, LabelModel, LabelModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregationConfig {
    /// Empty outputs are abstentions when `e > tau`, no-value predictions
    /// otherwise.
    pub tau: f64,
    /// Classes per document.
    pub b: usize,
    /// Candidates scoring at or below this are dropped.
    pub min_score: f64,
    pub max_retained: usize,
    pub filter: bool,
    pub method: Method,
    #[serde(skip)]
    pub label_model: LabelModelConfig,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            tau: 0.5,
            b: 5,
            min_score: 0.5,
            max_retained: 10,
            filter: true,
            method: Method::WeakSupervision,
            label_model: LabelModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WeakSupervision,
    MajorityVote,
}

/// One function's output on one document, after empty outputs have been
/// interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vote {
    Value(String),
    Abstain,
    NoValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyAs {
    Abstain,
    NoValue,
}

impl EmptyAs {
    pub fn from_prior(e: f64, tau: f64) -> Self {
        if e > tau {
            EmptyAs::Abstain
        } else {
            EmptyAs::NoValue
        }
    }

    pub fn interpret(self, output: Option<&str>) -> Vote {
        match output.map(str::trim).filter(|s| !s.is_empty()) {
            Some(v) => Vote::Value(v.to_string()),
            None => match self {
                EmptyAs::Abstain => Vote::Abstain,
                EmptyAs::NoValue => Vote::NoValue,
            },
        }
    }
}

/// Demote an oracle extraction that does not occur in the document.
pub fn guard_oracle(document: &str, value: Option<&str>) -> Option<String> {
    let v = value.map(str::trim).filter(|v| !v.is_empty())?;
    if mentions(document, v) {
        Some(v.to_string())
    } else {
        log::debug!("oracle value {v:?} not found in document; treating as empty");
        None
    }
}

fn nonempty(v: &Option<String>) -> bool {
    v.as_deref().is_some_and(|s| !s.trim().is_empty())
}

/// Fraction of sample documents with a nonempty oracle extraction.
pub fn estimate_e(oracle: &[Option<String>]) -> f64 {
    if oracle.is_empty() {
        return 0.0;
    }
    oracle.iter().filter(|v| nonempty(v)).count() as f64 / oracle.len() as f64
}

/// Mean Text F1 of a function's sample outputs against the oracle. With
/// `e > tau` only documents where the oracle found a value are scored.
pub fn score_function(outputs: &[Option<String>], oracle: &[Option<String>], e: f64, tau: f64) -> f64 {
    debug_assert_eq!(outputs.len(), oracle.len());
    let only_present = e > tau;
    let mut total = 0.0;
    let mut n = 0usize;
    for (out, gold) in outputs.iter().zip(oracle) {
        if only_present && !nonempty(gold) {
            continue;
        }
        total += text_f1(out.as_deref().unwrap_or(""), gold.as_deref().unwrap_or(""));
        n += 1;
    }
    if n == 0 {
        log::warn!("no sample document to score against; scoring 0");
        return 0.0;
    }
    total / n as f64
}

/// Indices of candidates scoring strictly above `min_score`, best first
/// (ties by id), at most `cap`.
pub fn filter_candidates(scored: &[(String, f64)], min_score: f64, cap: usize) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..scored.len()).filter(|&i| scored[i].1 > min_score).collect();
    keep.sort_by(|&a, &b| {
        scored[b]
            .1
            .total_cmp(&scored[a].1)
            .then_with(|| scored[a].0.cmp(&scored[b].0))
    });
    keep.truncate(cap);
    keep
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClassLabel {
    NoValue,
    Value(String),
    Placeholder(usize),
}

/// A document's votes collapsed into exactly `b` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DocBuckets {
    pub classes: Vec<ClassLabel>,
    /// Votes per class; placeholders have zero.
    pub counts: Vec<usize>,
    /// Class index per function, `None` for abstentions (including votes
    /// that fell outside the top `b`).
    pub assignment: Vec<Option<usize>>,
}

/// Rank a document's distinct non-abstain votes by count (ties
/// lexicographic, no-value first), keep the top `b` as classes, mark the
/// rest as abstentions and pad with placeholders.
pub fn bucket_votes(votes: &[Vote], b: usize) -> DocBuckets {
    let mut counts: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    for v in votes {
        let label = match v {
            Vote::Value(s) => ClassLabel::Value(s.clone()),
            Vote::NoValue => ClassLabel::NoValue,
            Vote::Abstain => continue,
        };
        *counts.entry(label).or_default() += 1;
    }
    let mut ranked: Vec<(ClassLabel, usize)> = counts.into_iter().collect();
    // BTreeMap order is the lexicographic tie-break; stable sort keeps it.
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    ranked.truncate(b);
    let mut classes: Vec<ClassLabel> = ranked.iter().map(|(l, _)| l.clone()).collect();
    let mut class_counts: Vec<usize> = ranked.iter().map(|(_, c)| *c).collect();
    let mut ph = 0;
    while classes.len() < b {
        classes.push(ClassLabel::Placeholder(ph));
        class_counts.push(0);
        ph += 1;
    }
    let assignment = votes
        .iter()
        .map(|v| {
            let label = match v {
                Vote::Value(s) => ClassLabel::Value(s.clone()),
                Vote::NoValue => ClassLabel::NoValue,
                Vote::Abstain => return None,
            };
            classes.iter().position(|c| *c == label)
        })
        .collect();
    DocBuckets {
        classes,
        counts: class_counts,
        assignment,
    }
}

/// Votes of the retained functions on every document.
#[derive(Debug, Clone)]
pub struct VoteMatrix {
    votes: Vec<Vec<Vote>>,
    buckets: Vec<DocBuckets>,
    n_functions: usize,
    e: f64,
    tau: f64,
    b: usize,
}

impl VoteMatrix {
    /// `outputs[j][i]` is function `j`'s raw output on document `i`.
    pub fn new(outputs: &[Vec<Option<String>>], e: f64, tau: f64, b: usize) -> Self {
        assert!(b >= 2, "at least two classes per document");
        let n_functions = outputs.len();
        let n_docs = outputs.first().map_or(0, Vec::len);
        assert!(outputs.iter().all(|o| o.len() == n_docs), "rectangular outputs");
        let empty_as = EmptyAs::from_prior(e, tau);
        let votes: Vec<Vec<Vote>> = (0..n_docs)
            .map(|i| {
                outputs
                    .iter()
                    .map(|f| empty_as.interpret(f[i].as_deref()))
                    .collect()
            })
            .collect();
        let buckets = votes.iter().map(|row| bucket_votes(row, b)).collect();
        VoteMatrix {
            votes,
            buckets,
            n_functions,
            e,
            tau,
            b,
        }
    }

    pub fn votes(&self) -> &[Vec<Vote>] {
        &self.votes
    }

    pub fn buckets(&self) -> &[DocBuckets] {
        &self.buckets
    }

    pub fn n_docs(&self) -> usize {
        self.votes.len()
    }

    pub fn n_functions(&self) -> usize {
        self.n_functions
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn empty_as(&self) -> EmptyAs {
        EmptyAs::from_prior(self.e, self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Value(String),
    NoValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocPrediction {
    pub prediction: Prediction,
    /// Heaviest function voting for the winner.
    pub source: Option<usize>,
}

/// Weighted plurality over one document's classes. Classes without votes
/// never win; ties go to the larger bucket, then the smaller label.
fn argmax_class(doc: &DocBuckets, weight: impl Fn(usize) -> f64) -> DocPrediction {
    let mut score = vec![0.0; doc.classes.len()];
    for (j, a) in doc.assignment.iter().enumerate() {
        if let Some(c) = a {
            score[*c] += weight(j);
        }
    }
    let best = (0..doc.classes.len())
        .filter(|&c| doc.counts[c] > 0)
        .max_by(|&x, &y| {
            score[x]
                .total_cmp(&score[y])
                .then(doc.counts[x].cmp(&doc.counts[y]))
                .then_with(|| doc.classes[y].cmp(&doc.classes[x]))
        });
    let Some(c) = best else {
        return DocPrediction {
            prediction: Prediction::NoValue,
            source: None,
        };
    };
    let source = doc
        .assignment
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Some(c))
        .map(|(j, _)| j)
        .max_by(|&x, &y| weight(x).total_cmp(&weight(y)).then(y.cmp(&x)));
    let prediction = match &doc.classes[c] {
        ClassLabel::Value(v) => Prediction::Value(v.clone()),
        ClassLabel::NoValue => Prediction::NoValue,
        ClassLabel::Placeholder(_) => unreachable!("placeholders carry no votes"),
    };
    DocPrediction { prediction, source }
}

pub fn aggregate_mv(matrix: &VoteMatrix) -> Vec<DocPrediction> {
    matrix.buckets.iter().map(|d| argmax_class(d, |_| 1.0)).collect()
}

pub fn aggregate_ws(matrix: &VoteMatrix, model: &LabelModel) -> Vec<DocPrediction> {
    let weights: Vec<f64> = (0..matrix.n_functions).map(|j| model.weight(j)).collect();
    matrix
        .buckets
        .iter()
        .map(|d| argmax_class(d, |j| weights[j]))
        .collect()
}

/// Per-attribute record of how aggregation went.
#[derive(Debug, Clone, Serialize)]
pub struct AttributeDiagnostics {
    /// Absent when no oracle was consulted; empty outputs are then
    /// abstentions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    pub tau: f64,
    pub b: usize,
    pub empty_as: EmptyAs,
    pub scores: BTreeMap<String, f64>,
    pub rejected: BTreeMap<String, String>,
    pub retained: Vec<String>,
    pub method: Method,
    pub accuracies: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Fallback>,
    pub excluded: bool,
}

pub struct AttributeOutcome {
    pub predictions: Vec<DocPrediction>,
    pub diagnostics: AttributeDiagnostics,
    /// Ids of retained functions, matching `DocPrediction::source`.
    pub retained: Vec<String>,
}

/// Score and filter candidates on the sample. Returns the retained indices
/// (best first) and each candidate's score.
pub fn select_candidates(
    sample_outputs: &[(String, Vec<Option<String>>)],
    oracle: &[Option<String>],
    config: &AggregationConfig,
) -> (f64, Vec<(String, f64)>, Vec<usize>) {
    let e = estimate_e(oracle);
    let scored: Vec<(String, f64)> = sample_outputs
        .iter()
        .map(|(id, out)| (id.clone(), score_function(out, oracle, e, config.tau)))
        .collect();
    let retained = if config.filter {
        filter_candidates(&scored, config.min_score, config.max_retained)
    } else {
        (0..scored.len()).collect()
    };
    (e, scored, retained)
}

/// Votes to predictions for one attribute, given the retained functions'
/// outputs over the whole corpus.
pub fn aggregate_outputs(
    retained_ids: Vec<String>,
    outputs: &[Vec<Option<String>>],
    e: Option<f64>,
    scores: Vec<(String, f64)>,
    config: &AggregationConfig,
) -> AttributeOutcome {
    let excluded = retained_ids.is_empty();
    let mut diagnostics = AttributeDiagnostics {
        e,
        tau: config.tau,
        b: config.b,
        empty_as: e.map_or(EmptyAs::Abstain, |e| EmptyAs::from_prior(e, config.tau)),
        scores: scores.into_iter().collect(),
        rejected: BTreeMap::new(),
        retained: retained_ids.clone(),
        method: config.method,
        accuracies: BTreeMap::new(),
        fallback: None,
        excluded,
    };
    if excluded {
        return AttributeOutcome {
            predictions: Vec::new(),
            diagnostics,
            retained: retained_ids,
        };
    }
    let matrix = VoteMatrix::new(outputs, e.unwrap_or(1.0), config.tau, config.b);
    let predictions = match config.method {
        Method::MajorityVote => aggregate_mv(&matrix),
        Method::WeakSupervision => match fit_label_model(&matrix, &config.label_model) {
            Ok(model) => {
                diagnostics.accuracies = retained_ids
                    .iter()
                    .cloned()
                    .zip(model.accuracies.iter().copied())
                    .collect();
                aggregate_ws(&matrix, &model)
            }
            Err(reason) => {
                log::info!("label model not fitted ({reason}); using majority vote");
                diagnostics.method = Method::MajorityVote;
                diagnostics.fallback = Some(reason);
                aggregate_mv(&matrix)
            }
        },
    };
    AttributeOutcome {
        predictions,
        diagnostics,
        retained: retained_ids,
    }
}

impl PartialOrd for Prediction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Prediction {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Prediction::NoValue, Prediction::NoValue) => Ordering::Equal,
            (Prediction::NoValue, _) => Ordering::Less,
            (_, Prediction::NoValue) => Ordering::Greater,
            (Prediction::Value(a), Prediction::Value(b)) => a.cmp(b),
        }
    }
}
