//! Extraction metrics: Pair F1 over (document, attribute, value) tuples,
//! SQuAD-style token F1 between strings, and F1@k over attribute names.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{normalize_attribute, normalize_value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_counts(common: usize, predicted: usize, gold: usize) -> Prf {
        if common == 0 || predicted == 0 || gold == 0 {
            return Prf::ZERO;
        }
        let precision = common as f64 / predicted as f64;
        let recall = common as f64 / gold as f64;
        Prf {
            precision,
            recall,
            f1: 2.0 * precision * recall / (precision + recall),
        }
    }
}

/// A set of `(doc_id, attribute, value)` triples. Attribute names and values
/// are normalized on insertion so that set semantics match the comparison
/// semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TupleSet {
    tuples: BTreeSet<(String, String, String)>,
}

impl TupleSet {
    pub fn new() -> Self {
        TupleSet::default()
    }

    pub fn insert(&mut self, doc_id: &str, attribute: &str, value: &str) -> bool {
        self.tuples.insert((
            doc_id.to_string(),
            normalize_attribute(attribute),
            normalize_value(value),
        ))
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String, String)> {
        self.tuples.iter()
    }

    /// Keep only tuples whose attribute is in `attributes` (normalized).
    pub fn restrict_to<'a>(&self, attributes: impl IntoIterator<Item = &'a str>) -> TupleSet {
        let keep: BTreeSet<String> = attributes.into_iter().map(normalize_attribute).collect();
        TupleSet {
            tuples: self
                .tuples
                .iter()
                .filter(|t| keep.contains(&t.1))
                .cloned()
                .collect(),
        }
    }
}

impl<'a> FromIterator<(&'a str, &'a str, &'a str)> for TupleSet {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str, &'a str)>>(iter: I) -> Self {
        let mut set = TupleSet::new();
        for (d, a, v) in iter {
            set.insert(d, a, v);
        }
        set
    }
}

/// Exact-match F1 between predicted and gold tuple sets.
pub fn pair_f1(pred: &TupleSet, gold: &TupleSet) -> Result<Prf> {
    if gold.is_empty() {
        return Err(Error::Invalid("pair_f1 needs a nonempty gold set".into()));
    }
    let common = pred.tuples.intersection(&gold.tuples).count();
    Ok(Prf::from_counts(common, pred.len(), gold.len()))
}

fn article_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// SQuAD answer normalization: lowercase, drop ASCII punctuation, drop the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punc: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = article_re().replace_all(&no_punc, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Token-multiset F1 between normalized strings. Two empty answers score 1;
/// exactly one empty answer scores 0.
pub fn text_f1(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_toks: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_toks: Vec<&str> = gold_norm.split_whitespace().collect();
    if pred_toks.is_empty() || gold_toks.is_empty() {
        return if pred_toks.is_empty() && gold_toks.is_empty() { 1.0 } else { 0.0 };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_toks {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &pred_toks {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    Prf::from_counts(common, pred_toks.len(), gold_toks.len()).f1
}

/// Set F1 between the first `k` predicted attribute names and the gold names.
pub fn f1_at_k<S: AsRef<str>, G: AsRef<str>>(pred_ranked: &[S], gold: &[G], k: usize) -> Prf {
    let mut top: Vec<String> = Vec::new();
    for name in pred_ranked {
        if top.len() == k {
            break;
        }
        let n = normalize_attribute(name.as_ref());
        if !top.contains(&n) {
            top.push(n);
        }
    }
    let gold: BTreeSet<String> = gold.iter().map(|g| normalize_attribute(g.as_ref())).collect();
    let common = top.iter().filter(|n| gold.contains(*n)).count();
    Prf::from_counts(common, top.len(), gold.len())
}
