//! Schema synthesis from a document sample: candidate attributes with
//! provenance, frequency ranking with a model re-rank boost, value-based
//! validation, and optional decomposition into atomic attributes.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::corpus::{chunk, Document};
use crate::direct::parse_pair_lines;
use crate::error::{Error, Result};
use crate::gateway::{bindings, Gateway, Phase, TemplateId};
use crate::text::{mentions, normalize_attribute};

pub const DEFAULT_BOOST: f64 = 2.0;
pub const VALIDATION_VALUES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeCandidate {
    pub name: String,
    #[serde(skip)]
    pub raw_names: BTreeSet<String>,
    /// Sample documents from which the attribute was extracted.
    pub frequency: usize,
    #[serde(skip)]
    pub upweighted: bool,
    pub score: f64,
    /// `None` until validation has run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validated: Option<bool>,
}

impl AttributeCandidate {
    pub fn new(raw: &str, frequency: usize) -> Self {
        AttributeCandidate {
            name: normalize_attribute(raw),
            raw_names: BTreeSet::from([raw.to_string()]),
            frequency,
            upweighted: false,
            score: frequency as f64,
            validated: None,
        }
    }

    fn upweight(&mut self, boost: f64) {
        self.upweighted = true;
        self.score = self.frequency as f64 * boost;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schema {
    pub topic: String,
    #[serde(skip)]
    pub k: usize,
    #[serde(rename = "attributes")]
    pub ranked: Vec<AttributeCandidate>,
}

impl Schema {
    /// Sort by score, highest first, ties by name.
    pub fn from_candidates(topic: &str, k: usize, mut candidates: Vec<AttributeCandidate>) -> Self {
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
        Schema {
            topic: topic.to_string(),
            k,
            ranked: candidates,
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.ranked.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn truncate(&mut self, n: usize) {
        self.ranked.truncate(n);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One attribute-value pair proposed for a sample document.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCandidate {
    pub raw: String,
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocCandidates {
    pub doc_id: String,
    pub pairs: Vec<SampleCandidate>,
    /// Attribute names dropped because the document never mentions them.
    pub dropped: Vec<String>,
}

/// Keep a proposed pair only if the document mentions the attribute name.
pub fn provenance_filter(doc: &Document, pairs: Vec<(String, String)>) -> DocCandidates {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (raw, value) in pairs {
        if mentions(&doc.text, &raw) {
            kept.push(SampleCandidate {
                name: normalize_attribute(&raw),
                raw,
                value,
            });
        } else {
            log::debug!("{}: dropping attribute {raw:?}, not mentioned in document", doc.id);
            dropped.push(raw);
        }
    }
    DocCandidates {
        doc_id: doc.id.clone(),
        pairs: kept,
        dropped,
    }
}

/// Prompt the open extraction template on every chunk of every sample
/// document and keep the attributes each document actually mentions.
pub fn generate_candidates(
    gateway: &Gateway,
    sample: &[&Document],
    topic: &str,
    chunk_budget: usize,
) -> Result<Vec<DocCandidates>> {
    sample
        .par_iter()
        .map(|doc| {
            let chunks = chunk(doc, chunk_budget)?;
            let mut pairs = Vec::new();
            for c in &chunks {
                let b = bindings([("chunk", c.text.as_str()), ("topic", topic)]);
                let completion = gateway.complete(TemplateId::DirectExtract, &b, Phase::Schema)?;
                pairs.extend(parse_pair_lines(&completion));
            }
            Ok(provenance_filter(doc, pairs))
        })
        .collect()
}

/// Document frequency per normalized attribute name.
pub fn count_frequencies(candidates: &[DocCandidates]) -> Vec<AttributeCandidate> {
    let mut by_name: BTreeMap<String, AttributeCandidate> = BTreeMap::new();
    for doc in candidates {
        let mut seen = BTreeSet::new();
        for p in &doc.pairs {
            let entry = by_name
                .entry(p.name.clone())
                .or_insert_with(|| AttributeCandidate::new(&p.raw, 0));
            entry.raw_names.insert(p.raw.clone());
            if seen.insert(p.name.clone()) {
                entry.frequency += 1;
                entry.score = entry.frequency as f64;
            }
        }
    }
    by_name.into_values().collect()
}

/// Names from a re-rank completion that belong to `known`, one per line,
/// with list markers stripped.
pub fn parse_rerank(completion: &str, known: &BTreeSet<String>) -> BTreeSet<String> {
    completion
        .lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(|c: char| c == '-' || c == '*' || c == '.' || c.is_ascii_digit())
                .trim()
        })
        .map(normalize_attribute)
        .filter(|n| known.contains(n))
        .collect()
}

/// Rank attributes by sample frequency, multiplying the score of those the
/// model picks as most useful by `boost`.
pub fn rank(gateway: &Gateway, topic: &str, k: usize, candidates: &[DocCandidates], boost: f64) -> Result<Schema> {
    let mut attrs = count_frequencies(candidates);
    if attrs.is_empty() {
        return Err(Error::Invalid("no attribute candidates in the sample".into()));
    }
    let by_freq = Schema::from_candidates(topic, k, attrs.clone());
    let listing: String = by_freq
        .ranked
        .iter()
        .map(|a| format!("- {}\n", a.name))
        .collect();
    let b = bindings([("topic", topic), ("attributes", listing.trim_end())]);
    let completion = gateway.complete(TemplateId::SchemaRerank, &b, Phase::Schema)?;
    let known: BTreeSet<String> = attrs.iter().map(|a| a.name.clone()).collect();
    let picked = parse_rerank(&completion, &known);
    if picked.is_empty() {
        log::warn!("re-rank completion named no known attribute; using frequency order");
    }
    for a in &mut attrs {
        if picked.contains(&a.name) {
            a.upweight(boost);
        }
    }
    Ok(Schema::from_candidates(topic, k, attrs))
}

fn is_yes(completion: &str) -> bool {
    let t = completion.trim_start();
    let yes = t.get(..3).is_some_and(|p| p.eq_ignore_ascii_case("yes"));
    if !yes && !t.get(..2).is_some_and(|p| p.eq_ignore_ascii_case("no")) {
        log::debug!("unrecognized validation answer {t:?}; counting as No");
    }
    yes
}

/// Ask whether each sampled value plausibly belongs to the attribute; keep
/// the attribute if any answer is Yes.
pub fn validate_attribute(gateway: &Gateway, topic: &str, attribute: &str, values: &[&str]) -> Result<bool> {
    if values.is_empty() {
        return Err(Error::Invalid(format!("no sampled values to validate {attribute:?}")));
    }
    for value in values {
        let b = bindings([("value", *value), ("attr_str", attribute), ("topic", topic)]);
        if is_yes(&gateway.complete(TemplateId::SchemaValidate, &b, Phase::Schema)?) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// First `n` distinct nonempty values extracted for `attribute`, in sample
/// order.
pub fn sampled_values<'a>(candidates: &'a [DocCandidates], attribute: &str, n: usize) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for p in candidates.iter().flat_map(|d| &d.pairs) {
        if out.len() == n {
            break;
        }
        if p.name == attribute && !p.value.trim().is_empty() && !out.contains(&p.value.as_str()) {
            out.push(&p.value);
        }
    }
    out
}

/// Validate every ranked attribute, dropping those the model rejects for all
/// sampled values. Attributes without sampled values are kept unvalidated.
pub fn validate_schema(gateway: &Gateway, schema: &mut Schema, candidates: &[DocCandidates]) -> Result<()> {
    let topic = schema.topic.clone();
    let mut kept = Vec::with_capacity(schema.ranked.len());
    for mut attr in std::mem::take(&mut schema.ranked) {
        let values = sampled_values(candidates, &attr.name, VALIDATION_VALUES);
        if values.is_empty() {
            kept.push(attr);
            continue;
        }
        let ok = validate_attribute(gateway, &topic, &attr.name, &values)?;
        if ok {
            attr.validated = Some(true);
            kept.push(attr);
        } else {
            log::info!("discarding attribute {:?}: no sampled value judged valid", attr.name);
        }
    }
    schema.ranked = kept;
    Ok(())
}

/// A complex attribute split into atomic parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atomization {
    pub attribute: String,
    /// Atomic `(name, value)` pairs for the exemplar value.
    pub exemplar: Vec<(String, String)>,
    /// Atomic values for each remaining value, aligned with `exemplar`.
    pub values: Vec<Vec<String>>,
}

impl Atomization {
    pub fn names(&self) -> Vec<&str> {
        self.exemplar.iter().map(|(n, _)| n.as_str()).collect()
    }
}

fn json_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(json_scalar).collect::<Vec<_>>().join(", "),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Parse a JSON list of `[name, value]` pairs.
pub fn parse_atomic_pairs(completion: &str) -> Option<Vec<(String, String)>> {
    let start = completion.find('[')?;
    let end = completion.rfind(']')?;
    let parsed: Value = serde_json::from_str(completion.get(start..=end)?).ok()?;
    let pairs: Vec<(String, String)> = parsed
        .as_array()?
        .iter()
        .map(|p| match p.as_array().map(Vec::as_slice) {
            Some([Value::String(name), value]) => Some((name.trim().to_string(), json_scalar(value))),
            _ => None,
        })
        .collect::<Option<_>>()?;
    (!pairs.is_empty()).then_some(pairs)
}

/// Decompose `attribute` using one large-model call on an exemplar value and
/// one small-model call per remaining value and atomic part. Returns `None`
/// when the exemplar completion is not a JSON pair list.
pub fn atomize(
    gateway: &Gateway,
    attribute: &str,
    example_value: &str,
    remaining: &[&str],
) -> Result<Option<Atomization>> {
    let b = bindings([("complex_attribute", attribute), ("complex_value", example_value)]);
    let completion = gateway.complete(TemplateId::AtomicCleanBig, &b, Phase::Cleaning)?;
    let Some(exemplar) = parse_atomic_pairs(&completion) else {
        log::info!("attribute {attribute:?} left unatomized: exemplar completion is not a pair list");
        return Ok(None);
    };
    if exemplar.len() == 1 {
        return Ok(Some(Atomization {
            attribute: attribute.to_string(),
            exemplar,
            values: remaining.iter().map(|v| vec![v.trim().to_string()]).collect(),
        }));
    }
    let values = remaining
        .par_iter()
        .map(|value| {
            exemplar
                .iter()
                .map(|(name, ex)| {
                    let b = bindings([
                        ("complex_attribute_example", attribute),
                        ("complex_extraction_example", example_value),
                        ("cleaned_attribute_example", name.as_str()),
                        ("cleaned_value_example", ex.as_str()),
                        ("complex_attribute", attribute),
                        ("complex_extraction", value),
                        ("cleaned_attribute", name.as_str()),
                    ]);
                    let out = gateway.complete(TemplateId::AtomicCleanSmall, &b, Phase::Cleaning)?;
                    Ok(out.lines().next().unwrap_or("").trim().to_string())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(Atomization {
        attribute: attribute.to_string(),
        exemplar,
        values,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocFormat;
    use crate::gateway::{CompletionProvider, CompletionRequest, ProviderError};
    use std::sync::Arc;

    fn gateway(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Gateway {
        let p: Arc<dyn CompletionProvider> =
            Arc::new(move |r: &CompletionRequest<'_>| Ok::<_, ProviderError>(f(r.prompt)));
        Gateway::with_provider(p, "test")
    }

    fn doc_candidates(names: &[&str]) -> DocCandidates {
        DocCandidates {
            doc_id: "d".into(),
            pairs: names
                .iter()
                .map(|n| SampleCandidate {
                    raw: n.to_string(),
                    name: normalize_attribute(n),
                    value: "v".into(),
                })
                .collect(),
            dropped: Vec::new(),
        }
    }

    #[test]
    fn provenance_keeps_mentioned_names() {
        let doc = Document::new("d", DocFormat::Html, "<th>Monarch</th><td>Charles III</td>");
        let c = provenance_filter(
            &doc,
            vec![
                ("Monarch".into(), "Charles III".into()),
                ("Regulatory Info".into(), "x".into()),
            ],
        );
        assert_eq!(c.pairs.len(), 1);
        assert_eq!(c.pairs[0].name, "monarch");
        assert_eq!(c.pairs[0].value, "Charles III");
        assert_eq!(c.dropped, vec!["Regulatory Info"]);
        assert!(provenance_filter(&doc, Vec::new()).pairs.is_empty());
    }

    #[test]
    fn frequency_then_boost_then_name() {
        let mut docs: Vec<DocCandidates> = (0..7).map(|_| doc_candidates(&["Often"])).collect();
        for d in docs.iter_mut().take(3) {
            d.pairs.extend(doc_candidates(&["Rare", "rare:"]).pairs);
        }
        docs.extend((0..5).map(|_| doc_candidates(&["Mid"])));
        let attrs = count_frequencies(&docs);
        let rare = attrs.iter().find(|a| a.name == "rare").unwrap();
        assert_eq!(rare.frequency, 3);
        assert_eq!(rare.raw_names.len(), 2);

        let g = gateway(|_| "nothing useful".into());
        let s = rank(&g, "t", 10, &docs, 2.0).unwrap();
        assert_eq!(s.names(), vec!["often", "mid", "rare"]);

        // freq 3 boosted to 6 overtakes freq 5
        let g = gateway(|_| "- Rare\n- unknown".into());
        let s = rank(&g, "t", 10, &docs, 2.0).unwrap();
        assert_eq!(s.names(), vec!["often", "rare", "mid"]);
        assert_eq!(s.ranked[1].score, 6.0);

        let tied = vec![doc_candidates(&["b", "a"])];
        let s = rank(&gateway(|_| String::new()), "t", 1, &tied, 2.0).unwrap();
        assert_eq!(s.names(), vec!["a", "b"]);
    }

    #[test]
    fn validation_prefix_rule() {
        let g = gateway(|p: &str| if p.ends_with("\"good\" be a \"x\" value in a t database?\nAnswer:") {
            "Yes, definitely".into()
        } else {
            "No".into()
        });
        assert!(validate_attribute(&g, "t", "x", &["bad", "bad2", "good"]).unwrap());
        assert!(!validate_attribute(&g, "t", "x", &["bad"; 5]).unwrap());
        assert!(validate_attribute(&g, "t", "x", &[]).is_err());
    }

    #[test]
    fn validation_drops_rejected() {
        let g = gateway(|p: &str| if p.contains("a \"keep\" value") { "yes".into() } else { "maybe".into() });
        let docs = vec![doc_candidates(&["keep", "drop"])];
        let mut s = Schema::from_candidates("t", 1, count_frequencies(&docs));
        validate_schema(&g, &mut s, &docs).unwrap();
        assert_eq!(s.names(), vec!["keep"]);
        assert_eq!(s.ranked[0].validated, Some(true));
    }

    #[test]
    fn atomic_pairs_parse() {
        let p = parse_atomic_pairs(r#" [["Spouse Name", "Michelle Robinson"], ["Married Year", 1992]]"#).unwrap();
        assert_eq!(p[1], ("Married Year".to_string(), "1992".to_string()));
        let p = parse_atomic_pairs(r#"[["Countries", ["United States", "Canada"]]]"#).unwrap();
        assert_eq!(p[0].1, "United States, Canada");
        assert!(parse_atomic_pairs("n/a").is_none());
    }

    #[test]
    fn atomize_calls_small_prompt_per_part() {
        let g = gateway(|p: &str| {
            if p.starts_with("Extract one or more") {
                r#"[["Spouse Name", "Michelle Robinson"], ["Married Year", 1992]]"#.into()
            } else if p.ends_with("Attribute: Spouse Name\nValue:") {
                " Laura Welch\n".into()
            } else {
                "1977".into()
            }
        });
        let a = atomize(&g, "Spouse", "Michelle Robinson (m. 1992)", &["Laura Welch (m. 1977)"])
            .unwrap()
            .unwrap();
        assert_eq!(a.names(), vec!["Spouse Name", "Married Year"]);
        assert_eq!(a.values, vec![vec!["Laura Welch".to_string(), "1977".to_string()]]);
        assert_eq!(g.ledger().phase(Phase::Cleaning).calls, 3);

        let g = gateway(|_| "n/a".into());
        assert!(atomize(&g, "Spouse", "x", &["y"]).unwrap().is_none());
    }
}
