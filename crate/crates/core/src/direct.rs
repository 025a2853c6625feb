//! Direct extraction: prompt the model on every chunk of every document and
//! parse its `- attribute: value` lists into records.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{chunk, Corpus};
use crate::error::{Error, Result};
use crate::gateway::{bindings, Gateway, Phase, TemplateId};
use crate::schema::{AttributeCandidate, Schema};
use crate::text::normalize_attribute;

/// `- <attribute>: <value>` lines with the attribute as written.
pub fn parse_pair_lines(completion: &str) -> Vec<(String, String)> {
    completion
        .lines()
        .filter_map(|line| {
            let rest = line.trim_start().strip_prefix('-')?;
            let (attr, value) = rest.split_once(':')?;
            let (attr, value) = (attr.trim(), value.trim());
            if attr.is_empty() || value.is_empty() {
                return None;
            }
            Some((attr.to_string(), value.to_string()))
        })
        .collect()
}

/// Parse a list completion into normalized `(attribute, value)` pairs.
/// Lines that do not match the list grammar are ignored.
pub fn deserialize_pairs(completion: &str) -> Vec<(String, String)> {
    parse_pair_lines(completion)
        .into_iter()
        .map(|(a, v)| (normalize_attribute(&a), v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectRecord {
    pub doc_id: String,
    /// First occurrence of each attribute across the document's chunks.
    pub pairs: Vec<(String, String)>,
}

impl DirectRecord {
    pub fn get(&self, attribute: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(a, _)| a == attribute)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct DirectOutput {
    pub schema: Schema,
    pub records: Vec<DirectRecord>,
}

/// Merge per-chunk pairs in chunk order; the first value seen for an
/// attribute wins.
pub fn merge_chunks(doc_id: &str, per_chunk: &[Vec<(String, String)>]) -> DirectRecord {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for chunk_pairs in per_chunk {
        for (a, v) in chunk_pairs {
            if !pairs.iter().any(|(seen, _)| seen == a) {
                pairs.push((a.clone(), v.clone()));
            }
        }
    }
    DirectRecord {
        doc_id: doc_id.to_string(),
        pairs,
    }
}

/// Run the open extraction prompt over every chunk of the corpus.
pub fn extract_direct(gateway: &Gateway, corpus: &Corpus, topic: &str, chunk_budget: usize) -> Result<DirectOutput> {
    if corpus.is_empty() {
        return Err(Error::Invalid("direct extraction needs a nonempty corpus".into()));
    }
    let records = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let chunks = chunk(doc, chunk_budget)?;
            let per_chunk = chunks
                .par_iter()
                .map(|c| {
                    let b = bindings([("chunk", c.text.as_str()), ("topic", topic)]);
                    let completion = gateway.complete(TemplateId::DirectExtract, &b, Phase::Direct)?;
                    let pairs = deserialize_pairs(&completion);
                    if pairs.is_empty() && !completion.trim().is_empty() {
                        log::debug!("{} chunk {}: no attribute lines in completion", doc.id, c.index);
                    }
                    Ok(pairs)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(merge_chunks(&doc.id, &per_chunk))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        for (a, _) in &r.pairs {
            *freq.entry(a.clone()).or_default() += 1;
        }
    }
    let candidates = freq
        .into_iter()
        .map(|(name, frequency)| AttributeCandidate::new(&name, frequency))
        .collect();
    let schema = Schema::from_candidates(topic, corpus.len(), candidates);
    Ok(DirectOutput { schema, records })
}
