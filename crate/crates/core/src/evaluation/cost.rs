//! Token-cost model for direct extraction versus code synthesis.
//!
//! Direct extraction pays for every document. Code synthesis pays for the
//! schema sample once and then a fixed amount per attribute (candidate
//! function prompts plus oracle prompts on the sample), independent of how
//! many documents the lake holds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostScenario {
    pub n_docs: u64,
    pub tokens_per_doc: u64,
    pub n_attributes: u64,
    /// Documents sampled for schema synthesis and function scoring.
    pub sample_size: u64,
    pub candidates_per_attribute: u64,
    /// Instruction and in-context example tokens around the inserted text.
    pub prompt_overhead: u64,
    pub completion_allowance: u64,
    /// Tokens in one keyword-search window inserted into synthesis and
    /// oracle prompts.
    pub snippet_tokens: u64,
}

impl Default for CostScenario {
    /// 10 attributes, 10K documents of 10K tokens, 10 sample documents and
    /// 10 candidates per attribute.
    fn default() -> Self {
        CostScenario {
            n_docs: 10_000,
            tokens_per_doc: 10_000,
            n_attributes: 10,
            sample_size: 10,
            candidates_per_attribute: 10,
            prompt_overhead: 1500,
            completion_allowance: 500,
            snippet_tokens: 500,
        }
    }
}

impl CostScenario {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_docs", self.n_docs),
            ("tokens_per_doc", self.tokens_per_doc),
            ("n_attributes", self.n_attributes),
            ("sample_size", self.sample_size),
            ("candidates_per_attribute", self.candidates_per_attribute),
            ("prompt_overhead", self.prompt_overhead),
            ("completion_allowance", self.completion_allowance),
            ("snippet_tokens", self.snippet_tokens),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Invalid(format!("cost scenario field {name} must be positive"))),
            None => Ok(()),
        }
    }

    fn per_direct_doc(&self) -> f64 {
        (self.tokens_per_doc + self.prompt_overhead + self.completion_allowance) as f64
    }

    fn schema_phase(&self) -> f64 {
        self.sample_size as f64 * self.per_direct_doc()
    }

    /// Synthesis plus oracle tokens for one attribute.
    pub fn per_attribute(&self) -> f64 {
        let calls = self.candidates_per_attribute + self.sample_size;
        calls as f64 * (self.snippet_tokens + self.prompt_overhead + self.completion_allowance) as f64
    }
}

pub fn cost_direct(s: &CostScenario) -> f64 {
    s.n_docs as f64 * s.per_direct_doc()
}

pub fn cost_code(s: &CostScenario) -> f64 {
    s.schema_phase() + s.n_attributes as f64 * s.per_attribute()
}

/// Number of documents at which both strategies cost the same.
pub fn crossover_docs(s: &CostScenario) -> f64 {
    cost_code(s) / s.per_direct_doc()
}

/// Number of attributes at which both strategies cost the same, holding the
/// document count fixed. `+inf` when code synthesis never catches up.
pub fn crossover_attrs(s: &CostScenario) -> f64 {
    let per_attr = s.per_attribute();
    let headroom = cost_direct(s) - s.schema_phase();
    if per_attr <= 0.0 || headroom < 0.0 {
        return f64::INFINITY;
    }
    headroom / per_attr
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub scenario: CostScenario,
    pub cost_direct: f64,
    pub cost_code: f64,
    pub reduction: f64,
    pub crossover_docs: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub crossover_attrs: f64,
    /// `(n_docs, direct, code)` at decades from 10 to 1M documents.
    pub by_docs: Vec<(u64, f64, f64)>,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

impl CostReport {
    pub fn new(scenario: CostScenario) -> Result<Self> {
        scenario.validate()?;
        let by_docs = [10u64, 100, 1_000, 10_000, 100_000, 1_000_000]
            .into_iter()
            .map(|n| {
                let s = CostScenario { n_docs: n, ..scenario };
                (n, cost_direct(&s), cost_code(&s))
            })
            .collect();
        Ok(CostReport {
            scenario,
            cost_direct: cost_direct(&scenario),
            cost_code: cost_code(&scenario),
            reduction: cost_direct(&scenario) / cost_code(&scenario),
            crossover_docs: crossover_docs(&scenario),
            crossover_attrs: crossover_attrs(&scenario),
            by_docs,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>12}  {:>16}  {:>16}", "documents", "direct tokens", "code tokens");
        for (n, d, c) in &self.by_docs {
            let _ = writeln!(out, "{n:>12}  {d:>16.0}  {c:>16.0}");
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "at {} documents: direct {:.0}, code {:.0}, reduction {:.1}x",
            self.scenario.n_docs, self.cost_direct, self.cost_code, self.reduction
        );
        let _ = writeln!(out, "crossover documents: {:.1}", self.crossover_docs);
        let _ = writeln!(out, "crossover attributes: {:.1}", self.crossover_attrs);
        out
    }
}
