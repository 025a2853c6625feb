//! Candidate extractor synthesis: prompt for programs on keyword snippets,
//! pull the program out of the completion, check that it compiles, and run
//! it over documents.

mod pattern;
mod sandbox;

use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Snippet};
use crate::error::Result;
use crate::gateway::{bindings, Gateway, Phase, TemplateId};
use crate::text::function_field;

pub use pattern::{PatternError, PatternExtractor, PatternSpec, PostOp};
pub use sandbox::{
    CheckResponse, RunResponse, SandboxConfig, SandboxDoc, SandboxError, SandboxPool, SandboxRequest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptVariant {
    A,
    B,
}

impl PromptVariant {
    pub fn template(self) -> TemplateId {
        match self {
            PromptVariant::A => TemplateId::FnGenA,
            PromptVariant::B => TemplateId::FnGenB,
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptVariant::A => "A",
            PromptVariant::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Script,
    NativePattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Unchecked,
    Compiled,
    Rejected(String),
}

pub mod reason {
    pub const SYNTAX: &str = "syntax";
    pub const NO_ENTRYPOINT: &str = "no-entrypoint";
    pub const INVALID_GROUP: &str = "invalid-group";
    pub const SANDBOX_UNAVAILABLE: &str = "sandbox-unavailable";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateFunction {
    pub id: String,
    pub attribute: String,
    pub prompt: PromptVariant,
    pub source: String,
    pub kind: CandidateKind,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl CandidateFunction {
    pub fn new(attribute: &str, prompt: PromptVariant, ordinal: usize, source: String) -> Self {
        let kind = classify(&source);
        CandidateFunction {
            id: format!("{attribute}:{prompt}:{ordinal}"),
            attribute: attribute.to_string(),
            prompt,
            source,
            kind,
            status: Status::Unchecked,
            score: None,
        }
    }

    pub fn entrypoint(&self) -> String {
        entrypoint(&self.attribute)
    }

    pub fn is_compiled(&self) -> bool {
        self.status == Status::Compiled
    }
}

pub fn entrypoint(attribute: &str) -> String {
    format!("get_{}_field", function_field(attribute))
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").expect("static regex"))
}

/// The function header that ends the first prompt; completions of that
/// prompt continue the body.
pub fn header_stub(attribute: &str) -> String {
    format!(
        "import re\n\ndef {}(text: str):\n    \"\"\"\n    Function to extract the \"{attribute} field\". \n    \"\"\"\n",
        entrypoint(attribute)
    )
}

/// Program text in a completion: the first fenced block if any, otherwise
/// the whole completion. A bare body continuing the first prompt's header is
/// given that header back.
pub fn extract_source(completion: &str, variant: PromptVariant, attribute: &str) -> Option<String> {
    if let Some(c) = fence_re().captures(completion) {
        let body = c[1].trim_end();
        return (!body.trim().is_empty()).then(|| body.to_string());
    }
    if completion.trim().is_empty() {
        return None;
    }
    let body = completion.trim_end();
    if variant == PromptVariant::A && classify(body) == CandidateKind::Script && !body.contains("def ") {
        return Some(format!("{}{}", header_stub(attribute), body.trim_start_matches('\n')));
    }
    Some(body.trim_start().to_string())
}

fn as_pattern(source: &str) -> Option<PatternSpec> {
    serde_json::from_str(source.trim()).ok()
}

pub fn classify(source: &str) -> CandidateKind {
    match as_pattern(source) {
        Some(_) => CandidateKind::NativePattern,
        None => CandidateKind::Script,
    }
}

/// Request candidates for `attribute`: every snippet crossed with both
/// prompts, `per_prompt` samples each, in that order, stopping at `cap`
/// requests.
pub fn synthesize(
    gateway: &Gateway,
    attribute: &str,
    snippets: &[Snippet],
    per_prompt: usize,
    cap: usize,
) -> Result<Vec<CandidateFunction>> {
    let field = function_field(attribute);
    let mut jobs = Vec::new();
    for (i, snippet) in snippets.iter().enumerate() {
        for variant in [PromptVariant::A, PromptVariant::B] {
            for s in 0..per_prompt {
                jobs.push((snippet, variant, i * per_prompt + s, s as u32));
            }
        }
    }
    jobs.truncate(cap);
    let results = jobs
        .par_iter()
        .map(|(snippet, variant, ordinal, sample)| {
            let b = bindings([
                ("chunk", snippet.text.as_str()),
                ("attribute", attribute),
                ("function_field", field.as_str()),
            ]);
            let completion = gateway.complete_sample(variant.template(), &b, Phase::Synthesis, *sample)?;
            Ok(match extract_source(&completion, *variant, attribute) {
                Some(src) => Some(CandidateFunction::new(attribute, *variant, *ordinal, src)),
                None => {
                    log::debug!("{attribute}:{variant}:{ordinal}: empty completion");
                    None
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Decide whether a candidate can run. Scripts need a sandbox; patterns are
/// compiled in process.
pub fn compile_check(candidate: &mut CandidateFunction, sandbox: Option<&SandboxPool>) {
    candidate.status = match candidate.kind {
        CandidateKind::NativePattern => {
            match as_pattern(&candidate.source).map(PatternExtractor::compile) {
                Some(Ok(_)) => Status::Compiled,
                Some(Err(PatternError::InvalidGroup { .. })) => Status::Rejected(reason::INVALID_GROUP.into()),
                Some(Err(PatternError::Syntax(_))) | None => Status::Rejected(reason::SYNTAX.into()),
            }
        }
        CandidateKind::Script => match sandbox {
            None => Status::Rejected(reason::SANDBOX_UNAVAILABLE.into()),
            Some(pool) => match pool.check(&candidate.source, &candidate.entrypoint()) {
                Ok(CheckResponse { ok: true, .. }) => Status::Compiled,
                Ok(CheckResponse { reason, .. }) => Status::Rejected(reason.unwrap_or_else(|| "rejected".into())),
                Err(SandboxError::Unavailable(msg)) => {
                    log::warn!("{msg}");
                    Status::Rejected(reason::SANDBOX_UNAVAILABLE.into())
                }
                Err(e) => Status::Rejected(e.to_string()),
            },
        },
    };
    if let Status::Rejected(why) = &candidate.status {
        log::debug!("{} rejected: {why}", candidate.id);
    }
}

fn join_values(values: Vec<String>) -> Option<String> {
    let joined = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect::<Vec<_>>()
        .join(", ");
    (!joined.is_empty()).then_some(joined)
}

/// Per-document output of a compiled candidate; `None` when the extractor
/// finds nothing, fails on that document, or cannot run at all.
pub fn execute(candidate: &CandidateFunction, docs: &[&Document], sandbox: Option<&SandboxPool>) -> Vec<Option<String>> {
    let empty = || vec![None; docs.len()];
    if !candidate.is_compiled() {
        return empty();
    }
    match candidate.kind {
        CandidateKind::NativePattern => {
            let Some(Ok(f)) = as_pattern(&candidate.source).map(PatternExtractor::compile) else {
                return empty();
            };
            docs.iter().map(|d| join_values(f.extract(&d.text))).collect()
        }
        CandidateKind::Script => {
            let Some(pool) = sandbox else { return empty() };
            let batch: Vec<SandboxDoc> = docs
                .iter()
                .map(|d| SandboxDoc {
                    doc_id: d.id.clone(),
                    text: d.text.clone(),
                })
                .collect();
            match pool.run(&candidate.source, &candidate.entrypoint(), &batch) {
                Ok(results) => results
                    .into_iter()
                    .zip(docs)
                    .map(|(r, d)| match r {
                        Ok(values) => join_values(values),
                        Err(err) => {
                            log::debug!("{} failed on {}: {err}", candidate.id, d.id);
                            None
                        }
                    })
                    .collect(),
                Err(e) => {
                    log::warn!("{} aborted: {e}", candidate.id);
                    empty()
                }
            }
        }
    }
}
