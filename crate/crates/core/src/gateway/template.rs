//! The fixed prompt templates and their rendering.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// Open extraction of every attribute/value pair in a chunk.
    DirectExtract,
    /// Extraction of one named attribute's span from a chunk.
    AttrExtract,
    /// Function generation, task description only.
    FnGenA,
    /// Function generation with two worked examples.
    FnGenB,
    SchemaRerank,
    SchemaValidate,
    AtomicCleanBig,
    AtomicCleanSmall,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::DirectExtract,
        TemplateId::AttrExtract,
        TemplateId::FnGenA,
        TemplateId::FnGenB,
        TemplateId::SchemaRerank,
        TemplateId::SchemaValidate,
        TemplateId::AtomicCleanBig,
        TemplateId::AtomicCleanSmall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::DirectExtract => "direct_extract",
            TemplateId::AttrExtract => "attr_extract",
            TemplateId::FnGenA => "fn_gen_A",
            TemplateId::FnGenB => "fn_gen_B",
            TemplateId::SchemaRerank => "schema_rerank",
            TemplateId::SchemaValidate => "schema_validate",
            TemplateId::AtomicCleanBig => "atomic_clean_big",
            TemplateId::AtomicCleanSmall => "atomic_clean_small",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::DirectExtract => include_str!("../prompts/direct_extract.txt"),
            TemplateId::AttrExtract => include_str!("../prompts/attr_extract.txt"),
            TemplateId::FnGenA => include_str!("../prompts/fn_gen_a.txt"),
            TemplateId::FnGenB => include_str!("../prompts/fn_gen_b.txt"),
            TemplateId::SchemaRerank => include_str!("../prompts/schema_rerank.txt"),
            TemplateId::SchemaValidate => include_str!("../prompts/schema_validate.txt"),
            TemplateId::AtomicCleanBig => include_str!("../prompts/atomic_clean_big.txt"),
            TemplateId::AtomicCleanSmall => include_str!("../prompts/atomic_clean_small.txt"),
        }
    }

    /// Distinct placeholder names, in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for seg in segments(self.body()) {
            if let Segment::Slot(name) = seg {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }

    /// Substitute every `{{name}}` with its binding. Every placeholder must be
    /// bound and every binding must name a placeholder.
    pub fn render(self, bindings: &Bindings) -> Result<String> {
        let body = self.body();
        let mut out = String::with_capacity(body.len() + 256);
        for seg in segments(body) {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(Error::Template {
                            template: self.name(),
                            message: format!("placeholder {{{{{name}}}}} is unbound"),
                        })
                    }
                },
            }
        }
        let known = self.placeholders();
        if let Some(extra) = bindings.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Template {
                template: self.name(),
                message: format!("binding {extra:?} matches no placeholder"),
            });
        }
        Ok(out)
    }

    /// Literal text between placeholders, in order.
    pub fn literal_segments(self) -> Vec<&'static str> {
        segments(self.body())
            .into_iter()
            .filter_map(|s| match s {
                Segment::Text(t) => Some(t),
                Segment::Slot(_) => None,
            })
            .collect()
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Bindings = BTreeMap<String, String>;

/// Build bindings from `(name, value)` pairs.
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn segments(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open..].find("}}") else {
            break;
        };
        let name = &rest[open + 2..open + close];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            out.push(Segment::Text(&rest[..open + 2]));
            rest = &rest[open + 2..];
            continue;
        }
        if open > 0 {
            out.push(Segment::Text(&rest[..open]));
        }
        out.push(Segment::Slot(name));
        rest = &rest[open + close + 2..];
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    out
}
