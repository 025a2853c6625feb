//! Native extractor programs: a regex, a capture group, and a chain of
//! string post-processing steps. Serialized as
//! `{"pattern": ..., "group": 1, "post": ["trim", {"split": ","}], "all": false}`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::collapse_whitespace;

fn default_group() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub pattern: String,
    #[serde(default = "default_group")]
    pub group: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub post: Vec<PostOp>,
    /// Collect every match instead of the first.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub all: bool,
}

impl PatternSpec {
    pub fn new(pattern: impl Into<String>) -> Self {
        PatternSpec {
            pattern: pattern.into(),
            group: 1,
            post: vec![PostOp::Trim],
            all: false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostOp {
    Trim,
    StripTags,
    CollapseWhitespace,
    Lowercase,
    /// Split every item on a separator.
    Split(String),
    /// Trim these characters from both ends.
    StripChars(String),
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").expect("static regex"))
}

impl PostOp {
    fn apply(&self, items: Vec<String>) -> Vec<String> {
        match self {
            PostOp::Split(sep) if !sep.is_empty() => items
                .iter()
                .flat_map(|s| s.split(sep.as_str()).map(str::to_string))
                .collect(),
            PostOp::Split(_) => items,
            op => items.into_iter().map(|s| op.apply_one(s)).collect(),
        }
    }

    fn apply_one(&self, s: String) -> String {
        match self {
            PostOp::Trim => s.trim().to_string(),
            PostOp::StripTags => tag_re().replace_all(&s, " ").into_owned(),
            PostOp::CollapseWhitespace => collapse_whitespace(&s),
            PostOp::Lowercase => s.to_lowercase(),
            PostOp::StripChars(chars) => s.trim_matches(|c| chars.contains(c)).to_string(),
            PostOp::Split(_) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternError {
    Syntax(String),
    InvalidGroup { group: usize, groups: usize },
}

#[derive(Debug, Clone)]
pub struct PatternExtractor {
    spec: PatternSpec,
    regex: Regex,
}

impl PatternExtractor {
    pub fn compile(spec: PatternSpec) -> Result<Self, PatternError> {
        let regex = Regex::new(&spec.pattern).map_err(|e| PatternError::Syntax(e.to_string()))?;
        // captures_len counts the implicit whole-match group 0
        let groups = regex.captures_len() - 1;
        if spec.group > groups {
            return Err(PatternError::InvalidGroup {
                group: spec.group,
                groups,
            });
        }
        Ok(PatternExtractor { spec, regex })
    }

    pub fn spec(&self) -> &PatternSpec {
        &self.spec
    }

    /// Matched values after post-processing, empties removed.
    pub fn extract(&self, text: &str) -> Vec<String> {
        let group = |c: regex::Captures<'_>| c.get(self.spec.group).map(|m| m.as_str().to_string());
        let mut items: Vec<String> = if self.spec.all {
            self.regex.captures_iter(text).filter_map(group).collect()
        } else {
            self.regex.captures(text).and_then(group).into_iter().collect()
        };
        for op in &self.spec.post {
            items = op.apply(items);
        }
        items.retain(|s| !s.trim().is_empty());
        items
    }
}
