//! Synthetic data for offline runs: a lake of device reports with planted
//! attributes in three layouts, a scripted completion model that answers
//! every pipeline prompt from the document text, and planted vote matrices
//! for the label model.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::{Map, Value};

use crate::corpus::{DocFormat, Document};
use crate::error::{Error, Result};
use crate::evaluation::TupleSet;
use crate::gateway::{prompt_hash, CompletionProvider, CompletionRequest, ProviderError};
use crate::synthesis::PatternSpec;
use crate::text::normalize_attribute;

pub const TOPIC: &str = "device reports";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeSpec {
    pub name: &'static str,
    /// Fraction of documents mentioning the attribute.
    pub presence: f64,
}

pub const ATTRIBUTES: [AttributeSpec; 8] = [
    AttributeSpec { name: "Device Name", presence: 1.0 },
    AttributeSpec { name: "510(k) Number", presence: 1.0 },
    AttributeSpec { name: "Applicant", presence: 1.0 },
    AttributeSpec { name: "Decision Date", presence: 1.0 },
    AttributeSpec { name: "Product Code", presence: 0.95 },
    AttributeSpec { name: "Classification", presence: 1.0 },
    AttributeSpec { name: "Predicate Device", presence: 0.3 },
    AttributeSpec { name: "Review Panel", presence: 1.0 },
];

/// Name the scripted model invents for some documents; it never occurs in
/// document text.
pub const HALLUCINATED_ATTRIBUTE: &str = "Regulatory Info";

/// Layouts an attribute can take in a document.
pub const LAYOUTS: usize = 3;

pub fn render_field(layout: usize, name: &str, value: &str) -> String {
    match layout % LAYOUTS {
        0 => format!("{name}: {value}"),
        1 => format!("<tr><th>{name}</th><td>{value}</td></tr>"),
        _ => format!("[{name}] {value}"),
    }
}

fn layout_prefix(layout: usize, name: &str) -> String {
    let n = regex::escape(name);
    match layout % LAYOUTS {
        0 => format!("{n}:[ \\t]*"),
        1 => format!("<th>{n}</th><td>"),
        _ => format!("\\[{n}\\][ \\t]*"),
    }
}

/// Regex capturing the value of `name` in any of the given layouts.
pub fn layout_pattern(name: &str, layouts: &[usize]) -> String {
    let alts: Vec<String> = layouts.iter().map(|&l| layout_prefix(l, name)).collect();
    format!("(?:{})([^<\\n]+)", alts.join("|"))
}

/// First value of `name` in `text` and the layout it was written in.
pub fn find_field(text: &str, name: &str) -> Option<(usize, String)> {
    static CACHE: OnceLock<Mutex<HashMap<(String, usize), Regex>>> = OnceLock::new();
    (0..LAYOUTS)
        .filter_map(|l| {
            let re = CACHE
                .get_or_init(Default::default)
                .lock()
                .expect("regex cache")
                .entry((name.to_string(), l))
                .or_insert_with(|| Regex::new(&layout_pattern(name, &[l])).expect("escaped pattern"))
                .clone();
            re.captures(text).map(|c| {
                let m = c.get(1).expect("one group");
                (m.start(), l, m.as_str().trim().to_string())
            })
        })
        .min()
        .map(|(_, l, v)| (l, v))
}

fn catalogue(name: &str) -> Option<&'static AttributeSpec> {
    let n = normalize_attribute(name);
    ATTRIBUTES.iter().find(|a| normalize_attribute(a.name) == n)
}

const FILLER: [&str; 8] = [
    "This summary was prepared for internal review and is provided for reference only.",
    "The submission included bench testing, biocompatibility data and software documentation.",
    "Additional information may be requested during the review period.",
    "Performance testing demonstrated that the subject product meets its intended use.",
    "Labeling was reviewed for consistency with the indications for use.",
    "No new questions of safety or effectiveness were raised.",
    "The sponsor provided a comparison table and supporting literature.",
    "Sterilization and shelf life were addressed in the submission.",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).expect("nonempty list")
}

fn k_number(rng: &mut ChaCha8Rng) -> String {
    format!("K{:06}", rng.random_range(100_000..1_000_000))
}

fn value_for(name: &str, rng: &mut ChaCha8Rng) -> String {
    match name {
        "Device Name" => format!(
            "{} {} {}",
            pick(rng, &["Accu", "Cardio", "Neuro", "Ortho", "Pulse", "Vita", "Opti", "Sono", "Flex", "Aero"]),
            pick(rng, &["Monitor", "Catheter", "Stent", "Pump", "Scanner", "Analyzer", "Implant", "Sensor"]),
            pick(rng, &["System", "Plus", "II", "Pro", "XL", "Kit"]),
        ),
        "510(k) Number" | "Predicate Device" => k_number(rng),
        "Applicant" => format!(
            "{} {} {}",
            pick(rng, &["Acme", "Northwind", "Bluepeak", "Harbor", "Summit", "Keystone", "Lumen", "Meridian"]),
            pick(rng, &["Medical", "Health", "Biosciences", "Devices", "Surgical"]),
            pick(rng, &["Inc.", "LLC", "Corp."]),
        ),
        "Decision Date" => format!(
            "{}-{:02}-{:02}",
            rng.random_range(2015..2024),
            rng.random_range(1..13),
            rng.random_range(1..29)
        ),
        "Product Code" => (0..3).map(|_| rng.random_range(b'A'..=b'Z') as char).collect(),
        "Classification" => pick(rng, &["Class I", "Class II", "Class III"]).to_string(),
        "Review Panel" => pick(
            rng,
            &["Cardiovascular", "Radiology", "General Hospital", "Orthopedic", "Neurology", "Anesthesiology"],
        )
        .to_string(),
        other => unreachable!("no generator for {other}"),
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLake {
    pub topic: String,
    pub documents: Vec<Document>,
    /// Planted values per document, keyed by attribute display name.
    pub gold: BTreeMap<String, BTreeMap<String, String>>,
}

/// Generate `n_docs` reports. Each attribute's layout rotates with every
/// document that mentions it, so any three consecutive mentions show all
/// three layouts.
#[allow(clippy::needless_range_loop)]
pub fn generate_lake(n_docs: usize, seed: u64) -> SyntheticLake {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let present: Vec<Vec<bool>> = ATTRIBUTES
        .iter()
        .map(|a| {
            let k = (a.presence * n_docs as f64).round() as usize;
            let mut mask = vec![false; n_docs];
            for i in index::sample(&mut rng, n_docs, k.min(n_docs)) {
                mask[i] = true;
            }
            mask
        })
        .collect();
    let mut seen = [0usize; ATTRIBUTES.len()];
    let mut documents = Vec::with_capacity(n_docs);
    let mut gold = BTreeMap::new();
    for i in 0..n_docs {
        let html = i % 4 == 0;
        let id = format!("report_{i:04}.{}", if html { "html" } else { "txt" });
        let mut lines = vec![format!("Report ID R{:04}", i + 1)];
        let mut row = BTreeMap::new();
        for (a, spec) in ATTRIBUTES.iter().enumerate() {
            if a % 2 == 0 {
                let n = rng.random_range(2..5);
                let para: Vec<&str> = (0..n).map(|_| pick(&mut rng, &FILLER)).collect();
                lines.push(String::new());
                lines.push(para.join(" "));
                lines.push(String::new());
            }
            if !present[a][i] {
                continue;
            }
            let value = value_for(spec.name, &mut rng);
            lines.push(render_field(seen[a], spec.name, &value));
            seen[a] += 1;
            row.insert(spec.name.to_string(), value);
        }
        let mut text = lines.join("\n");
        text.push('\n');
        if html {
            text = format!("<html><body>\n{text}</body></html>\n");
        }
        let format = if html { DocFormat::Html } else { DocFormat::Txt };
        documents.push(Document::new(id.clone(), format, text));
        gold.insert(id, row);
    }
    SyntheticLake {
        topic: TOPIC.to_string(),
        documents,
        gold,
    }
}

impl SyntheticLake {
    pub fn gold_tuples(&self) -> TupleSet {
        let mut set = TupleSet::new();
        for (doc, row) in &self.gold {
            for (a, v) in row {
                set.insert(doc, a, v);
            }
        }
        set
    }

    /// Gold rows in the table JSONL layout, without provenance.
    pub fn gold_jsonl(&self) -> String {
        let mut out = String::new();
        for (doc, row) in &self.gold {
            let mut obj = Map::new();
            obj.insert("doc_id".into(), Value::String(doc.clone()));
            for spec in &ATTRIBUTES {
                if let Some(v) = row.get(spec.name) {
                    obj.insert(spec.name.into(), Value::String(v.clone()));
                }
            }
            out.push_str(&serde_json::to_string(&Value::Object(obj)).expect("strings only"));
            out.push('\n');
        }
        out
    }

    /// Write documents into `dir` and the gold rows to `gold_path`.
    pub fn write(&self, dir: &Path, gold_path: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
        for d in &self.documents {
            let path = dir.join(&d.id);
            std::fs::write(&path, &d.text).map_err(|e| Error::write(&path, e))?;
        }
        std::fs::write(gold_path, self.gold_jsonl()).map_err(|e| Error::write(gold_path, e))
    }
}

/// Whether a candidate's source is one of the model's planted wrong
/// extractors (it reads the report header instead of the attribute).
pub fn is_planted_bad(source: &str) -> bool {
    source.contains("Report ID")
}

/// Attribute for which the scripted model writes one syntactically broken
/// pattern.
pub const BROKEN_PATTERN_ATTRIBUTE: &str = "Review Panel";

/// A deterministic stand-in for a language model that answers the
/// pipeline's prompts about [`generate_lake`] documents.
///
/// It extracts what the documents state, except that it sometimes invents
/// an attribute during open extraction, writes extractors covering only two
/// of the three layouts for the first program prompt, and writes a wrong
/// extractor when the second program prompt shows a bracketed field.
#[derive(Debug, Clone, Default)]
pub struct SyntheticModel;

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = s.rfind(start)? + start.len();
    let to = from + s[from..].rfind(end)?;
    Some(&s[from..to])
}

fn quoted_after<'a>(s: &'a str, marker: &str) -> Option<&'a str> {
    let from = s.rfind(marker)? + marker.len();
    let len = s[from..].find('"')?;
    Some(&s[from..from + len])
}

fn date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d{4})-(\d{2})-(\d{2})$").expect("static regex"))
}

impl SyntheticModel {
    fn open_extract(chunk: &str) -> String {
        let mut out: Vec<String> = ATTRIBUTES
            .iter()
            .filter_map(|a| find_field(chunk, a.name).map(|(_, v)| format!("- {}: {v}", a.name)))
            .collect();
        if out.is_empty() {
            return String::new();
        }
        if u8::from_str_radix(&prompt_hash(chunk)[..2], 16).expect("hex").is_multiple_of(8) {
            out.push(format!("- {HALLUCINATED_ATTRIBUTE}: Cleared for marketing"));
        }
        out.join("\n")
    }

    fn attribute_extract(chunk: &str, attribute: &str) -> String {
        catalogue(attribute)
            .and_then(|a| find_field(chunk, a.name).map(|(_, v)| format!("- {}: {v}", a.name)))
            .unwrap_or_default()
    }

    fn fenced(spec: &PatternSpec) -> String {
        format!("Here is an extractor for the field:\n```json\n{}\n```", spec.to_json())
    }

    fn program_a(snippet: &str, attribute: &str) -> String {
        let Some(a) = catalogue(attribute) else { return String::new() };
        let layout = find_field(snippet, a.name).map_or(0, |(l, _)| l);
        Self::fenced(&PatternSpec::new(layout_pattern(a.name, &[layout, (layout + 1) % LAYOUTS])))
    }

    fn program_b(snippet: &str, attribute: &str) -> String {
        let Some(a) = catalogue(attribute) else { return String::new() };
        let layout = find_field(snippet, a.name).map_or(0, |(l, _)| l);
        let spec = match layout {
            2 => PatternSpec::new(r"Report ID (R\d+)"),
            1 if a.name == BROKEN_PATTERN_ATTRIBUTE => PatternSpec::new(format!("<th>{}</th><td>([^<]+", a.name)),
            _ => PatternSpec::new(layout_pattern(a.name, &[0, 1, 2])),
        };
        Self::fenced(&spec)
    }

    fn rerank(prompt: &str) -> String {
        prompt
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(catalogue)
            .map(|a| a.name)
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn validate(prompt: &str) -> String {
        let tail = &prompt[prompt.rfind("Question: Could \"").unwrap_or(0)..];
        let value = quoted_after(tail, "Could \"").unwrap_or("");
        let attr = quoted_after(tail, "be a \"").unwrap_or("");
        if !value.trim().is_empty() && catalogue(attr).is_some() {
            "Yes".into()
        } else {
            "No".into()
        }
    }

    fn atomize_big(prompt: &str) -> String {
        let attr = between(prompt, "Schema: ", "\nValue: ").unwrap_or("");
        let value = between(prompt, "\nValue: ", "\n\nAtomic schemas and values:").unwrap_or("");
        if catalogue(attr).is_none() {
            return "n/a".into();
        }
        let pairs: Vec<(String, String)> = match date_re().captures(value.trim()) {
            Some(c) if normalize_attribute(attr) == "decision date" => vec![
                ("Decision Year".into(), c[1].to_string()),
                ("Decision Month".into(), c[2].to_string()),
                ("Decision Day".into(), c[3].to_string()),
            ],
            _ => vec![(attr.to_string(), value.trim().to_string())],
        };
        serde_json::to_string(&pairs).expect("strings only")
    }

    fn atomize_small(prompt: &str) -> String {
        let tail = &prompt[prompt.rfind("Context: ").map_or(0, |i| i + "Context: ".len())..];
        let (context, rest) = tail.split_once("\nAttribute: ").unwrap_or((tail, ""));
        let extraction = context.split_once(": ").map_or("", |(_, v)| v).trim();
        let target = rest.split_once("\nValue:").map_or(rest, |(t, _)| t).trim();
        match date_re().captures(extraction) {
            Some(c) if target.ends_with("Year") => c[1].to_string(),
            Some(c) if target.ends_with("Month") => c[2].to_string(),
            Some(c) if target.ends_with("Day") => c[3].to_string(),
            _ => extraction.to_string(),
        }
    }

    pub fn answer(&self, prompt: &str) -> String {
        if prompt.starts_with("Here is a list of attributes extracted") {
            Self::rerank(prompt)
        } else if prompt.starts_with("Extract one or more atomic") {
            Self::atomize_big(prompt)
        } else if prompt.starts_with("Extract the attribute from the context.") {
            Self::atomize_small(prompt)
        } else if prompt.starts_with("Question: Could ") {
            Self::validate(prompt)
        } else if let Some(chunk) = between(prompt, "Sample text:\n", "\n\nQuestion: List all relevant attributes") {
            Self::open_extract(chunk)
        } else if let Some(chunk) = between(prompt, "Here is a file sample:\n\n", "\n\nQuestion: Return the full") {
            Self::attribute_extract(chunk, quoted_after(prompt, "Return the full \"").unwrap_or(""))
        } else if let Some(snippet) = between(
            prompt,
            "Here is a sample of text:\n\n",
            "\n\n\nQuestion: Write a python function to extract the entire",
        ) {
            Self::program_a(snippet, quoted_after(prompt, "to extract the entire \"").unwrap_or(""))
        } else if let Some(snippet) =
            between(prompt, "Here is a sample of text:\n\n", "\n\nQuestion: Write a python function called")
        {
            let tail = &prompt[prompt.rfind("Write a python function called").unwrap_or(0)..];
            Self::program_b(snippet, quoted_after(tail, "to extract the \"").unwrap_or(""))
        } else {
            String::new()
        }
    }
}

impl CompletionProvider for SyntheticModel {
    fn complete(&self, request: &CompletionRequest<'_>) -> std::result::Result<String, ProviderError> {
        Ok(self.answer(request.prompt))
    }
}

/// Votes drawn from the symmetric-noise model: each function abstains with
/// probability `abstain_rate`, otherwise votes for the true class with its
/// accuracy and uniformly for one of the other `b - 1` classes otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedVotes {
    /// `outputs[j][i]`: function `j` on document `i`; `None` is an abstention.
    pub outputs: Vec<Vec<Option<String>>>,
    pub truth: Vec<String>,
}

pub fn planted_votes(accuracies: &[f64], b: usize, n_docs: usize, abstain_rate: f64, seed: u64) -> PlantedVotes {
    assert!(b >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = |c: usize| format!("v{c}");
    let mut outputs = vec![Vec::with_capacity(n_docs); accuracies.len()];
    let mut truth = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let t = rng.random_range(0..b);
        truth.push(label(t));
        for (j, &a) in accuracies.iter().enumerate() {
            let vote = if rng.random::<f64>() < abstain_rate {
                None
            } else if rng.random::<f64>() < a {
                Some(label(t))
            } else {
                let wrong = (t + rng.random_range(1..b)) % b;
                Some(label(wrong))
            };
            outputs[j].push(vote);
        }
    }
    PlantedVotes { outputs, truth }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{bindings, TemplateId};

    #[test]
    fn lake_is_deterministic_and_planted() {
        let a = generate_lake(40, 3);
        let b = generate_lake(40, 3);
        assert_eq!(a.documents, b.documents);
        let with_pred = a.gold.values().filter(|r| r.contains_key("Predicate Device")).count();
        assert_eq!(with_pred, 12);
        for d in &a.documents {
            for (name, value) in &a.gold[&d.id] {
                assert_eq!(find_field(&d.text, name).map(|(_, v)| v), Some(value.clone()));
            }
            assert!(!d.text.contains(HALLUCINATED_ATTRIBUTE));
        }
    }

    #[test]
    fn layouts_rotate() {
        let lake = generate_lake(10, 1);
        let layouts: Vec<usize> = lake
            .documents
            .iter()
            .take(3)
            .map(|d| find_field(&d.text, "Device Name").unwrap().0)
            .collect();
        assert_eq!(layouts, vec![0, 1, 2]);
    }

    #[test]
    fn model_answers_each_template() {
        let m = SyntheticModel;
        let text = "Report ID R0001\n<tr><th>Applicant</th><td>Acme Health LLC</td></tr>\n[Decision Date] 2019-03-14\n";
        let ask = |t: TemplateId, pairs: &[(&str, &str)]| m.answer(&t.render(&bindings(pairs.iter().copied())).unwrap());
        let direct = ask(TemplateId::DirectExtract, &[("chunk", text), ("topic", TOPIC)]);
        assert!(direct.starts_with("- Applicant: Acme Health LLC\n- Decision Date: 2019-03-14"));
        assert_eq!(
            ask(TemplateId::AttrExtract, &[("chunk", text), ("attribute", "applicant")]),
            "- Applicant: Acme Health LLC"
        );
        assert_eq!(ask(TemplateId::AttrExtract, &[("chunk", text), ("attribute", "review panel")]), "");
        let a = ask(TemplateId::FnGenA, &[("chunk", text), ("attribute", "applicant"), ("function_field", "applicant")]);
        assert!(a.contains("```json") && !is_planted_bad(&a));
        let b = ask(TemplateId::FnGenB, &[("chunk", text), ("attribute", "decision date"), ("function_field", "decision_date")]);
        assert!(is_planted_bad(&b));
        assert_eq!(ask(TemplateId::SchemaRerank, &[("topic", TOPIC), ("attributes", "- applicant\n- regulatory info")]), "Applicant");
        assert_eq!(ask(TemplateId::SchemaValidate, &[("value", "x"), ("attr_str", "applicant"), ("topic", TOPIC)]), "Yes");
        assert_eq!(ask(TemplateId::SchemaValidate, &[("value", "x"), ("attr_str", "regulatory info"), ("topic", TOPIC)]), "No");
        let big = ask(TemplateId::AtomicCleanBig, &[("complex_attribute", "decision date"), ("complex_value", "2019-03-14")]);
        assert_eq!(big, r#"[["Decision Year","2019"],["Decision Month","03"],["Decision Day","14"]]"#);
        let small = ask(
            TemplateId::AtomicCleanSmall,
            &[
                ("complex_attribute_example", "decision date"),
                ("complex_extraction_example", "2019-03-14"),
                ("cleaned_attribute_example", "Decision Month"),
                ("cleaned_value_example", "03"),
                ("complex_attribute", "decision date"),
                ("complex_extraction", "2021-11-02"),
                ("cleaned_attribute", "Decision Month"),
            ],
        );
        assert_eq!(small, "11");
    }

    #[test]
    fn planted_votes_match_accuracy() {
        let p = planted_votes(&[0.9, 0.6], 3, 4000, 0.0, 5);
        for (j, a) in [0.9, 0.6].iter().enumerate() {
            let hit = p.outputs[j].iter().zip(&p.truth).filter(|(v, t)| v.as_deref() == Some(t.as_str())).count();
            assert!((hit as f64 / 4000.0 - a).abs() < 0.03);
        }
        let sparse = planted_votes(&[0.9], 2, 1000, 0.5, 5);
        let abstained = sparse.outputs[0].iter().filter(|v| v.is_none()).count();
        assert!((400..600).contains(&abstained));
    }
}
