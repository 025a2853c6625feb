//! End-to-end runs: corpus, schema, extraction by the selected strategy,
//! table, and the artifacts written to disk.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregation::{
    aggregate_outputs, guard_oracle, select_candidates, AggregationConfig, AttributeDiagnostics, Method, Prediction,
};
use crate::corpus::{self, find_snippet, keyword_search, Corpus, Document, DEFAULT_MAX_HITS, DEFAULT_WINDOW};
use crate::direct::{extract_direct, parse_pair_lines};
use crate::error::{Error, Result};
use crate::evaluation::{f1_at_k, pair_f1, Prf, TupleSet};
use crate::gateway::{
    bindings, CacheMode, CompletionProvider, CostLedger, Gateway, GatewayConfig, HttpCompletions, Phase, TemplateId,
};
use crate::schema::{self, Schema, DEFAULT_BOOST};
use crate::synthesis::{self, CandidateFunction, SandboxConfig, SandboxPool, Status};
use crate::table::{materialize, Cell, CellPrediction, Provenance, Table};
use crate::text::normalize_attribute;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Prompt on every chunk of every document.
    Direct,
    /// One synthesized function per attribute.
    Code,
    /// Many candidate functions per attribute, filtered and aggregated.
    #[default]
    Codeplus,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Mode::Direct),
            "code" => Ok(Mode::Code),
            "codeplus" => Ok(Mode::Codeplus),
            other => Err(Error::Invalid(format!("unknown mode {other:?} (direct, code, codeplus)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Mode::Direct => "direct",
            Mode::Code => "code",
            Mode::Codeplus => "codeplus",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lake: PathBuf,
    pub topic: String,
    pub mode: Mode,
    /// Documents sampled for schema synthesis.
    pub k: usize,
    pub tau: f64,
    pub b: usize,
    pub boost: f64,
    pub chunk_budget: usize,
    /// Cap on candidate functions requested per attribute. Code mode always
    /// uses one.
    pub candidates: Option<usize>,
    pub per_prompt: usize,
    pub max_hits: usize,
    pub window: usize,
    /// Documents the oracle is asked about when scoring functions.
    pub eval_size: usize,
    pub max_attributes: Option<usize>,
    /// Drop functions scoring at or below the threshold. Defaults to on for
    /// codeplus and off for code.
    pub filter: Option<bool>,
    pub method: Option<Method>,
    pub validate: bool,
    pub atomize: bool,
    pub fixtures: Option<PathBuf>,
    pub replay_only: bool,
    pub record: bool,
    pub model: String,
    pub small_model: Option<String>,
    pub max_in_flight: usize,
    pub out: PathBuf,
    pub sandbox: Option<SandboxConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lake: PathBuf::new(),
            topic: String::new(),
            mode: Mode::Codeplus,
            k: 10,
            tau: 0.5,
            b: 5,
            boost: DEFAULT_BOOST,
            chunk_budget: 3000,
            candidates: None,
            per_prompt: 1,
            max_hits: DEFAULT_MAX_HITS,
            window: DEFAULT_WINDOW,
            eval_size: 10,
            max_attributes: None,
            filter: None,
            method: None,
            validate: true,
            atomize: false,
            fixtures: None,
            replay_only: false,
            record: false,
            model: GatewayConfig::default().model,
            small_model: None,
            max_in_flight: 4,
            out: PathBuf::from("."),
            sandbox: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.topic.trim().is_empty() {
            return bad("topic must be set");
        }
        if self.k == 0 || self.eval_size == 0 || self.per_prompt == 0 || self.max_hits == 0 {
            return bad("k, eval_size, per_prompt and max_hits must be positive");
        }
        if self.b < 2 {
            return bad("b must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.boost < 1.0 {
            return bad("boost must be at least 1");
        }
        if self.replay_only && self.record {
            return bad("replay-only and record are exclusive");
        }
        if self.chunk_budget < crate::corpus::MIN_CHUNK_BUDGET {
            return Err(Error::BudgetTooSmall(self.chunk_budget));
        }
        Ok(())
    }

    pub fn cache_mode(&self) -> CacheMode {
        if self.replay_only {
            CacheMode::ReplayOnly
        } else if self.record {
            CacheMode::Record
        } else {
            CacheMode::ReadThrough
        }
    }

    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            model: self.model.clone(),
            small_model: self.small_model.clone(),
            mode: self.cache_mode(),
            fixture_path: self.fixtures.clone(),
            max_in_flight: self.max_in_flight,
            ..GatewayConfig::default()
        }
    }

    /// Candidate cap, filtering and aggregation implied by the mode.
    pub fn aggregation(&self) -> (usize, AggregationConfig) {
        let base = AggregationConfig {
            tau: self.tau,
            b: self.b,
            ..AggregationConfig::default()
        };
        match self.mode {
            Mode::Code => (
                1,
                AggregationConfig {
                    filter: false,
                    method: Method::MajorityVote,
                    ..base
                },
            ),
            _ => (
                self.candidates.unwrap_or(usize::MAX),
                AggregationConfig {
                    filter: self.filter.unwrap_or(true),
                    method: self.method.unwrap_or(Method::WeakSupervision),
                    ..base
                },
            ),
        }
    }

    /// File stem for artifacts: the lake directory's name.
    pub fn lake_name(&self) -> String {
        self.lake
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .filter(|n| !n.is_empty())
            .unwrap_or_else(|| "lake".into())
    }
}

/// Model name that selects the built-in scripted model for synthetic lakes.
pub const SYNTHETIC_MODEL: &str = "synthetic";

/// Provider for a model name: the scripted model for [`SYNTHETIC_MODEL`],
/// otherwise the HTTP adapter configured from the environment.
pub fn provider_for(model: &str) -> Arc<dyn CompletionProvider> {
    if model == SYNTHETIC_MODEL {
        Arc::new(crate::synthetic::SyntheticModel)
    } else {
        Arc::new(HttpCompletions::from_env())
    }
}

/// Gateway for a run; replay-only runs get no provider.
pub fn gateway_for(config: &RunConfig) -> Result<Gateway> {
    let provider = (!config.replay_only).then(|| provider_for(&config.model));
    Gateway::new(config.gateway_config(), provider)
}

/// Ingest the lake, run, and write the artifacts into `config.out`.
pub fn run(config: &RunConfig) -> Result<(RunArtifacts, ArtifactPaths)> {
    config.validate()?;
    let corpus = corpus::ingest(&config.lake, None)?;
    let gateway = gateway_for(config)?;
    let artifacts = run_on(&gateway, &corpus, config)?;
    let paths = artifacts.write(&config.out, &config.lake_name())?;
    Ok((artifacts, paths))
}

/// The model's answer on one sample document, reduced to a value.
pub fn parse_oracle_answer(completion: &str) -> Option<String> {
    if let Some((_, v)) = parse_pair_lines(completion).into_iter().next() {
        return Some(v);
    }
    completion
        .lines()
        .map(|l| l.trim().trim_start_matches('-').trim())
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

/// Ask the model for `attribute` on each sample document, around the first
/// keyword hit. Documents without a hit get no call and an empty answer.
pub fn oracle_extractions(
    gateway: &Gateway,
    docs: &[&Document],
    attribute: &str,
    window: usize,
) -> Result<Vec<Option<String>>> {
    docs.par_iter()
        .map(|doc| {
            let Some(snippet) = find_snippet(doc, attribute, window) else {
                return Ok(None);
            };
            let b = bindings([("chunk", snippet.text.as_str()), ("attribute", attribute)]);
            let answer = gateway.complete(TemplateId::AttrExtract, &b, Phase::Oracle)?;
            Ok(guard_oracle(&doc.text, parse_oracle_answer(&answer).as_deref()))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub id: String,
    pub prompt: synthesis::PromptVariant,
    pub kind: synthesis::CandidateKind,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub source: String,
}

impl From<&CandidateFunction> for CandidateReport {
    fn from(c: &CandidateFunction) -> Self {
        CandidateReport {
            id: c.id.clone(),
            prompt: c.prompt,
            kind: c.kind,
            status: c.status.clone(),
            score: c.score,
            source: c.source.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributeReport {
    pub snippets: usize,
    pub candidates: Vec<CandidateReport>,
    #[serde(flatten)]
    pub aggregation: Option<AttributeDiagnostics>,
}

pub struct AttributeResult {
    pub attribute: String,
    pub report: AttributeReport,
    /// `None` when the attribute is dropped from the table.
    pub cells: Option<Vec<CellPrediction>>,
}

/// Synthesize, score, filter and aggregate functions for one attribute.
pub fn extract_attribute(
    gateway: &Gateway,
    corpus: &Corpus,
    attribute: &str,
    config: &RunConfig,
    sandbox: Option<&SandboxPool>,
) -> Result<AttributeResult> {
    let (cap, agg) = config.aggregation();
    let snippets = keyword_search(corpus, attribute, config.window, config.max_hits);
    let mut candidates = if snippets.is_empty() {
        log::info!("{attribute}: no keyword hits; attribute dropped");
        Vec::new()
    } else {
        synthesis::synthesize(gateway, attribute, &snippets, config.per_prompt, cap)?
    };
    candidates
        .par_iter_mut()
        .for_each(|c| synthesis::compile_check(c, sandbox));
    let compiled: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].is_compiled()).collect();

    let docs: Vec<&Document> = corpus.documents().iter().collect();
    let needs_oracle = agg.filter || agg.method == Method::WeakSupervision;
    let (e, scores, retained) = if compiled.is_empty() {
        (None, Vec::new(), Vec::new())
    } else if needs_oracle {
        let eval_docs = corpus.sample(config.eval_size);
        let oracle = oracle_extractions(gateway, &eval_docs, attribute, config.window)?;
        let sample_outputs: Vec<(String, Vec<Option<String>>)> = compiled
            .par_iter()
            .map(|&i| (candidates[i].id.clone(), synthesis::execute(&candidates[i], &eval_docs, sandbox)))
            .collect();
        let (e, scores, kept) = select_candidates(&sample_outputs, &oracle, &agg);
        for (&i, (_, s)) in compiled.iter().zip(&scores) {
            candidates[i].score = Some(*s);
        }
        (Some(e), scores, kept.into_iter().map(|k| compiled[k]).collect())
    } else {
        (None, Vec::new(), compiled.clone())
    };

    let retained_ids: Vec<String> = retained.iter().map(|&i| candidates[i].id.clone()).collect();
    let outputs: Vec<Vec<Option<String>>> = retained
        .par_iter()
        .map(|&i| synthesis::execute(&candidates[i], &docs, sandbox))
        .collect();
    let outcome = aggregate_outputs(retained_ids, &outputs, e, scores, &agg);
    let mut diagnostics = outcome.diagnostics;
    diagnostics.rejected = candidates
        .iter()
        .filter_map(|c| match &c.status {
            Status::Rejected(why) => Some((c.id.clone(), why.clone())),
            _ => None,
        })
        .collect();

    let cells = (!outcome.retained.is_empty()).then(|| {
        docs.iter()
            .zip(&outcome.predictions)
            .map(|(doc, p)| CellPrediction {
                doc_id: doc.id.clone(),
                attribute: attribute.to_string(),
                value: match &p.prediction {
                    Prediction::Value(v) => Some(v.clone()),
                    Prediction::NoValue => None,
                },
                provenance: Provenance::Function(outcome.retained[p.source.unwrap_or(0)].clone()),
            })
            .collect()
    });
    Ok(AttributeResult {
        attribute: attribute.to_string(),
        report: AttributeReport {
            snippets: snippets.len(),
            candidates: candidates.iter().map(CandidateReport::from).collect(),
            aggregation: Some(diagnostics),
        },
        cells,
    })
}

/// Schema from the document sample: candidates, ranking, and optional
/// validation.
pub fn synthesize_schema(gateway: &Gateway, corpus: &Corpus, config: &RunConfig) -> Result<Schema> {
    let sample = corpus.sample(config.k);
    let candidates = schema::generate_candidates(gateway, &sample, &config.topic, config.chunk_budget)?;
    let mut schema = schema::rank(gateway, &config.topic, sample.len(), &candidates, config.boost)?;
    if config.validate {
        schema::validate_schema(gateway, &mut schema, &candidates)?;
    }
    if let Some(n) = config.max_attributes {
        schema.truncate(n);
    }
    Ok(schema)
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub schema: Schema,
    pub table: Table,
    pub diagnostics: serde_json::Value,
    pub ledger: CostLedger,
}

/// Run the configured strategy over an ingested corpus.
pub fn run_on(gateway: &Gateway, corpus: &Corpus, config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(config.lake.clone()));
    }
    let sandbox = config.sandbox.clone().map(SandboxPool::new);
    let (schema, mut table, attributes) = match config.mode {
        Mode::Direct => {
            let out = extract_direct(gateway, corpus, &config.topic, config.chunk_budget)?;
            let mut schema = out.schema;
            if let Some(n) = config.max_attributes {
                schema.truncate(n);
            }
            let names: Vec<String> = schema.names().into_iter().map(str::to_string).collect();
            let cells = out.records.iter().flat_map(|r| {
                names.iter().filter_map(|a| {
                    r.get(a).map(|v| CellPrediction {
                        doc_id: r.doc_id.clone(),
                        attribute: a.clone(),
                        value: Some(v.to_string()),
                        provenance: Provenance::Direct,
                    })
                })
            });
            let table = materialize(&config.topic, &names, corpus.ids(), cells.collect::<Vec<_>>())?;
            (schema, table, json!({}))
        }
        Mode::Code | Mode::Codeplus => {
            let schema = synthesize_schema(gateway, corpus, config)?;
            let results = schema
                .ranked
                .par_iter()
                .map(|a| extract_attribute(gateway, corpus, &a.name, config, sandbox.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let mut columns = Vec::new();
            let mut cells = Vec::new();
            let mut reports = serde_json::Map::new();
            for r in results {
                if let Some(c) = r.cells {
                    columns.push(r.attribute.clone());
                    cells.extend(c);
                }
                reports.insert(r.attribute, serde_json::to_value(&r.report)?);
            }
            let table = materialize(&config.topic, &columns, corpus.ids(), cells)?;
            (schema, table, serde_json::Value::Object(reports))
        }
    };
    let mut atomized = serde_json::Map::new();
    if config.atomize {
        for (attr, parts) in atomize_table(gateway, &mut table)? {
            atomized.insert(attr, json!(parts));
        }
    }
    let diagnostics = json!({
        "mode": config.mode,
        "documents": corpus.len(),
        "attributes": attributes,
        "atomized": atomized,
    });
    Ok(RunArtifacts {
        schema,
        table,
        diagnostics,
        ledger: gateway.ledger(),
    })
}

/// Split complex columns into atomic ones, using the first value of each
/// column as the exemplar. Returns the replaced columns and their parts.
pub fn atomize_table(gateway: &Gateway, table: &mut Table) -> Result<Vec<(String, Vec<String>)>> {
    let mut replaced = Vec::new();
    for attr in table.attributes.clone() {
        let filled: Vec<(String, String)> = table
            .rows
            .iter()
            .filter_map(|(d, row)| Some((d.clone(), row.get(&attr)?.value.clone()?)))
            .collect();
        let Some(((_, exemplar), rest)) = filled.split_first() else { continue };
        let remaining: Vec<&str> = rest.iter().map(|(_, v)| v.as_str()).collect();
        let Some(at) = schema::atomize(gateway, &attr, exemplar, &remaining)? else { continue };
        if at.exemplar.len() < 2 {
            continue;
        }
        let names: Vec<String> = at.names().into_iter().map(normalize_attribute).collect();
        if names.iter().any(|n| table.attributes.contains(n)) {
            log::warn!("{attr}: atomic names collide with existing columns; left as is");
            continue;
        }
        let pos = table.attributes.iter().position(|a| *a == attr).expect("column exists");
        table.attributes.splice(pos..=pos, names.iter().cloned());
        let mut values = std::iter::once(at.exemplar.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>())
            .chain(at.values.iter().cloned());
        let filled_docs: Vec<&String> = filled.iter().map(|(d, _)| d).collect();
        for (doc, row) in table.rows.iter_mut() {
            let Some(cell) = row.remove(&attr) else { continue };
            let parts = if filled_docs.binary_search(&doc).is_ok() {
                values.next().unwrap_or_default()
            } else {
                Vec::new()
            };
            for (i, n) in names.iter().enumerate() {
                let value = parts.get(i).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
                row.insert(
                    n.clone(),
                    Cell {
                        value,
                        provenance: cell.provenance.clone(),
                    },
                );
            }
        }
        replaced.push((attr, names));
    }
    Ok(replaced)
}

impl RunArtifacts {
    pub fn paths(out: &Path, lake_name: &str) -> ArtifactPaths {
        let p = |suffix: &str| out.join(format!("{lake_name}.{suffix}"));
        ArtifactPaths {
            table_csv: p("table.csv"),
            table_jsonl: p("table.jsonl"),
            schema: p("schema.json"),
            diagnostics: p("diagnostics.json"),
            cost: p("cost.json"),
        }
    }

    pub fn cost_json(&self) -> serde_json::Value {
        self.ledger.to_json()
    }

    pub fn write(&self, out: &Path, lake_name: &str) -> Result<ArtifactPaths> {
        std::fs::create_dir_all(out).map_err(|e| Error::write(out, e))?;
        let paths = Self::paths(out, lake_name);
        self.table.emit_csv(&paths.table_csv)?;
        self.table.emit_jsonl(&paths.table_jsonl)?;
        let write = |path: &Path, text: String| std::fs::write(path, text + "\n").map_err(|e| Error::write(path, e));
        write(&paths.schema, self.schema.to_json()?)?;
        write(&paths.diagnostics, serde_json::to_string_pretty(&self.diagnostics)?)?;
        write(&paths.cost, serde_json::to_string_pretty(&self.cost_json())?)?;
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub table_csv: PathBuf,
    pub table_jsonl: PathBuf,
    pub schema: PathBuf,
    pub diagnostics: PathBuf,
    pub cost: PathBuf,
}

impl ArtifactPaths {
    pub fn all(&self) -> [&Path; 5] {
        [&self.table_csv, &self.table_jsonl, &self.schema, &self.diagnostics, &self.cost]
    }
}

/// Pair F1 of `pred` against `gold`, keeping only the `|gold attributes|`
/// highest-ranked predicted columns, and F1@k over attribute names.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub k: usize,
    pub pair: Prf,
    pub attributes: Prf,
}

pub fn evaluate(pred: &Table, gold: &Table) -> Result<EvalReport> {
    let k = gold.attributes.len();
    let top: Vec<&str> = pred.attributes.iter().take(k).map(String::as_str).collect();
    let pred_tuples: TupleSet = pred.tuples().restrict_to(top.iter().copied());
    Ok(EvalReport {
        k,
        pair: pair_f1(&pred_tuples, &gold.tuples())?,
        attributes: f1_at_k(&pred.attributes, &gold.attributes, k),
    })
}

/// Counts over the corpus used by the `ingest` report.
pub fn corpus_summary(corpus: &Corpus, budget: usize) -> Result<serde_json::Value> {
    let mut formats: BTreeMap<String, usize> = BTreeMap::new();
    let mut chunks = 0;
    for d in corpus.documents() {
        *formats.entry(d.format.to_string()).or_default() += 1;
        chunks += crate::corpus::chunk(d, budget)?.len();
    }
    Ok(json!({
        "documents": corpus.len(),
        "tokens": corpus.total_tokens(),
        "chunk_budget": budget,
        "chunks": chunks,
        "formats": formats,
    }))
}
