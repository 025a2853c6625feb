use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use lakeview::corpus::ingest;
use lakeview::evaluation::{CostReport, CostScenario};
use lakeview::pipeline::{self, Mode, RunConfig};
use lakeview::synthetic::generate_lake;
use lakeview::table::{jsonl_attributes, parse_jsonl};

const EXIT_OTHER: u8 = 1;
const EXIT_FIXTURE_MISS: u8 = 3;
const EXIT_PROVIDER: u8 = 4;
const EXIT_EMPTY_CORPUS: u8 = 5;

#[derive(Parser)]
#[command(name = "lakeview", version, about = "Build queryable tables from document lakes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a lake and report document, token and chunk counts.
    Ingest {
        lake: PathBuf,
        #[arg(long, default_value_t = 3000)]
        chunk_budget: usize,
    },
    /// Synthesize the schema only and print it.
    Schema(RunArgs),
    /// Run the full pipeline and write table, schema, diagnostics and cost files.
    Run(RunArgs),
    /// Score a predicted table against a gold table (both JSONL).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Schema file giving the ranked attribute order of the prediction.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Print the analytical cost comparison of direct and code extraction.
    Cost {
        #[arg(long, default_value_t = 10_000)]
        docs: u64,
        #[arg(long, default_value_t = 10)]
        attributes: u64,
        #[arg(long, default_value_t = 10_000)]
        tokens_per_doc: u64,
        #[arg(long, default_value_t = 10)]
        candidates: u64,
        #[arg(long, default_value_t = 10)]
        k: u64,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic lake and its gold table.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        docs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Lake directory; overrides the config file.
    lake: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topic: Option<String>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    replay_only: bool,
    #[arg(long)]
    record: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    atomize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.lake {
            c.lake = v;
        }
        if let Some(v) = self.topic {
            c.topic = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.b {
            c.b = v;
        }
        if let Some(v) = self.candidates {
            c.candidates = Some(v);
        }
        if let Some(v) = self.fixtures {
            c.fixtures = Some(v);
        }
        if let Some(v) = self.model {
            c.model = v;
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        c.replay_only |= self.replay_only;
        c.record |= self.record;
        c.atomize |= self.atomize;
        if c.lake.as_os_str().is_empty() {
            anyhow::bail!("no lake given (positional argument or `lake` in the config file)");
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<lakeview::Error>() {
        Some(lakeview::Error::FixtureMiss { .. }) => EXIT_FIXTURE_MISS,
        Some(lakeview::Error::Provider { .. }) => EXIT_PROVIDER,
        Some(lakeview::Error::EmptyCorpus(_)) => EXIT_EMPTY_CORPUS,
        _ => EXIT_OTHER,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest { lake, chunk_budget } => {
            let corpus = ingest(&lake, None)?;
            let summary = pipeline::corpus_summary(&corpus, chunk_budget)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Schema(args) => {
            let config = args.config()?;
            config.validate()?;
            let corpus = ingest(&config.lake, None)?;
            let gateway = pipeline::gateway_for(&config)?;
            let schema = pipeline::synthesize_schema(&gateway, &corpus, &config)?;
            println!("{}", schema.to_json()?);
        }
        Command::Run(args) => {
            let config = args.config()?;
            let (artifacts, paths) = pipeline::run(&config)?;
            for p in paths.all() {
                println!("{}", p.display());
            }
            let total = artifacts.ledger.total();
            eprintln!(
                "{} rows, {} columns, {} calls, {} tokens",
                artifacts.table.rows.len(),
                artifacts.table.attributes.len(),
                total.calls,
                total.total_tokens()
            );
        }
        Command::Eval { pred, gold, schema } => {
            let read = |p: &PathBuf| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
            let (pred_text, gold_text) = (read(&pred)?, read(&gold)?);
            let gold_attrs = jsonl_attributes(&gold_text)?;
            let mut pred_attrs: Vec<String> = match &schema {
                Some(path) => {
                    let v: serde_json::Value = serde_json::from_str(&read(path)?)?;
                    v["attributes"]
                        .as_array()
                        .context("schema file has no attributes list")?
                        .iter()
                        .filter_map(|a| a["name"].as_str().map(str::to_string))
                        .collect()
                }
                None => Vec::new(),
            };
            for a in jsonl_attributes(&pred_text)? {
                if !pred_attrs.contains(&a) {
                    pred_attrs.push(a);
                }
            }
            let pred_table = parse_jsonl("", &pred_attrs, &pred_text)?;
            let gold_table = parse_jsonl("", &gold_attrs, &gold_text)?;
            let report = pipeline::evaluate(&pred_table, &gold_table)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Cost {
            docs,
            attributes,
            tokens_per_doc,
            candidates,
            k,
            json,
        } => {
            let scenario = CostScenario {
                n_docs: docs,
                n_attributes: attributes,
                tokens_per_doc,
                candidates_per_attribute: candidates,
                sample_size: k,
                ..CostScenario::default()
            };
            let report = CostReport::new(scenario)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Synth { out, docs, seed } => {
            let lake = generate_lake(docs, seed);
            let dir = out.join("lake");
            let gold = out.join("gold.jsonl");
            lake.write(&dir, &gold)?;
            println!("{}\n{}", dir.display(), gold.display());
        }
    }
    Ok(())
}
