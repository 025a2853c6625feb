#![allow(dead_code)]

use std::sync::Arc;

use lakeview::corpus::Corpus;
use lakeview::gateway::Gateway;
use lakeview::pipeline::{run_on, Mode, RunArtifacts, RunConfig};
use lakeview::synthetic::{generate_lake, SyntheticLake, SyntheticModel, ATTRIBUTES, TOPIC};
use lakeview::table::{parse_jsonl, Table};

pub const LAKE_DOCS: usize = 200;
pub const LAKE_SEED: u64 = 7;

pub fn lake() -> SyntheticLake {
    generate_lake(LAKE_DOCS, LAKE_SEED)
}

pub fn corpus(lake: &SyntheticLake) -> Corpus {
    Corpus::from_documents(lake.documents.clone()).unwrap()
}

pub fn gold_table(lake: &SyntheticLake) -> Table {
    let attrs: Vec<String> = ATTRIBUTES.iter().map(|a| a.name.to_string()).collect();
    parse_jsonl(TOPIC, &attrs, &lake.gold_jsonl()).unwrap()
}

pub fn config(mode: Mode) -> RunConfig {
    RunConfig {
        lake: "synthetic".into(),
        topic: TOPIC.into(),
        mode,
        ..RunConfig::default()
    }
}

pub fn synthetic_gateway() -> Gateway {
    Gateway::with_provider(Arc::new(SyntheticModel), "synthetic")
}

pub fn run(mode: Mode, lake: &SyntheticLake) -> RunArtifacts {
    run_on(&synthetic_gateway(), &corpus(lake), &config(mode)).unwrap()
}
