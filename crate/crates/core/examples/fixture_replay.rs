// Record completions to a fixture file, then replay them with no provider.

use std::sync::Arc;

use lakeview::corpus::Corpus;
use lakeview::gateway::{load_fixtures, CacheMode, Gateway, GatewayConfig};
use lakeview::pipeline::{run_on, RunConfig};
use lakeview::synthetic::{generate_lake, SyntheticModel, TOPIC};

pub fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let fixtures = dir.path().join("completions.jsonl");
    let corpus = Corpus::from_documents(generate_lake(40, 8).documents)?;
    let config = RunConfig {
        topic: TOPIC.into(),
        ..RunConfig::default()
    };

    let gateway_config = |mode| GatewayConfig {
        model: "synthetic".into(),
        mode,
        fixture_path: Some(fixtures.clone()),
        ..GatewayConfig::default()
    };
    let recorder = Gateway::new(gateway_config(CacheMode::Record), Some(Arc::new(SyntheticModel)))?;
    let first = run_on(&recorder, &corpus, &config)?;
    println!("recorded {} completions", load_fixtures(&fixtures)?.len());

    let replayer = Gateway::new(gateway_config(CacheMode::ReplayOnly), None)?;
    let second = run_on(&replayer, &corpus, &config)?;
    assert_eq!(first.table.to_jsonl_string()?, second.table.to_jsonl_string()?);
    println!("replayed run reproduced the table ({} rows)", second.table.rows.len());
    println!("{}", serde_json::to_string_pretty(&second.ledger.to_json())?);
    Ok(())
}
