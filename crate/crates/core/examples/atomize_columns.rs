// Split a complex column into atomic columns with one large-model call on
// an exemplar and small-model calls for the remaining values.

use std::sync::Arc;

use lakeview::corpus::Corpus;
use lakeview::gateway::{Gateway, Phase};
use lakeview::pipeline::{run_on, RunConfig};
use lakeview::synthetic::{generate_lake, SyntheticModel, TOPIC};

pub fn main() -> anyhow::Result<()> {
    let corpus = Corpus::from_documents(generate_lake(25, 6).documents)?;
    let gateway = Gateway::with_provider(Arc::new(SyntheticModel), "synthetic");
    let config = RunConfig {
        topic: TOPIC.into(),
        atomize: true,
        ..RunConfig::default()
    };
    let run = run_on(&gateway, &corpus, &config)?;
    println!("columns: {:?}", run.table.attributes);
    println!("atomized: {}", run.diagnostics["atomized"]);
    for line in run.table.to_csv_string()?.lines().take(3) {
        println!("{line}");
    }
    println!("cleaning calls: {}", run.ledger.phase(Phase::Cleaning).calls);
    Ok(())
}
