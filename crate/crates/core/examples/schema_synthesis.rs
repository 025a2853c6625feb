// Propose attributes from a document sample, rank them and validate the
// ranking, using the scripted model.

use lakeview::corpus::Corpus;
use lakeview::pipeline::{synthesize_schema, RunConfig};
use lakeview::synthetic::{generate_lake, SyntheticModel, TOPIC};

pub fn main() -> anyhow::Result<()> {
    let lake = generate_lake(40, 3);
    let corpus = Corpus::from_documents(lake.documents)?;
    let gateway = lakeview::gateway::Gateway::with_provider(std::sync::Arc::new(SyntheticModel), "synthetic");
    let config = RunConfig {
        topic: TOPIC.into(),
        k: 10,
        ..RunConfig::default()
    };
    let schema = synthesize_schema(&gateway, &corpus, &config)?;
    println!("{}", schema.to_json()?);
    println!("{} calls", gateway.ledger().total().calls);
    Ok(())
}
