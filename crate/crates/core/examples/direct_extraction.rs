// Extract attribute/value pairs by prompting on every chunk of every
// document.

use std::sync::Arc;

use lakeview::corpus::Corpus;
use lakeview::direct::extract_direct;
use lakeview::gateway::{Gateway, Phase};
use lakeview::synthetic::{generate_lake, SyntheticModel, TOPIC};

pub fn main() -> anyhow::Result<()> {
    let corpus = Corpus::from_documents(generate_lake(20, 4).documents)?;
    let gateway = Gateway::with_provider(Arc::new(SyntheticModel), "synthetic");
    let out = extract_direct(&gateway, &corpus, TOPIC, 3000)?;

    for r in out.records.iter().take(3) {
        println!("{}", r.doc_id);
        for (a, v) in &r.pairs {
            println!("  {a}: {v}");
        }
    }
    // Open extraction also picks up attributes that appear only in a few
    // (possibly invented) answers.
    for a in &out.schema.ranked {
        println!("{:<18} {:>3} docs", a.name, a.frequency);
    }
    let cost = gateway.ledger().phase(Phase::Direct);
    println!("{} calls, {} tokens", cost.calls, cost.total_tokens());
    Ok(())
}
