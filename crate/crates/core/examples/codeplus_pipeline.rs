// Full run with candidate functions, scoring, filtering and aggregation,
// then evaluation against the gold table.

use std::sync::Arc;

use lakeview::corpus::Corpus;
use lakeview::gateway::Gateway;
use lakeview::pipeline::{evaluate, run_on, Mode, RunConfig};
use lakeview::synthetic::{generate_lake, SyntheticModel, ATTRIBUTES, TOPIC};
use lakeview::table::parse_jsonl;

pub fn main() -> anyhow::Result<()> {
    let lake = generate_lake(200, 7);
    let corpus = Corpus::from_documents(lake.documents.clone())?;
    let gold_attrs: Vec<String> = ATTRIBUTES.iter().map(|a| a.name.to_string()).collect();
    let gold = parse_jsonl(TOPIC, &gold_attrs, &lake.gold_jsonl())?;

    for mode in [Mode::Direct, Mode::Code, Mode::Codeplus] {
        let gateway = Gateway::with_provider(Arc::new(SyntheticModel), "synthetic");
        let config = RunConfig {
            topic: TOPIC.into(),
            mode,
            ..RunConfig::default()
        };
        let run = run_on(&gateway, &corpus, &config)?;
        let report = evaluate(&run.table, &gold)?;
        println!(
            "{mode:<9} pair F1 {:.3}  attribute F1 {:.3}  tokens {}",
            report.pair.f1,
            report.attributes.f1,
            run.ledger.total_tokens()
        );
        if mode == Mode::Codeplus {
            let d = &run.diagnostics["attributes"]["predicate device"];
            println!("predicate device: e = {}, empty outputs read as {}", d["e"], d["empty_as"]);
            println!("{}", run.table.to_csv_string()?.lines().take(4).collect::<Vec<_>>().join("\n"));
        }
    }
    Ok(())
}
