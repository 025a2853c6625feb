// Ask for candidate extractors from keyword snippets, compile them and run
// them over the lake.

use std::sync::Arc;

use lakeview::corpus::{keyword_search, Corpus};
use lakeview::gateway::Gateway;
use lakeview::synthesis::{compile_check, execute, synthesize};
use lakeview::synthetic::{generate_lake, SyntheticModel, BROKEN_PATTERN_ATTRIBUTE};

pub fn main() -> anyhow::Result<()> {
    let corpus = Corpus::from_documents(generate_lake(30, 2).documents)?;
    let gateway = Gateway::with_provider(Arc::new(SyntheticModel), "synthetic");
    let attribute = BROKEN_PATTERN_ATTRIBUTE.to_lowercase();

    let snippets = keyword_search(&corpus, &attribute, 300, 3);
    let mut candidates = synthesize(&gateway, &attribute, &snippets, 1, 10)?;
    let docs: Vec<_> = corpus.documents().iter().collect();
    for c in &mut candidates {
        compile_check(c, None);
        let outputs = execute(c, &docs, None);
        let hits = outputs.iter().flatten().count();
        println!("{:<22} {:?} {:?}: {hits}/{} documents", c.id, c.kind, c.status, docs.len());
        println!("    {}", c.source.replace('\n', "\n    "));
    }
    Ok(())
}
