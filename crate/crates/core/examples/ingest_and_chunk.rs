// Load a directory of html/txt files, chunk by token budget and find
// keyword snippets for an attribute.

use lakeview::corpus::{chunk, ingest, keyword_search};
use lakeview::synthetic::generate_lake;

pub fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let lake_dir = dir.path().join("reports");
    generate_lake(12, 1).write(&lake_dir, &dir.path().join("gold.jsonl"))?;

    let corpus = ingest(&lake_dir, None)?;
    println!("{} documents, {} tokens", corpus.len(), corpus.total_tokens());

    let doc = &corpus.documents()[0];
    for c in chunk(doc, 64)? {
        println!("{} chunk {}: {} tokens", c.doc_id, c.index, c.token_count);
    }

    for s in keyword_search(&corpus, "applicant", 60, 3) {
        println!("--- {}\n{}", s.doc_id, s.text);
    }
    Ok(())
}
