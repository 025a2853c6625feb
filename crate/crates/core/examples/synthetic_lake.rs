// Generate the synthetic device-report lake and its gold table on disk.

use lakeview::synthetic::{generate_lake, ATTRIBUTES};

pub fn main() -> anyhow::Result<()> {
    let lake = generate_lake(50, 7);
    let dir = tempfile::tempdir()?;
    lake.write(&dir.path().join("lake"), &dir.path().join("gold.jsonl"))?;

    println!("{} documents written to {}", lake.documents.len(), dir.path().display());
    for spec in &ATTRIBUTES {
        let n = lake.gold.values().filter(|r| r.contains_key(spec.name)).count();
        println!("{:<18} present in {n:>3} documents", spec.name);
    }
    println!("\n{}", lake.documents[1].text);
    Ok(())
}
