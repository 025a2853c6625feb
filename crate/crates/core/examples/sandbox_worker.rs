// Run script extractors through an external worker pool. Pass the worker
// command as arguments, e.g. `cargo run --example sandbox_worker -- python3
// worker.py`; it is started with `--timeout-ms N` appended.

use lakeview::synthesis::{SandboxConfig, SandboxDoc, SandboxPool};

const SOURCE: &str = r#"
import re
def get_applicant_field(text: str):
    m = re.search(r"Applicant: (.+)", text)
    return m.group(1) if m else None
"#;

pub fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(program) = args.next() else {
        println!("usage: sandbox_worker <worker program> [args..]");
        return Ok(());
    };
    demo(&program, args.collect())
}

pub fn demo(program: &str, args: Vec<String>) -> anyhow::Result<()> {
    let pool = SandboxPool::new(SandboxConfig {
        program: program.into(),
        args,
        timeout_ms: 1000,
        workers: 2,
    });
    let check = pool.check(SOURCE, "get_applicant_field")?;
    println!("check: {check:?}");
    let docs = vec![
        SandboxDoc {
            doc_id: "a".into(),
            text: "Applicant: Acme Corp".into(),
        },
        SandboxDoc {
            doc_id: "b".into(),
            text: "nothing".into(),
        },
    ];
    for (d, r) in docs.iter().zip(pool.run(SOURCE, "get_applicant_field", &docs)?) {
        println!("{}: {r:?}", d.doc_id);
    }
    Ok(())
}
