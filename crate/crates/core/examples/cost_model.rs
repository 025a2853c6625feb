// Token cost of direct extraction against code synthesis as the lake and
// the schema grow.

use lakeview::evaluation::{crossover_attrs, CostReport, CostScenario};

pub fn main() -> anyhow::Result<()> {
    let report = CostReport::new(CostScenario::default())?;
    print!("{}", report.to_text());

    for n_docs in [100, 1_000, 100_000] {
        let s = CostScenario {
            n_docs,
            ..CostScenario::default()
        };
        println!("{n_docs:>7} documents: code wins below {:.0} attributes", crossover_attrs(&s));
    }
    Ok(())
}
