//! Extraction metrics and the token-cost model.

pub mod cost;
pub mod metrics;

pub use cost::{cost_code, cost_direct, crossover_attrs, crossover_docs, CostReport, CostScenario};
pub use metrics::{f1_at_k, normalize_answer, pair_f1, text_f1, Prf, TupleSet};
