// Estimate voter accuracies without labels and compare weighted
// aggregation with majority vote.

use lakeview::aggregation::{aggregate_mv, aggregate_ws, fit_label_model, LabelModelConfig, Prediction, VoteMatrix};
use lakeview::synthetic::planted_votes;

pub fn main() {
    let accuracies = [0.95, 0.9, 0.62, 0.6, 0.58];
    let b = 3;
    let planted = planted_votes(&accuracies, b, 2000, 0.1, 42);
    // Empty outputs are abstentions here: every document has a value.
    let matrix = VoteMatrix::new(&planted.outputs, 1.0, 0.5, b);
    let model = fit_label_model(&matrix, &LabelModelConfig::default()).expect("enough voters");

    for (j, (est, a)) in model.accuracies.iter().zip(accuracies).enumerate() {
        println!("voter {j}: planted {a:.2}, estimated {est:.3}, weight {:.3}", model.weight(j));
    }
    let score = |p: Vec<lakeview::aggregation::DocPrediction>| {
        let hit = p
            .iter()
            .zip(&planted.truth)
            .filter(|(p, t)| p.prediction == Prediction::Value((*t).clone()))
            .count();
        hit as f64 / planted.truth.len() as f64
    };
    println!("majority vote accuracy:  {:.3}", score(aggregate_mv(&matrix)));
    println!("weighted vote accuracy:  {:.3}", score(aggregate_ws(&matrix, &model)));
}
