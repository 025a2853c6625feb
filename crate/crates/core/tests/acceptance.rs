//! Headline acceptance criteria, one pass/fail line each.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lakeview::aggregation::{aggregate_mv, aggregate_ws, fit_label_model, LabelModelConfig, Prediction, VoteMatrix};
use lakeview::evaluation::{
    cost_code, cost_direct, crossover_attrs, crossover_docs, pair_f1, text_f1, CostScenario, TupleSet,
};
use lakeview::pipeline::{evaluate, Mode};
use lakeview::synthetic::{is_planted_bad, planted_votes};

// Written straight to stderr so the line shows up even under output capture.
fn report(criterion: &str, ok: bool, detail: String, started: Instant) {
    let line = format!(
        "[{}] {criterion}: {detail} ({:.2}s)\n",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "{criterion} failed: {detail}");
}

// Reference metric implementations, written without the library's helpers.

fn ref_norm_tuple_part(s: &str) -> String {
    let mut out = String::new();
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

fn ref_pair_f1(pred: &[(String, String, String)], gold: &[(String, String, String)]) -> (f64, f64, f64) {
    let dedup = |v: &[(String, String, String)]| {
        let mut out: Vec<(String, String, String)> = Vec::new();
        for (d, a, x) in v {
            let key = (
                d.clone(),
                ref_norm_tuple_part(a.trim().trim_end_matches(':').trim()),
                ref_norm_tuple_part(x),
            );
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    };
    let (p, g) = (dedup(pred), dedup(gold));
    let common = p.iter().filter(|t| g.iter().any(|u| u == *t)).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { common / p.len() as f64 };
    let recall = common / g.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

fn ref_answer_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

fn ref_text_f1(pred: &str, gold: &str) -> f64 {
    let p = ref_answer_tokens(pred);
    let g = ref_answer_tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut used = vec![false; g.len()];
    let mut common = 0usize;
    for t in &p {
        if let Some(i) = (0..g.len()).find(|&i| !used[i] && g[i] == *t) {
            used[i] = true;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

const WORDS: [&str; 14] = [
    "the", "a", "an", "Acme", "acme", "K123", "class", "II", "2019-03-14", "St.", "Paris,", "x", "é", "(b)",
];

fn random_phrase(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..5);
    let mut s = String::new();
    for _ in 0..n {
        let sep = [" ", "  ", "\t", " "][rng.random_range(0..4)];
        s.push_str(sep);
        s.push_str(WORDS[rng.random_range(0..WORDS.len())]);
    }
    s
}

fn random_tuples(rng: &mut ChaCha8Rng, min: usize) -> Vec<(String, String, String)> {
    let n = rng.random_range(min..8);
    (0..n)
        .map(|_| {
            let doc = format!("d{}", rng.random_range(0..3));
            let attr = ["Name", "name ", "Date:", "date", "Price"][rng.random_range(0..5)].to_string();
            let value = ["Acme", "acme", "ACME  Corp", "acme corp", "1", "2"][rng.random_range(0..6)].to_string();
            (doc, attr, value)
        })
        .collect()
}

#[test]
fn metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pred = random_tuples(&mut rng, 0);
        let gold = random_tuples(&mut rng, 1);
        let to_set = |v: &[(String, String, String)]| -> TupleSet {
            v.iter().map(|(d, a, x)| (d.as_str(), a.as_str(), x.as_str())).collect()
        };
        let got = pair_f1(&to_set(&pred), &to_set(&gold)).unwrap();
        let (p, r, f) = ref_pair_f1(&pred, &gold);
        worst = worst
            .max((got.precision - p).abs())
            .max((got.recall - r).abs())
            .max((got.f1 - f).abs());

        let (a, b) = (random_phrase(&mut rng), random_phrase(&mut rng));
        worst = worst.max((text_f1(&a, &b) - ref_text_f1(&a, &b)).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "metric oracle equivalence",
        worst <= 1e-12 && elapsed < 5.0,
        format!("1000 tuple-set and 1000 string cases, max deviation {worst:e}"),
        started,
    );
}

#[test]
fn crossover_reproduction() {
    let started = Instant::now();
    let s = CostScenario::default();
    assert_eq!((s.n_attributes, s.tokens_per_doc, s.n_docs), (10, 10_000, 10_000));
    let docs = crossover_docs(&s);
    let attrs = crossover_attrs(&s);
    report(
        "cost crossovers",
        (20.0..=80.0).contains(&docs) && (1000.0..=5000.0).contains(&attrs),
        format!("crossover at {docs:.1} documents and {attrs:.1} attributes"),
        started,
    );
}

#[test]
fn cost_reduction_order_of_magnitude() {
    let started = Instant::now();
    let s = CostScenario {
        n_docs: 10_000,
        ..CostScenario::default()
    };
    let ratio = cost_direct(&s) / cost_code(&s);
    report(
        "cost reduction at 10,000 documents",
        ratio >= 50.0,
        format!("direct/code = {ratio:.1}"),
        started,
    );
}

#[test]
fn label_model_recovery() {
    let started = Instant::now();
    let (b, n_docs, seeds) = (3, 500, 20u64);
    let mut errors = Vec::new();
    let mut ws_wins = 0;
    let mut heterogeneous = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let accs: Vec<f64> = (0..5).map(|_| rng.random_range(0.6..=0.9)).collect();
        let planted = planted_votes(&accs, b, n_docs, 0.0, seed);
        let matrix = VoteMatrix::new(&planted.outputs, 1.0, 0.5, b);
        let model = fit_label_model(&matrix, &LabelModelConfig::default()).expect("five voters fit");
        let err: f64 = model.accuracies.iter().zip(&accs).map(|(e, a)| (e - a).abs()).sum::<f64>() / accs.len() as f64;
        errors.push(err);

        let accuracy = |preds: Vec<lakeview::aggregation::DocPrediction>| {
            preds
                .iter()
                .zip(&planted.truth)
                .filter(|(p, t)| p.prediction == Prediction::Value((*t).clone()))
                .count()
        };
        let spread = accs.iter().cloned().fold(f64::MIN, f64::max) - accs.iter().cloned().fold(f64::MAX, f64::min);
        if spread >= 0.1 {
            heterogeneous += 1;
            if accuracy(aggregate_ws(&matrix, &model)) >= accuracy(aggregate_mv(&matrix)) {
                ws_wins += 1;
            }
        }
    }
    let mean_err = errors.iter().sum::<f64>() / errors.len() as f64;
    let win_rate = ws_wins as f64 / heterogeneous.max(1) as f64;
    report(
        "label model recovery",
        mean_err <= 0.05 && heterogeneous > 0 && win_rate >= 0.9 && started.elapsed().as_secs_f64() < 30.0,
        format!(
            "mean |a_hat - a| = {mean_err:.4} over {seeds} seeds; WS >= MV in {ws_wins}/{heterogeneous} heterogeneous seeds"
        ),
        started,
    );
}

#[test]
fn algorithm_end_to_end() {
    let started = Instant::now();
    let lake = common::lake();
    let artifacts = common::run(Mode::Codeplus, &lake);
    let eval = evaluate(&artifacts.table, &common::gold_table(&lake)).unwrap();

    let attrs = artifacts.diagnostics["attributes"].as_object().unwrap();
    let mut bad = 0;
    let mut bad_leaked = Vec::new();
    for (name, a) in attrs {
        let retained: BTreeSet<&str> = a["retained"].as_array().unwrap().iter().filter_map(|v| v.as_str()).collect();
        for c in a["candidates"].as_array().unwrap() {
            if !is_planted_bad(c["source"].as_str().unwrap()) {
                continue;
            }
            bad += 1;
            let id = c["id"].as_str().unwrap();
            let score = c["score"].as_f64().unwrap_or(0.0);
            if score > 0.5 || retained.contains(id) {
                bad_leaked.push(format!("{name}/{id} s={score}"));
            }
        }
    }
    let rare = &attrs["predicate device"];
    let common_attr = &attrs["product code"];
    let rare_e = rare["e"].as_f64().unwrap();
    let common_e = common_attr["e"].as_f64().unwrap();
    let abstention_ok = rare_e <= 0.5
        && rare["empty_as"] == "no_value"
        && common_e > 0.5
        && common_attr["empty_as"] == "abstain";

    report(
        "function filtering and aggregation on the 200-document lake",
        bad > 0
            && bad_leaked.is_empty()
            && eval.pair.f1 >= 0.9
            && abstention_ok
            && started.elapsed().as_secs_f64() < 60.0,
        format!(
            "{bad} planted bad candidates, leaked {bad_leaked:?}; Pair F1 {:.3}; e(predicate device) = {rare_e}, e(product code) = {common_e}",
            eval.pair.f1
        ),
        started,
    );
}

fn lakeview(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lakeview"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn replay_outputs(dir: &Path, lake: &str, fixtures: &str, out: &str) -> Vec<Vec<u8>> {
    let status = lakeview(&[
        "run",
        lake,
        "--topic",
        lakeview::synthetic::TOPIC,
        "--model",
        "synthetic",
        "--fixtures",
        fixtures,
        "--replay-only",
        "--out",
        out,
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    ["table.csv", "table.jsonl", "schema.json", "diagnostics.json"]
        .iter()
        .map(|s| std::fs::read(dir.join(out).join(format!("lake.{s}"))).unwrap())
        .collect()
}

#[test]
fn replay_determinism() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    assert!(lakeview(&["synth", "--out", &p("data"), "--docs", "60"]).status.success());
    let lake = p("data/lake");
    let fixtures = p("fixtures.jsonl");
    let record = lakeview(&[
        "run",
        &lake,
        "--topic",
        lakeview::synthetic::TOPIC,
        "--model",
        "synthetic",
        "--fixtures",
        &fixtures,
        "--record",
        "--out",
        &p("recorded"),
    ]);
    assert!(record.status.success(), "{}", String::from_utf8_lossy(&record.stderr));
    let first = replay_outputs(dir, &lake, &fixtures, &p("first"));
    let second = replay_outputs(dir, &lake, &fixtures, &p("second"));
    report(
        "replay determinism",
        first == second,
        format!(
            "two replay-only runs, {} bytes of schema, table and diagnostics compared",
            first.iter().map(Vec::len).sum::<usize>()
        ),
        started,
    );
}
