//! Closed-form triplet label model over bucketed votes.
//!
//! Each function `j` is modelled as voting for the true class with
//! probability `a_j` and otherwise uniformly for one of the other `b - 1`
//! classes, independently of the other functions given the true class.
//! Two functions that both vote then agree with probability
//!
//! ```text
//! p_ij = a_i a_j + (1 - a_i)(1 - a_j) / (b - 1)
//! ```
//!
//! Substituting `u = b a - 1` turns this into `u_i u_j = (b - 1)(b p_ij - 1)`,
//! so for any third function `k`, `u_i^2 = M_ij M_ik / M_jk` with
//! `M = (b - 1)(b p - 1)`. Each function's accuracy is the median over all
//! triplets it belongs to.

use serde::Serialize;

use super::{DocBuckets, VoteMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelModelConfig {
    pub min_functions: usize,
    /// Documents with at least two non-abstaining votes required to fit.
    pub min_docs: usize,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

impl Default for LabelModelConfig {
    fn default() -> Self {
        LabelModelConfig {
            min_functions: 3,
            min_docs: 20,
            min_accuracy: 0.55,
            max_accuracy: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelModel {
    /// Clamped accuracy per function, in matrix column order.
    pub accuracies: Vec<f64>,
    pub b: usize,
    /// Fraction of documents on which each function casts a (bucketed) vote.
    pub vote_rates: Vec<f64>,
    /// `agreement[i][j]` = P(vote_i == vote_j | both vote). `None` where the
    /// pair never co-votes. Unit diagonal.
    pub agreement: Vec<Vec<Option<f64>>>,
}

impl LabelModel {
    /// Log-odds weight of a vote from function `j`.
    pub fn weight(&self, j: usize) -> f64 {
        let a = self.accuracies[j];
        (a * (self.b as f64 - 1.0) / (1.0 - a)).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    TooFewFunctions,
    TooFewDocuments,
    NoValidTriplets,
}

impl std::fmt::Display for Fallback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fallback::TooFewFunctions => "fewer functions than a triplet needs",
            Fallback::TooFewDocuments => "too few documents with two or more votes",
            Fallback::NoValidTriplets => "no triplet admitted a real solution",
        })
    }
}

/// Fit accuracies from agreement statistics. Returns the reason for falling
/// back to majority vote when the model cannot be fitted.
pub fn fit_label_model(matrix: &VoteMatrix, config: &LabelModelConfig) -> Result<LabelModel, Fallback> {
    fit_buckets(matrix.buckets(), matrix.n_functions(), matrix.b(), config)
}

pub(crate) fn fit_buckets(
    buckets: &[DocBuckets],
    m: usize,
    b: usize,
    config: &LabelModelConfig,
) -> Result<LabelModel, Fallback> {
    if m < config.min_functions.max(3) {
        return Err(Fallback::TooFewFunctions);
    }
    let informative = buckets
        .iter()
        .filter(|d| d.assignment.iter().filter(|a| a.is_some()).count() >= 2)
        .count();
    if informative < config.min_docs {
        return Err(Fallback::TooFewDocuments);
    }

    let n = buckets.len().max(1);
    let mut votes = vec![0usize; m];
    let mut agree = vec![vec![0usize; m]; m];
    let mut both = vec![vec![0usize; m]; m];
    for doc in buckets {
        for i in 0..m {
            let Some(ci) = doc.assignment[i] else { continue };
            votes[i] += 1;
            for j in (i + 1)..m {
                if let Some(cj) = doc.assignment[j] {
                    both[i][j] += 1;
                    if ci == cj {
                        agree[i][j] += 1;
                    }
                }
            }
        }
    }
    let mut agreement = vec![vec![None; m]; m];
    for i in 0..m {
        agreement[i][i] = Some(1.0);
        for j in (i + 1)..m {
            if both[i][j] > 0 {
                let p = agree[i][j] as f64 / both[i][j] as f64;
                agreement[i][j] = Some(p);
                agreement[j][i] = Some(p);
            }
        }
    }

    let bf = b as f64;
    let moment = |i: usize, j: usize| agreement[i][j].map(|p| (bf - 1.0) * (bf * p - 1.0));

    let mut accuracies = Vec::with_capacity(m);
    let mut any_valid = false;
    for i in 0..m {
        let mut estimates = Vec::new();
        for j in 0..m {
            for k in (j + 1)..m {
                if j == i || k == i {
                    continue;
                }
                let (Some(mij), Some(mik), Some(mjk)) = (moment(i, j), moment(i, k), moment(j, k)) else {
                    continue;
                };
                if mjk.abs() < 1e-12 {
                    continue;
                }
                let sq = mij * mik / mjk;
                if sq.is_nan() || sq < 0.0 {
                    continue;
                }
                estimates.push((1.0 + sq.sqrt()) / bf);
            }
        }
        let a = match median(&mut estimates) {
            Some(a) => {
                any_valid = true;
                a
            }
            None => {
                log::debug!("function {i}: no valid triplet, using the accuracy floor");
                config.min_accuracy
            }
        };
        accuracies.push(a.clamp(config.min_accuracy, config.max_accuracy));
    }
    if !any_valid {
        return Err(Fallback::NoValidTriplets);
    }

    Ok(LabelModel {
        accuracies,
        b,
        vote_rates: votes.iter().map(|&v| v as f64 / n as f64).collect(),
        agreement,
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}
