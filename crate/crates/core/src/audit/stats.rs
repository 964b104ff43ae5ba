use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clozegen::ClozeQuestion;
use crate::embeddings::{tokenize, EmbeddingTable};
use crate::error::{Error, Result};
use crate::geometry::{kmeans_assign, ClusterModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewEntry {
    pub token: String,
    pub correct: u64,
    pub incorrect: u64,
    /// Smoothed log-odds of the token in correct vs incorrect choices.
    pub log_odds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewTable {
    /// Sorted by descending `|log_odds|`, then token.
    pub entries: Vec<SkewEntry>,
    /// Jensen-Shannon divergence (bits) between the smoothed token
    /// distributions of correct and incorrect choices.
    pub js_divergence: f64,
}

impl SkewTable {
    pub fn get(&self, token: &str) -> Option<&SkewEntry> {
        self.entries.iter().find(|e| e.token == token)
    }
}

pub type TokenCounts = BTreeMap<String, u64>;

/// Token counts over the correct and the incorrect choices.
pub fn choice_token_counts(dataset: &[ClozeQuestion]) -> (TokenCounts, TokenCounts) {
    let mut correct = TokenCounts::new();
    let mut incorrect = TokenCounts::new();
    for q in dataset {
        for (i, choice) in q.choices.iter().enumerate() {
            let bucket = if i == q.answer_index { &mut correct } else { &mut incorrect };
            for t in tokenize(choice) {
                *bucket.entry(t).or_default() += 1;
            }
        }
    }
    (correct, incorrect)
}

/// Laplace-smoothed log-odds per token plus the JS divergence of the two
/// smoothed distributions. Swapping the arguments negates every log-odds.
pub fn skew_from_counts(correct: &TokenCounts, incorrect: &TokenCounts) -> SkewTable {
    let vocab: BTreeSet<&String> = correct.keys().chain(incorrect.keys()).collect();
    let v = vocab.len() as f64;
    let n_corr: u64 = correct.values().sum();
    let n_inc: u64 = incorrect.values().sum();
    let p = |c: u64, n: u64| (c as f64 + 1.0) / (n as f64 + v);

    let mut entries = Vec::with_capacity(vocab.len());
    let mut js = 0.0;
    for tok in vocab {
        let cc = correct.get(tok).copied().unwrap_or(0);
        let ci = incorrect.get(tok).copied().unwrap_or(0);
        let (pc, pi) = (p(cc, n_corr), p(ci, n_inc));
        let m = 0.5 * (pc + pi);
        js += 0.5 * pc * (pc / m).log2() + 0.5 * pi * (pi / m).log2();
        entries.push(SkewEntry {
            token: tok.clone(),
            correct: cc,
            incorrect: ci,
            log_odds: pc.ln() - pi.ln(),
        });
    }
    entries.sort_by(|a, b| {
        b.log_odds
            .abs()
            .total_cmp(&a.log_odds.abs())
            .then_with(|| a.token.cmp(&b.token))
    });
    SkewTable {
        entries,
        js_divergence: js.max(0.0),
    }
}

pub fn choice_frequency_skew(dataset: &[ClozeQuestion]) -> Result<SkewTable> {
    if dataset.is_empty() {
        return Err(Error::Empty("choice skew needs at least one question"));
    }
    let (c, i) = choice_token_counts(dataset);
    Ok(skew_from_counts(&c, &i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionStats {
    pub histogram: Vec<usize>,
    /// Pearson chi-square against the uniform distribution over positions.
    pub chi_square: f64,
}

pub fn chi_square_uniform(histogram: &[usize]) -> f64 {
    let n: usize = histogram.iter().sum();
    if n == 0 || histogram.is_empty() {
        return 0.0;
    }
    let e = n as f64 / histogram.len() as f64;
    histogram.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
}

/// Counts of `answer_index` values. All questions must share one choice
/// count.
pub fn answer_position_histogram(dataset: &[ClozeQuestion]) -> Result<PositionStats> {
    let nchoices = dataset.first().map_or(0, |q| q.choices.len());
    let mut histogram = vec![0; nchoices];
    for q in dataset {
        if q.choices.len() != nchoices {
            return Err(Error::Config(format!(
                "question {} has {} choices, expected {nchoices}",
                q.qid,
                q.choices.len()
            )));
        }
        histogram[q.answer_index] += 1;
    }
    Ok(PositionStats {
        chi_square: chi_square_uniform(&histogram),
        histogram,
    })
}

/// Shannon entropy of the histogram divided by `ln(k)`, in `[0, 1]`.
/// An empty histogram scores 0 and a single bin scores 1.
pub fn normalized_entropy(histogram: &[usize]) -> f64 {
    let n: usize = histogram.iter().sum();
    if n == 0 {
        return 0.0;
    }
    if histogram.len() == 1 {
        return 1.0;
    }
    let h: f64 = histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    h / (histogram.len() as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub histogram: Vec<usize>,
    pub normalized_entropy: f64,
}

/// Histogram of distractor picks per cluster, each distractor encoded and
/// assigned to its nearest centroid.
pub fn cluster_coverage(dataset: &[ClozeQuestion], model: &ClusterModel, table: &EmbeddingTable) -> Result<Coverage> {
    let mut histogram = vec![0; model.k];
    for q in dataset {
        for d in q.distractors() {
            histogram[kmeans_assign(model, &table.encode(d))?] += 1;
        }
    }
    Ok(Coverage {
        normalized_entropy: normalized_entropy(&histogram),
        histogram,
    })
}
