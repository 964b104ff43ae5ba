//! Probes that answer without reading the whole question.
//!
//! * choice-only: a trained linear scorer over choice features alone;
//! * hasty: picks the choice closest to the visible question titles;
//! * context: picks the choice closest to the masked step's description.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clozegen::ClozeQuestion;
use crate::embeddings::{distance, tokenize, EmbeddingTable};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Number of token-presence indicator features.
    pub n_token_features: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 5e-4,
            max_epochs: 200,
            patience: 20,
            batch_size: 64,
            n_token_features: 512,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config("probe settings must all be positive".into()));
        }
        Ok(())
    }
}

/// Index of the maximal score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Maps a choice string to `[pooled embedding ; token indicators]`.
struct Featurizer<'a> {
    table: &'a EmbeddingTable,
    token_slots: HashMap<String, usize>,
}

impl<'a> Featurizer<'a> {
    /// Indicator slots go to the `n` most frequent choice tokens of `train`
    /// (ties broken alphabetically).
    fn fit(train: &[ClozeQuestion], table: &'a EmbeddingTable, n: usize) -> Self {
        let mut freq: BTreeMap<String, u64> = BTreeMap::new();
        for q in train {
            for c in &q.choices {
                for t in tokenize(c) {
                    *freq.entry(t).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let token_slots = ranked
            .into_iter()
            .take(n)
            .enumerate()
            .map(|(i, (t, _))| (t, i))
            .collect();
        Featurizer { table, token_slots }
    }

    fn width(&self) -> usize {
        self.table.dimension() + self.token_slots.len()
    }

    fn features(&self, choice: &str) -> Vec<f64> {
        let d = self.table.dimension();
        let mut x = self.table.encode(choice);
        x.resize(self.width(), 0.0);
        for t in tokenize(choice) {
            if let Some(&slot) = self.token_slots.get(&t) {
                x[d + slot] = 1.0;
            }
        }
        x
    }

    fn question(&self, q: &ClozeQuestion) -> Vec<Vec<f64>> {
        q.choices.iter().map(|c| self.features(c)).collect()
    }
}

fn scores(w: &[f64], xs: &[Vec<f64>]) -> Vec<f64> {
    xs.iter().map(|x| x.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
}

fn accuracy(w: &[f64], data: &[(Vec<Vec<f64>>, usize)]) -> f64 {
    let hits = data.iter().filter(|(xs, y)| argmax(&scores(w, xs)) == *y).count();
    hits as f64 / data.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOnlyResult {
    /// Best validation accuracy over all epochs.
    pub accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Trains a linear scorer over choice features only, with per-question
/// softmax cross-entropy and minibatch SGD, stopping early when validation
/// accuracy has not improved for `patience` epochs. Context and question
/// are never read.
pub fn run_probe_choice_only(
    train: &[ClozeQuestion],
    val: &[ClozeQuestion],
    table: &EmbeddingTable,
    cfg: &ProbeConfig,
) -> Result<ChoiceOnlyResult> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("choice-only probe needs non-empty train and val splits"));
    }
    let train_ids: HashSet<&str> = train.iter().map(|q| q.procedure_id.as_str()).collect();
    if let Some(q) = val.iter().find(|q| train_ids.contains(q.procedure_id.as_str())) {
        return Err(Error::Config(format!(
            "procedure {} appears in both train and val",
            q.procedure_id
        )));
    }
    let informative = train.iter().any(|q| {
        let distinct: HashSet<&String> = q.choices.iter().collect();
        distinct.len() >= 2
    });
    if !informative {
        return Err(Error::Degenerate("no training question has two distinct choices".into()));
    }

    let feat = Featurizer::fit(train, table, cfg.n_token_features);
    let prep = |qs: &[ClozeQuestion]| -> Vec<(Vec<Vec<f64>>, usize)> {
        qs.iter().map(|q| (feat.question(q), q.answer_index)).collect()
    };
    let train_x = prep(train);
    let val_x = prep(val);

    let mut w = vec![0.0; feat.width()];
    let mut grad = vec![0.0; feat.width()];
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut rng = rng::stream(cfg.seed, "choice-only-probe");
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (xs, y) = &train_x[i];
                let s = scores(&w, xs);
                let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = s.iter().map(|v| (v - top).exp()).collect();
                let z: f64 = exp.iter().sum();
                for (j, x) in xs.iter().enumerate() {
                    let coef = exp[j] / z - if j == *y { 1.0 } else { 0.0 };
                    for (g, xv) in grad.iter_mut().zip(x) {
                        *g += coef * xv;
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (wv, g) in w.iter_mut().zip(&grad) {
                *wv -= scale * g;
            }
        }
        let acc = accuracy(&w, &val_x);
        if acc > best.0 {
            best = (acc, epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(ChoiceOnlyResult {
        accuracy: best.0,
        best_epoch: best.1,
        epochs_run,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicProbeResult {
    /// `None` when every question was skipped.
    pub accuracy: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

impl DeterministicProbeResult {
    fn from_hits(hits: usize, evaluated: usize, skipped: usize) -> Self {
        DeterministicProbeResult {
            accuracy: (evaluated > 0).then(|| hits as f64 / evaluated as f64),
            evaluated,
            skipped,
        }
    }

    pub fn skipped_fraction(&self) -> f64 {
        let n = self.evaluated + self.skipped;
        if n == 0 {
            0.0
        } else {
            self.skipped as f64 / n as f64
        }
    }
}

fn pick_nearest(table: &EmbeddingTable, target: &[f64], choices: &[String]) -> usize {
    let s: Vec<f64> = choices
        .iter()
        .map(|c| -distance(&table.encode(c), target).expect("same table, same dimension"))
        .collect();
    argmax(&s)
}

/// Training-free hasty student: scores each choice by its distance to the
/// mean encoding of the visible question titles. Questions with no visible
/// title are skipped.
pub fn run_probe_hasty(val: &[ClozeQuestion], table: &EmbeddingTable) -> DeterministicProbeResult {
    let d = table.dimension();
    let (mut hits, mut evaluated, mut skipped) = (0, 0, 0);
    for q in val {
        let visible: Vec<&str> = q.visible_titles().collect();
        if visible.is_empty() {
            skipped += 1;
            continue;
        }
        let mut mean = vec![0.0; d];
        for t in &visible {
            for (m, x) in mean.iter_mut().zip(table.encode(t)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= visible.len() as f64);
        evaluated += 1;
        if pick_nearest(table, &mean, &q.choices) == q.answer_index {
            hits += 1;
        }
    }
    DeterministicProbeResult::from_hits(hits, evaluated, skipped)
}

/// Scores each choice by its distance to the description of the step the
/// placeholder stands for. Questions whose description there is empty (or
/// whose position cannot be recovered) are skipped.
pub fn run_probe_context(val: &[ClozeQuestion], table: &EmbeddingTable) -> DeterministicProbeResult {
    let (mut hits, mut evaluated, mut skipped) = (0, 0, 0);
    for q in val {
        let text = q
            .window_start()
            .and_then(|s| q.context.get(s + q.placeholder_index))
            .map(|c| c.text.as_str())
            .filter(|t| !t.trim().is_empty());
        let Some(text) = text else {
            skipped += 1;
            continue;
        };
        evaluated += 1;
        if pick_nearest(table, &table.encode(text), &q.choices) == q.answer_index {
            hits += 1;
        }
    }
    DeterministicProbeResult::from_hits(hits, evaluated, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clozegen::{ContextStep, PLACEHOLDER};
    use crate::corpus::Split;

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3).unwrap();
        t.insert("glue", &[1.0, 0.0, 0.0]).unwrap();
        t.insert("clamp", &[0.9, 0.1, 0.0]).unwrap();
        t.insert("paint", &[0.0, 1.0, 0.0]).unwrap();
        t.insert("sand", &[0.0, 0.0, 1.0]).unwrap();
        t.insert("wax", &[0.0, -1.0, 0.0]).unwrap();
        t
    }

    fn q(question: &[&str], choices: &[&str], answer_index: usize, context: &[&str]) -> ClozeQuestion {
        ClozeQuestion {
            qid: "p#0#1".into(),
            procedure_id: "p".into(),
            split: Split::Val,
            context: context
                .iter()
                .map(|t| ContextStep {
                    text: t.to_string(),
                    images: vec![],
                })
                .collect(),
            question: question.iter().map(|s| s.to_string()).collect(),
            placeholder_index: 1,
            choices: choices.iter().map(|s| s.to_string()).collect(),
            answer_index,
        }
    }

    #[test]
    fn hasty_prefers_the_visible_neighborhood() {
        let t = table();
        let one = q(&["glue", PLACEHOLDER], &["paint", "clamp", "sand", "wax"], 1, &[]);
        let r = run_probe_hasty(&[one], &t);
        assert_eq!(r.accuracy, Some(1.0));
        let same = q(&["glue", PLACEHOLDER], &["sand", "sand", "sand", "sand"], 2, &[]);
        assert_eq!(run_probe_hasty(&[same], &t).accuracy, Some(0.0));
    }

    #[test]
    fn context_probe_reads_the_masked_description() {
        let t = table();
        let one = q(&["a", PLACEHOLDER], &["glue", "paint", "sand wax", "sand"], 3, &["x", "sand"]);
        assert_eq!(run_probe_context(&[one], &t).accuracy, Some(1.0));
        let blank = q(&["a", PLACEHOLDER], &["glue", "paint", "sand", "wax"], 2, &["", " "]);
        let r = run_probe_context(&[blank.clone(), blank], &t);
        assert_eq!(r.accuracy, None);
        assert_eq!(r.skipped_fraction(), 1.0);
    }

    #[test]
    fn choice_only_rejects_bad_input() {
        let t = table();
        let cfg = ProbeConfig::default();
        let v = vec![q(&["a", PLACEHOLDER], &["glue", "paint"], 0, &[])];
        assert!(run_probe_choice_only(&[], &v, &t, &cfg).is_err());
        let mut tr = v.clone();
        tr[0].procedure_id = "other".into();
        tr[0].choices = vec!["glue".into(), "glue".into()];
        assert!(matches!(run_probe_choice_only(&tr, &v, &t, &cfg), Err(Error::Degenerate(_))));
        // same procedure on both sides
        let mut overlap = v.clone();
        overlap[0].choices = vec!["sand".into(), "wax".into()];
        assert!(run_probe_choice_only(&overlap, &v, &t, &cfg).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
