use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::{tokenize, EmbeddingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipgramConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the end of training (linear decay).
    pub min_learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dimension: 100,
            window: 4,
            negatives: 5,
            epochs: 15,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            min_count: 2,
            seed: 0,
        }
    }
}

impl SkipgramConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dimension", self.dimension),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
            ("min_count", self.min_count),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("skip-gram {name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) || !(self.min_learning_rate >= 0.0) {
            return Err(Error::Config("skip-gram learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Token ids are dense and ordered by descending count, then token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    pub tokens: Vec<String>,
    pub counts: Vec<u64>,
    pub ids: HashMap<String, usize>,
    pub min_count: usize,
}

impl Vocab {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in sentences {
            for t in s {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count as u64)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = entries.iter().map(|(t, _)| t.to_string()).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab {
            tokens,
            counts: entries.iter().map(|e| e.1).collect(),
            ids,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    pub vocab: Vocab,
    /// Negative-sampling loss over every training pair after each epoch, with
    /// one fixed draw of negatives so epochs are comparable.
    pub epoch_losses: Vec<f64>,
}

/// Gradients of the negative-sampling loss with respect to each input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgnsGrad {
    pub center: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Loss `-ln σ(p·c) - Σ ln σ(-n_k·c)` for one (center, context) pair with
/// sampled negatives, and its analytic gradient.
pub fn sgns_loss_and_grad(center: &[f64], positive: &[f64], negatives: &[&[f64]]) -> (f64, SgnsGrad) {
    let mut grad = SgnsGrad::default();
    let loss = sgns_into(center, positive, negatives, &mut grad);
    (loss, grad)
}

fn sgns_into(center: &[f64], positive: &[f64], negatives: &[&[f64]], grad: &mut SgnsGrad) -> f64 {
    let d = center.len();
    grad.center.clear();
    grad.center.resize(d, 0.0);
    grad.negatives.resize_with(negatives.len(), Vec::new);

    let s = dot(positive, center);
    let mut loss = softplus(-s);
    let g = sigmoid(s) - 1.0;
    grad.positive.clear();
    grad.positive.extend(center.iter().map(|c| g * c));
    for (gc, p) in grad.center.iter_mut().zip(positive) {
        *gc += g * p;
    }
    for (k, neg) in negatives.iter().enumerate() {
        let s = dot(neg, center);
        loss += softplus(s);
        let g = sigmoid(s);
        let gn = &mut grad.negatives[k];
        gn.clear();
        gn.extend(center.iter().map(|c| g * c));
        for (gc, n) in grad.center.iter_mut().zip(neg.iter()) {
            *gc += g * n;
        }
    }
    loss
}

/// Cumulative distribution of `count^0.75` over the vocabulary.
fn noise_cdf(counts: &[u64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = counts
        .iter()
        .map(|&c| {
            acc += (c as f64).powf(0.75);
            acc
        })
        .collect();
    for x in cdf.iter_mut() {
        *x /= acc;
    }
    cdf
}

fn sample_noise(cdf: &[f64], rng: &mut rng::Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Mean loss over every training pair, with negatives drawn from a stream
/// that restarts at each call, so successive epochs are scored on the same
/// sample.
fn objective(sentences: &[Vec<usize>], w_in: &[f64], w_out: &[f64], cdf: &[f64], cfg: &SkipgramConfig) -> f64 {
    let d = cfg.dimension;
    let mut rng = rng::stream(cfg.seed, "skipgram-objective");
    let mut grad = SgnsGrad::default();
    let mut negs: Vec<&[f64]> = Vec::with_capacity(cfg.negatives);
    let (mut sum, mut pairs) = (0.0, 0usize);
    for sent in sentences {
        for (i, &c) in sent.iter().enumerate() {
            let lo = i.saturating_sub(cfg.window);
            let hi = (i + cfg.window).min(sent.len() - 1);
            for (j, &o) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                if j == i {
                    continue;
                }
                negs.clear();
                for _ in 0..cfg.negatives {
                    let n = sample_noise(cdf, &mut rng);
                    if n != o {
                        negs.push(&w_out[n * d..(n + 1) * d]);
                    }
                }
                sum += sgns_into(&w_in[c * d..(c + 1) * d], &w_out[o * d..(o + 1) * d], &negs, &mut grad);
                pairs += 1;
            }
        }
    }
    sum / pairs.max(1) as f64
}

/// Skip-gram with negative sampling over tokenized titles, trained by plain
/// SGD with linearly decaying learning rate. Single-threaded and fully
/// determined by `cfg.seed`.
pub fn train_skipgram<S: AsRef<str>>(titles: &[S], cfg: &SkipgramConfig) -> Result<TrainedEmbeddings> {
    cfg.validate()?;
    let tokenized: Vec<Vec<String>> = titles.iter().map(|t| tokenize(t.as_ref())).collect();
    let vocab = Vocab::build(tokenized.iter().map(Vec::as_slice), cfg.min_count);
    let sentences: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.ids.get(t).copied()).collect::<Vec<_>>())
        .filter(|s| s.len() >= 2)
        .collect();
    if sentences.is_empty() {
        return Err(Error::Degenerate(
            "no title has two or more in-vocabulary tokens".into(),
        ));
    }

    let d = cfg.dimension;
    let v = vocab.len();
    let mut rng = rng::stream(cfg.seed, "skipgram");
    let scale = 0.5 / d as f64;
    let mut w_in: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-scale..scale)).collect();
    let mut w_out = vec![0.0; v * d];
    let cdf = noise_cdf(&vocab.counts);

    let pairs_per_epoch: usize = sentences
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|i| i.min(cfg.window) + (s.len() - 1 - i).min(cfg.window))
                .sum::<usize>()
        })
        .sum();
    let total = (pairs_per_epoch * cfg.epochs) as f64;

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut grad = SgnsGrad::default();
    let mut center = vec![0.0; d];
    let mut positive = vec![0.0; d];
    let mut neg_ids = Vec::with_capacity(cfg.negatives);
    let mut neg_buf: Vec<Vec<f64>> = vec![vec![0.0; d]; cfg.negatives];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut done = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &si in &order {
            let sent = &sentences[si];
            for (i, &c) in sent.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(sent.len() - 1);
                for (j, &o) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = cfg.learning_rate
                        - (cfg.learning_rate - cfg.min_learning_rate) * (done as f64 / total);
                    done += 1;

                    neg_ids.clear();
                    for _ in 0..cfg.negatives {
                        let n = sample_noise(&cdf, &mut rng);
                        if n != o {
                            neg_ids.push(n);
                        }
                    }
                    center.copy_from_slice(&w_in[c * d..(c + 1) * d]);
                    positive.copy_from_slice(&w_out[o * d..(o + 1) * d]);
                    for (buf, &n) in neg_buf.iter_mut().zip(&neg_ids) {
                        buf.copy_from_slice(&w_out[n * d..(n + 1) * d]);
                    }
                    let negs: Vec<&[f64]> = neg_buf[..neg_ids.len()].iter().map(Vec::as_slice).collect();
                    sgns_into(&center, &positive, &negs, &mut grad);

                    for (w, g) in w_in[c * d..(c + 1) * d].iter_mut().zip(&grad.center) {
                        *w -= lr * g;
                    }
                    for (w, g) in w_out[o * d..(o + 1) * d].iter_mut().zip(&grad.positive) {
                        *w -= lr * g;
                    }
                    for (&n, g) in neg_ids.iter().zip(&grad.negatives) {
                        for (w, g) in w_out[n * d..(n + 1) * d].iter_mut().zip(g) {
                            *w -= lr * g;
                        }
                    }
                }
            }
        }
        epoch_losses.push(objective(&sentences, &w_in, &w_out, &cdf, cfg));
    }

    let mut table = EmbeddingTable::new(d)?;
    for (i, tok) in vocab.tokens.iter().enumerate() {
        table.insert(tok.clone(), &w_in[i * d..(i + 1) * d])?;
    }
    Ok(TrainedEmbeddings {
        table,
        vocab,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let none: [&str; 0] = [];
        assert!(train_skipgram(&none, &SkipgramConfig::default()).is_err());
        assert!(train_skipgram(&["single"], &SkipgramConfig::default()).is_err());
    }

    #[test]
    fn zero_dimension_is_an_error() {
        let cfg = SkipgramConfig {
            dimension: 0,
            ..SkipgramConfig::default()
        };
        assert!(train_skipgram(&["a b", "a b"], &cfg).is_err());
    }

    #[test]
    fn vocab_respects_min_count_and_is_dense() {
        let sents = [
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string(), "c".to_string()],
        ];
        let v = Vocab::build(sents.iter().map(Vec::as_slice), 2);
        assert_eq!(v.tokens, vec!["a"]);
        assert_eq!(v.ids["a"], 0);
    }

    #[test]
    fn cooccurring_tokens_end_up_closer() {
        let mut titles: Vec<String> = Vec::new();
        let fillers = ["red", "blue", "green", "tall", "small", "old"];
        let others = ["paint wall", "hang frame", "sweep floor", "water plant"];
        for i in 0..60 {
            titles.push(format!("glue {} clamp", fillers[i % fillers.len()]));
            titles.push(others[i % others.len()].to_string());
        }
        titles.push("zebra".to_string());
        let cfg = SkipgramConfig {
            dimension: 20,
            min_count: 1,
            epochs: 30,
            seed: 3,
            ..SkipgramConfig::default()
        };
        let t = train_skipgram(&titles, &cfg).unwrap().table;
        let glue = t.get("glue").unwrap();
        let near = cosine(glue, t.get("clamp").unwrap());
        let far = cosine(glue, t.get("zebra").unwrap());
        assert!(near > far, "cos(glue,clamp)={near} cos(glue,zebra)={far}");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let titles = ["cut the board", "sand the board", "cut the edge", "sand the edge"];
        let cfg = SkipgramConfig {
            dimension: 8,
            min_count: 1,
            seed: 11,
            ..SkipgramConfig::default()
        };
        let a = train_skipgram(&titles, &cfg).unwrap();
        let b = train_skipgram(&titles, &cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    /// Central finite differences on every coordinate of every input.
    pub(crate) fn max_relative_error(seed: u64) -> f64 {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = 5;
        let mut vec = || (0..d).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        // vocabulary of three tokens: center, context, one negative
        let (c, p, n) = (vec(), vec(), vec());
        let loss = |c: &[f64], p: &[f64], n: &[f64]| sgns_loss_and_grad(c, p, &[n]).0;
        let (_, g) = sgns_loss_and_grad(&c, &p, &[&n]);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, numeric: f64| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        };
        for i in 0..d {
            let bump = |v: &[f64], s: f64| {
                let mut v = v.to_vec();
                v[i] += s;
                v
            };
            check(g.center[i], (loss(&bump(&c, h), &p, &n) - loss(&bump(&c, -h), &p, &n)) / (2.0 * h));
            check(g.positive[i], (loss(&c, &bump(&p, h), &n) - loss(&c, &bump(&p, -h), &n)) / (2.0 * h));
            check(g.negatives[0][i], (loss(&c, &p, &bump(&n, h)) - loss(&c, &p, &bump(&n, -h))) / (2.0 * h));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let e = max_relative_error(seed);
            assert!(e < 1e-4, "seed {seed}: relative error {e}");
        }
    }

    #[test]
    fn noise_sampler_follows_smoothed_unigram() {
        let cdf = noise_cdf(&[16, 1]);
        let mut r = rng::from_seed(1);
        let hits = (0..20_000).filter(|_| sample_noise(&cdf, &mut r) == 1).count();
        let expect = 1.0 / (1.0 + 16f64.powf(0.75));
        assert!((hits as f64 / 20_000.0 - expect).abs() < 0.01);
    }
}
