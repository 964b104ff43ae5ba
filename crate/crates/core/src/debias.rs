//! Cluster-budgeted distractor resampling.
//!
//! All step titles are clustered once; every cluster gets the same pick
//! budget per split. Each question keeps its answer, window and context, but
//! its distractors are redrawn from the answer's adaptive kNN neighborhood
//! while charging the cluster of every pick. Exhausted clusters are avoided
//! by bounded resampling, then by a max-remaining-budget fallback, and only
//! when every eligible cluster is spent by an overflow pick that is counted.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clozegen::{title_pool, ClozeQuestion};
use crate::corpus::{Procedure, Split};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::{adaptive_filter, kmeans_fit, knn_query, mean_distance, ClusterModel, PointSet};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasConfig {
    /// Picks allowed per cluster and split; computed from demand when unset.
    pub budget: Option<usize>,
    /// Defaults to `max(2, floor(sqrt(U)))` for `U` unique titles.
    pub n_clusters: Option<usize>,
    pub nchoices: usize,
    pub knn_k: usize,
    pub min_steps: usize,
    pub max_resamples: usize,
    pub kmeans_max_iters: usize,
    pub seed: u64,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        DebiasConfig {
            budget: None,
            n_clusters: None,
            nchoices: 4,
            knn_k: 100,
            min_steps: 6,
            max_resamples: 100,
            kmeans_max_iters: crate::geometry::DEFAULT_MAX_ITERS,
            seed: 0,
        }
    }
}

impl DebiasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == Some(0) {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if matches!(self.n_clusters, Some(k) if k < 2) {
            return Err(Error::Config("n_clusters must be at least 2".into()));
        }
        if self.max_resamples == 0 || self.nchoices < 2 || self.knn_k < self.nchoices {
            return Err(Error::Config(format!(
                "need max_resamples >= 1, nchoices >= 2 and knn_k >= nchoices (got {}, {}, {})",
                self.max_resamples, self.nchoices, self.knn_k
            )));
        }
        Ok(())
    }
}

pub fn default_cluster_count(unique_titles: usize) -> usize {
    ((unique_titles as f64).sqrt().floor() as usize).max(2)
}

/// `ceil(1.2 * demand / k)`, at least 1.
pub fn default_budget(demand: usize, k: usize) -> usize {
    (12 * demand).div_ceil(10 * k).max(1)
}

/// Remaining pick budget per cluster, plus bookkeeping of every pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub beta: usize,
    pub demand: usize,
    pub remaining: Vec<usize>,
    pub picks: Vec<usize>,
    pub overflow: Vec<usize>,
    pub overflow_count: usize,
}

impl BudgetLedger {
    pub fn k(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.beta * self.k() >= self.demand
    }

    pub fn warning(&self) -> Option<String> {
        (!self.is_feasible()).then(|| {
            format!(
                "budget {} x {} clusters = {} is below the demand of {} picks",
                self.beta,
                self.k(),
                self.beta * self.k(),
                self.demand
            )
        })
    }

    fn charge(&mut self, cluster: usize, overflow: bool) {
        self.remaining[cluster] = self.remaining[cluster].saturating_sub(1);
        self.picks[cluster] += 1;
        if overflow {
            self.overflow[cluster] += 1;
            self.overflow_count += 1;
        }
    }
}

/// Gives every cluster of `model` the same budget. With no explicit budget,
/// `demand` (questions x distractors per question) sets it with 20% slack.
pub fn build_budget(model: &ClusterModel, budget: Option<usize>, demand: usize) -> Result<BudgetLedger> {
    let beta = match budget {
        Some(0) => return Err(Error::Config("budget must be at least 1".into())),
        Some(b) => b,
        None => default_budget(demand, model.k),
    };
    Ok(BudgetLedger {
        beta,
        demand,
        remaining: vec![beta; model.k],
        picks: vec![0; model.k],
        overflow: vec![0; model.k],
        overflow_count: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickKind {
    /// Drawn uniformly, cluster had budget left.
    Sampled,
    /// Resampling gave up; took the eligible title with the most budget left.
    Fallback,
    /// Every eligible cluster was exhausted.
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub id: usize,
    pub cluster: usize,
    pub distance: f64,
    pub kind: PickKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub mean_distance: f64,
    pub picks: Vec<Pick>,
}

/// Ids eligible as distractors for `correct`: the adaptive-filtered kNN
/// neighborhood (the answer's own title excluded), widened once to twice the
/// neighborhood when too small.
fn eligible_set(
    correct: &str,
    pool: &PointSet,
    table: &EmbeddingTable,
    knn_k: usize,
    need: usize,
) -> Result<(Vec<(usize, f64)>, f64)> {
    let query = table.encode(correct);
    let own = pool.id_of(correct);
    let mut best = (Vec::new(), 0.0);
    for k in [knn_k, knn_k * 2] {
        let neigh = knn_query(pool, &query, k)?;
        let mean = mean_distance(&neigh);
        let kept: HashSet<usize> = adaptive_filter(&neigh).into_iter().collect();
        let eligible: Vec<(usize, f64)> = neigh
            .iter()
            .filter(|n| kept.contains(&n.id) && Some(n.id) != own)
            .map(|n| (n.id, n.distance))
            .collect();
        best = (eligible, mean);
        if best.0.len() >= need {
            break;
        }
    }
    Ok(best)
}

/// Redraws the distractors of one question under `ledger`. The answer goes
/// back to its original `answer_index`; context, question and placeholder
/// are untouched.
#[allow(clippy::too_many_arguments)]
pub fn debias_sample(
    q: &ClozeQuestion,
    pool: &PointSet,
    model: &ClusterModel,
    ledger: &mut BudgetLedger,
    table: &EmbeddingTable,
    cfg: &DebiasConfig,
    rng: &mut Rng,
) -> Result<(ClozeQuestion, SampleTrace)> {
    let need = cfg.nchoices - 1;
    let correct = q.answer().to_string();
    let (eligible, mean) = eligible_set(&correct, pool, table, cfg.knn_k, need)?;
    if eligible.len() < need {
        return Err(Error::InsufficientDistractors {
            qid: q.qid.clone(),
            needed: need,
            found: eligible.len(),
        });
    }

    let cluster_of = |id: usize| model.assignment[id];
    let mut candidates = eligible;
    let mut picks = Vec::with_capacity(need);
    for _ in 0..need {
        let mut choice = None;
        for _ in 0..=cfg.max_resamples {
            let i = rng.gen_range(0..candidates.len());
            if ledger.remaining[cluster_of(candidates[i].0)] > 0 {
                choice = Some((i, PickKind::Sampled));
                break;
            }
        }
        if choice.is_none() {
            choice = candidates
                .iter()
                .enumerate()
                .filter(|(_, (id, _))| ledger.remaining[cluster_of(*id)] > 0)
                .min_by_key(|(_, (id, _))| {
                    let c = cluster_of(*id);
                    (std::cmp::Reverse(ledger.remaining[c]), c, *id)
                })
                .map(|(i, _)| (i, PickKind::Fallback));
        }
        let (i, kind) = choice.unwrap_or_else(|| (rng.gen_range(0..candidates.len()), PickKind::Overflow));
        // removing the pick keeps the question free of duplicates
        let (id, distance) = candidates.remove(i);
        let cluster = cluster_of(id);
        ledger.charge(cluster, kind == PickKind::Overflow);
        picks.push(Pick {
            id,
            cluster,
            distance,
            kind,
        });
    }

    let mut choices: Vec<String> = picks.iter().map(|p| pool.title(p.id).to_string()).collect();
    let answer_index = q.answer_index.min(choices.len());
    choices.insert(answer_index, correct);
    let out = ClozeQuestion {
        choices,
        answer_index,
        ..q.clone()
    };
    Ok((
        out,
        SampleTrace {
            mean_distance: mean,
            picks,
        },
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub input: usize,
    pub output: usize,
    pub dropped_min_steps: usize,
    /// Questions whose neighborhood had too few eligible titles.
    pub skipped: Vec<String>,
    pub beta: usize,
    pub demand: usize,
    pub feasible: bool,
    pub overflow_count: usize,
    pub picks_per_cluster: Vec<usize>,
    pub overflow_per_cluster: Vec<usize>,
    pub fallback_picks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    pub unique_titles: usize,
    pub n_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub seed: u64,
    pub splits: BTreeMap<Split, SplitReport>,
}

impl fmt::Display for DebiasReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} unique titles in {} clusters (seed {})",
            self.unique_titles, self.n_clusters, self.seed
        )?;
        for (split, r) in &self.splits {
            writeln!(
                f,
                "{split}: {} -> {} questions, {} dropped (< min steps), {} skipped, beta {} for demand {}{}, {} fallback, {} overflow",
                r.input,
                r.output,
                r.dropped_min_steps,
                r.skipped.len(),
                r.beta,
                r.demand,
                if r.feasible { "" } else { " (infeasible)" },
                r.fallback_picks,
                r.overflow_count
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DebiasOutcome {
    pub train: Vec<ClozeQuestion>,
    pub val: Vec<ClozeQuestion>,
    pub report: DebiasReport,
    pub model: ClusterModel,
    pub pool: PointSet,
    /// Per-question pick traces, in output order (train then val).
    pub traces: Vec<(String, SampleTrace)>,
}

/// Debiases both splits. Questions from procedures shorter than
/// `min_steps` are dropped first; one title pool and cluster model are built
/// over every step title of `procs`; each split then runs sequentially in
/// dataset order against its own ledger.
pub fn debias_dataset(
    train: &[ClozeQuestion],
    val: &[ClozeQuestion],
    procs: &[Procedure],
    table: &EmbeddingTable,
    cfg: &DebiasConfig,
) -> Result<DebiasOutcome> {
    cfg.validate()?;
    let pool = title_pool(procs, table);
    let unique = pool.len();
    let k = cfg.n_clusters.unwrap_or_else(|| default_cluster_count(unique));
    if unique < k {
        return Err(Error::PoolTooSmall {
            needed: k,
            available: unique,
        });
    }
    let model = kmeans_fit(&pool, k, cfg.kmeans_max_iters, cfg.seed)?;

    let mut report = DebiasReport {
        unique_titles: unique,
        n_clusters: k,
        cluster_sizes: model.cluster_sizes(),
        seed: cfg.seed,
        splits: BTreeMap::new(),
    };
    let mut traces = Vec::new();
    let mut outputs = Vec::new();
    for (split, input) in [(Split::Train, train), (Split::Val, val)] {
        let kept: Vec<&ClozeQuestion> = input.iter().filter(|q| q.context.len() >= cfg.min_steps).collect();
        let demand = kept.len() * (cfg.nchoices - 1);
        let mut ledger = build_budget(&model, cfg.budget, demand)?;
        let mut sr = SplitReport {
            input: input.len(),
            dropped_min_steps: input.len() - kept.len(),
            beta: ledger.beta,
            demand,
            feasible: ledger.is_feasible(),
            ..SplitReport::default()
        };
        let mut out = Vec::with_capacity(kept.len());
        for q in kept {
            let mut r = rng::stream(cfg.seed, &format!("debias:{}", q.qid));
            match debias_sample(q, &pool, &model, &mut ledger, table, cfg, &mut r) {
                Ok((nq, trace)) => {
                    sr.fallback_picks += trace.picks.iter().filter(|p| p.kind == PickKind::Fallback).count();
                    traces.push((nq.qid.clone(), trace));
                    out.push(nq);
                }
                Err(Error::InsufficientDistractors { qid, .. }) => sr.skipped.push(qid),
                Err(e) => return Err(e),
            }
        }
        sr.output = out.len();
        sr.overflow_count = ledger.overflow_count;
        sr.picks_per_cluster = ledger.picks;
        sr.overflow_per_cluster = ledger.overflow;
        report.splits.insert(split, sr);
        outputs.push(out);
    }
    let val_out = outputs.pop().expect("two splits");
    let train_out = outputs.pop().expect("two splits");
    if train_out.is_empty() && val_out.is_empty() {
        return Err(Error::Empty("debiasing left no questions"));
    }
    Ok(DebiasOutcome {
        train: train_out,
        val: val_out,
        report,
        model,
        pool,
        traces,
    })
}

/// Counts, per cluster, the distractors of `questions` whose titles are in
/// `pool`, using the model's stored assignment.
pub fn recount_picks(questions: &[ClozeQuestion], pool: &PointSet, model: &ClusterModel) -> Vec<usize> {
    let mut hist = vec![0; model.k];
    for q in questions {
        for d in q.distractors() {
            if let Some(id) = pool.id_of(d) {
                hist[model.assignment[id]] += 1;
            }
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clozegen::{context_of, ContextStep, PLACEHOLDER};
    use crate::corpus::Step;

    #[test]
    fn budget_examples() {
        let model = ClusterModel {
            k: 3,
            dimension: 1,
            centroids: vec![vec![0.0]; 3],
            assignment: vec![],
        };
        let l = build_budget(&model, Some(5), 15).unwrap();
        assert_eq!(l.remaining, vec![5, 5, 5]);
        assert_eq!(l.overflow_count, 0);
        assert!(l.warning().is_none());
        let l = build_budget(&model, Some(5), 16).unwrap();
        assert!(!l.is_feasible());
        assert!(l.warning().unwrap().contains("15"));
        assert!(build_budget(&model, Some(0), 16).is_err());
        assert_eq!(default_budget(90, 10), 11);
        assert_eq!(default_budget(0, 10), 1);
        assert_eq!(default_cluster_count(3), 2);
        assert_eq!(default_cluster_count(400), 20);
    }

    /// Query `q` at the origin of a 2-d plane, two near titles, three far
    /// ones. Far titles T3, T4 sit in cluster 0 and T5 in cluster 1.
    fn plane() -> (EmbeddingTable, PointSet, ClusterModel) {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("q", &[1.0, 0.0]).unwrap();
        t.insert("n1", &[1.0, 0.05]).unwrap();
        t.insert("n2", &[1.0, -0.05]).unwrap();
        t.insert("t3", &[-1.0, 0.1]).unwrap();
        t.insert("t4", &[-1.0, 0.2]).unwrap();
        t.insert("t5", &[-1.0, -0.3]).unwrap();
        let pool = PointSet::from_titles(["q", "n1", "n2", "t3", "t4", "t5"], &t);
        assert_eq!(pool.titles(), ["n1", "n2", "q", "t3", "t4", "t5"]);
        let model = ClusterModel {
            k: 3,
            dimension: 2,
            centroids: vec![vec![-1.0, 0.15], vec![-1.0, -0.3], vec![1.0, 0.0]],
            assignment: vec![2, 2, 2, 0, 0, 1],
        };
        (t, pool, model)
    }

    fn question(answer: &str, answer_index: usize) -> ClozeQuestion {
        let mut choices = vec!["x1".to_string(), "x2".to_string(), "x3".to_string()];
        choices.insert(answer_index, answer.to_string());
        ClozeQuestion {
            qid: "p#0#1".into(),
            procedure_id: "p".into(),
            split: Split::Train,
            context: vec![
                ContextStep {
                    text: "s".into(),
                    images: vec![],
                };
                6
            ],
            question: vec!["a".into(), PLACEHOLDER.into(), "b".into(), "c".into()],
            placeholder_index: 1,
            choices,
            answer_index,
        }
    }

    fn ledger(remaining: Vec<usize>) -> BudgetLedger {
        let k = remaining.len();
        BudgetLedger {
            beta: 2,
            demand: 3,
            remaining,
            picks: vec![0; k],
            overflow: vec![0; k],
            overflow_count: 0,
        }
    }

    #[test]
    fn budgets_drain_without_overflow() {
        let (t, pool, model) = plane();
        let cfg = DebiasConfig {
            knn_k: 5,
            ..DebiasConfig::default()
        };
        for seed in 0..20 {
            let mut l = ledger(vec![2, 1, 0]);
            let (q, trace) =
                debias_sample(&question("q", 2), &pool, &model, &mut l, &t, &cfg, &mut rng::from_seed(seed)).unwrap();
            let mut d: Vec<&str> = q.distractors().collect();
            d.sort();
            assert_eq!(d, vec!["t3", "t4", "t5"]);
            assert_eq!(l.remaining, vec![0, 0, 0]);
            assert_eq!(l.overflow_count, 0);
            assert_eq!(q.answer_index, 2);
            assert_eq!(q.answer(), "q");
            assert!(trace.picks.iter().all(|p| p.distance > trace.mean_distance));
        }
    }

    #[test]
    fn exhausted_clusters_overflow() {
        let (t, pool, mut model) = plane();
        model.assignment = vec![2, 2, 2, 0, 0, 0];
        let cfg = DebiasConfig {
            knn_k: 5,
            ..DebiasConfig::default()
        };
        let mut l = ledger(vec![0, 4, 4]);
        let (q, trace) = debias_sample(&question("q", 0), &pool, &model, &mut l, &t, &cfg, &mut rng::from_seed(1)).unwrap();
        assert_eq!(l.overflow_count, 3);
        assert_eq!(l.overflow, vec![3, 0, 0]);
        assert_eq!(l.remaining, vec![0, 4, 4]);
        assert!(trace.picks.iter().all(|p| p.kind == PickKind::Overflow));
        let distinct: HashSet<&String> = q.choices.iter().collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn fallback_prefers_most_remaining_budget() {
        let (t, pool, model) = plane();
        // one resample: the first draw may hit the empty cluster, after which
        // the fallback must go to the cluster with the most budget left
        let cfg = DebiasConfig {
            knn_k: 5,
            max_resamples: 1,
            ..DebiasConfig::default()
        };
        for seed in 0..30 {
            let mut l = ledger(vec![0, 5, 0]);
            let (q, trace) =
                debias_sample(&question("q", 1), &pool, &model, &mut l, &t, &cfg, &mut rng::from_seed(seed)).unwrap();
            assert!(q.distractors().any(|d| d == "t5"));
            assert_eq!(trace.picks.iter().filter(|p| p.cluster == 1).count(), 1);
            assert_eq!(l.overflow_count, 2);
        }
    }

    #[test]
    fn too_few_eligible_is_an_error() {
        let (t, pool, model) = plane();
        let cfg = DebiasConfig {
            knn_k: 5,
            nchoices: 5,
            ..DebiasConfig::default()
        };
        let mut l = ledger(vec![9, 9, 9]);
        let err = debias_sample(&question("q", 0), &pool, &model, &mut l, &t, &cfg, &mut rng::from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientDistractors { found: 3, .. }));
    }

    fn proc(id: &str, titles: &[&str]) -> Procedure {
        Procedure {
            id: id.into(),
            category: "c".into(),
            title: "t".into(),
            split: Split::Train,
            steps: titles
                .iter()
                .map(|t| Step {
                    title: t.to_string(),
                    text: "x".into(),
                    images: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn short_procedures_are_dropped() {
        let (t, _, _) = plane();
        let short = proc("p", &["q", "n1", "n2", "t3", "t4"]);
        let long = proc("r", &["q", "n1", "n2", "t3", "t4", "t5"]);
        let mut qs = question("q", 0);
        qs.context = context_of(&short);
        let mut ql = question("q", 0);
        ql.qid = "r#0#1".into();
        ql.procedure_id = "r".into();
        ql.context = context_of(&long);
        let cfg = DebiasConfig {
            knn_k: 5,
            n_clusters: Some(2),
            ..DebiasConfig::default()
        };
        let out = debias_dataset(&[qs.clone(), ql], &[], &[short, long], &t, &cfg).unwrap();
        let r = &out.report.splits[&Split::Train];
        assert_eq!(r.dropped_min_steps, 1);
        assert_eq!(out.train.len(), 1);
        assert_eq!(out.train[0].procedure_id, "r");

        let none = debias_dataset(&[qs], &[], &[proc("p", &["q", "n1", "n2", "t3", "t4"])], &t, &cfg);
        assert!(none.is_err());
    }

    #[test]
    fn zero_budget_is_rejected() {
        let cfg = DebiasConfig {
            budget: Some(0),
            ..DebiasConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
