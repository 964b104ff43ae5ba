//! Textual cloze questions built the RecipeQA way: a window of consecutive
//! step titles with one title masked, and distractors drawn from the far
//! half of the answer's k-nearest-neighbor neighborhood.
//!
//! This is the biased generator. Its distractors are sampled from the
//! deduplicated title pool while answers follow title frequency in the
//! corpus, which is exactly the leakage the `debias` module removes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_title, Procedure, Split};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::{adaptive_filter, knn_query_excluding, PointSet};
use crate::rng::{self, Rng};

pub const PLACEHOLDER: &str = "@placeholder";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Size of the candidate list (the question window).
    pub window: usize,
    pub nchoices: usize,
    pub knn_k: usize,
    pub questions_per_procedure: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            window: 4,
            nchoices: 4,
            knn_k: 100,
            questions_per_procedure: 2,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.nchoices < 2 || self.knn_k < self.nchoices {
            return Err(Error::Config(format!(
                "need window >= 2, nchoices >= 2 and knn_k >= nchoices (got {}, {}, {})",
                self.window, self.nchoices, self.knn_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextStep {
    pub text: String,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeQuestion {
    pub qid: String,
    pub procedure_id: String,
    pub split: Split,
    pub context: Vec<ContextStep>,
    pub question: Vec<String>,
    pub placeholder_index: usize,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl ClozeQuestion {
    pub fn answer(&self) -> &str {
        &self.choices[self.answer_index]
    }

    pub fn distractors(&self) -> impl Iterator<Item = &str> {
        self.choices
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.answer_index)
            .map(|(_, c)| c.as_str())
    }

    /// Titles of the window other than the masked one.
    pub fn visible_titles(&self) -> impl Iterator<Item = &str> {
        self.question
            .iter()
            .filter(|t| t.as_str() != PLACEHOLDER)
            .map(String::as_str)
    }

    /// Window start recovered from the question id.
    pub fn window_start(&self) -> Option<usize> {
        parse_qid(&self.qid).map(|(_, start, _)| start)
    }
}

pub fn qid(procedure_id: &str, start: usize, missing_offset: usize) -> String {
    format!("{procedure_id}#{start}#{missing_offset}")
}

/// Splits `<procedure_id>#<start>#<missing_offset>` from the right, so
/// procedure ids may themselves contain `#`.
pub fn parse_qid(qid: &str) -> Option<(&str, usize, usize)> {
    let mut parts = qid.rsplitn(3, '#');
    let offset = parts.next()?.parse().ok()?;
    let start = parts.next()?.parse().ok()?;
    Some((parts.next()?, start, offset))
}

pub fn read_dataset(path: &Path) -> Result<Vec<ClozeQuestion>> {
    crate::jsonl::read_file(path)
}

pub fn write_dataset(path: &Path, questions: &[ClozeQuestion]) -> Result<()> {
    crate::jsonl::write_file(path, questions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub missing_offset: usize,
}

/// Samples up to `questions_per_procedure` distinct window starts without
/// replacement, returned in ascending order, each with a uniform masked
/// offset. Procedures shorter than the window yield nothing.
pub fn select_windows(n_steps: usize, cfg: &GenerationConfig, rng: &mut Rng) -> Vec<Window> {
    if n_steps < cfg.window || cfg.window == 0 {
        return Vec::new();
    }
    let n_starts = n_steps - cfg.window + 1;
    let amount = cfg.questions_per_procedure.min(n_starts);
    let mut starts = index::sample(rng, n_starts, amount).into_vec();
    starts.sort_unstable();
    starts
        .into_iter()
        .map(|start| Window {
            start,
            missing_offset: rng.gen_range(0..cfg.window),
        })
        .collect()
}

/// Draws `nchoices - 1` distinct distractor ids for `correct`: kNN in the
/// pool (the correct title itself excluded), keep the neighbors beyond the
/// mean distance, sample uniformly without replacement.
///
/// When fewer than needed survive, the search is repeated once with twice
/// the neighborhood, and any remaining shortfall is filled uniformly from
/// the rest of the pool.
pub fn sample_distractors_biased(
    correct: &str,
    pool: &PointSet,
    table: &EmbeddingTable,
    cfg: &GenerationConfig,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let need = cfg.nchoices - 1;
    let exclude = pool.id_of(correct);
    let available = pool.len() - usize::from(exclude.is_some());
    if available < need {
        return Err(Error::PoolTooSmall {
            needed: need,
            available,
        });
    }
    let query = table.encode(correct);
    let mut kept = adaptive_filter(&knn_query_excluding(pool, &query, cfg.knn_k, exclude)?);
    if kept.len() < need {
        kept = adaptive_filter(&knn_query_excluding(pool, &query, cfg.knn_k * 2, exclude)?);
    }
    if kept.len() >= need {
        return Ok(index::sample(rng, kept.len(), need)
            .into_iter()
            .map(|i| kept[i])
            .collect());
    }
    let mut chosen = kept;
    let taken: HashSet<usize> = chosen.iter().copied().collect();
    let rest: Vec<usize> = (0..pool.len())
        .filter(|id| Some(*id) != exclude && !taken.contains(id))
        .collect();
    let extra = need - chosen.len();
    chosen.extend(index::sample(rng, rest.len(), extra).into_iter().map(|i| rest[i]));
    // keep the forced picks in random order as well
    let order = index::sample(rng, chosen.len(), chosen.len());
    Ok(order.into_iter().map(|i| chosen[i]).collect())
}

/// Inserts `correct` into `distractors` at a uniformly random position.
pub fn assemble_choices(correct: &str, distractors: Vec<String>, rng: &mut Rng) -> Result<(Vec<String>, usize)> {
    let mut seen: HashSet<&str> = HashSet::from([correct]);
    for d in &distractors {
        if !seen.insert(d.as_str()) {
            return Err(Error::DuplicateChoice(d.clone()));
        }
    }
    let answer_index = rng.gen_range(0..=distractors.len());
    let mut choices = distractors;
    choices.insert(answer_index, correct.to_string());
    Ok((choices, answer_index))
}

pub fn context_of(proc: &Procedure) -> Vec<ContextStep> {
    proc.steps
        .iter()
        .map(|s| ContextStep {
            text: s.text.clone(),
            images: s.images.clone(),
        })
        .collect()
}

/// Deduplicated pool of every normalized step title in the given procedures.
pub fn title_pool<'a>(procs: impl IntoIterator<Item = &'a Procedure>, table: &EmbeddingTable) -> PointSet {
    PointSet::from_titles(
        procs
            .into_iter()
            .flat_map(|p| p.steps.iter().map(|s| s.title.as_str())),
        table,
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutcome {
    pub questions: Vec<ClozeQuestion>,
    /// Procedures with fewer steps than the window.
    pub skipped_procedures: usize,
    /// Windows containing a title that normalizes to the empty string.
    pub skipped_windows: usize,
}

/// Generates the cloze dataset for every procedure, in corpus order. Each
/// split draws distractors from its own title pool. Every random draw comes
/// from a stream keyed by the seed and the procedure or question id.
pub fn generate_dataset(
    procs: &[Procedure],
    table: &EmbeddingTable,
    cfg: &GenerationConfig,
) -> Result<GenerationOutcome> {
    cfg.validate()?;
    let pools: BTreeMap<Split, PointSet> = [Split::Train, Split::Val]
        .into_iter()
        .map(|s| (s, title_pool(procs.iter().filter(|p| p.split == s), table)))
        .collect();

    let mut out = GenerationOutcome::default();
    for proc in procs {
        let mut wrng = rng::stream(cfg.seed, &format!("windows:{}", proc.id));
        let windows = select_windows(proc.steps.len(), cfg, &mut wrng);
        if windows.is_empty() {
            out.skipped_procedures += 1;
            continue;
        }
        let titles: Vec<String> = proc.steps.iter().map(|s| normalize_title(&s.title)).collect();
        let context = context_of(proc);
        for w in windows {
            let span = &titles[w.start..w.start + cfg.window];
            if span.iter().any(String::is_empty) {
                out.skipped_windows += 1;
                continue;
            }
            let id = qid(&proc.id, w.start, w.missing_offset);
            let mut qrng = rng::stream(cfg.seed, &id);
            let correct = &span[w.missing_offset];
            let pool = &pools[&proc.split];
            let picks = sample_distractors_biased(correct, pool, table, cfg, &mut qrng)?;
            let distractors = picks.iter().map(|&i| pool.title(i).to_string()).collect();
            let (choices, answer_index) = assemble_choices(correct, distractors, &mut qrng)?;
            let mut question = span.to_vec();
            question[w.missing_offset] = PLACEHOLDER.to_string();
            out.questions.push(ClozeQuestion {
                qid: id,
                procedure_id: proc.id.clone(),
                split: proc.split,
                context: context.clone(),
                question,
                placeholder_index: w.missing_offset,
                choices,
                answer_index,
            });
        }
    }
    Ok(out)
}

/// Structural problems found by [`validate_question`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Violation {
    BadQid,
    UnknownProcedure,
    SplitMismatch,
    ContextMismatch,
    WindowLength,
    PlaceholderCount,
    PlaceholderIndex,
    QuestionMismatch,
    ChoicesLength,
    DuplicateChoices,
    AnswerIndex,
    AnswerMismatch,
    StepNumber,
}

impl Violation {
    pub fn as_str(self) -> &'static str {
        match self {
            Violation::BadQid => "bad_qid",
            Violation::UnknownProcedure => "unknown_procedure",
            Violation::SplitMismatch => "split_mismatch",
            Violation::ContextMismatch => "context_mismatch",
            Violation::WindowLength => "window_length",
            Violation::PlaceholderCount => "placeholder_count",
            Violation::PlaceholderIndex => "placeholder_index",
            Violation::QuestionMismatch => "question_mismatch",
            Violation::ChoicesLength => "choices_length",
            Violation::DuplicateChoices => "duplicate_choices",
            Violation::AnswerIndex => "answer_index",
            Violation::AnswerMismatch => "answer_mismatch",
            Violation::StepNumber => "step_number",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Procedures by id, for validation lookups.
pub struct CorpusIndex<'a> {
    by_id: HashMap<&'a str, (&'a Procedure, Vec<String>)>,
}

impl<'a> CorpusIndex<'a> {
    pub fn new(procs: &'a [Procedure]) -> Self {
        let by_id = procs
            .iter()
            .map(|p| {
                let titles = p.steps.iter().map(|s| normalize_title(&s.title)).collect();
                (p.id.as_str(), (p, titles))
            })
            .collect();
        CorpusIndex { by_id }
    }

    pub fn get(&self, id: &str) -> Option<&'a Procedure> {
        self.by_id.get(id).map(|(p, _)| *p)
    }

    fn normalized_titles(&self, id: &str) -> Option<&[String]> {
        self.by_id.get(id).map(|(_, t)| t.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuestionShape {
    pub window: usize,
    pub nchoices: usize,
}

impl From<&GenerationConfig> for QuestionShape {
    fn from(cfg: &GenerationConfig) -> Self {
        QuestionShape {
            window: cfg.window,
            nchoices: cfg.nchoices,
        }
    }
}

/// Checks one record against its source procedure. Returns every violation
/// found, sorted; an empty list means the record is well formed.
pub fn validate_question(q: &ClozeQuestion, corpus: &CorpusIndex<'_>, shape: QuestionShape) -> Vec<Violation> {
    let mut v = Vec::new();

    if q.question.len() != shape.window {
        v.push(Violation::WindowLength);
    }
    let placeholders = q.question.iter().filter(|t| *t == PLACEHOLDER).count();
    if placeholders != 1 {
        v.push(Violation::PlaceholderCount);
    }
    if q.question.get(q.placeholder_index).map(String::as_str) != Some(PLACEHOLDER) {
        v.push(Violation::PlaceholderIndex);
    }
    if q.choices.len() != shape.nchoices {
        v.push(Violation::ChoicesLength);
    }
    let distinct: HashSet<&String> = q.choices.iter().collect();
    if distinct.len() != q.choices.len() {
        v.push(Violation::DuplicateChoices);
    }
    if q.answer_index >= q.choices.len() {
        v.push(Violation::AnswerIndex);
    }
    let unnormalized = q
        .visible_titles()
        .chain(q.choices.iter().map(String::as_str))
        .any(|t| normalize_title(t) != t);
    if unnormalized {
        v.push(Violation::StepNumber);
    }

    match parse_qid(&q.qid) {
        Some((pid, start, offset)) if pid == q.procedure_id => {
            if offset != q.placeholder_index && !v.contains(&Violation::PlaceholderIndex) {
                v.push(Violation::PlaceholderIndex);
            }
            match (corpus.get(pid), corpus.normalized_titles(pid)) {
                (Some(proc), Some(titles)) => {
                    if proc.split != q.split {
                        v.push(Violation::SplitMismatch);
                    }
                    if context_of(proc) != q.context {
                        v.push(Violation::ContextMismatch);
                    }
                    match titles.get(start..start + q.question.len()) {
                        Some(span) => {
                            let visible_ok = q
                                .question
                                .iter()
                                .zip(span)
                                .enumerate()
                                .all(|(i, (t, s))| i == q.placeholder_index || t == s);
                            if !visible_ok {
                                v.push(Violation::QuestionMismatch);
                            }
                            let truth = span.get(q.placeholder_index);
                            if q.answer_index < q.choices.len() && truth != Some(&q.choices[q.answer_index]) {
                                v.push(Violation::AnswerMismatch);
                            }
                        }
                        None => v.push(Violation::QuestionMismatch),
                    }
                }
                _ => v.push(Violation::UnknownProcedure),
            }
        }
        _ => v.push(Violation::BadQid),
    }
    v.sort();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Step;

    fn proc_with_titles(id: &str, titles: &[&str]) -> Procedure {
        Procedure {
            id: id.into(),
            category: "c".into(),
            title: "t".into(),
            split: Split::Train,
            steps: titles
                .iter()
                .map(|t| Step {
                    title: t.to_string(),
                    text: format!("text for {t}"),
                    images: vec![format!("{t}.jpg")],
                })
                .collect(),
        }
    }

    fn one_hot_table(tokens: &[&str]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(tokens.len()).unwrap();
        for (i, tok) in tokens.iter().enumerate() {
            let mut v = vec![0.0; tokens.len()];
            v[i] = 1.0;
            t.insert(*tok, &v).unwrap();
        }
        t
    }

    #[test]
    fn windows_on_exact_length() {
        let cfg = GenerationConfig::default();
        let w = select_windows(4, &cfg, &mut rng::from_seed(0));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].start, 0);
        assert!(select_windows(3, &cfg, &mut rng::from_seed(0)).is_empty());
    }

    #[test]
    fn windows_are_distinct_and_reproducible() {
        let cfg = GenerationConfig::default();
        let a = select_windows(8, &cfg, &mut rng::from_seed(42));
        let b = select_windows(8, &cfg, &mut rng::from_seed(42));
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_ne!(a[0].start, a[1].start);
        assert!(a.iter().all(|w| w.start <= 4 && w.missing_offset < 4));
    }

    #[test]
    fn assemble_places_answer() {
        let (choices, idx) = assemble_choices("x", vec!["a".into(), "b".into(), "c".into()], &mut rng::from_seed(1)).unwrap();
        assert_eq!(choices.len(), 4);
        assert_eq!(choices[idx], "x");
        assert!(assemble_choices("x", vec!["a".into(), "x".into(), "c".into()], &mut rng::from_seed(1)).is_err());
        assert!(assemble_choices("x", vec!["a".into(), "a".into(), "c".into()], &mut rng::from_seed(1)).is_err());
    }

    #[test]
    fn answer_position_is_uniform() {
        let mut r = rng::from_seed(2024);
        let mut hist = [0usize; 4];
        for _ in 0..10_000 {
            let d = vec!["a".to_string(), "b".to_string(), "c".to_string()];
            hist[assemble_choices("x", d, &mut r).unwrap().1] += 1;
        }
        for h in hist {
            let f = h as f64 / 10_000.0;
            assert!((f - 0.25).abs() <= 0.02, "{hist:?}");
        }
    }

    /// Correct title `a b`, near-duplicate `a c`, and three far titles.
    fn small_pool() -> (EmbeddingTable, PointSet) {
        let t = one_hot_table(&["a", "b", "c", "x", "y", "z"]);
        let pool = PointSet::from_titles(["a b", "a c", "x", "y", "z"], &t);
        (t, pool)
    }

    #[test]
    fn forced_selection_returns_the_kept_set() {
        let (t, pool) = small_pool();
        let cfg = GenerationConfig {
            knn_k: 4,
            ..GenerationConfig::default()
        };
        let mut got = sample_distractors_biased("a b", &pool, &t, &cfg, &mut rng::from_seed(3)).unwrap();
        let mut titles: Vec<&str> = got.iter().map(|&i| pool.title(i)).collect();
        titles.sort();
        assert_eq!(titles, vec!["x", "y", "z"]);
        // near-duplicate `a c` sits below the mean distance
        got.sort();
        assert!(!got.contains(&pool.id_of("a c").unwrap()));
    }

    #[test]
    fn distractors_are_deterministic() {
        let (t, pool) = small_pool();
        let cfg = GenerationConfig {
            knn_k: 4,
            ..GenerationConfig::default()
        };
        let a = sample_distractors_biased("a b", &pool, &t, &cfg, &mut rng::from_seed(9)).unwrap();
        let b = sample_distractors_biased("a b", &pool, &t, &cfg, &mut rng::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shortfall_is_filled_from_the_pool() {
        let t = one_hot_table(&["a", "b", "c", "d"]);
        // every other title is equidistant: nothing is strictly beyond the mean
        let pool = PointSet::from_titles(["a", "b", "c", "d"], &t);
        let cfg = GenerationConfig {
            knn_k: 4,
            ..GenerationConfig::default()
        };
        let mut got = sample_distractors_biased("a", &pool, &t, &cfg, &mut rng::from_seed(0)).unwrap();
        got.sort();
        assert_eq!(got, vec![1, 2, 3]);

        let tiny = PointSet::from_titles(["a", "b"], &t);
        assert!(matches!(
            sample_distractors_biased("a", &tiny, &t, &cfg, &mut rng::from_seed(0)),
            Err(Error::PoolTooSmall { .. })
        ));
    }

    fn titled_corpus() -> Vec<Procedure> {
        let names = ["t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8"];
        let mut procs = vec![proc_with_titles("p", &names)];
        let others = ["u1", "u2", "u3", "u4", "u5", "u6", "u7", "u8"];
        procs.push(proc_with_titles("q", &others));
        procs
    }

    fn table_for(procs: &[Procedure]) -> EmbeddingTable {
        let toks: Vec<String> = procs.iter().flat_map(|p| p.steps.iter().map(|s| s.title.clone())).collect();
        let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
        one_hot_table(&refs)
    }

    #[test]
    fn question_construction_rule() {
        let procs = titled_corpus();
        let table = table_for(&procs);
        let pool = title_pool(&procs, &table);
        let cfg = GenerationConfig::default();
        let correct = "t3";
        let mut r = rng::from_seed(5);
        let picks = sample_distractors_biased(correct, &pool, &table, &cfg, &mut r).unwrap();
        let d = picks.iter().map(|&i| pool.title(i).to_string()).collect();
        let (choices, answer_index) = assemble_choices(correct, d, &mut r).unwrap();
        let q = ClozeQuestion {
            qid: qid("p", 1, 1),
            procedure_id: "p".into(),
            split: Split::Train,
            context: context_of(&procs[0]),
            question: vec!["t2".into(), PLACEHOLDER.into(), "t4".into(), "t5".into()],
            placeholder_index: 1,
            choices,
            answer_index,
        };
        let index = CorpusIndex::new(&procs);
        assert!(validate_question(&q, &index, (&cfg).into()).is_empty());

        let mut short = q.clone();
        let drop = (short.answer_index + 1) % 4;
        short.choices.remove(drop);
        if drop < short.answer_index {
            short.answer_index -= 1;
        }
        assert_eq!(validate_question(&short, &index, (&cfg).into()), vec![Violation::ChoicesLength]);

        let mut wrong = q.clone();
        wrong.answer_index = (q.answer_index + 1) % 4;
        assert_eq!(validate_question(&wrong, &index, (&cfg).into()), vec![Violation::AnswerMismatch]);

        let mut numbered = q.clone();
        numbered.question[0] = "step 2: t2".into();
        let v = validate_question(&numbered, &index, (&cfg).into());
        assert!(v.contains(&Violation::StepNumber));
    }

    #[test]
    fn generated_records_validate() {
        let procs = titled_corpus();
        let table = table_for(&procs);
        let cfg = GenerationConfig::default();
        let out = generate_dataset(&procs, &table, &cfg).unwrap();
        assert!(!out.questions.is_empty());
        assert!(out.questions.len() <= cfg.questions_per_procedure * procs.len());
        let index = CorpusIndex::new(&procs);
        for q in &out.questions {
            assert_eq!(validate_question(q, &index, (&cfg).into()), vec![], "{q:?}");
        }
        let again = generate_dataset(&procs, &table, &cfg).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn qid_round_trip() {
        assert_eq!(parse_qid(&qid("a#b", 3, 2)), Some(("a#b", 3, 2)));
        assert_eq!(parse_qid("nope"), None);
    }
}
