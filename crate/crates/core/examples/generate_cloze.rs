// Build biased cloze questions: each distractor comes from the adaptive
// neighborhood of the answer title.
//
// cargo run --example generate_cloze

use clozebias::clozegen::{generate_dataset, validate_question, CorpusIndex, GenerationConfig, QuestionShape};
use clozebias::corpus::normalize_title;
use clozebias::embeddings::{train_skipgram, SkipgramConfig};
use clozebias::fixture::{fixture_corpus, FixtureConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let procs = fixture_corpus(&FixtureConfig {
        n_procedures: 120,
        seed: 2,
        ..FixtureConfig::default()
    });
    let titles: Vec<String> = procs
        .iter()
        .flat_map(|p| p.steps.iter().map(|s| normalize_title(&s.title)))
        .collect();
    let sg = SkipgramConfig {
        dimension: 30,
        epochs: 5,
        ..SkipgramConfig::default()
    };
    let table = train_skipgram(&titles, &sg)?.table;

    let cfg = GenerationConfig {
        seed: 7,
        ..GenerationConfig::default()
    };
    let out = generate_dataset(&procs, &table, &cfg)?;
    println!("{} questions, {} procedures too short", out.questions.len(), out.skipped_procedures);

    let q = &out.questions[0];
    println!("{}: {:?}", q.qid, q.question);
    for (i, c) in q.choices.iter().enumerate() {
        println!("  {} {c}", if i == q.answer_index { "*" } else { " " });
    }

    let index = CorpusIndex::new(&procs);
    let bad = out
        .questions
        .iter()
        .filter(|q| !validate_question(q, &index, QuestionShape::from(&cfg)).is_empty())
        .count();
    println!("{bad} malformed records");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
