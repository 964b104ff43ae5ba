// Resample distractors under per-cluster budgets and read the ledger.
//
// cargo run --example debias_budgets

use clozebias::clozegen::{generate_dataset, ClozeQuestion, GenerationConfig};
use clozebias::corpus::{normalize_title, Split};
use clozebias::debias::{debias_dataset, recount_picks, DebiasConfig};
use clozebias::embeddings::{train_skipgram, SkipgramConfig};
use clozebias::fixture::{fixture_corpus, FixtureConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let procs = fixture_corpus(&FixtureConfig {
        n_procedures: 150,
        seed: 3,
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
    let biased = generate_dataset(&procs, &table, &GenerationConfig::default())?.questions;
    let (train, val): (Vec<ClozeQuestion>, Vec<ClozeQuestion>) =
        biased.into_iter().partition(|q| q.split == Split::Train);

    let out = debias_dataset(&train, &val, &procs, &table, &DebiasConfig::default())?;
    print!("{}", out.report);

    // The ledger can be rebuilt from the records alone.
    let recount = recount_picks(&out.train, &out.pool, &out.model);
    assert_eq!(recount, out.report.splits[&Split::Train].picks_per_cluster);

    let before = &train[0];
    let after = out.train.iter().find(|q| q.qid == before.qid).expect("question kept");
    println!("{}\n  before {:?}\n  after  {:?}", before.qid, before.choices, after.choices);

    // A budget far below demand still completes; the excess is counted.
    let tight = DebiasConfig {
        budget: Some(5),
        ..DebiasConfig::default()
    };
    let squeezed = debias_dataset(&train, &val, &procs, &table, &tight)?;
    println!("budget 5: overflow {}", squeezed.report.splits[&Split::Train].overflow_count);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
