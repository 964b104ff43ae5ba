// Audit a biased dataset and its debiased counterpart, then diff the two
// reports.
//
// cargo run --example audit_compare

use clozebias::audit::{audit_dataset, compare_reports, DatasetIdentity, ProbeConfig, PROBE_CHOICE_ONLY};
use clozebias::clozegen::{generate_dataset, ClozeQuestion, GenerationConfig};
use clozebias::corpus::{normalize_title, Split};
use clozebias::debias::{debias_dataset, DebiasConfig};
use clozebias::embeddings::{train_skipgram, SkipgramConfig};
use clozebias::fixture::{fixture_corpus, FixtureConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let procs = fixture_corpus(&FixtureConfig {
        n_procedures: 200,
        seed: 5,
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
        biased.iter().cloned().partition(|q| q.split == Split::Train);
    let out = debias_dataset(&train, &val, &procs, &table, &DebiasConfig::default())?;
    let mut debiased = out.train;
    debiased.extend(out.val);

    let probe = ProbeConfig {
        max_epochs: 30,
        ..ProbeConfig::default()
    };
    let identity = |name: &str, data: &[ClozeQuestion]| DatasetIdentity {
        path: name.into(),
        records: data.len(),
        seed: Some(0),
    };
    let before = audit_dataset(&biased, &table, Some(&out.model), &probe, identity("biased", &biased))?;
    let after = audit_dataset(&debiased, &table, Some(&out.model), &probe, identity("debiased", &debiased))?;
    print!("{before}");
    println!(
        "choice-only accuracy {:.3} -> {:.3}",
        before.accuracy(PROBE_CHOICE_ONLY).unwrap_or(f64::NAN),
        after.accuracy(PROBE_CHOICE_ONLY).unwrap_or(f64::NAN)
    );
    print!("{}", compare_reports(&before, &after)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
