// Write a synthetic corpus, read it back through the filter and print the
// per-split statistics table.
//
// cargo run --example corpus_stats

use clozebias::corpus::{corpus_stats, filter_corpus, normalize_title, read_corpus, FilterConfig};
use clozebias::fixture::write_fixture;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("raw.jsonl");
    write_fixture(&path, 0)?;

    let raw = read_corpus(&path)?;
    let total = raw.len();
    let out = filter_corpus(raw, &FilterConfig::default());
    println!("kept {} of {total}", out.kept.len());
    print!("{}", corpus_stats(&out.kept)?);

    // Numbering prefixes are stripped before titles are compared.
    let first = &out.kept[0].steps[1].title;
    println!("{first:?} -> {:?}", normalize_title(first));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
