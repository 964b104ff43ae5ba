// Train skip-gram vectors on step titles, pool titles into unit vectors and
// save the table in the plain text format.
//
// cargo run --example train_embeddings

use clozebias::corpus::normalize_title;
use clozebias::embeddings::{distance, train_skipgram, EmbeddingTable, SkipgramConfig};
use clozebias::fixture::pipeline_fixture;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let procs = pipeline_fixture(1);
    let titles: Vec<String> = procs
        .iter()
        .flat_map(|p| p.steps.iter().map(|s| normalize_title(&s.title)))
        .collect();
    let cfg = SkipgramConfig {
        dimension: 30,
        epochs: 5,
        ..SkipgramConfig::default()
    };
    let trained = train_skipgram(&titles, &cfg)?;
    println!("{} tokens, losses {:?}", trained.table.len(), trained.epoch_losses);

    let t = &trained.table;
    for (a, b) in [("sand the edges", "sand the corners"), ("sand the edges", "bake the loaf")] {
        let (u, v) = (t.encode(a), t.encode(b));
        println!("d({a:?}, {b:?}) = {:.3}", distance(&u, &v)?);
    }
    let oov = t.encode_text("qqq zzz");
    println!("all-OOV title flagged: {}", oov.oov);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("vec.txt");
    t.save_file(&path)?;
    let back = EmbeddingTable::load_file(&path)?;
    println!("reloaded {} x {}", back.len(), back.dimension());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
