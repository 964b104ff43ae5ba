use std::path::Path;
use std::process::{Command, Output};

fn clozebias(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clozebias"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn clozebias")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    o
}

const FAST: [&str; 4] = ["--set", "skipgram.epochs=3", "--set", "skipgram.dimension=30"];

/// fixture -> ingest -> train-embed, shared by the stage tests.
fn prepared(dir: &Path) {
    ok(clozebias(&["fixture", "--out", "raw.jsonl", "--seed", "4", "--procedures", "150"], dir));
    let o = ok(clozebias(&["ingest", "--input", "raw.jsonl", "--output", "clean.jsonl", "--stats", "stats.json"], dir));
    assert!(stderr(&o).contains("kept 150 of 150"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let mut args = vec!["train-embed", "--corpus", "clean.jsonl", "--out", "vec.txt"];
    args.extend(FAST);
    ok(clozebias(&args, dir));
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepared(d);
    let generate = |out: &str| {
        ok(clozebias(
            &["generate", "--corpus", "clean.jsonl", "--embeddings", "vec.txt", "--seed", "7", "--out", out],
            d,
        ))
    };
    generate("d1.jsonl");
    generate("d2.jsonl");
    let d1 = std::fs::read(d.join("d1.jsonl")).unwrap();
    assert!(!d1.is_empty());
    assert_eq!(d1, std::fs::read(d.join("d2.jsonl")).unwrap());

    let corpus_before = std::fs::read(d.join("clean.jsonl")).unwrap();
    let debias = |out: &str| {
        ok(clozebias(
            &[
                "debias", "--input", "d1.jsonl", "--corpus", "clean.jsonl", "--embeddings", "vec.txt", "--seed", "7",
                "--out", out, "--report", "debias.json", "--clusters-out", "clusters.json",
            ],
            d,
        ))
    };
    debias("e1.jsonl");
    debias("e2.jsonl");
    assert_eq!(
        std::fs::read(d.join("e1.jsonl")).unwrap(),
        std::fs::read(d.join("e2.jsonl")).unwrap()
    );
    assert_eq!(std::fs::read(d.join("clean.jsonl")).unwrap(), corpus_before);
    assert_eq!(std::fs::read(d.join("d1.jsonl")).unwrap(), d1);

    for (data, out) in [("d1.jsonl", "before.json"), ("e1.jsonl", "after.json")] {
        let o = ok(clozebias(
            &[
                "audit", "--dataset", data, "--embeddings", "vec.txt", "--clusters", "clusters.json", "--out", out,
                "--text", "table.txt", "--set", "probe.max_epochs=20",
            ],
            d,
        ));
        assert!(stderr(&o).contains("Hasty Student (choice only)"));
    }
    let o = ok(clozebias(&["report", "--before", "before.json", "--after", "after.json", "--out", "cmp.json"], d));
    assert!(stderr(&o).contains("accuracy/choice_only"));
    let cmp: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("cmp.json")).unwrap()).unwrap();
    assert!(cmp["rows"].as_array().unwrap().len() >= 5);
}

#[test]
fn zero_budget_is_an_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepared(d);
    ok(clozebias(&["generate", "--corpus", "clean.jsonl", "--embeddings", "vec.txt", "--out", "d.jsonl"], d));
    let o = clozebias(
        &[
            "debias", "--input", "d.jsonl", "--corpus", "clean.jsonl", "--embeddings", "vec.txt", "--out", "e.jsonl",
            "--budget", "0",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("budget"));
    assert!(!d.join("e.jsonl").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["ingest", "--input", "a", "--output", "b", "--bogus"], &[]] {
        let o = clozebias(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).to_lowercase().contains("usage"), "{args:?}");
    }
    assert_eq!(clozebias(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = clozebias(&["ingest", "--input", "nowhere.jsonl", "--output", "x.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));
}

#[test]
fn config_file_keys_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(clozebias(&["fixture", "--out", "raw.jsonl", "--procedures", "20"], d));
    std::fs::write(d.join("run.conf"), "seed = 3\nfilter.min_steps = 7\n").unwrap();
    ok(clozebias(&["ingest", "--input", "raw.jsonl", "--output", "c.jsonl", "--config", "run.conf"], d));
    std::fs::write(d.join("bad.conf"), "filter.colour = red\n").unwrap();
    let o = clozebias(&["ingest", "--input", "raw.jsonl", "--output", "c.jsonl", "--config", "bad.conf"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("filter.colour"));
}
