// The whole file-based pipeline driven through the command-line front end,
// as `clozebias <subcommand> ...` would run it.
//
// cargo run --example cli_pipeline

use clozebias::cli::dispatch;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).display().to_string();
    let fast = ["--set", "skipgram.epochs=5", "--set", "skipgram.dimension=30"];

    let steps: Vec<Vec<String>> = vec![
        vec!["fixture".into(), "--out".into(), p("raw.jsonl"), "--procedures".into(), "150".into()],
        vec!["ingest".into(), "--input".into(), p("raw.jsonl"), "--output".into(), p("clean.jsonl")],
        [vec!["train-embed".into(), "--corpus".into(), p("clean.jsonl"), "--out".into(), p("vec.txt")], fast.map(String::from).to_vec()].concat(),
        vec!["generate".into(), "--corpus".into(), p("clean.jsonl"), "--embeddings".into(), p("vec.txt"), "--out".into(), p("biased.jsonl")],
        vec![
            "debias".into(), "--input".into(), p("biased.jsonl"), "--corpus".into(), p("clean.jsonl"),
            "--embeddings".into(), p("vec.txt"), "--out".into(), p("debiased.jsonl"),
            "--clusters-out".into(), p("clusters.json"),
        ],
        vec![
            "audit".into(), "--dataset".into(), p("biased.jsonl"), "--embeddings".into(), p("vec.txt"),
            "--clusters".into(), p("clusters.json"), "--out".into(), p("before.json"), "--set".into(), "probe.max_epochs=20".into(),
        ],
        vec![
            "audit".into(), "--dataset".into(), p("debiased.jsonl"), "--embeddings".into(), p("vec.txt"),
            "--clusters".into(), p("clusters.json"), "--out".into(), p("after.json"), "--set".into(), "probe.max_epochs=20".into(),
        ],
        vec!["report".into(), "--before".into(), p("before.json"), "--after".into(), p("after.json")],
    ];
    for args in steps {
        let code = dispatch(std::iter::once("clozebias".to_string()).chain(args.iter().cloned()));
        if code != 0 {
            return Err(format!("{} exited with {code}", args[0]).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
