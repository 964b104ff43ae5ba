//! Command-line front end. Every stage reads and writes files; diagnostics go
//! to stderr. Exit codes: 0 success, 1 operational error, 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{audit_dataset, compare_reports, AuditReport, DatasetIdentity};
use crate::clozegen::{generate_dataset, read_dataset, write_dataset, ClozeQuestion};
use crate::config::RunConfig;
use crate::corpus::{corpus_stats, filter_corpus, normalize_title, read_corpus, write_corpus, Split};
use crate::debias::debias_dataset;
use crate::embeddings::{train_skipgram, EmbeddingTable};
use crate::error::{Error, Result};
use crate::fixture::{fixture_corpus, FixtureConfig};
use crate::geometry::ClusterModel;

#[derive(Parser, Debug)]
#[command(name = "clozebias", version, about = "Textual cloze generation, choice-bias audit and debiasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self, extra: &[(&str, String)]) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(self.set.iter().map(String::as_str))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for (k, v) in extra {
            cfg.set(k, v)?;
        }
        cfg.resolve()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, normalize and filter a corpus; print its statistics.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the statistics table as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train skip-gram vectors on every step title of a corpus.
    TrainEmbed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate the biased cloze dataset.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Resample distractors under per-cluster budgets.
    Debias {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the fitted cluster model, for `audit --clusters`.
        #[arg(long)]
        clusters_out: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the probes and statistics on one dataset.
    Audit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Cluster model for the coverage statistic.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the human-readable table.
        #[arg(long)]
        text: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare two audit reports.
    Report {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        procedures: usize,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            input,
            output,
            stats,
            common,
        } => {
            let cfg = common.resolve(&[])?;
            let procs = read_corpus(&input)?;
            let total = procs.len();
            let out = filter_corpus(procs, &cfg.filter);
            eprintln!("kept {} of {total} procedures", out.kept.len());
            for (id, reason) in &out.rejections {
                eprintln!("rejected {id}: {}", reason.as_str());
            }
            let table = corpus_stats(&out.kept)?;
            eprint!("{table}");
            write_corpus(&output, &out.kept)?;
            if let Some(p) = stats {
                write_json(&p, &table)?;
            }
        }
        Command::TrainEmbed { corpus, out, common } => {
            let cfg = common.resolve(&[])?;
            let procs = read_corpus(&corpus)?;
            let titles: Vec<String> = procs
                .iter()
                .flat_map(|p| p.steps.iter().map(|s| normalize_title(&s.title)))
                .collect();
            let trained = train_skipgram(&titles, &cfg.skipgram)?;
            eprintln!(
                "{} tokens, dimension {}, final epoch loss {:.4}",
                trained.table.len(),
                trained.table.dimension(),
                trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
            );
            trained.table.save_file(&out)?;
        }
        Command::Generate {
            corpus,
            embeddings,
            out,
            common,
        } => {
            let cfg = common.resolve(&[])?;
            let procs = read_corpus(&corpus)?;
            let table = EmbeddingTable::load_file(&embeddings)?;
            let gen = generate_dataset(&procs, &table, &cfg.generate)?;
            eprintln!(
                "{} questions, {} procedures too short, {} windows skipped",
                gen.questions.len(),
                gen.skipped_procedures,
                gen.skipped_windows
            );
            write_dataset(&out, &gen.questions)?;
        }
        Command::Debias {
            input,
            corpus,
            embeddings,
            out,
            report,
            clusters_out,
            budget,
            clusters,
            common,
        } => {
            let mut extra = Vec::new();
            if let Some(b) = budget {
                extra.push(("debias.budget", b.to_string()));
            }
            if let Some(k) = clusters {
                extra.push(("debias.n_clusters", k.to_string()));
            }
            let cfg = common.resolve(&extra)?;
            let data = read_dataset(&input)?;
            let procs = read_corpus(&corpus)?;
            let table = EmbeddingTable::load_file(&embeddings)?;
            let (train, val): (Vec<ClozeQuestion>, Vec<ClozeQuestion>) =
                data.into_iter().partition(|q| q.split == Split::Train);
            let outcome = debias_dataset(&train, &val, &procs, &table, &cfg.debias)?;
            eprint!("{}", outcome.report);
            for r in outcome.report.splits.values() {
                if !r.feasible {
                    eprintln!("warning: budget {} cannot cover demand {}", r.beta, r.demand);
                }
            }
            let mut all = outcome.train;
            all.extend(outcome.val);
            write_dataset(&out, &all)?;
            if let Some(p) = report {
                write_json(&p, &outcome.report)?;
            }
            if let Some(p) = clusters_out {
                outcome.model.save_file(&p)?;
            }
        }
        Command::Audit {
            dataset,
            embeddings,
            clusters,
            out,
            text,
            common,
        } => {
            let cfg = common.resolve(&[])?;
            let data = read_dataset(&dataset)?;
            let table = EmbeddingTable::load_file(&embeddings)?;
            let model = clusters.as_deref().map(ClusterModel::load_file).transpose()?;
            let identity = DatasetIdentity {
                path: dataset.display().to_string(),
                records: data.len(),
                seed: common.seed.or(common.config.as_ref().map(|_| cfg.seed)),
            };
            let report = audit_dataset(&data, &table, model.as_ref(), &cfg.probe, identity)?;
            let rendered = report.to_string();
            eprint!("{rendered}");
            report.save_file(&out)?;
            if let Some(p) = text {
                write_text(&p, &rendered)?;
            }
        }
        Command::Report { before, after, out } => {
            let b = AuditReport::load_file(&before)?;
            let a = AuditReport::load_file(&after)?;
            let cmp = compare_reports(&b, &a)?;
            eprint!("{cmp}");
            if let Some(p) = out {
                cmp.save_file(&p)?;
            }
        }
        Command::Fixture { out, seed, procedures } => {
            let procs = fixture_corpus(&FixtureConfig {
                n_procedures: procedures,
                seed,
                ..FixtureConfig::default()
            });
            write_corpus(&out, &procs)?;
            eprintln!("wrote {} procedures", procs.len());
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the subcommand, returning the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
