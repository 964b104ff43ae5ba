use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clozegen::ClozeQuestion;
use crate::corpus::Split;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::ClusterModel;

use super::probes::{run_probe_choice_only, run_probe_context, run_probe_hasty, ProbeConfig};
use super::stats::{answer_position_histogram, choice_frequency_skew, cluster_coverage, Coverage, PositionStats, SkewEntry};

pub const PROBE_CHOICE_ONLY: &str = "choice_only";
pub const PROBE_HASTY: &str = "hasty";
pub const PROBE_CONTEXT: &str = "context";

/// Rows kept from the token skew table.
const SKEW_TOP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIdentity {
    pub path: String,
    pub records: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub accuracy: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Everything measured on one dataset, before it is packaged as a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub nchoices: usize,
    pub probes: BTreeMap<String, ProbeEntry>,
    pub positions: PositionStats,
    pub js_divergence: f64,
    pub top_skew: Vec<SkewEntry>,
    pub coverage: Option<Coverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub dataset: DatasetIdentity,
    pub nchoices: usize,
    pub chance: f64,
    pub probes: BTreeMap<String, ProbeEntry>,
    pub answer_positions: PositionStats,
    pub js_divergence: f64,
    pub top_skew: Vec<SkewEntry>,
    pub cluster_coverage: Option<Coverage>,
}

pub fn build_report(dataset: DatasetIdentity, m: Metrics) -> AuditReport {
    AuditReport {
        dataset,
        nchoices: m.nchoices,
        chance: if m.nchoices == 0 { 0.0 } else { 1.0 / m.nchoices as f64 },
        probes: m.probes,
        answer_positions: m.positions,
        js_divergence: m.js_divergence,
        top_skew: m.top_skew,
        cluster_coverage: m.coverage,
    }
}

/// Runs every probe (trained on train, scored on val) and every statistic
/// (over all records) for one dataset.
pub fn audit_dataset(
    dataset: &[ClozeQuestion],
    table: &EmbeddingTable,
    model: Option<&ClusterModel>,
    cfg: &ProbeConfig,
    identity: DatasetIdentity,
) -> Result<AuditReport> {
    let (train, val): (Vec<ClozeQuestion>, Vec<ClozeQuestion>) =
        dataset.iter().cloned().partition(|q| q.split == Split::Train);
    let choice = run_probe_choice_only(&train, &val, table, cfg)?;
    let hasty = run_probe_hasty(&val, table);
    let context = run_probe_context(&val, table);
    let mut probes = BTreeMap::new();
    probes.insert(
        PROBE_CHOICE_ONLY.to_string(),
        ProbeEntry {
            accuracy: Some(choice.accuracy),
            evaluated: val.len(),
            skipped: 0,
        },
    );
    for (name, r) in [(PROBE_HASTY, hasty), (PROBE_CONTEXT, context)] {
        probes.insert(
            name.to_string(),
            ProbeEntry {
                accuracy: r.accuracy,
                evaluated: r.evaluated,
                skipped: r.skipped,
            },
        );
    }
    let skew = choice_frequency_skew(dataset)?;
    let metrics = Metrics {
        nchoices: dataset.first().map_or(0, |q| q.choices.len()),
        probes,
        positions: answer_position_histogram(dataset)?,
        js_divergence: skew.js_divergence,
        top_skew: skew.entries.into_iter().take(SKEW_TOP).collect(),
        coverage: model.map(|m| cluster_coverage(dataset, m, table)).transpose()?,
    };
    Ok(build_report(identity, metrics))
}

impl AuditReport {
    pub fn save_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn accuracy(&self, probe: &str) -> Option<f64> {
        self.probes.get(probe).and_then(|p| p.accuracy)
    }

    fn scalar_metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut rows: Vec<(String, Option<f64>)> = self
            .probes
            .iter()
            .map(|(name, p)| (format!("accuracy/{name}"), p.accuracy))
            .collect();
        rows.push(("answer_position_chi_square".into(), Some(self.answer_positions.chi_square)));
        rows.push(("choice_js_divergence".into(), Some(self.js_divergence)));
        rows.push((
            "cluster_coverage_entropy".into(),
            self.cluster_coverage.as_ref().map(|c| c.normalized_entropy),
        ));
        rows
    }
}

fn probe_label(name: &str) -> &str {
    match name {
        PROBE_CHOICE_ONLY => "Hasty Student (choice only)",
        PROBE_HASTY => "Hasty Student (question-choice similarity)",
        PROBE_CONTEXT => "Context similarity",
        other => other,
    }
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset: {} ({} records)", self.dataset.path, self.dataset.records)?;
        writeln!(f, "{:<44} {:>9}", "Method", "Accuracy")?;
        writeln!(f, "{:<44} {:>9}", "Random (chance)", pct(Some(self.chance)))?;
        for (name, p) in &self.probes {
            writeln!(f, "{:<44} {:>9}", probe_label(name), pct(p.accuracy))?;
        }
        writeln!(
            f,
            "answer positions {:?}, chi-square {:.3}",
            self.answer_positions.histogram, self.answer_positions.chi_square
        )?;
        writeln!(f, "choice-token JS divergence {:.4} bits", self.js_divergence)?;
        if let Some(c) = &self.cluster_coverage {
            writeln!(f, "cluster coverage entropy {:.4}", c.normalized_entropy)?;
        }
        let top: Vec<String> = self
            .top_skew
            .iter()
            .take(5)
            .map(|e| format!("{} {:+.2}", e.token, e.log_odds))
            .collect();
        writeln!(f, "most skewed tokens: {}", top.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub before: Option<f64>,
    pub after: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub before: DatasetIdentity,
    pub after: DatasetIdentity,
    pub rows: Vec<DeltaRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Side-by-side metrics with `after - before` deltas. Both reports must
/// carry the same probes.
pub fn compare_reports(before: &AuditReport, after: &AuditReport) -> Result<Comparison> {
    let names = |r: &AuditReport| r.probes.keys().cloned().collect::<Vec<_>>();
    if names(before) != names(after) {
        return Err(Error::ReportMismatch(format!(
            "probe sets differ: {:?} vs {:?}",
            names(before),
            names(after)
        )));
    }
    let rows = before
        .scalar_metrics()
        .into_iter()
        .zip(after.scalar_metrics())
        .map(|((metric, b), (_, a))| DeltaRow {
            metric,
            before: b,
            after: a,
            delta: a.zip(b).map(|(a, b)| a - b),
        })
        .collect();
    Ok(Comparison {
        before: before.dataset.clone(),
        after: after.dataset.clone(),
        rows,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "before: {}\nafter:  {}", self.before.path, self.after.path)?;
        writeln!(f, "{:<32} {:>10} {:>10} {:>10}", "metric", "before", "after", "delta")?;
        for r in &self.rows {
            let delta = r.delta.map_or_else(|| "-".to_string(), |v| format!("{v:+.4}"));
            writeln!(f, "{:<32} {:>10} {:>10} {:>10}", r.metric, cell(r.before), cell(r.after), delta)?;
        }
        Ok(())
    }
}
