//! Bias measurement: distributional statistics over answer choices and
//! probes that answer without reading the context.

mod probes;
mod report;
mod stats;

pub use probes::{
    run_probe_choice_only, run_probe_context, run_probe_hasty, ChoiceOnlyResult, DeterministicProbeResult, ProbeConfig,
};
pub use report::{
    audit_dataset, build_report, compare_reports, AuditReport, Comparison, DatasetIdentity, DeltaRow, Metrics,
    ProbeEntry, PROBE_CHOICE_ONLY, PROBE_CONTEXT, PROBE_HASTY,
};
pub use stats::{
    answer_position_histogram, chi_square_uniform, choice_frequency_skew, choice_token_counts, cluster_coverage,
    normalized_entropy, skew_from_counts, Coverage, PositionStats, SkewEntry, SkewTable, TokenCounts,
};
