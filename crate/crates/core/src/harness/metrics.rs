//! Per-run metrics: one CSV row per (channel count, seed) cell.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::structure::FailFlag;

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMetrics {
    pub config_hash: String,
    pub pipeline: String,
    pub n: usize,
    pub channels: u16,
    pub seed: u64,
    pub preset: String,
    pub ok: bool,
    pub flags: String,
    pub rounds_clustering: u64,
    pub rounds_cluster_coloring: u64,
    pub rounds_csa: u64,
    pub rounds_election: u64,
    pub rounds_stage: u64,
    pub followers_done_round: u64,
    pub backbone_joined_round: u64,
    pub backbone_stable_round: u64,
    pub all_final_round: u64,
    pub measured_mu: usize,
    pub phi_used: u32,
    pub f_v_max: u16,
    pub clusters: usize,
    pub delta: usize,
    pub contention_violations: u64,
    pub wall_ms: u64,
}

pub const METRICS_HEADER: &str = "config_hash,pipeline,n,channels,seed,preset,ok,flags,\
rounds_clustering,rounds_cluster_coloring,rounds_csa,rounds_election,rounds_stage,\
followers_done_round,backbone_joined_round,backbone_stable_round,all_final_round,\
measured_mu,phi_used,f_v_max,clusters,delta,contention_violations,wall_ms";

impl RunMetrics {
    pub fn flags_string(flags: &[FailFlag]) -> String {
        if flags.is_empty() {
            return String::from("-");
        }
        flags
            .iter()
            .map(|f| format!("{f:?}"))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config_hash,
            self.pipeline,
            self.n,
            self.channels,
            self.seed,
            self.preset,
            self.ok,
            self.flags,
            self.rounds_clustering,
            self.rounds_cluster_coloring,
            self.rounds_csa,
            self.rounds_election,
            self.rounds_stage,
            self.followers_done_round,
            self.backbone_joined_round,
            self.backbone_stable_round,
            self.all_final_round,
            self.measured_mu,
            self.phi_used,
            self.f_v_max,
            self.clusters,
            self.delta,
            self.contention_violations,
            self.wall_ms
        )
    }
}

pub fn write_metrics_csv<W: Write>(
    mut w: W,
    provenance: &str,
    rows: &[RunMetrics],
) -> Result<()> {
    writeln!(w, "{provenance}")?;
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Median and percentile helpers for sweep summaries.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_matches_header_arity() {
        let row = RunMetrics::default().csv_row();
        assert_eq!(row.split(',').count(), METRICS_HEADER.split(',').count());
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
    }
}
