//! Seed sweeps: |channels| x |seeds| cells, executed concurrently up to the
//! configured worker count, merged in deterministic (channels, seed) order.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::{provenance, ExperimentConfig};
use crate::harness::metrics::{percentile, write_metrics_csv, RunMetrics};
use crate::harness::runner::run_cell;
use crate::sinr::PowerMatrix;

/// Per-channel-count aggregate statistics of a stage round count.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub channels: u16,
    pub runs: usize,
    pub failed: usize,
    pub median_stage_rounds: f64,
    pub p10: f64,
    pub p90: f64,
    pub median_followers_done: f64,
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Vec<RunMetrics>, Vec<SweepSummary>)> {
    let topo = cfg.topology.build()?;
    let pm = PowerMatrix::new(&topo, &cfg.sinr);
    let seeds = cfg.seeds();
    let cells: Vec<(u16, u64)> = cfg
        .channels
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| crate::error::Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<RunMetrics> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(f, seed)| {
                run_cell(cfg, &topo, &pm, f, seed).map(|out| out.metrics)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut summaries = Vec::new();
    for &f in &cfg.channels {
        let group: Vec<&RunMetrics> = rows.iter().filter(|r| r.channels == f).collect();
        let ok: Vec<&&RunMetrics> = group.iter().filter(|r| r.ok).collect();
        let mut stage: Vec<f64> = ok.iter().map(|r| r.rounds_stage as f64).collect();
        stage.sort_by(f64::total_cmp);
        let mut fdone: Vec<f64> = ok.iter().map(|r| r.followers_done_round as f64).collect();
        fdone.sort_by(f64::total_cmp);
        summaries.push(SweepSummary {
            channels: f,
            runs: group.len(),
            failed: group.len() - ok.len(),
            median_stage_rounds: percentile(&stage, 0.5),
            p10: percentile(&stage, 0.1),
            p90: percentile(&stage, 0.9),
            median_followers_done: percentile(&fdone, 0.5),
        });
    }
    Ok((rows, summaries))
}

pub fn write_sweep_outputs<W: Write, V: Write>(
    cfg: &ExperimentConfig,
    rows: &[RunMetrics],
    summaries: &[SweepSummary],
    metrics_out: W,
    mut speedup_out: V,
) -> Result<()> {
    let prov = provenance(cfg.hash());
    write_metrics_csv(metrics_out, &prov, rows)?;
    writeln!(speedup_out, "{prov}")?;
    writeln!(speedup_out, "channels,runs,failed,median_rounds,p10,p90,median_followers_done")?;
    for s in summaries {
        writeln!(
            speedup_out,
            "{},{},{},{},{},{},{}",
            s.channels, s.runs, s.failed, s.median_stage_rounds, s.p10, s.p90, s.median_followers_done
        )?;
    }
    Ok(())
}
