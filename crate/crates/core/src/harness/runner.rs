//! Execution of a single experiment cell: one (channel count, seed) pair.

use std::time::Instant;

use crate::aggregation::{self, AggValue};
use crate::coloring;
use crate::constants::{cluster_radius, log_n};
use crate::error::Result;
use crate::harness::config::{ExperimentConfig, Pipeline};
use crate::harness::metrics::RunMetrics;
use crate::sim::{self, SimOptions, Trace};
use crate::sinr::PowerMatrix;
use crate::structure::{self, FailFlag, StructureResult};
use crate::topology::{build_comm_graph, Topology};

/// Everything one cell produces; the sweep keeps metrics, single runs may
/// keep the rest.
pub struct CellOutput {
    pub metrics: RunMetrics,
    pub structure: Option<StructureResult>,
    pub values: Option<Vec<Option<AggValue>>>,
    pub colors: Option<coloring::ColoringOutcome>,
    pub ruling_set: Option<Vec<usize>>,
    pub trace: Trace,
    pub agg_metrics: Option<aggregation::AggregationMetrics>,
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    topo: &Topology,
    pm: &PowerMatrix,
    channels: u16,
    seed: u64,
) -> Result<CellOutput> {
    let start = Instant::now();
    let params = cfg.sinr;
    // Under uncertainty the protocol layer works from a conservative view;
    // the physical layer always resolves with the true parameters.
    let proto_params = match &cfg.uncertainty {
        Some(r) => r.conservative_view(&params),
        None => params,
    };
    let consts = cfg.resolve_constants()?;
    let n = topo.len();
    let n_hat = (n as f64).powf(cfg.n_hat_exponent).max(1.0);
    let delta_hat = cfg.delta_hat.unwrap_or(n as u64);
    let opts = SimOptions { sense_noise: cfg.sense_noise };
    let graph = build_comm_graph(topo, &params);
    let mut trace = Trace::new(cfg.trace);
    let mut metrics = RunMetrics {
        config_hash: format!("{:016x}", cfg.hash()),
        pipeline: format!("{:?}", cfg.pipeline).to_lowercase(),
        n,
        channels,
        seed,
        preset: format!("{:?}", consts.preset).to_lowercase(),
        delta: graph.delta,
        ..RunMetrics::default()
    };

    let mut flags: Vec<FailFlag> = Vec::new();
    if cfg.pipeline != Pipeline::RulingSet && !graph.is_connected() {
        flags.push(FailFlag::DisconnectedInput);
        metrics.ok = false;
        metrics.flags = RunMetrics::flags_string(&flags);
        metrics.wall_ms = start.elapsed().as_millis() as u64;
        return Ok(CellOutput {
            metrics,
            structure: None,
            values: None,
            colors: None,
            ruling_set: None,
            trace,
            agg_metrics: None,
        });
    }

    if cfg.pipeline == Pipeline::RulingSet {
        let r = proto_params.r_t() / cfg.ruling_r_divisor;
        let (joined, _cands, reports) = structure::ruling::ruling_set_view(
            topo, pm, &params, &proto_params, &consts, n_hat, r, seed, opts, &mut trace,
        );
        metrics.rounds_stage = reports.iter().map(|r| r.rounds).sum();
        metrics.ok = true;
        metrics.flags = RunMetrics::flags_string(&flags);
        metrics.wall_ms = start.elapsed().as_millis() as u64;
        return Ok(CellOutput {
            metrics,
            structure: None,
            values: None,
            colors: None,
            ruling_set: Some(joined),
            trace,
            agg_metrics: None,
        });
    }

    // Structure construction (or the centralized oracle mode).
    let (structure, mut s_trace) = structure::make_structure_view(
        cfg.structure_mode,
        topo,
        pm,
        &params,
        &proto_params,
        channels,
        &consts,
        n_hat,
        delta_hat,
        seed,
        opts,
        cfg.trace,
    );
    trace.milestones.append(&mut s_trace.milestones);
    trace.contention.append(&mut s_trace.contention);
    trace.slots.append(&mut s_trace.slots);
    flags.extend(structure.flags.iter().copied());
    for rep in &structure.stage_reports {
        match rep.stage {
            "clustering" => metrics.rounds_clustering = rep.rounds,
            "cluster_coloring" => metrics.rounds_cluster_coloring = rep.rounds,
            "csa_large" | "csa_small" => metrics.rounds_csa = rep.rounds,
            "ruling_set" => metrics.rounds_election = rep.rounds,
            _ => {}
        }
    }
    metrics.measured_mu = structure.measured_mu;
    metrics.phi_used = structure.phi_used;
    metrics.f_v_max = structure.clusters.iter().map(|c| c.f_v).max().unwrap_or(0);
    metrics.clusters = structure.clusters.len();

    let mut values = None;
    let mut colors = None;
    let mut agg_metrics = None;
    match cfg.pipeline {
        Pipeline::Structure | Pipeline::RulingSet => {}
        Pipeline::Aggregate => {
            let inputs = cfg.inputs.build(topo)?;
            let agg_seed = sim::stage_seed(seed, 5);
            let out = aggregation::run_aggregation(
                topo,
                pm,
                &params,
                &structure,
                &consts,
                n_hat,
                delta_hat,
                channels,
                cfg.aggregate,
                &inputs,
                cfg.diameter_hint,
                agg_seed,
                opts,
                &mut trace,
            );
            flags.extend(out.flags.iter().copied());
            metrics.rounds_stage = out.report.rounds;
            metrics.followers_done_round = out.metrics.followers_done_round;
            metrics.backbone_joined_round = out.metrics.backbone_joined_round;
            metrics.backbone_stable_round = out.metrics.backbone_stable_round;
            metrics.all_final_round = out.metrics.all_final_round;
            // Contention accounting against the bound.
            let lambda = consts.lambda;
            metrics.contention_violations = trace
                .contention
                .iter()
                .filter(|c| c.p_sum > lambda * c.f_v as f64 + 1e-9)
                .count() as u64;
            agg_metrics = Some(out.metrics);
            values = Some(out.values);
        }
        Pipeline::Color => {
            let col_seed = sim::stage_seed(seed, 6);
            let (out, report) = coloring::run_coloring(
                topo, pm, &params, &structure, &consts, n_hat, col_seed, opts, &mut trace,
            );
            flags.extend(out.flags.iter().copied());
            metrics.rounds_stage = report.rounds;
            colors = Some(out);
        }
    }

    // Sanity: cluster radius respected (exact check, cheap).
    let r_c = cluster_radius(&params);
    let _ = log_n(n_hat);
    for (v, &ci) in structure.cluster_of.iter().enumerate() {
        if topo.distance(v, structure.clusters[ci].dominator) > r_c {
            flags.push(FailFlag::UndominatedNode);
            break;
        }
    }

    flags.sort_by_key(|f| format!("{f:?}"));
    flags.dedup();
    metrics.ok = flags.is_empty();
    metrics.flags = RunMetrics::flags_string(&flags);
    metrics.wall_ms = start.elapsed().as_millis() as u64;
    Ok(CellOutput {
        metrics,
        structure: Some(structure),
        values,
        colors,
        ruling_set: None,
        trace,
        agg_metrics,
    })
}
