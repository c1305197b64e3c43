//! Command-line front end: topology generation, single runs, seed sweeps,
//! verification, calibration and physical-layer evaluation.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 usage error, 3 run failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use mcsinr::aggregation::AggregateFunction;
use mcsinr::harness::config::{provenance, ExperimentConfig, Pipeline};
use mcsinr::harness::runner::run_cell;
use mcsinr::harness::sweep::{run_sweep, write_sweep_outputs};
use mcsinr::harness::{metrics, verify};
use mcsinr::sinr::{resolve_slot, Action, PowerMatrix, SinrParams, SlotFrame};
use mcsinr::structure;
use mcsinr::topology::{generate_topology, Topology, TopologyKind};

#[derive(Parser)]
#[command(name = "mcsinr", version, about = "Multi-channel SINR network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a topology file.
    GenTopo {
        /// uniform_disk | grid | exponential_chain | clustered
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        extent: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run one experiment cell from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Channel count (defaults to the first entry of the config list).
        #[arg(long)]
        channels: Option<u16>,
        /// Protocol seed (defaults to the config seed_start; the MCSINR_SEED
        /// environment variable overrides both).
        #[arg(long)]
        seed: Option<u64>,
        /// Structure dump to start from instead of building one.
        #[arg(long)]
        structure_in: Option<PathBuf>,
        /// Write the built structure.
        #[arg(long)]
        structure_out: Option<PathBuf>,
        /// Write per-node values CSV (aggregate pipeline).
        #[arg(long)]
        values_out: Option<PathBuf>,
        /// Write `id color` CSV (color pipeline).
        #[arg(long)]
        colors_out: Option<PathBuf>,
        /// Write ruling-set member ids (ruling_set pipeline).
        #[arg(long)]
        set_out: Option<PathBuf>,
        /// Write the trace as JSONL (gzip when the path ends in .gz).
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write stage round counts CSV.
        #[arg(long)]
        stages_out: Option<PathBuf>,
    },
    /// Run the full |channels| x |seeds| sweep of a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Metrics CSV (one row per run).
        #[arg(short, long)]
        out: PathBuf,
        /// Per-channel-count summary CSV.
        #[arg(long)]
        speedup_out: Option<PathBuf>,
    },
    /// Verify artifacts with brute-force oracles.
    Verify {
        /// sinr_oracle | ruling_set | clustering | cluster_coloring | csa |
        /// tree | aggregation | coloring
        check: String,
        #[arg(long)]
        topo: Option<PathBuf>,
        #[arg(long)]
        structure: Option<PathBuf>,
        #[arg(long)]
        colors: Option<PathBuf>,
        #[arg(long)]
        values: Option<PathBuf>,
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        /// Aggregate function for the aggregation check.
        #[arg(long, default_value = "sum")]
        aggregate: String,
        /// SINR parameters as P,alpha,beta,N,epsilon.
        #[arg(long)]
        params: Option<String>,
        /// Frames for the physical-layer oracle check.
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Measure delivery success constants and density; write a calibration
    /// file for the theory preset.
    Calibrate {
        #[arg(long)]
        params: Option<String>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 400)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Resolve one slot frame and print receptions as CSV.
    SinrEval {
        #[arg(long)]
        topo: PathBuf,
        /// Frame file: one `node action channel` line per node, actions
        /// tx | listen | idle.
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        params: Option<String>,
    },
}

fn parse_params(spec: &Option<String>) -> anyhow::Result<SinrParams> {
    match spec {
        None => Ok(SinrParams::default_unit()),
        Some(s) => {
            let parts: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .context("params must be P,alpha,beta,N,epsilon")?;
            if parts.len() != 5 {
                return Err(anyhow!("params must have five comma-separated values"));
            }
            Ok(SinrParams::new(parts[0], parts[1], parts[2], parts[3], parts[4])?)
        }
    }
}

fn load_id_value_csv(path: &PathBuf) -> anyhow::Result<Vec<(u32, i64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("id") {
            continue;
        }
        let mut parts = t.split([',', ' ']).filter(|p| !p.is_empty());
        let id: u32 = parts.next().ok_or_else(|| anyhow!("missing id in `{t}`"))?.parse()?;
        let val: i64 = parts
            .next()
            .ok_or_else(|| anyhow!("missing value in `{t}`"))?
            .parse::<f64>()? as i64;
        out.push((id, val));
    }
    Ok(out)
}

fn effective_seed(cli_seed: Option<u64>, cfg_seed: u64) -> u64 {
    if let Ok(s) = std::env::var("MCSINR_SEED") {
        if let Ok(v) = s.parse() {
            return v;
        }
    }
    cli_seed.unwrap_or(cfg_seed)
}

fn writer_for(path: &PathBuf) -> anyhow::Result<Box<dyn Write>> {
    let file = std::fs::File::create(path)?;
    if path.extension().map(|e| e == "gz").unwrap_or(false) {
        Ok(Box::new(flate2::write::GzEncoder::new(file, flate2::Compression::default())))
    } else {
        Ok(Box::new(std::io::BufWriter::new(file)))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: PathBuf,
    channels: Option<u16>,
    seed: Option<u64>,
    structure_in: Option<PathBuf>,
    structure_out: Option<PathBuf>,
    values_out: Option<PathBuf>,
    colors_out: Option<PathBuf>,
    set_out: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    stages_out: Option<PathBuf>,
) -> anyhow::Result<bool> {
    let cfg = ExperimentConfig::load(&config)?;
    let topo = cfg.topology.build()?;
    let pm = PowerMatrix::new(&topo, &cfg.sinr);
    let f = channels.unwrap_or(cfg.channels[0]);
    let seed = effective_seed(seed, cfg.seed_start);
    let prov = provenance(cfg.hash());

    let out = if let Some(sin) = structure_in {
        let file = std::fs::File::open(&sin)?;
        let structure = structure::load_structure(&topo, file)?;
        run_warm(&cfg, &topo, &pm, f, seed, structure)?
    } else {
        run_cell(&cfg, &topo, &pm, f, seed)?
    };

    println!("{}", metrics::METRICS_HEADER);
    println!("{}", out.metrics.csv_row());

    if let (Some(path), Some(s)) = (&structure_out, &out.structure) {
        let mut w = writer_for(path)?;
        writeln!(w, "{prov}")?;
        structure::save_structure(&topo, s, w)?;
    }
    if let (Some(path), Some(values)) = (&values_out, &out.values) {
        let mut w = writer_for(path)?;
        writeln!(w, "{prov}")?;
        writeln!(w, "id,value")?;
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(x) => writeln!(w, "{},{}", topo.id(i), cfg.aggregate.finalize(*x))?,
                None => writeln!(w, "{},", topo.id(i))?,
            }
        }
    }
    if let (Some(path), Some(colors)) = (&colors_out, &out.colors) {
        let mut w = writer_for(path)?;
        writeln!(w, "{prov}")?;
        writeln!(w, "id,color")?;
        for (i, c) in colors.colors.iter().enumerate() {
            match c {
                Some(x) => writeln!(w, "{},{}", topo.id(i), x)?,
                None => writeln!(w, "{},", topo.id(i))?,
            }
        }
    }
    if let (Some(path), Some(set)) = (&set_out, &out.ruling_set) {
        let mut w = writer_for(path)?;
        writeln!(w, "{prov}")?;
        for &m in set {
            writeln!(w, "{}", topo.id(m))?;
        }
    }
    if let Some(path) = &trace_out {
        let mut w = writer_for(path)?;
        writeln!(w, "{prov}")?;
        out.trace.write_jsonl(&mut w)?;
    }
    if let Some(path) = &stages_out {
        let mut w = writer_for(path)?;
        writeln!(w, "{prov}")?;
        writeln!(w, "stage,rounds,failed")?;
        let m = &out.metrics;
        writeln!(w, "clustering,{},{}", m.rounds_clustering, !m.ok)?;
        writeln!(w, "cluster_coloring,{},{}", m.rounds_cluster_coloring, !m.ok)?;
        writeln!(w, "csa,{},{}", m.rounds_csa, !m.ok)?;
        writeln!(w, "election,{},{}", m.rounds_election, !m.ok)?;
        writeln!(w, "stage,{},{}", m.rounds_stage, !m.ok)?;
    }
    Ok(out.metrics.ok)
}

/// Warm-start path: reuse a loaded structure for the aggregate or color
/// stage.
fn run_warm(
    cfg: &ExperimentConfig,
    topo: &Topology,
    pm: &PowerMatrix,
    f: u16,
    seed: u64,
    structure: structure::StructureResult,
) -> anyhow::Result<mcsinr::harness::runner::CellOutput> {
    use mcsinr::sim::{self, SimOptions, Trace};
    let consts = cfg.resolve_constants()?;
    let n_hat = (topo.len() as f64).powf(cfg.n_hat_exponent).max(1.0);
    let delta_hat = cfg.delta_hat.unwrap_or(topo.len() as u64);
    let opts = SimOptions { sense_noise: cfg.sense_noise };
    let mut trace = Trace::new(cfg.trace);
    let mut row = metrics::RunMetrics {
        config_hash: format!("{:016x}", cfg.hash()),
        pipeline: format!("{:?}", cfg.pipeline).to_lowercase(),
        n: topo.len(),
        channels: f,
        seed,
        preset: format!("{:?}", consts.preset).to_lowercase(),
        ..Default::default()
    };
    let mut values = None;
    let mut colors = None;
    let mut flags: Vec<structure::FailFlag> = structure.flags.clone();
    match cfg.pipeline {
        Pipeline::Aggregate => {
            let inputs = cfg.inputs.build(topo)?;
            let out = mcsinr::aggregation::run_aggregation(
                topo,
                pm,
                &cfg.sinr,
                &structure,
                &consts,
                n_hat,
                delta_hat,
                f,
                cfg.aggregate,
                &inputs,
                cfg.diameter_hint,
                sim::stage_seed(seed, 5),
                opts,
                &mut trace,
            );
            flags.extend(out.flags.iter().copied());
            row.rounds_stage = out.report.rounds;
            values = Some(out.values);
        }
        Pipeline::Color => {
            let (out, report) = mcsinr::coloring::run_coloring(
                topo,
                pm,
                &cfg.sinr,
                &structure,
                &consts,
                n_hat,
                sim::stage_seed(seed, 6),
                opts,
                &mut trace,
            );
            flags.extend(out.flags.iter().copied());
            row.rounds_stage = report.rounds;
            colors = Some(out);
        }
        _ => return Err(anyhow!("--structure-in applies to aggregate or color pipelines")),
    }
    flags.dedup();
    row.ok = flags.is_empty();
    row.flags = metrics::RunMetrics::flags_string(&flags);
    Ok(mcsinr::harness::runner::CellOutput {
        metrics: row,
        structure: Some(structure),
        values,
        colors,
        ruling_set: None,
        trace,
        agg_metrics: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    check: String,
    topo: Option<PathBuf>,
    structure_path: Option<PathBuf>,
    colors: Option<PathBuf>,
    values: Option<PathBuf>,
    inputs: Option<PathBuf>,
    set: Option<PathBuf>,
    radius: Option<f64>,
    aggregate: String,
    params: Option<String>,
    frames: usize,
    seed: u64,
) -> anyhow::Result<bool> {
    let params = parse_params(&params)?;
    let need_topo = || -> anyhow::Result<Topology> {
        let p = topo.clone().ok_or_else(|| anyhow!("--topo required for this check"))?;
        Ok(Topology::load_path(&p)?)
    };
    let need_structure = |t: &Topology| -> anyhow::Result<structure::StructureResult> {
        let p =
            structure_path.clone().ok_or_else(|| anyhow!("--structure required for this check"))?;
        let file = std::fs::File::open(&p)?;
        Ok(structure::load_structure(t, file)?)
    };
    let consts = mcsinr::constants::ProtocolConstants::practical();
    let report = match check.as_str() {
        "sinr_oracle" => verify::check_sinr_oracle(&params, frames, 64, 3, seed),
        "ruling_set" => {
            let t = need_topo()?;
            let p = set.ok_or_else(|| anyhow!("--set required"))?;
            let text = std::fs::read_to_string(&p)?;
            let members: Vec<usize> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| -> anyhow::Result<usize> {
                    let id: u32 = l.split([',', ' ']).next().unwrap().parse()?;
                    t.index_of(mcsinr::topology::NodeId(id))
                        .ok_or_else(|| anyhow!("unknown id {id}"))
                })
                .collect::<anyhow::Result<_>>()?;
            let r = radius.unwrap_or(params.r_t() / 4.0);
            verify::check_ruling_set(&t, &members, None, r)
        }
        "clustering" => {
            let t = need_topo()?;
            let s = need_structure(&t)?;
            verify::check_clustering(&t, &s, &params)
        }
        "cluster_coloring" => {
            let t = need_topo()?;
            let s = need_structure(&t)?;
            verify::check_cluster_coloring(&t, &s, &params)
        }
        "csa" => {
            let t = need_topo()?;
            let s = need_structure(&t)?;
            verify::check_csa(&s, &consts)
        }
        "tree" => {
            let t = need_topo()?;
            let s = need_structure(&t)?;
            verify::check_tree(&t, &s)
        }
        "aggregation" => {
            let t = need_topo()?;
            let fun = AggregateFunction::parse(&aggregate)
                .ok_or_else(|| anyhow!("unknown aggregate `{aggregate}`"))?;
            let inp = inputs.ok_or_else(|| anyhow!("--inputs required"))?;
            let vals = values.ok_or_else(|| anyhow!("--values required"))?;
            let input_rows = load_id_value_csv(&inp)?;
            let mut input_vec = vec![0i64; t.len()];
            for (id, v) in input_rows {
                let idx = t
                    .index_of(mcsinr::topology::NodeId(id))
                    .ok_or_else(|| anyhow!("unknown id {id}"))?;
                input_vec[idx] = v;
            }
            let value_rows = load_id_value_csv(&vals)?;
            let mut value_vec: Vec<Option<mcsinr::aggregation::AggValue>> = vec![None; t.len()];
            for (id, v) in value_rows {
                let idx = t
                    .index_of(mcsinr::topology::NodeId(id))
                    .ok_or_else(|| anyhow!("unknown id {id}"))?;
                value_vec[idx] = Some(mcsinr::aggregation::AggValue { a: v, b: 0 });
            }
            verify::check_aggregation(fun, &input_vec, &value_vec)
        }
        "coloring" => {
            let t = need_topo()?;
            let p = colors.ok_or_else(|| anyhow!("--colors required"))?;
            let rows = load_id_value_csv(&p)?;
            let mut cols: Vec<Option<u64>> = vec![None; t.len()];
            for (id, c) in rows {
                let idx = t
                    .index_of(mcsinr::topology::NodeId(id))
                    .ok_or_else(|| anyhow!("unknown id {id}"))?;
                cols[idx] = Some(c as u64);
            }
            let s = structure_path
                .as_ref()
                .map(|p| -> anyhow::Result<structure::StructureResult> {
                    let file = std::fs::File::open(p)?;
                    Ok(structure::load_structure(&t, file)?)
                })
                .transpose()?;
            verify::check_coloring(&t, &params, &cols, s.as_ref(), consts.phi_cap)
        }
        other => return Err(anyhow!("unknown check `{other}`")),
    };
    print!("{}", report.render());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: anyhow::Result<bool> = match cli.command {
        Commands::GenTopo { kind, n, extent, seed, out } => (|| {
            let kind = TopologyKind::parse(&kind)?;
            let topo = generate_topology(kind, n, extent, seed)?;
            topo.save_path(&out)?;
            Ok(true)
        })(),
        Commands::Run {
            config,
            channels,
            seed,
            structure_in,
            structure_out,
            values_out,
            colors_out,
            set_out,
            trace_out,
            stages_out,
        } => cmd_run(
            config, channels, seed, structure_in, structure_out, values_out, colors_out, set_out,
            trace_out, stages_out,
        ),
        Commands::Sweep { config, out, speedup_out } => (|| {
            let cfg = ExperimentConfig::load(&config)?;
            let (rows, summaries) = run_sweep(&cfg)?;
            let metrics_w = writer_for(&out)?;
            let speedup_w: Box<dyn Write> = match &speedup_out {
                Some(p) => writer_for(p)?,
                None => Box::new(std::io::sink()),
            };
            write_sweep_outputs(&cfg, &rows, &summaries, metrics_w, speedup_w)?;
            let failed = rows.iter().filter(|r| !r.ok).count();
            eprintln!("sweep: {} runs, {} failed", rows.len(), failed);
            Ok(true)
        })(),
        Commands::Verify {
            check,
            topo,
            structure,
            colors,
            values,
            inputs,
            set,
            radius,
            aggregate,
            params,
            frames,
            seed,
        } => {
            return match cmd_verify(
                check, topo, structure, colors, values, inputs, set, radius, aggregate, params,
                frames, seed,
            ) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(1),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            };
        }
        Commands::Calibrate { params, n, trials, seed, out } => (|| {
            let params = parse_params(&params)?;
            let cal = mcsinr::harness::calibrate::calibrate(&params, n, trials, seed);
            let mut w = writer_for(&out)?;
            writeln!(w, "{}", serde_json::to_string_pretty(&cal)?)?;
            eprintln!(
                "calibration: kappa {:.3} kappa1 {:.3} mu {}",
                cal.kappa, cal.kappa1, cal.mu
            );
            Ok(true)
        })(),
        Commands::SinrEval { topo, frame, params } => (|| {
            let params = parse_params(&params)?;
            let t = Topology::load_path(&topo)?;
            let pm = PowerMatrix::new(&t, &params);
            let text = std::fs::read_to_string(&frame)?;
            let mut actions: Vec<Action<u32>> = vec![Action::Idle; t.len()];
            for (ln, line) in text.lines().enumerate() {
                let s = line.trim();
                if s.is_empty() || s.starts_with('#') {
                    continue;
                }
                let parts: Vec<&str> = s.split_whitespace().collect();
                if parts.len() < 2 {
                    return Err(anyhow!("line {}: expected `node action [channel]`", ln + 1));
                }
                let id: u32 = parts[0].parse()?;
                let idx = t
                    .index_of(mcsinr::topology::NodeId(id))
                    .ok_or_else(|| anyhow!("line {}: unknown node {id}", ln + 1))?;
                let channel: u16 = if parts.len() > 2 { parts[2].parse()? } else { 1 };
                actions[idx] = match parts[1] {
                    "tx" | "transmit" => Action::Transmit { channel, msg: id },
                    "listen" | "rx" => Action::Listen { channel },
                    "idle" => Action::Idle,
                    other => return Err(anyhow!("line {}: unknown action `{other}`", ln + 1)),
                };
            }
            let out = resolve_slot(&pm, &params, &SlotFrame { actions });
            println!("receiver,sender,sinr,sensed");
            for r in &out.receptions {
                println!(
                    "{},{},{},{}",
                    t.id(r.receiver),
                    t.id(r.sender),
                    r.sinr,
                    r.total_power
                );
            }
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
