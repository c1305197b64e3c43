//! End-to-end behaviors: determinism, warm starts, robustness modes, the
//! hand-simulated convergecast example, and the command-line surface.

use std::process::Command;

use mcsinr::aggregation::{run_aggregation, AggregateFunction};
use mcsinr::constants::ProtocolConstants;
use mcsinr::harness::config::{ExperimentConfig, InputSpec, Pipeline, TopologySpec};
use mcsinr::harness::runner::run_cell;
use mcsinr::sim::{SimOptions, Trace, TraceLevel};
use mcsinr::sinr::{PowerMatrix, SinrParams, SinrRanges};
use mcsinr::structure::{ClusterState, StructureMode, StructureResult};
use mcsinr::topology::{generate_topology, Topology, TopologyKind};

fn cfg(n: usize, extent: f64, tseed: u64) -> ExperimentConfig {
    ExperimentConfig {
        version: 1,
        topology: TopologySpec::Generated {
            kind: TopologyKind::UniformDisk,
            n,
            extent,
            seed: tseed,
        },
        sinr: SinrParams::default_unit(),
        channels: vec![2],
        seed_start: 0,
        seed_count: 1,
        preset: mcsinr::constants::Preset::Practical,
        constants: Some(ProtocolConstants::practical()),
        calibration_file: None,
        n_hat_exponent: 1.0,
        delta_hat: None,
        pipeline: Pipeline::Aggregate,
        structure_mode: StructureMode::Distributed,
        aggregate: AggregateFunction::Sum,
        inputs: InputSpec::Ones,
        ruling_r_divisor: 4.0,
        diameter_hint: 8,
        workers: 1,
        trace: TraceLevel::Full,
        sense_noise: None,
        uncertainty: None,
        csa_path: mcsinr::structure::csa::CsaPath::Auto,
    }
}

#[test]
fn identical_inputs_give_identical_traces() {
    let c = cfg(40, 1.4, 5);
    let topo = c.topology.build().unwrap();
    let pm = PowerMatrix::new(&topo, &c.sinr);
    let a = run_cell(&c, &topo, &pm, 2, 9).unwrap();
    let b = run_cell(&c, &topo, &pm, 2, 9).unwrap();
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    a.trace.write_jsonl(&mut buf_a).unwrap();
    b.trace.write_jsonl(&mut buf_b).unwrap();
    assert!(!buf_a.is_empty());
    assert_eq!(buf_a, buf_b, "trace byte streams must be identical");
    let strip_wall = |row: String| row.rsplit_once(',').map(|(h, _)| h.to_string()).unwrap();
    assert_eq!(strip_wall(a.metrics.csv_row()), strip_wall(b.metrics.csv_row()));
    // A different seed diverges.
    let c2 = run_cell(&c, &topo, &pm, 2, 10).unwrap();
    let mut buf_c = Vec::new();
    c2.trace.write_jsonl(&mut buf_c).unwrap();
    assert_ne!(buf_a, buf_c);
}

#[test]
fn singleton_network_aggregates_its_own_input() {
    let mut c = cfg(1, 10.0, 7);
    c.topology =
        TopologySpec::Generated { kind: TopologyKind::Grid, n: 1, extent: 10.0, seed: 7 };
    c.inputs = InputSpec::NodeId;
    let topo = c.topology.build().unwrap();
    let pm = PowerMatrix::new(&topo, &c.sinr);
    let out = run_cell(&c, &topo, &pm, 1, 3).unwrap();
    assert!(out.metrics.ok, "{}", out.metrics.flags);
    assert_eq!(out.values.unwrap()[0].unwrap().a, 0);
}

/// Hand-simulated heap convergecast: seven reporters with values 1..7 and a
/// dominator holding 0 fold to 28, and the sweep finishes in one sweep
/// period.
#[test]
fn convergecast_seven_reporters_sums_to_28() {
    let p = SinrParams::default_unit();
    let r_c = mcsinr::constants::cluster_radius(&p);
    // Dominator at the origin, 8 members packed inside the cluster radius.
    let topo = mcsinr::harness::shapes::blob(9, 0.4 * r_c, 42);
    let pm = PowerMatrix::new(&topo, &p);
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 1;
    let structure = StructureResult {
        clusters: vec![ClusterState {
            dominator: 0,
            color: 1,
            members: (0..9).collect(),
            size_estimate: 9,
            estimate_warning: false,
            f_v: 7,
            reporters: (1..8).collect(),
            followers: vec![8],
        }],
        cluster_of: vec![0; 9],
        phi_used: 1,
        flags: vec![],
        measured_mu: 1,
        election_clean: 1,
        election_total: 1,
        stage_reports: vec![],
    };
    // Reporter k holds value k; the dominator and the lone follower hold 0.
    let inputs = vec![0i64, 1, 2, 3, 4, 5, 6, 7, 0];
    let mut trace = Trace::new(TraceLevel::Full);
    let out = run_aggregation(
        &topo,
        &pm,
        &p,
        &structure,
        &consts,
        9.0,
        9,
        7,
        AggregateFunction::Sum,
        &inputs,
        2,
        11,
        SimOptions::default(),
        &mut trace,
    );
    assert!(out.flags.is_empty(), "{:?}", out.flags);
    for v in out.values.iter().flatten() {
        assert_eq!(v.a, 28);
    }
    // The tree drains in single sweeps: three rounds of tree slots carry all
    // seven reporters (positions 4..7, then 2..3, then the root).
    let tree_rounds: std::collections::BTreeSet<u64> = trace
        .slots
        .iter()
        .filter(|s| (s.slot == 2 || s.slot == 3) && s.tx.iter().any(|t| t.kind == "tree"))
        .map(|s| s.round)
        .collect();
    let first_three: Vec<u64> = tree_rounds.iter().copied().take(3).collect();
    assert_eq!(first_three.len(), 3);
    assert!(first_three.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn uncertainty_mode_still_aggregates_exactly() {
    let mut c = cfg(40, 1.4, 21);
    c.uncertainty = Some(SinrRanges {
        alpha: (2.9, 3.1),
        beta: (1.45, 1.55),
        noise: (0.6, 0.7),
    });
    let topo = c.topology.build().unwrap();
    let pm = PowerMatrix::new(&topo, &c.sinr);
    let out = run_cell(&c, &topo, &pm, 2, 3).unwrap();
    assert!(out.metrics.ok, "{}", out.metrics.flags);
    let vals = out.values.unwrap();
    assert!(vals.iter().all(|v| v.map(|x| x.a) == Some(40)));
}

#[test]
fn sensing_noise_mode_runs() {
    let mut c = cfg(30, 1.3, 15);
    c.sense_noise = Some(0.02);
    let topo = c.topology.build().unwrap();
    let pm = PowerMatrix::new(&topo, &c.sinr);
    let out = run_cell(&c, &topo, &pm, 2, 5).unwrap();
    // Mild sensing noise must not break aggregation on an easy instance.
    assert!(out.metrics.ok, "{}", out.metrics.flags);
}

#[test]
fn oracle_structure_warm_starts_aggregation() {
    let mut c = cfg(50, 1.5, 31);
    c.structure_mode = StructureMode::Oracle;
    let topo = c.topology.build().unwrap();
    let pm = PowerMatrix::new(&topo, &c.sinr);
    let out = run_cell(&c, &topo, &pm, 2, 1).unwrap();
    assert!(out.metrics.ok, "{}", out.metrics.flags);
    assert!(out.values.unwrap().iter().all(|v| v.map(|x| x.a) == Some(50)));
}

// ---------------------------------------------------------------------------
// Command-line surface.
// ---------------------------------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcsinr"))
}

#[test]
fn cli_gen_topo_and_sinr_eval() {
    let dir = std::env::temp_dir().join("mcsinr_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let topo_path = dir.join("chain.txt");
    let st = bin()
        .args(["gen-topo", "--kind", "exponential_chain", "--n", "4"])
        .args(["--out", topo_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&topo_path).unwrap();
    assert!(text.starts_with("#mcsinr-topo v1"));
    assert!(text.contains("0 2.0 0.0"));

    let frame_path = dir.join("frame.txt");
    std::fs::write(&frame_path, "0 tx 1\n1 listen 1\n2 listen 1\n3 listen 1\n").unwrap();
    let out = bin()
        .args(["sinr-eval", "--topo", topo_path.to_str().unwrap()])
        .args(["--frame", frame_path.to_str().unwrap()])
        .args(["--params", "1,3,1.5,0.001,0.3333"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("receiver,sender,sinr,sensed"));
    assert!(stdout.lines().count() >= 2, "expected at least one reception: {stdout}");
}

#[test]
fn cli_run_verify_round_trip() {
    let dir = std::env::temp_dir().join("mcsinr_cli_rt");
    std::fs::create_dir_all(&dir).unwrap();
    let config = cfg(40, 1.4, 3);
    let cfg_path = dir.join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let topo = config.topology.build().unwrap();
    let topo_path = dir.join("topo.txt");
    topo.save_path(&topo_path).unwrap();

    let structure_path = dir.join("structure.txt");
    let values_path = dir.join("values.csv");
    let inputs_path = dir.join("inputs.txt");
    let trace_path = dir.join("trace.jsonl.gz");
    let mut inputs = String::new();
    for node in topo.nodes() {
        inputs.push_str(&format!("{} 1\n", node.id));
    }
    std::fs::write(&inputs_path, inputs).unwrap();

    let st = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap()])
        .args(["--seed", "4"])
        .args(["--structure-out", structure_path.to_str().unwrap()])
        .args(["--values-out", values_path.to_str().unwrap()])
        .args(["--trace-out", trace_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());

    // Structure checks pass through the CLI verifier.
    for check in ["clustering", "cluster_coloring", "tree", "csa"] {
        let st = bin()
            .args(["verify", check])
            .args(["--topo", topo_path.to_str().unwrap()])
            .args(["--structure", structure_path.to_str().unwrap()])
            .args(["--params", "1,3,1.5,0.6666666666666666,0.3333333333333333"])
            .status()
            .unwrap();
        assert!(st.success(), "verify {check} failed");
    }
    let st = bin()
        .args(["verify", "aggregation"])
        .args(["--topo", topo_path.to_str().unwrap()])
        .args(["--inputs", inputs_path.to_str().unwrap()])
        .args(["--values", values_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());

    // The gzip trace exists and inflates to JSON lines.
    let raw = std::fs::read(&trace_path).unwrap();
    assert!(raw.len() > 2);
    let mut gz = flate2::read::GzDecoder::new(&raw[..]);
    let mut text = String::new();
    use std::io::Read;
    gz.read_to_string(&mut text).unwrap();
    assert!(text.lines().any(|l| l.contains("\"type\":\"slot\"")));

    // Warm start from the dumped structure.
    let st = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap()])
        .args(["--seed", "4"])
        .args(["--structure-in", structure_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
}

#[test]
fn cli_verify_detects_planted_faults() {
    let dir = std::env::temp_dir().join("mcsinr_cli_faults");
    std::fs::create_dir_all(&dir).unwrap();
    let topo = generate_topology(TopologyKind::UniformDisk, 10, 0.5, 2).unwrap();
    let topo_path = dir.join("topo.txt");
    topo.save_path(&topo_path).unwrap();
    // Two nodes of a dense disk share a color: improper with certainty.
    let colors_path = dir.join("colors.csv");
    let mut csv = String::from("id,color\n");
    for node in topo.nodes() {
        csv.push_str(&format!("{},1\n", node.id));
    }
    std::fs::write(&colors_path, csv).unwrap();
    let out = bin()
        .args(["verify", "coloring"])
        .args(["--topo", topo_path.to_str().unwrap()])
        .args(["--colors", colors_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "planted fault must exit 1");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("monochromatic"));

    // A dependent "ruling set".
    let set_path = dir.join("set.txt");
    std::fs::write(&set_path, "0\n1\n2\n3\n4\n5\n6\n7\n8\n9\n").unwrap();
    let out = bin()
        .args(["verify", "ruling_set"])
        .args(["--topo", topo_path.to_str().unwrap()])
        .args(["--set", set_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Usage errors exit 2.
    let out = bin().args(["verify", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_seed_env_override_changes_run() {
    let dir = std::env::temp_dir().join("mcsinr_cli_env");
    std::fs::create_dir_all(&dir).unwrap();
    let config = cfg(30, 1.3, 3);
    let cfg_path = dir.join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out1 = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap()])
        .env("MCSINR_SEED", "111")
        .output()
        .unwrap();
    let out2 = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap()])
        .env("MCSINR_SEED", "222")
        .output()
        .unwrap();
    assert!(out1.status.success() && out2.status.success());
    let s1 = String::from_utf8(out1.stdout).unwrap();
    let s2 = String::from_utf8(out2.stdout).unwrap();
    assert!(s1.contains(",111,"));
    assert!(s2.contains(",222,"));
}

#[test]
fn cli_sweep_is_deterministic() {
    let dir = std::env::temp_dir().join("mcsinr_cli_sweep");
    std::fs::create_dir_all(&dir).unwrap();
    let mut config = cfg(30, 1.3, 3);
    config.channels = vec![1, 2];
    config.seed_count = 3;
    config.workers = 2;
    config.trace = TraceLevel::Metrics;
    let cfg_path = dir.join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let m1 = dir.join("m1.csv");
    let m2 = dir.join("m2.csv");
    let sp = dir.join("speedup.csv");
    for m in [&m1, &m2] {
        let st = bin()
            .args(["sweep", "--config", cfg_path.to_str().unwrap()])
            .args(["--out", m.to_str().unwrap()])
            .args(["--speedup-out", sp.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read(&m1).unwrap();
    let b = std::fs::read(&m2).unwrap();
    // Wall-clock differs between runs; strip the last column before
    // comparing.
    let strip = |bytes: &[u8]| -> String {
        String::from_utf8_lossy(bytes)
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or(l.to_string()))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b), "sweep metrics must be deterministic");
    let speedup = std::fs::read_to_string(&sp).unwrap();
    assert!(speedup.lines().count() >= 4);
}
