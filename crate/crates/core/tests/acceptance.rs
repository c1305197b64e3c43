//! Acceptance suite: every release criterion as an executable check, one
//! pass/fail line each. Tolerances and thresholds are pinned here.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use mcsinr::aggregation::{run_aggregation, AggregateFunction};
use mcsinr::constants::{cluster_radius, phi_bound, ProtocolConstants};
use mcsinr::harness::config::{ExperimentConfig, InputSpec, Pipeline, TopologySpec};
use mcsinr::harness::runner::run_cell;
use mcsinr::harness::shapes;
use mcsinr::harness::verify::{self, TdmaDeliveryChecker};
use mcsinr::sim::{self, run_stage, SimOptions, Trace, TraceLevel};
use mcsinr::sinr::{PowerMatrix, SinrParams};
use mcsinr::structure::csa::{run_csa_path, CsaPath};
use mcsinr::structure::reporters::tree_max_depth;
use mcsinr::structure::{self, clustering, cluster_coloring, StructureMode};
use mcsinr::topology::{build_comm_graph, generate_topology, Topology, TopologyKind};

fn params() -> SinrParams {
    SinrParams::default_unit()
}

fn cfg_for(topo_n: usize, pipeline: Pipeline, channels: Vec<u16>) -> ExperimentConfig {
    ExperimentConfig {
        version: 1,
        topology: TopologySpec::Generated {
            kind: TopologyKind::UniformDisk,
            n: topo_n,
            extent: 1.0,
            seed: 0,
        },
        sinr: params(),
        channels,
        seed_start: 0,
        seed_count: 1,
        preset: mcsinr::constants::Preset::Practical,
        constants: Some(ProtocolConstants::practical()),
        calibration_file: None,
        n_hat_exponent: 1.0,
        delta_hat: None,
        pipeline,
        structure_mode: StructureMode::Distributed,
        aggregate: AggregateFunction::Sum,
        inputs: InputSpec::Ones,
        ruling_r_divisor: 4.0,
        diameter_hint: 8,
        workers: 1,
        trace: TraceLevel::Metrics,
        sense_noise: None,
        uncertainty: None,
        csa_path: CsaPath::Auto,
    }
}

/// Criterion 1: the slot resolver matches a brute-force evaluator exactly on
/// 1000 random mixed-channel frames with up to 64 nodes, in under 10 s.
#[test]
fn acceptance_01_sinr_oracle_equivalence() {
    let start = std::time::Instant::now();
    let rep = verify::check_sinr_oracle(&params(), 1000, 64, 3, 20260808);
    let secs = start.elapsed().as_secs_f64();
    let mismatches = rep.stats.iter().find(|(k, _)| k == "mismatches").unwrap().1;
    println!(
        "criterion 01 sinr-oracle: {} (1000 frames, {mismatches} mismatches, {secs:.1}s)",
        if rep.passed() && secs < 10.0 { "PASS" } else { "FAIL" }
    );
    assert!(rep.passed(), "oracle mismatches: {:?}", rep.violations);
    assert!(secs < 10.0, "oracle check took {secs:.1}s");
}

/// Criterion 2: exponential chain of 12 nodes, threshold at the critical
/// value, three path-loss exponents, 10000 random transmitter subsets each:
/// no slot ever carries two simultaneous receptions of the exclusivity kind
/// (a sender decodable by every listener), and no listener ever decodes two
/// senders.
#[test]
fn acceptance_02_exponential_chain_exclusivity() {
    use mcsinr::sinr::{resolve_slot, Action, SlotFrame};
    use rand::{Rng, SeedableRng};
    let n = 12usize;
    let mut violations = 0u64;
    let mut multi_pair_slots = 0u64;
    for &alpha in &[2.5f64, 3.0, 4.0] {
        let beta = (2f64).powf(1.0 / alpha);
        // Noise low enough that the whole chain is inside the transmission
        // range.
        let noise = 1.0 / (beta * (8192f64).powf(alpha));
        let p = SinrParams::new(1.0, alpha, beta, noise, 1.0 / 3.0).unwrap();
        let topo = generate_topology(TopologyKind::ExponentialChain, n, 1.0, 0).unwrap();
        let pm = PowerMatrix::new(&topo, &p);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777 + alpha as u64);
        for _ in 0..10_000 {
            let mask: u16 = rng.random_range(1..(1 << n) as u16);
            let actions: Vec<Action<u8>> = (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        Action::Transmit { channel: 1, msg: i as u8 }
                    } else {
                        Action::Listen { channel: 1 }
                    }
                })
                .collect();
            let frame = SlotFrame { actions };
            let out = resolve_slot(&pm, &p, &frame);
            // Per-listener uniqueness.
            let mut receivers: Vec<usize> = out.receptions.iter().map(|r| r.receiver).collect();
            receivers.sort_unstable();
            let before = receivers.len();
            receivers.dedup();
            if receivers.len() != before {
                violations += 1;
            }
            // Exclusivity: at most one sender is decoded by every listener.
            let listeners: Vec<usize> =
                (0..n).filter(|&i| mask >> i & 1 == 0).collect();
            let mut universal = 0;
            for u in 0..n {
                if mask >> u & 1 == 0 {
                    continue;
                }
                let all = listeners.iter().all(|&v| {
                    out.reception_for(v).map(|r| r.sender == u).unwrap_or(false)
                });
                if all && !listeners.is_empty() {
                    universal += 1;
                }
            }
            if universal > 1 {
                violations += 1;
            }
            if out.receptions.len() > 1 {
                multi_pair_slots += 1;
            }
        }
    }
    println!(
        "criterion 02 chain-exclusivity: {} (30000 subsets, {violations} violations; {multi_pair_slots} slots had several point-to-point receptions)",
        if violations == 0 { "PASS" } else { "FAIL" }
    );
    assert_eq!(violations, 0);
}

/// Criterion 3: standalone ruling set at r = R_T/4 on uniform disks,
/// 100 seeds each at n = 100 and n = 200: output independent and
/// 2r-dominating in at least 99% of runs; the greeting phase never exceeds
/// its configured round count.
#[test]
fn acceptance_03_ruling_set() {
    let p = params();
    let consts = ProtocolConstants::practical();
    let r = p.r_t() / 4.0;
    let mut ok_runs = 0;
    let mut runs = 0;
    for &n in &[100usize, 200] {
        for seed in 0..100u64 {
            let topo =
                generate_topology(TopologyKind::UniformDisk, n, 4.0 * p.r_t(), 9000 + seed)
                    .unwrap();
            let pm = PowerMatrix::new(&topo, &p);
            let mut trace = Trace::new(TraceLevel::Metrics);
            let (joined, candidates, reports) = structure::ruling::ruling_set(
                &topo,
                &pm,
                &p,
                &consts,
                n as f64,
                r,
                seed,
                SimOptions::default(),
                &mut trace,
            );
            let budget = consts.rounds(consts.gamma, n as f64);
            assert!(
                reports[1].rounds <= budget + 1,
                "greeting phase ran {} rounds over budget {budget}",
                reports[1].rounds
            );
            let rep = verify::check_ruling_set(&topo, &joined, Some(&candidates), r);
            runs += 1;
            if rep.passed() {
                ok_runs += 1;
            }
        }
    }
    let rate = ok_runs as f64 / runs as f64;
    println!(
        "criterion 03 ruling-set: {} ({ok_runs}/{runs} runs clean, need >= 0.99)",
        if rate >= 0.99 { "PASS" } else { "FAIL" }
    );
    assert!(rate >= 0.99, "clean-run rate {rate}");
}

/// Criterion 4: cluster coloring at n = 300, 100 seeds: same-color dominators
/// pairwise beyond the separation radius (exact), colors within the density
/// bound, and 100% intra-cluster delivery in gated slots with one transmitter
/// per cluster.
#[test]
fn acceptance_04_cluster_coloring() {
    let p = params();
    let consts = ProtocolConstants::practical();
    let sep = p.r_eps_half();
    let r_c = cluster_radius(&p);
    let mut sep_violations = 0u64;
    let mut phi_violations = 0u64;
    let mut tdma_checked = 0u64;
    let mut tdma_delivered = 0u64;
    for seed in 0..100u64 {
        let topo =
            generate_topology(TopologyKind::UniformDisk, 300, 5.0 * p.r_t(), 4000 + seed).unwrap();
        let pm = PowerMatrix::new(&topo, &p);
        let mut trace = Trace::new(TraceLevel::Metrics);
        let (dominator_of, _) = clustering::run_clustering(
            &topo,
            &pm,
            &p,
            &consts,
            300.0,
            r_c,
            sim::stage_seed(seed, 1),
            SimOptions::default(),
            &mut trace,
        );
        let (colors, _) = cluster_coloring::run_cluster_coloring(
            &topo,
            &pm,
            &p,
            &consts,
            300.0,
            &dominator_of,
            sim::stage_seed(seed, 2),
            SimOptions::default(),
            &mut trace,
        );
        let entries: Vec<(usize, u32)> = colors.iter().map(|(&d, &c)| (d, c)).collect();
        assert!(entries.iter().all(|&(_, c)| c >= 1), "uncolored dominator (seed {seed})");
        for &(a, ca) in &entries {
            for &(b, cb) in &entries {
                if a < b && ca == cb && topo.distance(a, b) <= sep {
                    sep_violations += 1;
                }
            }
        }
        let doms: Vec<usize> = entries.iter().map(|&(d, _)| d).collect();
        let mu = structure::measure_density(&topo, &doms, r_c) as f64;
        let used = entries.iter().map(|&(_, c)| c).max().unwrap_or(0) as f64;
        if used > phi_bound(mu.max(1.0), sep, r_c) {
            phi_violations += 1;
        }
        // Drive the size-approximation stage with the delivery checker
        // attached: gated slots with one transmitter per cluster must deliver
        // to every same-cluster listener.
        let mut estimates_driver = mcsinr::structure::csa::CsaLargeDriver::new(
            &topo,
            &consts,
            300.0,
            300,
            &dominator_of,
            &colors,
        );
        let mut assignment = vec![0usize; topo.len()];
        let mut doms_sorted = dominator_of.clone();
        doms_sorted.sort_unstable();
        doms_sorted.dedup();
        for (v, d) in dominator_of.iter().enumerate() {
            assignment[v] = doms_sorted.binary_search(d).unwrap();
        }
        let pseudo = structure::StructureResult {
            clusters: doms_sorted
                .iter()
                .map(|&d| structure::ClusterState {
                    dominator: d,
                    color: colors.get(&d).copied().unwrap_or(1),
                    members: dominator_of
                        .iter()
                        .enumerate()
                        .filter(|(_, &dd)| dd == d)
                        .map(|(v, _)| v)
                        .collect(),
                    size_estimate: 1,
                    estimate_warning: false,
                    f_v: 0,
                    reporters: vec![],
                    followers: vec![],
                })
                .collect(),
            cluster_of: assignment,
            phi_used: used as u32,
            flags: vec![],
            measured_mu: mu as usize,
            election_clean: 0,
            election_total: 0,
            stage_reports: vec![],
        };
        let mut checker = TdmaDeliveryChecker::new(&pseudo, consts.phi_cap);
        let budget = estimates_driver.total_gated_rounds() * consts.phi_cap as u64 + 8;
        run_stage(
            &pm,
            &p,
            &mut estimates_driver,
            sim::stage_seed(seed, 3),
            budget,
            SimOptions::default(),
            &mut trace,
            &mut [&mut checker],
        );
        tdma_checked += checker.checked;
        tdma_delivered += checker.delivered;
    }
    let pass = sep_violations == 0 && phi_violations == 0 && tdma_checked == tdma_delivered;
    println!(
        "criterion 04 cluster-coloring: {} (separation violations {sep_violations}, bound violations {phi_violations}, gated delivery {tdma_delivered}/{tdma_checked})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert_eq!(sep_violations, 0);
    assert_eq!(phi_violations, 0);
    assert_eq!(tdma_checked, tdma_delivered, "gated delivery must be lossless");
    assert!(tdma_checked > 0);
}

/// Criterion 5: size approximation on clusters of true sizes 30..300 under
/// the practical preset, 100 seeds: estimate/true inside the interval derived
/// from the configured constants for at least 95% of clusters; the
/// small-instance path also finishes within its configured budget in at least
/// 95% of runs.
#[test]
fn acceptance_05_csa() {
    use rand::{Rng, SeedableRng};
    let p = params();
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 4;
    let r_c = cluster_radius(&p);
    let lo = 1.0 / (2.0 * consts.lambda);
    let hi = 4.0 * consts.gamma1 / consts.omega1;
    let mut in_interval = 0usize;
    let mut total = 0usize;
    for seed in 0..100u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500 + seed);
        let sizes: Vec<usize> = (0..4).map(|_| rng.random_range(30..=300)).collect();
        let topo = shapes::sized_blobs(&sizes, 0.45 * r_c, 3.0 * p.r_t(), seed);
        let pm = PowerMatrix::new(&topo, &p);
        let n_hat = topo.len() as f64;
        let dominator_of = clustering::greedy_clustering(&topo, r_c);
        let mut doms = dominator_of.clone();
        doms.sort_unstable();
        doms.dedup();
        let colors = structure::greedy_colors(&topo, &doms, p.r_eps_half());
        let mut trace = Trace::new(TraceLevel::Metrics);
        let (estimates, _) = run_csa_path(
            CsaPath::Large,
            &topo,
            &pm,
            &p,
            &consts,
            n_hat,
            topo.len() as u64,
            4,
            &dominator_of,
            &colors,
            seed,
            SimOptions::default(),
            &mut trace,
        );
        for (&d, &(est, _)) in &estimates {
            let true_size = dominator_of.iter().filter(|&&x| x == d).count();
            if true_size < 30 {
                continue;
            }
            total += 1;
            let ratio = est as f64 / true_size as f64;
            if ratio >= lo && ratio <= hi {
                in_interval += 1;
            }
        }
    }
    let rate = in_interval as f64 / total as f64;

    // Small-instance path: sizes within the per-channel budget, fixed round
    // bound.
    let mut small_ok = 0usize;
    let mut small_runs = 0usize;
    for seed in 0..100u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(900 + seed);
        let sizes: Vec<usize> = (0..5).map(|_| rng.random_range(30..=80)).collect();
        let topo = shapes::sized_blobs(&sizes, 0.45 * r_c, 3.0 * p.r_t(), seed);
        let n_hat = topo.len() as f64;
        let channels = 16u16;
        let delta_hat = ((channels as f64) * n_hat.ln()).floor() as u64;
        assert!(mcsinr::structure::csa::use_small_path(delta_hat, channels, n_hat));
        assert!(delta_hat as usize >= *sizes.iter().max().unwrap());
        let pm = PowerMatrix::new(&topo, &p);
        let dominator_of = clustering::greedy_clustering(&topo, r_c);
        let mut doms = dominator_of.clone();
        doms.sort_unstable();
        doms.dedup();
        let colors = structure::greedy_colors(&topo, &doms, p.r_eps_half());
        let mut trace = Trace::new(TraceLevel::Metrics);
        let (_, report) = run_csa_path(
            CsaPath::Small,
            &topo,
            &pm,
            &p,
            &consts,
            n_hat,
            delta_hat,
            channels,
            &dominator_of,
            &colors,
            seed,
            SimOptions::default(),
            &mut trace,
        );
        small_runs += 1;
        let budget =
            consts.c_small * n_hat.ln() * n_hat.ln().ln().max(1.0) * consts.phi_cap as f64;
        if (report.rounds as f64) <= budget {
            small_ok += 1;
        }
    }
    let small_rate = small_ok as f64 / small_runs as f64;
    let pass = rate >= 0.95 && small_rate >= 0.95;
    println!(
        "criterion 05 csa: {} (ratio in [{lo:.2}, {hi:.2}] for {in_interval}/{total} clusters = {rate:.3}; small path within budget {small_ok}/{small_runs})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(rate >= 0.95, "ratio rate {rate}");
    assert!(small_rate >= 0.95, "small-path rate {small_rate}");
}

/// Criterion 6: reporter election and the reporter tree. At least 99% of
/// clusters elect exactly one reporter per channel; a convergecast sweep uses
/// exactly two parity slots per tree level in every successful run (equal to
/// the full-heap slot formula whenever the heap is full).
#[test]
fn acceptance_06_reporter_tree() {
    let p = params();
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 8;
    let r_c = cluster_radius(&p);
    let mut clean = 0usize;
    let mut total = 0usize;
    let mut sweep_ok = 0usize;
    let mut sweep_checked = 0usize;
    for seed in 0..50u64 {
        let topo = shapes::blob_grid(2, 70, 0.45 * r_c, 0.8 * p.r_eps(), 60 + seed);
        let n = topo.len();
        let pm = PowerMatrix::new(&topo, &p);
        let mut cfg = cfg_for(n, Pipeline::Aggregate, vec![4]);
        cfg.constants = Some(consts);
        cfg.trace = TraceLevel::Full;
        let out = run_cell(&cfg, &topo, &pm, 4, seed).unwrap();
        let s = out.structure.as_ref().unwrap();
        clean += s.election_clean;
        total += s.election_total;
        if !out.metrics.ok {
            continue;
        }
        // Count tree-active rounds per cluster inside complete sweep windows
        // after the followers finished.
        let fdone = out.metrics.followers_done_round;
        let sweep_len = tree_max_depth(4) as u64 + 1;
        for c in &s.clusters {
            if c.f_v == 0 || c.reporters.is_empty() {
                continue;
            }
            let color = c.color.max(1);
            let members: std::collections::BTreeSet<u32> =
                c.members.iter().map(|&m| m as u32).collect();
            // Gated rounds of this cluster after the followers are done.
            let mut gated: Vec<u64> = Vec::new();
            let mut tree_rounds: Vec<u64> = Vec::new();
            for rec in &out.trace.slots {
                if rec.round <= fdone || !sim::tdma_gate(color, rec.round, consts.phi_cap) {
                    continue;
                }
                if rec.slot == 2 {
                    gated.push(rec.round);
                }
                if (rec.slot == 2 || rec.slot == 3)
                    && rec.tx.iter().any(|t| t.kind == "tree" && members.contains(&t.node))
                    && !tree_rounds.contains(&rec.round)
                {
                    tree_rounds.push(rec.round);
                }
            }
            gated.sort_unstable();
            gated.dedup();
            if gated.len() < 2 * sweep_len as usize {
                continue;
            }
            // A full aligned sweep window: count the cluster's tree-active
            // rounds inside it.
            for w in gated.chunks(sweep_len as usize) {
                if w.len() < sweep_len as usize {
                    break;
                }
                let active =
                    tree_rounds.iter().filter(|r| w.contains(r)).count() as u64;
                if active == 0 {
                    continue;
                }
                sweep_checked += 1;
                let expected_rounds = tree_max_depth(c.f_v) as u64 + 1;
                let slots = 2 * active;
                let expected_slots = 2 * expected_rounds;
                let full_heap_form = 2 * ((c.f_v as f64 + 1.0).log2().floor() as u64);
                if slots == expected_slots {
                    sweep_ok += 1;
                }
                if (c.f_v + 1).is_power_of_two() {
                    assert_eq!(slots, full_heap_form, "full-heap sweep must match the slot formula");
                }
                break;
            }
        }
    }
    let rate = clean as f64 / total.max(1) as f64;
    let pass = rate >= 0.99 && sweep_ok == sweep_checked && sweep_checked > 0;
    println!(
        "criterion 06 reporter-tree: {} (clean elections {clean}/{total} = {rate:.3}; exact sweeps {sweep_ok}/{sweep_checked})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(rate >= 0.99, "election rate {rate}");
    assert!(sweep_checked > 0);
    assert_eq!(sweep_ok, sweep_checked, "convergecast slot count must be deterministic");
}

/// Criterion 7: aggregation exactness with distinct powers of two at
/// n = 30 over 200 seeds: every successful run ends with the full bit-set at
/// every node; at most 2% of runs fail.
#[test]
fn acceptance_07_aggregation_exactness() {
    let mut failures = 0usize;
    let mut bitset_violations = 0usize;
    let runs = 200u64;
    let topo = generate_topology(TopologyKind::UniformDisk, 30, 1.2, 7).unwrap();
    let pm = PowerMatrix::new(&topo, &params());
    let mut cfg = cfg_for(30, Pipeline::Aggregate, vec![2]);
    cfg.inputs = InputSpec::PowersOfTwo;
    for seed in 0..runs {
        let out = run_cell(&cfg, &topo, &pm, 2, seed).unwrap();
        if !out.metrics.ok {
            failures += 1;
            continue;
        }
        let want = (1i64 << 30) - 1;
        let all_exact = out
            .values
            .as_ref()
            .map(|v| v.iter().all(|x| x.map(|a| a.a) == Some(want)))
            .unwrap_or(false);
        if !all_exact {
            bitset_violations += 1;
        }
    }
    let fail_rate = failures as f64 / runs as f64;
    let pass = bitset_violations == 0 && fail_rate <= 0.02;
    println!(
        "criterion 07 aggregation-exactness: {} ({bitset_violations} bit-set violations, {failures}/{runs} failed runs)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert_eq!(bitset_violations, 0, "successful runs must carry the exact bit-set");
    assert!(fail_rate <= 0.02, "failure rate {fail_rate}");
}

/// Criterion 8: Bounded Contention at n ~ 400 over 200 seeded runs: the
/// per-cluster probability sum stays at or below half the cluster's channels
/// in every round, in at least 99% of runs.
#[test]
fn acceptance_08_bounded_contention() {
    let p = params();
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 16;
    let r_c = cluster_radius(&p);
    let runs = 200u64;
    let mut clean = 0u64;
    let topo = shapes::blob_grid(3, 45, 0.45 * r_c, 0.8 * p.r_eps(), 11);
    let n = topo.len();
    let pm = PowerMatrix::new(&topo, &p);
    let mut cfg = cfg_for(n, Pipeline::Aggregate, vec![4]);
    cfg.constants = Some(consts);
    for seed in 0..runs {
        let out = run_cell(&cfg, &topo, &pm, 4, seed).unwrap();
        if out.metrics.contention_violations == 0 {
            clean += 1;
        }
    }
    let rate = clean as f64 / runs as f64;
    println!(
        "criterion 08 bounded-contention: {} ({clean}/{runs} runs with zero violations, need >= 0.99)",
        if rate >= 0.99 { "PASS" } else { "FAIL" }
    );
    assert!(rate >= 0.99, "clean rate {rate}");
}

/// Criterion 9: multi-channel speedup on a fixed dense blob with max degree
/// about 512: median follower-stage rounds strictly decrease in the channel
/// count, and the 1-to-8 channel ratio is at least 4. Runs in under 30
/// minutes.
#[test]
fn acceptance_09_multichannel_speedup() {
    let start = std::time::Instant::now();
    let p = params();
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 4;
    let r_c = cluster_radius(&p);
    let topo = shapes::blob(513, 0.45 * r_c, 3);
    let graph = build_comm_graph(&topo, &p);
    assert_eq!(graph.delta, 512);
    let pm = PowerMatrix::new(&topo, &p);
    let mut medians = Vec::new();
    for &f in &[1u16, 2, 4, 8] {
        let mut cfg = cfg_for(513, Pipeline::Aggregate, vec![f]);
        cfg.constants = Some(consts);
        let mut rounds: Vec<f64> = (0..50u64)
            .map(|seed| {
                let out = run_cell(&cfg, &topo, &pm, f, seed).unwrap();
                assert!(
                    out.metrics.ok,
                    "run failed (F={f} seed {seed}): {}",
                    out.metrics.flags
                );
                out.metrics.followers_done_round as f64
            })
            .collect();
        rounds.sort_by(f64::total_cmp);
        medians.push(rounds[rounds.len() / 2]);
    }
    let strictly_decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let ratio = medians[0] / medians[3];
    let secs = start.elapsed().as_secs_f64();
    let pass = strictly_decreasing && ratio >= 4.0 && secs < 1800.0;
    println!(
        "criterion 09 speedup: {} (medians {medians:?}, ratio {ratio:.2}, {secs:.0}s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(strictly_decreasing, "medians not strictly decreasing: {medians:?}");
    assert!(ratio >= 4.0, "speedup ratio {ratio:.2}");
    assert!(secs < 1800.0);
}

/// Criterion 10: backbone construction time scales linearly with the
/// backbone hop diameter over blob chains of diameter 5, 10 and 20
/// (median join-completion rounds, linear fit R^2 >= 0.9).
#[test]
fn acceptance_10_backbone_scaling() {
    let p = params();
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 16;
    let r_c = cluster_radius(&p);
    let diameters = [5usize, 10, 20];
    let mut medians = Vec::new();
    for &d in &diameters {
        let topo = shapes::blob_chain(d + 1, 12, 0.35 * r_c, 0.8 * p.r_eps(), 77);
        let n = topo.len();
        let pm = PowerMatrix::new(&topo, &p);
        let mut cfg = cfg_for(n, Pipeline::Aggregate, vec![2]);
        cfg.constants = Some(consts);
        cfg.diameter_hint = 24;
        let mut joins: Vec<f64> = Vec::new();
        let mut failed = 0usize;
        for seed in 0..30u64 {
            let out = run_cell(&cfg, &topo, &pm, 2, seed).unwrap();
            if out.metrics.ok {
                joins.push(out.metrics.backbone_joined_round as f64);
            } else {
                failed += 1;
            }
        }
        assert!(failed <= 3, "too many failed runs at diameter {d}: {failed}/30");
        joins.sort_by(f64::total_cmp);
        medians.push(joins[joins.len() / 2]);
    }
    // Least squares over the three (diameter, median) points.
    let xs: Vec<f64> = diameters.iter().map(|&d| d as f64).collect();
    let ys = &medians;
    let mean_x = xs.iter().sum::<f64>() / 3.0;
    let mean_y = ys.iter().sum::<f64>() / 3.0;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 =
        xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let pass = r2 >= 0.9 && slope > 0.0;
    println!(
        "criterion 10 backbone-scaling: {} (medians {medians:?}, slope {slope:.1}, R^2 {r2:.3})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(slope > 0.0);
    assert!(r2 >= 0.9, "linear fit R^2 = {r2:.3}");
}

/// Criterion 11: node coloring at n ~ 300 over 50 seeds: zero improper edges
/// in every successful run, color count within the budget, and coloring
/// rounds within twice the aggregation pipeline's on the same topology.
#[test]
fn acceptance_11_node_coloring() {
    let p = params();
    let mut consts = ProtocolConstants::practical();
    consts.phi_cap = 48;
    let r_c = cluster_radius(&p);
    let topo = shapes::blob_grid(4, 19, 0.4 * r_c, 0.85 * p.r_eps(), 13);
    let n = topo.len();
    let pm = PowerMatrix::new(&topo, &p);
    let mut improper = 0u64;
    let mut budget_violations = 0u64;
    let mut failed = 0u64;
    let mut color_rounds = Vec::new();
    let mut agg_rounds = Vec::new();
    for seed in 0..50u64 {
        let mut cfg = cfg_for(n, Pipeline::Color, vec![4]);
        cfg.constants = Some(consts);
        let out = run_cell(&cfg, &topo, &pm, 4, seed).unwrap();
        if !out.metrics.ok {
            failed += 1;
            continue;
        }
        let colors = out.colors.as_ref().unwrap();
        let rep = verify::check_coloring(
            &topo,
            &p,
            &colors.colors,
            out.structure.as_ref(),
            consts.phi_cap,
        );
        if !rep.passed() {
            improper += 1;
        }
        let distinct =
            rep.stats.iter().find(|(k, _)| k == "distinct_colors").map(|(_, v)| *v).unwrap();
        let budget =
            rep.stats.iter().find(|(k, _)| k == "color_budget").map(|(_, v)| *v).unwrap();
        if distinct > budget {
            budget_violations += 1;
        }
        color_rounds.push(out.metrics.rounds_stage as f64);

        let mut acfg = cfg_for(n, Pipeline::Aggregate, vec![4]);
        acfg.constants = Some(consts);
        let aout = run_cell(&acfg, &topo, &pm, 4, seed).unwrap();
        agg_rounds.push(aout.metrics.rounds_stage as f64);
    }
    color_rounds.sort_by(f64::total_cmp);
    agg_rounds.sort_by(f64::total_cmp);
    let med_color = color_rounds[color_rounds.len() / 2];
    let med_agg = agg_rounds[agg_rounds.len() / 2];
    let within = med_color <= 2.0 * med_agg;
    let pass = improper == 0 && budget_violations == 0 && within && failed <= 2;
    println!(
        "criterion 11 node-coloring: {} (improper {improper}, budget violations {budget_violations}, failed {failed}/50, rounds {med_color:.0} vs aggregation {med_agg:.0})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert_eq!(improper, 0, "improper colorings in successful runs");
    assert_eq!(budget_violations, 0);
    assert!(failed <= 2, "failures {failed}");
    assert!(within, "coloring rounds {med_color} vs aggregation {med_agg}");
}
