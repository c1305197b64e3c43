//! Brute-force verification oracles. Every check recomputes its property
//! from first principles (direct distance loops, BFS, exhaustive edge scans)
//! with no sampling, independent of the simulation path it validates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{AggValue, AggregateFunction};
use crate::constants::{cluster_radius, phi_bound, ProtocolConstants};
use crate::sim::{ContentionRecord, Milestone};
use crate::sinr::{resolve_slot, Action, PowerMatrix, SinrParams, SlotFrame};
use crate::structure::StructureResult;
use crate::topology::Topology;

/// Outcome of one check: named statistics plus human-readable violations.
#[derive(Debug, Clone)]
pub struct Report {
    pub check: String,
    pub violations: Vec<String>,
    pub stats: Vec<(String, f64)>,
}

impl Report {
    fn new(check: &str) -> Self {
        Self { check: check.to_string(), violations: Vec::new(), stats: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, msg: String) {
        if self.violations.len() < 50 {
            self.violations.push(msg);
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "check {}: {}\n",
            self.check,
            if self.passed() { "pass" } else { "FAIL" }
        ));
        for (k, v) in &self.stats {
            out.push_str(&format!("  {k} = {v}\n"));
        }
        for v in &self.violations {
            out.push_str(&format!("  violation: {v}\n"));
        }
        out
    }
}

/// Independent slot evaluator: per (listener, transmitter) pair, direct
/// distance computation and interference summation.
pub fn brute_force_resolve<M: Clone>(
    topo: &Topology,
    params: &SinrParams,
    frame: &SlotFrame<M>,
) -> Vec<(usize, usize)> {
    let n = frame.actions.len();
    let mut out = Vec::new();
    for v in 0..n {
        let ch = match &frame.actions[v] {
            Action::Listen { channel } => *channel,
            _ => continue,
        };
        let mut winners = 0;
        for u in 0..n {
            let tx_ch = match &frame.actions[u] {
                Action::Transmit { channel, .. } => *channel,
                _ => continue,
            };
            if tx_ch != ch || u == v {
                continue;
            }
            let d = ((topo.node(u).x - topo.node(v).x).powi(2)
                + (topo.node(u).y - topo.node(v).y).powi(2))
            .sqrt();
            let signal = params.power / d.powf(params.alpha);
            let mut interference = params.noise;
            for w in 0..n {
                if w == u || w == v {
                    continue;
                }
                if let Action::Transmit { channel, .. } = &frame.actions[w] {
                    if *channel == ch {
                        let dw = ((topo.node(w).x - topo.node(v).x).powi(2)
                            + (topo.node(w).y - topo.node(v).y).powi(2))
                        .sqrt();
                        interference += params.power / dw.powf(params.alpha);
                    }
                }
            }
            if signal / interference >= params.beta {
                out.push((v, u));
                winners += 1;
            }
        }
        assert!(winners <= 1, "threshold at least 1 admits at most one sender per listener");
    }
    out
}

/// Random mixed-channel frames against the brute-force evaluator.
pub fn check_sinr_oracle(
    params: &SinrParams,
    frames: usize,
    max_nodes: usize,
    channels: u16,
    seed: u64,
) -> Report {
    let mut rep = Report::new("sinr_oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0u64;
    let mut receptions = 0u64;
    for f in 0..frames {
        let n = rng.random_range(2..=max_nodes);
        let extent = 3.0 * params.r_t();
        let topo = crate::topology::generate_topology(
            crate::topology::TopologyKind::UniformDisk,
            n,
            extent,
            rng.random(),
        )
        .expect("topology");
        let pm = PowerMatrix::new(&topo, params);
        let actions: Vec<Action<u32>> = (0..n)
            .map(|i| match rng.random_range(0..3u8) {
                0 => Action::Transmit { channel: rng.random_range(1..=channels), msg: i as u32 },
                1 => Action::Listen { channel: rng.random_range(1..=channels) },
                _ => Action::Idle,
            })
            .collect();
        let frame = SlotFrame { actions };
        let fast = resolve_slot(&pm, params, &frame);
        let mut fast_pairs: Vec<(usize, usize)> =
            fast.receptions.iter().map(|r| (r.receiver, r.sender)).collect();
        let mut brute = brute_force_resolve(&topo, params, &frame);
        fast_pairs.sort_unstable();
        brute.sort_unstable();
        receptions += brute.len() as u64;
        if fast_pairs != brute {
            mismatches += 1;
            rep.violation(format!("frame {f}: engine {fast_pairs:?} vs oracle {brute:?}"));
        }
    }
    rep.stats.push(("frames".into(), frames as f64));
    rep.stats.push(("receptions".into(), receptions as f64));
    rep.stats.push(("mismatches".into(), mismatches as f64));
    rep
}

/// Exact geometric check of a ruling set: pairwise independence beyond `r`,
/// domination of every node within `2r`, domination of the candidate set
/// within `r` when candidates are given.
pub fn check_ruling_set(
    topo: &Topology,
    set: &[usize],
    candidates: Option<&[usize]>,
    r: f64,
) -> Report {
    let mut rep = Report::new("ruling_set");
    for (i, &a) in set.iter().enumerate() {
        for &b in set.iter().skip(i + 1) {
            if topo.distance(a, b) <= r {
                rep.violation(format!(
                    "members {} and {} are within the independence radius",
                    topo.id(a),
                    topo.id(b)
                ));
            }
        }
    }
    for v in 0..topo.len() {
        if !set.iter().any(|&s| topo.distance(v, s) <= 2.0 * r) {
            rep.violation(format!("node {} has no member within 2r", topo.id(v)));
        }
    }
    if let Some(cands) = candidates {
        for &c in cands {
            if !set.iter().any(|&s| topo.distance(c, s) <= r) {
                rep.violation(format!("candidate {} has no member within r", topo.id(c)));
            }
        }
    }
    rep.stats.push(("members".into(), set.len() as f64));
    rep
}

pub fn check_clustering(topo: &Topology, s: &StructureResult, params: &SinrParams) -> Report {
    let mut rep = Report::new("clustering");
    let r_c = cluster_radius(params);
    let mut seen = vec![0u32; topo.len()];
    for c in &s.clusters {
        for &m in &c.members {
            seen[m] += 1;
            if topo.distance(m, c.dominator) > r_c {
                rep.violation(format!(
                    "member {} is {}m from dominator {}, beyond the cluster radius",
                    topo.id(m),
                    topo.distance(m, c.dominator),
                    topo.id(c.dominator)
                ));
            }
        }
    }
    for (v, &count) in seen.iter().enumerate() {
        if count != 1 {
            rep.violation(format!("node {} belongs to {count} clusters", topo.id(v)));
        }
    }
    let dominators: Vec<usize> = s.clusters.iter().map(|c| c.dominator).collect();
    let mu = crate::structure::measure_density(topo, &dominators, r_c);
    rep.stats.push(("clusters".into(), s.clusters.len() as f64));
    rep.stats.push(("density".into(), mu as f64));
    rep
}

pub fn check_cluster_coloring(topo: &Topology, s: &StructureResult, params: &SinrParams) -> Report {
    let mut rep = Report::new("cluster_coloring");
    let sep = params.r_eps_half();
    for a in &s.clusters {
        if a.color == 0 {
            rep.violation(format!("dominator {} is uncolored", topo.id(a.dominator)));
        }
        for b in &s.clusters {
            if a.dominator != b.dominator
                && a.color != 0
                && a.color == b.color
                && topo.distance(a.dominator, b.dominator) <= sep
            {
                rep.violation(format!(
                    "dominators {} and {} share color {} within the separation radius",
                    topo.id(a.dominator),
                    topo.id(b.dominator),
                    a.color
                ));
            }
        }
    }
    let r_c = cluster_radius(params);
    let dominators: Vec<usize> = s.clusters.iter().map(|c| c.dominator).collect();
    let mu = crate::structure::measure_density(topo, &dominators, r_c) as f64;
    let phi = phi_bound(mu.max(1.0), params.r_eps_half(), r_c);
    if (s.phi_used as f64) > phi {
        rep.violation(format!("{} colors used, above the bound {phi:.1}", s.phi_used));
    }
    rep.stats.push(("colors".into(), s.phi_used as f64));
    rep.stats.push(("phi_bound".into(), phi));
    rep
}

/// Estimate quality against true cluster sizes, with the acceptance interval
/// derived from the configured constants.
pub fn check_csa(s: &StructureResult, consts: &ProtocolConstants) -> Report {
    let mut rep = Report::new("csa");
    let lo = 1.0 / (2.0 * consts.lambda);
    let hi = 4.0 * consts.gamma1 / consts.omega1;
    let mut in_interval = 0usize;
    let mut total = 0usize;
    for c in &s.clusters {
        if c.size_estimate == 0 {
            rep.violation(format!("cluster of dominator index {} has estimate 0", c.dominator));
        }
        if c.true_size() <= 1 {
            continue;
        }
        total += 1;
        let ratio = c.size_estimate as f64 / c.true_size() as f64;
        if ratio >= lo && ratio <= hi {
            in_interval += 1;
        }
    }
    rep.stats.push(("interval_lo".into(), lo));
    rep.stats.push(("interval_hi".into(), hi));
    rep.stats.push(("clusters_checked".into(), total as f64));
    rep.stats.push((
        "in_interval_fraction".into(),
        if total == 0 { 1.0 } else { in_interval as f64 / total as f64 },
    ));
    rep
}

pub fn check_tree(topo: &Topology, s: &StructureResult) -> Report {
    let mut rep = Report::new("tree");
    for c in &s.clusters {
        if c.f_v > 0 && c.reporters.len() != c.f_v as usize {
            rep.violation(format!(
                "cluster of {} has {} reporters for {} channels",
                topo.id(c.dominator),
                c.reporters.len(),
                c.f_v
            ));
            continue;
        }
        let mut sorted = c.reporters.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != c.reporters.len() {
            rep.violation(format!(
                "cluster of {} elects one node on several channels",
                topo.id(c.dominator)
            ));
        }
        for &r in &c.reporters {
            if !c.members.contains(&r) {
                rep.violation(format!(
                    "reporter {} is outside its cluster",
                    topo.id(r)
                ));
            }
        }
        for &f in &c.followers {
            if !c.members.contains(&f) {
                rep.violation(format!("follower {} is outside its cluster", topo.id(f)));
            }
        }
        let total = 1 + c.reporters.len() + c.followers.len();
        if total != c.members.len() {
            rep.violation(format!(
                "cluster of {} does not partition into dominator, reporters, followers",
                topo.id(c.dominator)
            ));
        }
    }
    rep
}

/// Exact correctness of aggregation output: every node holds the fold of all
/// inputs. For power-of-two inputs also checks the bit-set (loss and
/// duplication detector).
pub fn check_aggregation(
    fun: AggregateFunction,
    inputs: &[i64],
    values: &[Option<AggValue>],
) -> Report {
    let mut rep = Report::new("aggregation");
    let expected = inputs.iter().fold(fun.identity(), |acc, &x| fun.combine(acc, fun.leaf(x)));
    let powers = inputs.iter().all(|&x| x > 0 && (x & (x - 1)) == 0)
        && inputs.len() == inputs.iter().collect::<std::collections::BTreeSet<_>>().len();
    for (v, val) in values.iter().enumerate() {
        match val {
            None => rep.violation(format!("node index {v} holds no final value")),
            Some(x) => {
                if *x != expected {
                    rep.violation(format!("node index {v} holds {x:?}, expected {expected:?}"));
                }
                if powers && fun == AggregateFunction::Sum {
                    let want: i64 = inputs.iter().sum();
                    if x.a != want {
                        rep.violation(format!(
                            "bit-set mismatch at node index {v}: {:#x} vs {want:#x}",
                            x.a
                        ));
                    }
                }
            }
        }
    }
    rep.stats.push(("nodes".into(), values.len() as f64));
    rep
}

/// Exhaustive adjacency scan of a node coloring.
pub fn check_coloring(
    topo: &Topology,
    params: &SinrParams,
    colors: &[Option<u64>],
    structure: Option<&StructureResult>,
    phi: u32,
) -> Report {
    let mut rep = Report::new("coloring");
    let graph = crate::topology::build_comm_graph(topo, params);
    for u in 0..topo.len() {
        match colors[u] {
            None => rep.violation(format!("node {} is uncolored", topo.id(u))),
            Some(cu) => {
                for &v in &graph.neighbors[u] {
                    let v = v as usize;
                    if v > u {
                        if let Some(cv) = colors[v] {
                            if cu == cv {
                                rep.violation(format!(
                                    "edge ({}, {}) is monochromatic with color {cu}",
                                    topo.id(u),
                                    topo.id(v)
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    let distinct: std::collections::BTreeSet<u64> = colors.iter().flatten().copied().collect();
    rep.stats.push(("distinct_colors".into(), distinct.len() as f64));
    if let Some(s) = structure {
        let max_cluster = s.clusters.iter().map(|c| c.true_size()).max().unwrap_or(1);
        let budget = phi as usize * max_cluster;
        rep.stats.push(("color_budget".into(), budget as f64));
        if distinct.len() > budget {
            rep.violation(format!(
                "{} distinct colors exceed the budget {budget}",
                distinct.len()
            ));
        }
    }
    rep
}

/// Bounded contention from the scheduler-side ledger, plus the
/// unchanging-phase throughput statistic.
pub fn check_contention(
    records: &[ContentionRecord],
    milestones: &[Milestone],
    consts: &ProtocolConstants,
    n_hat: f64,
) -> Report {
    let mut rep = Report::new("contention");
    let lambda = consts.lambda;
    let mut violations = 0u64;
    for r in records {
        if r.p_sum > lambda * r.f_v as f64 + 1e-9 {
            violations += 1;
            rep.violation(format!(
                "round {}: cluster of {} has probability sum {:.3} above {:.3}",
                r.round,
                r.dominator,
                r.p_sum,
                lambda * r.f_v as f64
            ));
        }
    }
    rep.stats.push(("rounds_checked".into(), records.len() as f64));
    rep.stats.push(("violations".into(), violations as f64));
    // Unchanging phases carry at least a quarter of the backoff threshold in
    // transmissions (statistic, not a gate).
    let gamma = consts.rounds(consts.gamma2, n_hat);
    let omega = consts.omega2 * crate::constants::log_n(n_hat);
    let mut per_cluster: BTreeMap<u32, Vec<&ContentionRecord>> = BTreeMap::new();
    for r in records {
        per_cluster.entry(r.dominator).or_default().push(r);
    }
    let backoff_rounds: BTreeMap<u32, Vec<u64>> = {
        let mut m: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for ms in milestones.iter().filter(|m| m.kind == "backoff") {
            m.entry(ms.node).or_default().push(ms.round);
        }
        m
    };
    let mut unchanging = 0usize;
    let mut unchanging_ok = 0usize;
    for (dom, rows) in &per_cluster {
        let phase_len = (gamma + 1) as usize;
        for (pi, chunk) in rows.chunks(phase_len).enumerate() {
            if chunk.len() < phase_len {
                continue;
            }
            let lo = chunk.first().unwrap().round;
            let hi = chunk.last().unwrap().round;
            let had_backoff = backoff_rounds
                .get(dom)
                .map(|v| v.iter().any(|&r| r >= lo && r <= hi + (gamma + 1)))
                .unwrap_or(false);
            if had_backoff {
                unchanging += 1;
                let txs: u64 = chunk.iter().map(|r| r.txs as u64).sum();
                let f_v = chunk.first().unwrap().f_v as f64;
                if txs as f64 >= omega * f_v / 4.0 {
                    unchanging_ok += 1;
                }
            }
            let _ = pi;
        }
    }
    rep.stats.push(("unchanging_phases".into(), unchanging as f64));
    rep.stats.push((
        "unchanging_with_quarter_throughput".into(),
        if unchanging == 0 { 1.0 } else { unchanging_ok as f64 / unchanging as f64 },
    ));
    rep
}


/// Online TDMA delivery checker: in every slot where exactly one member of a
/// cluster transmits on a channel and only the active color's clusters
/// transmit, every same-cluster listener on that channel must receive the
/// message. Attached to gated stages as a slot observer.
pub struct TdmaDeliveryChecker {
    cluster_of: Vec<usize>,
    color_of_cluster: Vec<u32>,
    phi: u32,
    pub checked: u64,
    pub delivered: u64,
}

impl TdmaDeliveryChecker {
    pub fn new(s: &StructureResult, phi: u32) -> Self {
        Self {
            cluster_of: s.cluster_of.clone(),
            color_of_cluster: s.clusters.iter().map(|c| c.color.max(1)).collect(),
            phi,
            checked: 0,
            delivered: 0,
        }
    }

    pub fn all_delivered(&self) -> bool {
        self.checked == self.delivered
    }
}

impl<M: crate::sim::WireMsg> crate::sim::SlotObserver<M> for TdmaDeliveryChecker {
    fn on_slot(
        &mut self,
        round: u64,
        _slot: u8,
        frame: &SlotFrame<M>,
        outcome: &crate::sinr::SlotOutcome<M>,
    ) {
        let active_color = (round % self.phi as u64) as u32 + 1;
        // Group transmitters by cluster and channel; bail out when an
        // off-color cluster transmits.
        let mut per: BTreeMap<(usize, u16), Vec<usize>> = BTreeMap::new();
        for (i, a) in frame.actions.iter().enumerate() {
            if let Action::Transmit { channel, .. } = a {
                let ci = self.cluster_of[i];
                if self.color_of_cluster[ci] != active_color {
                    return;
                }
                per.entry((ci, *channel)).or_default().push(i);
            }
        }
        for ((ci, ch), txs) in per {
            if txs.len() != 1 {
                continue;
            }
            let tx = txs[0];
            for (v, a) in frame.actions.iter().enumerate() {
                if v == tx || self.cluster_of[v] != ci {
                    continue;
                }
                if a.listened_channel() == Some(ch) {
                    self.checked += 1;
                    if outcome
                        .reception_for(v)
                        .map(|r| r.sender == tx)
                        .unwrap_or(false)
                    {
                        self.delivered += 1;
                    }
                }
            }
        }
    }
}
