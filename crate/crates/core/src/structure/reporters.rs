//! Reporter election and the heap-shaped reporter tree.
//!
//! Dominatees self-assign uniformly among the cluster's channels; a ruling
//! set with the whole-cluster radius then leaves exactly one reporter per
//! channel. Reporters are tree-ordered by channel number, parent `k/2`, with
//! the dominator as position 0.

use std::collections::BTreeMap;

use rand::Rng;

use crate::constants::{cluster_channels, ProtocolConstants};
use crate::sim::{self, run_stage, SimOptions, StageReport, Trace};
use crate::sinr::{PowerMatrix, SinrParams};
use crate::structure::ruling::{RulingConfig, RulingSetDriver};
use crate::structure::FailFlag;
use crate::topology::Topology;

/// Heap parent of tree position `k` (position 0 is the dominator).
pub fn tree_parent(k: u16) -> u16 {
    k / 2
}

/// Channel a position-`k` reporter transmits on when reporting to its parent.
pub fn tree_parent_channel(k: u16) -> u16 {
    (k / 2).max(1)
}

pub fn tree_depth(k: u16) -> u32 {
    (k as f64).log2().floor() as u32
}

pub fn tree_max_depth(f_v: u16) -> u32 {
    if f_v == 0 {
        0
    } else {
        tree_depth(f_v)
    }
}

/// Rounds one convergecast sweep takes (depth schedule, one level per round,
/// root-to-dominator hop included).
pub fn convergecast_rounds(f_v: u16) -> u64 {
    if f_v == 0 {
        0
    } else {
        tree_max_depth(f_v) as u64 + 1
    }
}

/// Transmission slots per convergecast sweep: two parity slots per level.
/// Equals `2 * floor(log2(f_v + 1))` whenever the reporter heap is full.
pub fn convergecast_slots(f_v: u16) -> u64 {
    2 * convergecast_rounds(f_v)
}

/// Tree round (0-based within a sweep) in which position `k` transmits.
pub fn tree_tx_round(k: u16, f_v: u16) -> u64 {
    (tree_max_depth(f_v) - tree_depth(k)) as u64
}

/// Channels used by a cluster with the given size estimate; estimate 1 means
/// a believed-solo cluster that elects no reporters.
pub fn f_v_from_estimate(est: u64, n_hat: f64, c1: f64, channels: u16) -> u16 {
    if est <= 1 {
        0
    } else {
        cluster_channels(est, n_hat, c1, channels)
    }
}

/// Run reporter election. Returns the per-dominator reporter lists (one node
/// per channel), the channel counts, and any structure flags.
#[allow(clippy::too_many_arguments)]
pub fn run_election(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    view: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    channels: u16,
    r_c: f64,
    dominator_of: &[usize],
    colors: &BTreeMap<usize, u32>,
    estimates: &BTreeMap<usize, (u64, bool)>,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (
    BTreeMap<usize, Vec<usize>>,
    BTreeMap<usize, u16>,
    Vec<FailFlag>,
    usize,
    usize,
    StageReport,
) {
    let n = topo.len();
    let mut f_v_of: BTreeMap<usize, u16> = BTreeMap::new();
    for (&d, &(est, _)) in estimates {
        f_v_of.insert(d, f_v_from_estimate(est, n_hat, consts.c1, channels));
    }

    // Per-node channel choice and greeting probability; the channel draw uses
    // the node's own stream for this stage.
    let mut active = vec![false; n];
    let mut channel = vec![1u16; n];
    let mut hello_p = vec![0.0; n];
    let mut node_color = vec![1u32; n];
    for v in 0..n {
        let d = dominator_of[v];
        node_color[v] = colors.get(&d).copied().unwrap_or(0).max(1);
        if v == d {
            continue;
        }
        let f = f_v_of.get(&d).copied().unwrap_or(0);
        if f == 0 {
            continue;
        }
        let (est, _) = estimates.get(&d).copied().unwrap_or((1, false));
        active[v] = true;
        let mut rng = sim::node_rng(sim::stage_seed(seed, 7), topo.id(v).0);
        channel[v] = rng.random_range(1..=f);
        hello_p[v] = (consts.lambda * f as f64 / est.max(1) as f64).min(0.5);
    }
    let tags: Vec<u32> = (0..n).map(|v| topo.id(dominator_of[v]).0).collect();
    let rounds = consts.rounds(consts.gamma, n_hat);
    let cfg = RulingConfig {
        active,
        radius: 2.0 * r_c,
        hello_p,
        ack_p: consts.ack_p,
        rounds,
        channel: channel.clone(),
        tag: tags,
        tdma: Some((node_color, consts.phi_cap)),
        clear: consts.clear,
    };
    let mut driver = RulingSetDriver::new(topo, view, cfg);
    let budget = rounds * consts.phi_cap as u64 + consts.phi_cap as u64 + 2;
    let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);

    let mut flags = Vec::new();
    let mut per_channel: BTreeMap<(usize, u16), Vec<usize>> = BTreeMap::new();
    for v in driver.joined() {
        per_channel.entry((dominator_of[v], channel[v])).or_default().push(v);
    }
    let mut reporters_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut clean = 0usize;
    let mut total = 0usize;
    for (&d, &f) in &f_v_of {
        if f == 0 {
            reporters_of.insert(d, Vec::new());
            continue;
        }
        total += 1;
        let mut reps = Vec::with_capacity(f as usize);
        let mut complete = true;
        let mut exact = true;
        for ch in 1..=f {
            match per_channel.get(&(d, ch)) {
                None => {
                    flags.push(FailFlag::EmptyElectionChannel);
                    complete = false;
                    exact = false;
                }
                Some(v) if v.len() == 1 => reps.push(v[0]),
                Some(v) => {
                    flags.push(FailFlag::MultiReporter);
                    exact = false;
                    let mut sorted = v.clone();
                    sorted.sort_by_key(|&x| topo.id(x));
                    reps.push(sorted[0]);
                }
            }
        }
        if exact {
            clean += 1;
        }
        reporters_of.insert(d, if complete { reps } else { Vec::new() });
    }
    flags.sort_by_key(|f| format!("{f:?}"));
    flags.dedup();
    (reporters_of, f_v_of, flags, clean, total, report)
}
