//! Node coloring over the aggregation structure. Four procedures share the
//! four slots of every round, each cluster advancing through them on its own
//! locally computed schedule: followers deliver their ids to reporters
//! (slot 1, send/ack alternating by round parity), subtree sizes flow up the
//! reporter tree (slot 2), color ranges flow back down by the inverse
//! schedule (slot 3), and reporters announce follower colors one per round on
//! their own channel (slot 4). A cluster of color `i` uses the color sequence
//! `k * phi + i`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::{backoff_threshold, ProtocolConstants};
use crate::sim::{
    run_stage, tdma_gate, Driver, Observation, SimOptions, StageReport, Trace, WireMsg,
};
use crate::sinr::{Action, PowerMatrix, SinrParams};
use crate::structure::reporters::{tree_max_depth, tree_parent_channel, tree_tx_round};
use crate::structure::{FailFlag, StructureResult};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq)]
pub enum ColorMsg {
    IdData { dom: u32, src: u32 },
    IdAck { dom: u32, target: u32 },
    Backoff { dom: u32 },
    Count { dom: u32, pos: u16, count: u64 },
    Range { dom: u32, pos: u16, lo: u64, hi: u64 },
    Assign { dom: u32, target: u32, k: u64 },
}

impl WireMsg for ColorMsg {
    fn kind(&self) -> &'static str {
        match self {
            ColorMsg::IdData { .. } => "id_data",
            ColorMsg::IdAck { .. } => "id_ack",
            ColorMsg::Backoff { .. } => "backoff",
            ColorMsg::Count { .. } => "count",
            ColorMsg::Range { .. } => "range",
            ColorMsg::Assign { .. } => "assign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Dominator,
    Reporter { channel: u16 },
    Follower,
}

/// Per-cluster procedure windows in local (gated) rounds, computable by every
/// member from the size estimate and the public constants.
#[derive(Debug, Clone, Copy)]
struct Windows {
    w1_end: u64,
    w2_end: u64,
    w3_end: u64,
    w4_end: u64,
    sweep_len: u64,
}

fn windows(est: u64, f_v: u16, gamma_rounds: u64) -> Windows {
    let f = f_v.max(1);
    let ramp = (est.max(2) as f64).log2().ceil();
    let through = est as f64 / (0.2 * f as f64 * gamma_rounds as f64);
    let phases = (2.0 * (ramp + through) + 4.0).ceil() as u64;
    // Procedure 1 alternates send and ack rounds, doubling the phase length.
    let w1 = phases * (gamma_rounds + 1) * 2;
    let sweep_len = 2 * (tree_max_depth(f) as u64 + 1);
    let w2 = 2 * sweep_len;
    let w3 = 2 * sweep_len;
    let w4 = 2 * est + 4;
    Windows { w1_end: w1, w2_end: w1 + w2, w3_end: w1 + w2 + w3, w4_end: w1 + w2 + w3 + w4, sweep_len }
}

struct NodeSt {
    role: Role,
    dom_id: u32,
    color: u32,
    f_v: u16,
    local_t: u64,
    win: Windows,
    // Procedure 1 (follower side).
    p_u: f64,
    bound: bool,
    bound_ch: u16,
    chosen_ch: u16,
    sent_this_pair: bool,
    backoff_heard: bool,
    // Procedure 1 (reporter side).
    followers: Vec<u32>,
    ack_target: Option<u32>,
    // Procedure 1 (dominator side).
    phase_count: u64,
    // Procedure 2.
    count_left: u64,
    count_right: u64,
    root_count: u64,
    // Procedure 3.
    k_lo: Option<u64>,
    k_hi: u64,
    // Procedure 4.
    announced: u64,
    my_k: Option<u64>,
    assigned_k: Option<u64>,
}

/// Final coloring and the range bookkeeping needed by the verification
/// oracles.
#[derive(Debug, Clone, Serialize)]
pub struct ColoringOutcome {
    /// Realized color per node (`k * phi + cluster_color`).
    pub colors: Vec<Option<u64>>,
    /// The `k` index per node.
    pub k_of: Vec<Option<u64>>,
    /// Range `[lo, hi]` handed to each reporter.
    pub ranges: Vec<Option<(u64, u64)>>,
    pub rounds_total: u64,
    pub flags: Vec<FailFlag>,
}

pub struct ColoringDriver {
    ids: Vec<u32>,
    st: Vec<NodeSt>,
    phi: u32,
    gamma_rounds: u64,
    backoff_threshold: f64,
    lambda: f64,
    rounds_total: u64,
    done: bool,
}

impl ColoringDriver {
    pub fn new(
        topo: &Topology,
        structure: &StructureResult,
        consts: &ProtocolConstants,
        n_hat: f64,
    ) -> Self {
        let n = topo.len();
        let gamma_rounds = consts.rounds(consts.gamma2, n_hat);
        let st = (0..n)
            .map(|v| {
                let ci = structure.cluster_of[v];
                let c = &structure.clusters[ci];
                let role = if c.dominator == v {
                    Role::Dominator
                } else if let Some(ch) = c.reporters.iter().position(|&r| r == v) {
                    Role::Reporter { channel: ch as u16 + 1 }
                } else {
                    Role::Follower
                };
                let p_u = (consts.lambda * c.f_v.max(1) as f64 / c.size_estimate.max(1) as f64)
                    .min(consts.lambda);
                NodeSt {
                    role,
                    dom_id: topo.id(c.dominator).0,
                    color: c.color.max(1),
                    f_v: c.f_v,
                    local_t: 0,
                    win: windows(c.size_estimate, c.f_v, gamma_rounds),
                    p_u,
                    bound: false,
                    bound_ch: 1,
                    chosen_ch: 1,
                    sent_this_pair: false,
                    backoff_heard: false,
                    followers: Vec::new(),
                    ack_target: None,
                    phase_count: 0,
                    count_left: 0,
                    count_right: 0,
                    root_count: 0,
                    k_lo: None,
                    k_hi: 0,
                    announced: 0,
                    my_k: None,
                    assigned_k: None,
                }
            })
            .collect();
        Self {
            ids: topo.nodes().iter().map(|nd| nd.id.0).collect(),
            st,
            phi: consts.phi_cap,
            gamma_rounds,
            backoff_threshold: backoff_threshold(consts.omega2, n_hat),
            lambda: consts.lambda,
            rounds_total: 0,
            done: false,
        }
    }

    pub fn budget(&self) -> u64 {
        let max_local = self.st.iter().map(|s| s.win.w4_end).max().unwrap_or(1);
        max_local * self.phi as u64 + self.phi as u64 + 2
    }

    /// Subtree size a reporter currently reports upward: itself, its bound
    /// followers and its children's latest counts.
    fn subtree_count(&self, node: usize) -> u64 {
        let s = &self.st[node];
        1 + s.followers.len() as u64 + s.count_left + s.count_right
    }

    pub fn outcome(&self, topo: &Topology) -> ColoringOutcome {
        let phi = self.phi as u64;
        let mut colors = vec![None; self.st.len()];
        let mut k_of = vec![None; self.st.len()];
        let mut ranges = vec![None; self.st.len()];
        let mut flags = Vec::new();
        for (v, s) in self.st.iter().enumerate() {
            let k = match s.role {
                Role::Dominator => Some(0),
                Role::Reporter { .. } => s.my_k,
                Role::Follower => s.assigned_k,
            };
            k_of[v] = k;
            colors[v] = k.map(|k| k * phi + s.color as u64);
            if let (Role::Reporter { .. }, Some(lo)) = (s.role, s.k_lo) {
                ranges[v] = Some((lo, s.k_hi));
            }
            if colors[v].is_none() {
                flags.push(FailFlag::NodeUncolored);
            }
            let _ = topo;
        }
        flags.dedup();
        ColoringOutcome { colors, k_of, ranges, rounds_total: self.rounds_total, flags }
    }
}

impl Driver for ColoringDriver {
    type Msg = ColorMsg;

    fn label(&self) -> &'static str {
        "coloring"
    }

    fn slots_per_round(&self) -> u8 {
        4
    }

    fn act(&mut self, node: usize, round: u64, slot: u8, rng: &mut ChaCha8Rng) -> Action<ColorMsg> {
        let phi = self.phi;
        if !tdma_gate(self.st[node].color, round, phi) {
            return Action::Idle;
        }
        let gamma = self.gamma_rounds;
        let threshold = self.backoff_threshold;
        let my_id = self.ids[node];
        let sub_count = self.subtree_count(node);
        let s = &mut self.st[node];
        let t = s.local_t;
        let win = s.win;
        if s.f_v == 0 {
            // Solo cluster: the dominator takes k = 0 and is done.
            return Action::Idle;
        }
        match slot {
            0 => {
                if t >= win.w1_end {
                    return Action::Idle;
                }
                let pair = t / 2;
                let parity = t % 2;
                let w = pair % (gamma + 1);
                match s.role {
                    Role::Follower => {
                        if s.bound {
                            return Action::Idle;
                        }
                        if w == gamma {
                            if parity == 0 {
                                Action::Listen { channel: 1 }
                            } else {
                                Action::Idle
                            }
                        } else if parity == 0 {
                            s.chosen_ch = rng.random_range(1..=s.f_v);
                            if rng.random::<f64>() < s.p_u {
                                s.sent_this_pair = true;
                                Action::Transmit {
                                    channel: s.chosen_ch,
                                    msg: ColorMsg::IdData { dom: s.dom_id, src: my_id },
                                }
                            } else {
                                s.sent_this_pair = false;
                                Action::Idle
                            }
                        } else if s.sent_this_pair {
                            Action::Listen { channel: s.chosen_ch }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Reporter { channel } => {
                        if w == gamma {
                            Action::Idle
                        } else if parity == 0 {
                            s.ack_target = None;
                            Action::Listen { channel }
                        } else if let Some(target) = s.ack_target.take() {
                            Action::Transmit {
                                channel,
                                msg: ColorMsg::IdAck { dom: s.dom_id, target },
                            }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Dominator => {
                        if w == gamma {
                            if parity == 0 {
                                let fire = (s.phase_count as f64) >= threshold;
                                s.phase_count = 0;
                                if fire {
                                    return Action::Transmit {
                                        channel: 1,
                                        msg: ColorMsg::Backoff { dom: my_id },
                                    };
                                }
                            }
                            Action::Idle
                        } else if parity == 0 {
                            Action::Listen { channel: 1 }
                        } else {
                            Action::Idle
                        }
                    }
                }
            }
            1 => {
                if t < win.w1_end || t >= win.w2_end {
                    return Action::Idle;
                }
                let t2 = t - win.w1_end;
                let sweep_round = t2 % win.sweep_len;
                let step = sweep_round / 2;
                let parity = sweep_round % 2;
                match s.role {
                    Role::Reporter { channel } => {
                        let pos = channel;
                        let my_tx = tree_tx_round(pos, s.f_v);
                        let want_parity = u64::from(pos % 2 == 0);
                        if step == my_tx && parity == want_parity {
                            Action::Transmit {
                                channel: tree_parent_channel(pos),
                                msg: ColorMsg::Count { dom: s.dom_id, pos, count: sub_count },
                            }
                        } else if step + 1 == my_tx {
                            Action::Listen { channel: pos }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Dominator => {
                        let root_tx = tree_tx_round(1, s.f_v);
                        if step == root_tx {
                            Action::Listen { channel: 1 }
                        } else {
                            Action::Idle
                        }
                    }
                    _ => Action::Idle,
                }
            }
            2 => {
                if t < win.w2_end || t >= win.w3_end {
                    return Action::Idle;
                }
                let t3 = t - win.w2_end;
                let sweep_round = t3 % win.sweep_len;
                let step = sweep_round / 2;
                let parity = sweep_round % 2;
                match s.role {
                    Role::Dominator => {
                        // Hand position 1 the whole remaining range.
                        if step == 0 && parity == 0 && s.root_count > 0 {
                            Action::Transmit {
                                channel: 1,
                                msg: ColorMsg::Range {
                                    dom: s.dom_id,
                                    pos: 1,
                                    lo: 1,
                                    hi: s.root_count,
                                },
                            }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Reporter { channel } => {
                        let pos = channel;
                        let depth = tree_depth_u64(pos);
                        if step == depth && s.k_lo.is_none() {
                            // My range arrives on the parent's channel now.
                            return Action::Listen { channel: tree_parent_channel(pos) };
                        }
                        if step == depth + 1 && s.k_lo.is_some() {
                            // Forward the children's shares, odd child first.
                            let lo = s.k_lo.unwrap();
                            let own_and_followers = 1 + s.followers.len() as u64;
                            let left_pos = pos * 2 + 1; // odd child
                            let right_pos = pos * 2; // even child
                            let left_size = if left_pos <= s.f_v { s.count_lookup(left_pos) } else { 0 };
                            let right_size =
                                if right_pos <= s.f_v { s.count_lookup(right_pos) } else { 0 };
                            let left_lo = lo + own_and_followers;
                            let right_lo = left_lo + left_size;
                            if parity == 0 && left_size > 0 {
                                return Action::Transmit {
                                    channel: pos,
                                    msg: ColorMsg::Range {
                                        dom: s.dom_id,
                                        pos: left_pos,
                                        lo: left_lo,
                                        hi: left_lo + left_size - 1,
                                    },
                                };
                            }
                            if parity == 1 && right_size > 0 {
                                return Action::Transmit {
                                    channel: pos,
                                    msg: ColorMsg::Range {
                                        dom: s.dom_id,
                                        pos: right_pos,
                                        lo: right_lo,
                                        hi: right_lo + right_size - 1,
                                    },
                                };
                            }
                            Action::Idle
                        } else {
                            Action::Idle
                        }
                    }
                    _ => Action::Idle,
                }
            }
            _ => {
                if t < win.w3_end || t >= win.w4_end {
                    return Action::Idle;
                }
                match s.role {
                    Role::Reporter { channel } => {
                        let i = s.announced as usize;
                        if s.my_k.is_some() && i < s.followers.len() {
                            let target = s.followers[i];
                            let k = s.k_lo.unwrap() + 1 + s.announced;
                            s.announced += 1;
                            Action::Transmit {
                                channel,
                                msg: ColorMsg::Assign { dom: s.dom_id, target, k },
                            }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Follower => {
                        if s.bound && s.assigned_k.is_none() {
                            Action::Listen { channel: s.bound_ch }
                        } else {
                            Action::Idle
                        }
                    }
                    _ => Action::Idle,
                }
            }
        }
    }

    fn observe(
        &mut self,
        node: usize,
        _round: u64,
        slot: u8,
        obs: &Observation<ColorMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        let Some(r) = &obs.reception else { return };
        let my_id = self.ids[node];
        let s = &mut self.st[node];
        match slot {
            0 => match (&s.role, &r.msg) {
                (Role::Reporter { .. }, ColorMsg::IdData { dom, src }) => {
                    if *dom == s.dom_id {
                        if !s.followers.contains(src) {
                            // Ascending-id order for deterministic
                            // announcements.
                            let pos = s.followers.partition_point(|&x| x < *src);
                            s.followers.insert(pos, *src);
                        }
                        s.ack_target = Some(*src);
                    }
                }
                (Role::Dominator, ColorMsg::IdData { dom, .. }) => {
                    if *dom == my_id {
                        s.phase_count += 1;
                    }
                }
                (Role::Follower, ColorMsg::IdAck { dom, target }) => {
                    if *dom == s.dom_id && *target == my_id {
                        s.bound = true;
                        s.bound_ch = s.chosen_ch;
                    }
                }
                (Role::Follower, ColorMsg::Backoff { dom }) => {
                    if *dom == s.dom_id {
                        s.backoff_heard = true;
                    }
                }
                _ => {}
            },
            1 => {
                if let ColorMsg::Count { dom, pos, count } = r.msg {
                    if dom != s.dom_id {
                        return;
                    }
                    match s.role {
                        Role::Dominator => {
                            if pos == 1 {
                                s.root_count = count;
                            }
                        }
                        Role::Reporter { channel } => {
                            if pos == channel * 2 {
                                s.count_right = count;
                            } else if pos == channel * 2 + 1 {
                                s.count_left = count;
                            }
                        }
                        _ => {}
                    }
                }
            }
            2 => {
                if let ColorMsg::Range { dom, pos, lo, hi } = r.msg {
                    if dom != s.dom_id {
                        return;
                    }
                    if let Role::Reporter { channel } = s.role {
                        if pos == channel && s.k_lo.is_none() {
                            s.k_lo = Some(lo);
                            s.k_hi = hi;
                            s.my_k = Some(lo);
                        }
                    }
                }
            }
            _ => {
                if let ColorMsg::Assign { dom, target, k } = r.msg {
                    if matches!(s.role, Role::Follower)
                        && dom == s.dom_id
                        && target == my_id
                        && s.assigned_k.is_none()
                    {
                        s.assigned_k = Some(k);
                    }
                }
            }
        }
    }

    fn end_round(&mut self, round: u64, _trace: &mut Trace) {
        let phi = self.phi;
        let gamma = self.gamma_rounds;
        for s in &mut self.st {
            if !tdma_gate(s.color, round, phi) {
                continue;
            }
            if matches!(s.role, Role::Follower) && !s.bound && s.local_t < s.win.w1_end {
                let pair = s.local_t / 2;
                let parity = s.local_t % 2;
                if parity == 1 && pair % (gamma + 1) == gamma {
                    if !s.backoff_heard {
                        s.p_u = (s.p_u * 2.0).min(self.lambda);
                    }
                    s.backoff_heard = false;
                }
            }
            s.sent_this_pair &= s.local_t % 2 == 0;
            s.local_t += 1;
        }
        self.rounds_total = round + 1;
        let all_done = self.st.iter().all(|s| match s.role {
            Role::Dominator => true,
            Role::Reporter { .. } => s.my_k.is_some() && s.announced as usize >= s.followers.len(),
            Role::Follower => s.assigned_k.is_some(),
        });
        let budget_spent = self.st.iter().all(|s| s.local_t >= s.win.w4_end);
        if all_done || budget_spent {
            self.done = true;
        }
    }

    fn is_halted(&self, _node: usize) -> bool {
        self.done
    }

    fn finished(&self) -> bool {
        self.done
    }
}

fn tree_depth_u64(pos: u16) -> u64 {
    (pos as f64).log2().floor() as u64
}

impl NodeSt {
    fn count_lookup(&self, child_pos: u16) -> u64 {
        if let Role::Reporter { channel } = self.role {
            if child_pos == channel * 2 {
                return self.count_right;
            }
            if child_pos == channel * 2 + 1 {
                return self.count_left;
            }
        }
        0
    }
}

/// Run the node-coloring stage over a built structure.
#[allow(clippy::too_many_arguments)]
pub fn run_coloring(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    structure: &StructureResult,
    consts: &ProtocolConstants,
    n_hat: f64,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (ColoringOutcome, StageReport) {
    let mut driver = ColoringDriver::new(topo, structure, consts, n_hat);
    let budget = driver.budget();
    let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);
    (driver.outcome(topo), report)
}
