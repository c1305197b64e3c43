//! Data aggregation over the cluster structure: three procedures share the
//! five slots of every round. Followers deliver their data to per-channel
//! reporters with acknowledged random transmissions (slots 1-2), reporters
//! converge-cast partial aggregates up the heap tree deterministically
//! (slots 3-4), and dominators flood an aggregation/broadcast tree over the
//! backbone (slot 5), ending with an intra-cluster broadcast of the global
//! value.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{backoff_threshold, log_n, ProtocolConstants};
use crate::sim::{
    run_stage, tdma_gate, ContentionRecord, Driver, Observation, SimOptions, SlotObserver,
    StageReport, Trace, TraceLevel, WireMsg,
};
use crate::sinr::{Action, PowerMatrix, SinrParams};
use crate::structure::reporters::{tree_max_depth, tree_parent_channel, tree_tx_round};
use crate::structure::{FailFlag, StructureResult};
use crate::topology::Topology;

/// Aggregate functions with an associative-commutative merge and an identity.
/// Averages are carried as (sum, count) pairs merged componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateFunction {
    Sum,
    Max,
    Min,
    Count,
    Average,
}

impl AggregateFunction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sum" => Some(Self::Sum),
            "max" => Some(Self::Max),
            "min" => Some(Self::Min),
            "count" => Some(Self::Count),
            "average" | "avg" => Some(Self::Average),
            _ => None,
        }
    }

    pub fn identity(self) -> AggValue {
        match self {
            Self::Max => AggValue { a: i64::MIN, b: 0 },
            Self::Min => AggValue { a: i64::MAX, b: 0 },
            _ => AggValue { a: 0, b: 0 },
        }
    }

    pub fn leaf(self, input: i64) -> AggValue {
        match self {
            Self::Sum | Self::Max | Self::Min => AggValue { a: input, b: 0 },
            Self::Count => AggValue { a: 1, b: 0 },
            Self::Average => AggValue { a: input, b: 1 },
        }
    }

    pub fn combine(self, x: AggValue, y: AggValue) -> AggValue {
        match self {
            Self::Sum | Self::Count => AggValue { a: x.a + y.a, b: 0 },
            Self::Max => AggValue { a: x.a.max(y.a), b: 0 },
            Self::Min => AggValue { a: x.a.min(y.a), b: 0 },
            Self::Average => AggValue { a: x.a + y.a, b: x.b + y.b },
        }
    }

    /// Human-readable result.
    pub fn finalize(self, v: AggValue) -> f64 {
        match self {
            Self::Average => {
                if v.b == 0 {
                    0.0
                } else {
                    v.a as f64 / v.b as f64
                }
            }
            _ => v.a as f64,
        }
    }
}

/// Bounded-size partial aggregate payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggValue {
    pub a: i64,
    pub b: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggMsg {
    FData { dom: u32, src: u32, value: AggValue },
    FAck { dom: u32, target: u32 },
    Backoff { dom: u32 },
    TreeData { dom: u32, pos: u16, value: AggValue },
    Invite { id: u32 },
    Child { parent: u32, child: u32, value: AggValue },
    Global { value: AggValue },
    GlobalLocal { dom: u32, value: AggValue },
}

impl WireMsg for AggMsg {
    fn kind(&self) -> &'static str {
        match self {
            AggMsg::FData { .. } => "fdata",
            AggMsg::FAck { .. } => "fack",
            AggMsg::Backoff { .. } => "backoff",
            AggMsg::TreeData { .. } => "tree",
            AggMsg::Invite { .. } => "invite",
            AggMsg::Child { .. } => "child",
            AggMsg::Global { .. } => "global",
            AggMsg::GlobalLocal { .. } => "global_local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Dominator,
    Reporter { channel: u16 },
    Follower,
}

struct NodeSt {
    role: Role,
    dom_id: u32,
    cluster: usize,
    color: u32,
    f_v: u16,
    local_t: u64,
    // Follower state.
    p_u: f64,
    done: bool,
    chosen_ch: u16,
    sent_this_round: bool,
    backoff_heard: bool,
    // Reporter state: own input plus merged follower values.
    merged: AggValue,
    seen: Vec<u32>,
    ack_target: Option<u32>,
    child_left: Option<AggValue>,
    child_right: Option<AggValue>,
    // Dominator state.
    phase_count: u64,
    root_latest: Option<AggValue>,
    joined: bool,
    parent: Option<u32>,
    bb_children: BTreeMap<u32, AggValue>,
    has_global: bool,
    global: AggValue,
    fired_backoff: bool,
    // Every node.
    final_value: Option<AggValue>,
}

/// Milestone rounds measured from the run (physical rounds).
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AggregationMetrics {
    pub followers_done_round: u64,
    pub backbone_joined_round: u64,
    pub backbone_stable_round: u64,
    pub all_final_round: u64,
    pub rounds_total: u64,
    pub follower_transmissions: u64,
}

pub struct AggregationDriver {
    ids: Vec<u32>,
    st: Vec<NodeSt>,
    fun: AggregateFunction,
    phi: u32,
    gamma_rounds: u64,
    backoff_threshold: f64,
    lambda: f64,
    kappa_b: f64,
    sweep_period: u64,
    // Backbone windows in physical rounds.
    w_invite_end: u64,
    w_push_end: u64,
    w_bcast_end: u64,
    w_local_end: u64,
    initiator: usize,
    metrics: AggregationMetrics,
    done: bool,
}

impl AggregationDriver {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topo: &Topology,
        structure: &StructureResult,
        consts: &ProtocolConstants,
        n_hat: f64,
        delta_hat: u64,
        channels: u16,
        fun: AggregateFunction,
        inputs: &[i64],
        diameter_hint: u64,
    ) -> Self {
        let n = topo.len();
        let mut st: Vec<NodeSt> = Vec::with_capacity(n);
        for v in 0..n {
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
            st.push(NodeSt {
                role,
                dom_id: topo.id(c.dominator).0,
                cluster: ci,
                color: c.color.max(1),
                f_v: c.f_v.max(1),
                local_t: 0,
                p_u,
                done: false,
                chosen_ch: 1,
                sent_this_round: false,
                backoff_heard: false,
                merged: fun.leaf(inputs[v]),
                seen: Vec::new(),
                ack_target: None,
                child_left: None,
                child_right: None,
                phase_count: 0,
                root_latest: None,
                joined: false,
                parent: None,
                bb_children: BTreeMap::new(),
                has_global: false,
                global: fun.identity(),
                fired_backoff: false,
                final_value: None,
            });
        }
        let initiator = structure
            .clusters
            .iter()
            .map(|c| c.dominator)
            .min_by_key(|&d| topo.id(d))
            .unwrap_or(0);
        st[initiator].joined = true;
        let phi = consts.phi_cap;
        let gamma_rounds = consts.rounds(consts.gamma2, n_hat);
        let bb = (consts.c_backbone * (diameter_hint as f64 + log_n(n_hat))).ceil() as u64;
        let w_seg = bb.max(2) * phi as u64;
        // Follower delivery allowance before the broadcast window: ramp
        // phases plus throughput phases, doubled for slack.
        let f_hat =
            crate::constants::cluster_channels(delta_hat.max(2), n_hat, consts.c1, channels);
        let ramp = (delta_hat.max(2) as f64).log2().ceil();
        let through = delta_hat as f64 / (0.2 * f_hat as f64 * gamma_rounds as f64);
        let follower_phases = (2.0 * (ramp + through) + 4.0).ceil() as u64;
        let follower_window = follower_phases * (gamma_rounds + 1) * phi as u64;
        let w_invite_end = w_seg;
        let w_push_end = w_invite_end + w_seg + follower_window;
        let w_bcast_end = w_push_end + w_seg;
        let w_local_end = w_bcast_end + 2 * phi as u64;
        Self {
            ids: topo.nodes().iter().map(|nd| nd.id.0).collect(),
            st,
            fun,
            phi,
            gamma_rounds,
            backoff_threshold: backoff_threshold(consts.omega2, n_hat),
            lambda: consts.lambda,
            kappa_b: consts.kappa_b,
            sweep_period: tree_max_depth(channels.max(1)) as u64 + 1,
            w_invite_end,
            w_push_end,
            w_bcast_end,
            w_local_end,
            initiator,
            metrics: AggregationMetrics::default(),
            done: false,
        }
    }

    pub fn budget(&self) -> u64 {
        self.w_local_end + 2
    }

    pub fn metrics(&self) -> AggregationMetrics {
        self.metrics
    }

    /// Final value per node.
    pub fn final_values(&self) -> Vec<Option<AggValue>> {
        self.st.iter().map(|s| s.final_value).collect()
    }

    pub fn flags(&self) -> Vec<FailFlag> {
        let mut flags = Vec::new();
        if self.st.iter().any(|s| !s.done && matches!(s.role, Role::Follower)) {
            flags.push(FailFlag::FollowerUndelivered);
        }
        if self
            .st
            .iter()
            .any(|s| matches!(s.role, Role::Dominator) && (!s.joined || !s.has_global))
        {
            flags.push(FailFlag::BackboneIncomplete);
        }
        if self.st.iter().any(|s| s.final_value.is_none()) {
            flags.push(FailFlag::BudgetExhausted);
        }
        flags
    }

    /// Subtree aggregate a reporter currently reports upward.
    fn subtree_value(&self, node: usize) -> AggValue {
        let s = &self.st[node];
        let mut v = s.merged;
        if let Some(l) = s.child_left {
            v = self.fun.combine(v, l);
        }
        if let Some(r) = s.child_right {
            v = self.fun.combine(v, r);
        }
        v
    }

    /// Dominator's current cluster aggregate plus backbone children.
    fn backbone_value(&self, node: usize) -> AggValue {
        let s = &self.st[node];
        let mut v = s.merged;
        if let Some(r) = s.root_latest {
            v = self.fun.combine(v, r);
        }
        for child in s.bb_children.values() {
            v = self.fun.combine(v, *child);
        }
        v
    }
}

impl Driver for AggregationDriver {
    type Msg = AggMsg;

    fn label(&self) -> &'static str {
        "aggregation"
    }

    fn slots_per_round(&self) -> u8 {
        5
    }

    fn act(&mut self, node: usize, round: u64, slot: u8, rng: &mut ChaCha8Rng) -> Action<AggMsg> {
        let phi = self.phi;
        let gated = tdma_gate(self.st[node].color, round, phi);
        let my_id = self.ids[node];
        match slot {
            0 => {
                if !gated {
                    return Action::Idle;
                }
                let gamma = self.gamma_rounds;
                let threshold = self.backoff_threshold;
                let s = &mut self.st[node];
                let w = s.local_t % (gamma + 1);
                match s.role {
                    Role::Follower => {
                        if w == gamma {
                            if s.done {
                                Action::Idle
                            } else {
                                Action::Listen { channel: 1 }
                            }
                        } else if s.done {
                            Action::Idle
                        } else {
                            s.chosen_ch = rng.random_range(1..=s.f_v);
                            if rng.random::<f64>() < s.p_u {
                                s.sent_this_round = true;
                                Action::Transmit {
                                    channel: s.chosen_ch,
                                    msg: AggMsg::FData { dom: s.dom_id, src: my_id, value: s.merged },
                                }
                            } else {
                                Action::Idle
                            }
                        }
                    }
                    Role::Reporter { channel } => {
                        if w == gamma {
                            Action::Idle
                        } else {
                            s.ack_target = None;
                            Action::Listen { channel }
                        }
                    }
                    Role::Dominator => {
                        if w == gamma {
                            let fire = (s.phase_count as f64) >= threshold;
                            s.phase_count = 0;
                            if fire {
                                s.fired_backoff = true;
                                Action::Transmit { channel: 1, msg: AggMsg::Backoff { dom: my_id } }
                            } else {
                                Action::Idle
                            }
                        } else {
                            Action::Listen { channel: 1 }
                        }
                    }
                }
            }
            1 => {
                if !gated {
                    return Action::Idle;
                }
                let s = &mut self.st[node];
                match s.role {
                    Role::Reporter { channel } => {
                        if let Some(target) = s.ack_target.take() {
                            Action::Transmit { channel, msg: AggMsg::FAck { dom: s.dom_id, target } }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Follower if !s.done && s.sent_this_round => {
                        Action::Listen { channel: s.chosen_ch }
                    }
                    _ => Action::Idle,
                }
            }
            2 | 3 => {
                if !gated {
                    return Action::Idle;
                }
                let sweep = self.sweep_period;
                let sub = self.subtree_value(node);
                let s = &self.st[node];
                let t = s.local_t % sweep;
                match s.role {
                    Role::Reporter { channel } => {
                        let pos = channel;
                        let f = s.f_v;
                        let my_tx = tree_tx_round(pos, f);
                        let odd = pos % 2 == 1;
                        if t == my_tx && ((slot == 2 && odd) || (slot == 3 && !odd)) {
                            Action::Transmit {
                                channel: tree_parent_channel(pos),
                                msg: AggMsg::TreeData { dom: s.dom_id, pos, value: sub },
                            }
                        } else if t + 1 == my_tx {
                            Action::Listen { channel: pos }
                        } else {
                            Action::Idle
                        }
                    }
                    Role::Dominator => {
                        let root_tx = tree_tx_round(1, s.f_v);
                        if t == root_tx && slot == 2 {
                            Action::Listen { channel: 1 }
                        } else {
                            Action::Idle
                        }
                    }
                    _ => Action::Idle,
                }
            }
            _ => {
                let (w_invite, w_push, w_bcast, w_local) =
                    (self.w_invite_end, self.w_push_end, self.w_bcast_end, self.w_local_end);
                let kappa_b = self.kappa_b;
                let bbv = self.backbone_value(node);
                let is_initiator = node == self.initiator;
                let s = &mut self.st[node];
                if !matches!(s.role, Role::Dominator) {
                    if round >= w_bcast && round < w_local && s.final_value.is_none() {
                        return Action::Listen { channel: 1 };
                    }
                    return Action::Idle;
                }
                if round < w_push {
                    if !s.joined {
                        return Action::Listen { channel: 1 };
                    }
                    let inviting = round < w_invite;
                    if gated && rng.random::<f64>() < kappa_b {
                        if inviting || s.parent.is_none() {
                            Action::Transmit { channel: 1, msg: AggMsg::Invite { id: my_id } }
                        } else {
                            Action::Transmit {
                                channel: 1,
                                msg: AggMsg::Child {
                                    parent: s.parent.unwrap(),
                                    child: my_id,
                                    value: bbv,
                                },
                            }
                        }
                    } else {
                        Action::Listen { channel: 1 }
                    }
                } else if round < w_bcast {
                    if is_initiator && !s.has_global {
                        s.has_global = true;
                        s.global = bbv;
                    }
                    if s.has_global {
                        if gated && rng.random::<f64>() < kappa_b {
                            Action::Transmit { channel: 1, msg: AggMsg::Global { value: s.global } }
                        } else {
                            Action::Idle
                        }
                    } else {
                        Action::Listen { channel: 1 }
                    }
                } else if round < w_local {
                    if s.has_global {
                        s.final_value = Some(s.global);
                        if gated {
                            return Action::Transmit {
                                channel: 1,
                                msg: AggMsg::GlobalLocal { dom: my_id, value: s.global },
                            };
                        }
                    }
                    Action::Idle
                } else {
                    Action::Idle
                }
            }
        }
    }

    fn observe(
        &mut self,
        node: usize,
        round: u64,
        slot: u8,
        obs: &Observation<AggMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        let Some(r) = &obs.reception else { return };
        let my_id = self.ids[node];
        let fun = self.fun;
        match slot {
            0 => {
                let s = &mut self.st[node];
                match (&s.role, &r.msg) {
                    (Role::Reporter { .. }, AggMsg::FData { dom, src, value }) => {
                        if *dom == s.dom_id {
                            if !s.seen.contains(src) {
                                s.seen.push(*src);
                                s.merged = fun.combine(s.merged, *value);
                            }
                            s.ack_target = Some(*src);
                        }
                    }
                    (Role::Dominator, AggMsg::FData { dom, .. }) => {
                        if *dom == my_id {
                            s.phase_count += 1;
                        }
                    }
                    (Role::Follower, AggMsg::Backoff { dom }) => {
                        if *dom == s.dom_id {
                            s.backoff_heard = true;
                        }
                    }
                    _ => {}
                }
            }
            1 => {
                let s = &mut self.st[node];
                if let AggMsg::FAck { dom, target } = r.msg {
                    if matches!(s.role, Role::Follower) && dom == s.dom_id && target == my_id {
                        s.done = true;
                    }
                }
            }
            2 | 3 => {
                let s = &mut self.st[node];
                if let AggMsg::TreeData { dom, pos, value } = r.msg {
                    if dom != s.dom_id {
                        return;
                    }
                    match s.role {
                        Role::Dominator => {
                            if pos == 1 {
                                s.root_latest = Some(value);
                            }
                        }
                        Role::Reporter { channel } => {
                            if pos == channel * 2 {
                                s.child_left = Some(value);
                            } else if pos == channel * 2 + 1 {
                                s.child_right = Some(value);
                            }
                        }
                        _ => {}
                    }
                }
            }
            _ => {
                let s = &mut self.st[node];
                match &r.msg {
                    AggMsg::Invite { id } => {
                        if matches!(s.role, Role::Dominator) && !s.joined {
                            s.joined = true;
                            s.parent = Some(*id);
                            self.metrics.backbone_joined_round = round;
                        }
                    }
                    AggMsg::Child { parent, child, value } => {
                        if matches!(s.role, Role::Dominator) {
                            if !s.joined {
                                s.joined = true;
                                s.parent = Some(*child);
                                self.metrics.backbone_joined_round = round;
                            }
                            if *parent == my_id {
                                let prev = s.bb_children.insert(*child, *value);
                                if prev != Some(*value) {
                                    self.metrics.backbone_stable_round = round;
                                }
                            }
                        }
                    }
                    AggMsg::Global { value } => {
                        if matches!(s.role, Role::Dominator) && !s.has_global {
                            s.has_global = true;
                            s.global = *value;
                        }
                    }
                    AggMsg::GlobalLocal { dom, value } => {
                        if !matches!(s.role, Role::Dominator)
                            && *dom == s.dom_id
                            && s.final_value.is_none()
                        {
                            s.final_value = Some(*value);
                            self.metrics.all_final_round = round;
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    fn end_round(&mut self, round: u64, trace: &mut Trace) {
        let phi = self.phi;
        let gamma = self.gamma_rounds;
        if trace.level != TraceLevel::Off {
            for (i, s) in self.st.iter_mut().enumerate() {
            if s.fired_backoff {
                s.fired_backoff = false;
                trace.milestone(round, self.ids[i], "backoff", 0);
            }
        }
        let mut per_cluster: BTreeMap<usize, (f64, u32, u32, u32, u16)> = BTreeMap::new();
            for s in &self.st {
                if !matches!(s.role, Role::Follower) || s.done {
                    continue;
                }
                if !tdma_gate(s.color, round, phi) {
                    continue;
                }
                let e = per_cluster.entry(s.cluster).or_insert((0.0, 0, 0, s.dom_id, s.f_v));
                e.0 += s.p_u;
                e.1 += 1;
                if s.sent_this_round {
                    e.2 += 1;
                }
            }
            for (_ci, (p_sum, active, txs, dom, f_v)) in per_cluster {
                trace.contention(ContentionRecord { round, dominator: dom, p_sum, f_v, active, txs });
            }
        }
        for s in &mut self.st {
            if !tdma_gate(s.color, round, phi) {
                continue;
            }
            if matches!(s.role, Role::Follower) && !s.done {
                if s.sent_this_round {
                    self.metrics.follower_transmissions += 1;
                }
                if s.local_t % (gamma + 1) == gamma {
                    if !s.backoff_heard {
                        s.p_u = (s.p_u * 2.0).min(self.lambda);
                    }
                    s.backoff_heard = false;
                }
            }
            s.sent_this_round = false;
            s.local_t += 1;
        }
        let followers_left =
            self.st.iter().any(|s| matches!(s.role, Role::Follower) && !s.done);
        if !followers_left && self.metrics.followers_done_round == 0 {
            self.metrics.followers_done_round = round;
        }
        self.metrics.rounds_total = round + 1;
        if round + 1 >= self.w_local_end || self.st.iter().all(|s| s.final_value.is_some()) {
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

/// Outcome of a full aggregation run.
#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    pub values: Vec<Option<AggValue>>,
    pub metrics: AggregationMetrics,
    pub flags: Vec<FailFlag>,
    pub report: StageReport,
}

/// Run the aggregation stage over a built structure.
#[allow(clippy::too_many_arguments)]
pub fn run_aggregation(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    structure: &StructureResult,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    channels: u16,
    fun: AggregateFunction,
    inputs: &[i64],
    diameter_hint: u64,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> AggregateOutcome {
    let mut driver = AggregationDriver::new(
        topo,
        structure,
        consts,
        n_hat,
        delta_hat,
        channels,
        fun,
        inputs,
        diameter_hint,
    );
    let budget = driver.budget();
    let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);
    AggregateOutcome {
        values: driver.final_values(),
        metrics: driver.metrics(),
        flags: driver.flags(),
        report,
    }
}

/// Counts reporter-tree transmission slots per cluster (slot-exactness
/// checks).
#[derive(Default)]
pub struct SweepObserver {
    /// (dominator id, sweep slots used) for the first full sweep observed
    /// after followers quiesced; callers reset between measurements.
    pub tree_tx_slots: BTreeMap<u32, u64>,
}

impl SlotObserver<AggMsg> for SweepObserver {
    fn on_slot(
        &mut self,
        _round: u64,
        slot: u8,
        frame: &crate::sinr::SlotFrame<AggMsg>,
        _outcome: &crate::sinr::SlotOutcome<AggMsg>,
    ) {
        if slot != 2 && slot != 3 {
            return;
        }
        let mut doms_this_slot: Vec<u32> = Vec::new();
        for a in &frame.actions {
            if let Action::Transmit { msg: AggMsg::TreeData { dom, .. }, .. } = a {
                if !doms_this_slot.contains(dom) {
                    doms_this_slot.push(*dom);
                }
            }
        }
        for dom in doms_this_slot {
            *self.tree_tx_slots.entry(dom).or_insert(0) += 1;
        }
    }
}
