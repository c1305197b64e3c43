//! Cluster-size approximation. The general path counts dominatee pings under
//! geometrically doubling probabilities on the first channel; the
//! small-instance path spreads dominatees over all channels, elects a leader
//! per channel, sizes each channel in parallel and aggregates the per-channel
//! counts over a binary tree of channel positions (with takeover past empty
//! channels), finishing with a one-round broadcast.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constants::{csa_threshold, log_n, ProtocolConstants};
use crate::sim::{run_stage, tdma_gate, Driver, Observation, SimOptions, StageReport, Trace, WireMsg};
use crate::sinr::{clear_reception_with, Action, ClearPolicy, PowerMatrix, SinrParams};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq)]
pub enum CsaMsg {
    Ping { dom: u32 },
    Term { dom: u32, est: u64 },
    Hello { id: u32, dom: u32 },
    HelloAck { target: u32, dom: u32 },
    In { id: u32, dom: u32 },
    ChPing { dom: u32, ch: u16 },
    ChTerm { dom: u32, ch: u16, est: u64 },
    Sub { dom: u32, pos: u16, value: u64 },
    SubAck { dom: u32, pos: u16 },
    Final { dom: u32, est: u64 },
}

impl WireMsg for CsaMsg {
    fn kind(&self) -> &'static str {
        match self {
            CsaMsg::Ping { .. } => "ping",
            CsaMsg::Term { .. } => "term",
            CsaMsg::Hello { .. } => "hello",
            CsaMsg::HelloAck { .. } => "hello_ack",
            CsaMsg::In { .. } => "in",
            CsaMsg::ChPing { .. } => "ch_ping",
            CsaMsg::ChTerm { .. } => "ch_term",
            CsaMsg::Sub { .. } => "sub",
            CsaMsg::SubAck { .. } => "sub_ack",
            CsaMsg::Final { .. } => "final",
        }
    }
}

fn estimate_for_phase(delta_hat: u64, phase: u32) -> u64 {
    ((delta_hat as f64) * (2f64).powi(1 - phase as i32)).ceil().max(1.0) as u64
}

fn phase_count(delta_hat: u64) -> u32 {
    ((delta_hat.max(1) as f64).log2().ceil() as u32).max(1)
}

// ---------------------------------------------------------------------------
// General path.
// ---------------------------------------------------------------------------

struct LargeNode {
    is_dominator: bool,
    dom_id: u32,
    color: u32,
    local_t: u64,
    done: bool,
    est: u64,
    warning: bool,
    count: u64,
    got_any: u64,
}

pub struct CsaLargeDriver {
    ids: Vec<u32>,
    st: Vec<LargeNode>,
    t1: u64,
    phases: u32,
    delta_hat: u64,
    lambda: f64,
    threshold: f64,
    phi: u32,
}

impl CsaLargeDriver {
    pub fn new(
        topo: &Topology,
        consts: &ProtocolConstants,
        n_hat: f64,
        delta_hat: u64,
        dominator_of: &[usize],
        colors: &BTreeMap<usize, u32>,
    ) -> Self {
        let st = (0..topo.len())
            .map(|i| {
                let d = dominator_of[i];
                LargeNode {
                    is_dominator: d == i,
                    dom_id: topo.id(d).0,
                    color: colors.get(&d).copied().unwrap_or(0).max(1),
                    local_t: 0,
                    done: false,
                    est: 1,
                    warning: false,
                    count: 0,
                    got_any: 0,
                }
            })
            .collect();
        Self {
            ids: topo.nodes().iter().map(|n| n.id.0).collect(),
            st,
            t1: consts.rounds(consts.gamma1, n_hat),
            phases: phase_count(delta_hat),
            delta_hat,
            lambda: consts.lambda,
            threshold: csa_threshold(consts.omega1, n_hat),
            phi: consts.phi_cap,
        }
    }

    pub fn total_gated_rounds(&self) -> u64 {
        (self.t1 + 1) * self.phases as u64
    }

    /// (estimate, warning) per dominator node index.
    pub fn estimates(&self) -> BTreeMap<usize, (u64, bool)> {
        (0..self.st.len())
            .filter(|&i| self.st[i].is_dominator)
            .map(|i| (i, (self.st[i].est, self.st[i].warning)))
            .collect()
    }
}

impl Driver for CsaLargeDriver {
    type Msg = CsaMsg;

    fn label(&self) -> &'static str {
        "csa_large"
    }

    fn slots_per_round(&self) -> u8 {
        1
    }

    fn act(&mut self, node: usize, round: u64, _slot: u8, rng: &mut ChaCha8Rng) -> Action<CsaMsg> {
        let (t1, phases, delta_hat, lambda, threshold, phi) =
            (self.t1, self.phases, self.delta_hat, self.lambda, self.threshold, self.phi);
        let my_id = self.ids[node];
        let s = &mut self.st[node];
        if s.done || !tdma_gate(s.color, round, phi) {
            return Action::Idle;
        }
        let phase_len = t1 + 1;
        let w = s.local_t % phase_len;
        let j = (s.local_t / phase_len) as u32 + 1;
        if s.is_dominator {
            if w < t1 {
                Action::Listen { channel: 1 }
            } else {
                let triggered = (s.count as f64) >= threshold;
                let last_phase = j >= phases;
                if triggered || last_phase {
                    let est = if triggered {
                        estimate_for_phase(delta_hat, j)
                    } else if s.got_any == 0 {
                        1
                    } else {
                        s.warning = true;
                        estimate_for_phase(delta_hat, j)
                    };
                    s.est = est;
                    s.done = true;
                    Action::Transmit { channel: 1, msg: CsaMsg::Term { dom: my_id, est } }
                } else {
                    Action::Idle
                }
            }
        } else if w < t1 {
            let p = (lambda / delta_hat as f64) * (2f64).powi(j as i32 - 1);
            if rng.random::<f64>() < p.min(lambda) {
                Action::Transmit { channel: 1, msg: CsaMsg::Ping { dom: s.dom_id } }
            } else {
                Action::Idle
            }
        } else {
            Action::Listen { channel: 1 }
        }
    }

    fn observe(
        &mut self,
        node: usize,
        _round: u64,
        _slot: u8,
        obs: &Observation<CsaMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        let Some(r) = &obs.reception else { return };
        let my_id = self.ids[node];
        let s = &mut self.st[node];
        match r.msg {
            CsaMsg::Ping { dom } if s.is_dominator && dom == my_id => {
                s.count += 1;
                s.got_any += 1;
            }
            CsaMsg::Term { dom, est } if !s.is_dominator && dom == s.dom_id => {
                s.est = est;
                s.done = true;
            }
            _ => {}
        }
    }

    fn end_round(&mut self, round: u64, _trace: &mut Trace) {
        let (t1, phi) = (self.t1, self.phi);
        for s in &mut self.st {
            if s.done || !tdma_gate(s.color, round, phi) {
                continue;
            }
            if s.local_t % (t1 + 1) == t1 {
                s.count = 0;
            }
            s.local_t += 1;
        }
    }

    fn is_halted(&self, node: usize) -> bool {
        self.st[node].done
    }
}

// ---------------------------------------------------------------------------
// Small-instance path.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum SmallPhase {
    Election,
    ChannelCsa,
    Tree,
    Broadcast,
    Done,
}

#[derive(Debug, Clone, Copy)]
struct SmallLayout {
    election_rounds: u64,
    ch_phase_len: u64,
    ch_phases: u32,
    tree_rounds: u64,
    maxdepth: u32,
}

impl SmallLayout {
    fn channel_rounds(&self) -> u64 {
        self.ch_phases as u64 * self.ch_phase_len
    }

    fn total(&self) -> u64 {
        self.election_rounds + self.channel_rounds() + self.tree_rounds + 1
    }

    fn phase_of(&self, local_t: u64) -> (SmallPhase, u64) {
        let e = self.election_rounds;
        let c = self.channel_rounds();
        if local_t < e {
            (SmallPhase::Election, local_t)
        } else if local_t < e + c {
            (SmallPhase::ChannelCsa, local_t - e)
        } else if local_t < e + c + self.tree_rounds {
            (SmallPhase::Tree, local_t - e - c)
        } else if local_t < self.total() {
            (SmallPhase::Broadcast, 0)
        } else {
            (SmallPhase::Done, 0)
        }
    }
}

struct SmallNode {
    is_dominator: bool,
    dom_id: u32,
    color: u32,
    local_t: u64,
    channel: u16,
    channel_chosen: bool,
    elected: bool,
    el_halted: bool,
    el_sent_hello: bool,
    el_clear_from: Option<u32>,
    el_got_ack: bool,
    ch_count: u64,
    ch_got_any: u64,
    ch_done: bool,
    tree_pos: u16,
    tree_value: u64,
    tree_done: bool,
    got_ack: bool,
    data_seen: bool,
    sibling_seen: bool,
    sibling_value: u64,
    sent_this_tree_round: bool,
    est: u64,
    warning: bool,
    done: bool,
}

pub struct CsaSmallDriver {
    ids: Vec<u32>,
    st: Vec<SmallNode>,
    params: SinrParams,
    channels: u16,
    radius: f64,
    hello_p: f64,
    ack_p: f64,
    clear: ClearPolicy,
    layout: SmallLayout,
    delta_ch: u64,
    lambda: f64,
    threshold: f64,
    phi: u32,
}

impl CsaSmallDriver {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topo: &Topology,
        params: &SinrParams,
        consts: &ProtocolConstants,
        n_hat: f64,
        delta_hat: u64,
        channels: u16,
        radius_rc: f64,
        dominator_of: &[usize],
        colors: &BTreeMap<usize, u32>,
    ) -> Self {
        let st = (0..topo.len())
            .map(|i| {
                let d = dominator_of[i];
                SmallNode {
                    is_dominator: d == i,
                    dom_id: topo.id(d).0,
                    color: colors.get(&d).copied().unwrap_or(0).max(1),
                    local_t: 0,
                    channel: 1,
                    channel_chosen: false,
                    elected: false,
                    el_halted: false,
                    el_sent_hello: false,
                    el_clear_from: None,
                    el_got_ack: false,
                    ch_count: 0,
                    ch_got_any: 0,
                    ch_done: false,
                    tree_pos: 0,
                    tree_value: 0,
                    tree_done: false,
                    got_ack: false,
                    data_seen: false,
                    sibling_seen: false,
                    sibling_value: 0,
                    sent_this_tree_round: false,
                    est: 1,
                    warning: false,
                    done: false,
                }
            })
            .collect();
        let delta_ch = (consts.gamma3 * log_n(n_hat)).ceil().max(1.0) as u64;
        let maxdepth = (channels.max(1) as f64).log2().floor() as u32;
        let layout = SmallLayout {
            election_rounds: consts.rounds(consts.gamma3, n_hat),
            ch_phase_len: consts.rounds(consts.gamma1, n_hat) + 1,
            ch_phases: phase_count(delta_ch),
            tree_rounds: maxdepth as u64 + 1,
            maxdepth,
        };
        Self {
            ids: topo.nodes().iter().map(|n| n.id.0).collect(),
            st,
            params: *params,
            channels,
            radius: 2.0 * radius_rc,
            hello_p: (channels as f64 / (2.0 * delta_hat.max(1) as f64)).min(0.5),
            ack_p: consts.ack_p,
            clear: consts.clear,
            layout,
            delta_ch,
            lambda: consts.lambda,
            threshold: csa_threshold(consts.omega1, n_hat),
            phi: consts.phi_cap,
        }
    }

    pub fn total_gated_rounds(&self) -> u64 {
        self.layout.total()
    }

    fn parent_channel(pos: u16) -> u16 {
        (pos / 2).max(1)
    }

    pub fn estimates(&self) -> BTreeMap<usize, (u64, bool)> {
        (0..self.st.len())
            .filter(|&i| self.st[i].is_dominator)
            .map(|i| (i, (self.st[i].est, self.st[i].warning)))
            .collect()
    }
}

impl Driver for CsaSmallDriver {
    type Msg = CsaMsg;

    fn label(&self) -> &'static str {
        "csa_small"
    }

    fn slots_per_round(&self) -> u8 {
        4
    }

    fn act(&mut self, node: usize, round: u64, slot: u8, rng: &mut ChaCha8Rng) -> Action<CsaMsg> {
        let layout = self.layout;
        let (hello_p, ack_p, channels, delta_ch, lambda, threshold, phi) = (
            self.hello_p,
            self.ack_p,
            self.channels,
            self.delta_ch,
            self.lambda,
            self.threshold,
            self.phi,
        );
        let t1 = layout.ch_phase_len - 1;
        let my_id = self.ids[node];
        let s = &mut self.st[node];
        if s.done || !tdma_gate(s.color, round, phi) {
            return Action::Idle;
        }
        let (phase, t) = layout.phase_of(s.local_t);
        let dom_id = s.dom_id;
        match phase {
            SmallPhase::Election => {
                if s.is_dominator {
                    return Action::Idle;
                }
                if !s.channel_chosen {
                    s.channel = rng.random_range(1..=channels.max(1));
                    s.channel_chosen = true;
                }
                if s.el_halted {
                    return Action::Idle;
                }
                let ch = s.channel;
                match slot {
                    0 => {
                        s.el_got_ack = false;
                        s.el_clear_from = None;
                        if rng.random::<f64>() < hello_p {
                            s.el_sent_hello = true;
                            Action::Transmit { channel: ch, msg: CsaMsg::Hello { id: my_id, dom: dom_id } }
                        } else {
                            s.el_sent_hello = false;
                            Action::Listen { channel: ch }
                        }
                    }
                    1 => {
                        if s.el_sent_hello {
                            return Action::Listen { channel: ch };
                        }
                        if let Some(target) = s.el_clear_from {
                            if rng.random::<f64>() < ack_p {
                                return Action::Transmit {
                                    channel: ch,
                                    msg: CsaMsg::HelloAck { target, dom: dom_id },
                                };
                            }
                        }
                        Action::Idle
                    }
                    2 => {
                        if s.el_sent_hello && s.el_got_ack {
                            s.elected = true;
                            s.el_halted = true;
                            Action::Transmit { channel: ch, msg: CsaMsg::In { id: my_id, dom: dom_id } }
                        } else {
                            Action::Listen { channel: ch }
                        }
                    }
                    _ => Action::Idle,
                }
            }
            SmallPhase::ChannelCsa => {
                if slot != 0 || s.is_dominator {
                    return Action::Idle;
                }
                let w = t % layout.ch_phase_len;
                let j = (t / layout.ch_phase_len) as u32 + 1;
                let ch = s.channel;
                if s.elected {
                    if w < t1 {
                        Action::Listen { channel: ch }
                    } else if !s.ch_done {
                        let triggered = (s.ch_count as f64) >= threshold;
                        let last = j >= layout.ch_phases;
                        if triggered || last {
                            let est = if triggered {
                                estimate_for_phase(delta_ch, j)
                            } else if s.ch_got_any == 0 {
                                0
                            } else {
                                s.warning = true;
                                estimate_for_phase(delta_ch, j)
                            };
                            s.ch_done = true;
                            s.tree_value = est + 1;
                            Action::Transmit { channel: ch, msg: CsaMsg::ChTerm { dom: dom_id, ch, est } }
                        } else {
                            Action::Idle
                        }
                    } else {
                        Action::Idle
                    }
                } else if s.ch_done {
                    Action::Idle
                } else if w < t1 {
                    let p = (lambda / delta_ch as f64) * (2f64).powi(j as i32 - 1);
                    if rng.random::<f64>() < p.min(lambda) {
                        Action::Transmit { channel: ch, msg: CsaMsg::ChPing { dom: dom_id, ch } }
                    } else {
                        Action::Idle
                    }
                } else {
                    Action::Listen { channel: ch }
                }
            }
            SmallPhase::Tree => {
                if s.is_dominator {
                    if t == layout.tree_rounds - 1 {
                        match slot {
                            0 => return Action::Listen { channel: 1 },
                            1 => {
                                if s.data_seen {
                                    s.data_seen = false;
                                    return Action::Transmit {
                                        channel: 1,
                                        msg: CsaMsg::SubAck { dom: dom_id, pos: 1 },
                                    };
                                }
                                return Action::Idle;
                            }
                            _ => return Action::Idle,
                        }
                    }
                    return Action::Idle;
                }
                if !s.elected || s.tree_done {
                    return Action::Idle;
                }
                if !s.channel_chosen {
                    return Action::Idle;
                }
                if s.tree_pos == 0 {
                    s.tree_pos = s.channel;
                }
                let pos = s.tree_pos;
                let depth = (pos as f64).log2().floor() as u32;
                let my_tx_round = (layout.maxdepth - depth) as u64;
                let pch = Self::parent_channel(pos);
                if t == my_tx_round {
                    match (slot, pos % 2 == 1) {
                        (0, true) | (2, false) => {
                            s.sent_this_tree_round = true;
                            Action::Transmit {
                                channel: pch,
                                msg: CsaMsg::Sub { dom: dom_id, pos, value: s.tree_value },
                            }
                        }
                        _ => Action::Listen { channel: pch },
                    }
                } else if t + 1 == my_tx_round {
                    // Parent round: listen for both children, ack each as it
                    // arrives.
                    let own_ch = pos;
                    match slot {
                        0 | 2 => Action::Listen { channel: own_ch },
                        1 => {
                            if s.data_seen {
                                s.data_seen = false;
                                Action::Transmit {
                                    channel: own_ch,
                                    msg: CsaMsg::SubAck { dom: dom_id, pos: pos * 2 + 1 },
                                }
                            } else {
                                Action::Idle
                            }
                        }
                        _ => {
                            if s.data_seen {
                                s.data_seen = false;
                                Action::Transmit {
                                    channel: own_ch,
                                    msg: CsaMsg::SubAck { dom: dom_id, pos: pos * 2 },
                                }
                            } else {
                                Action::Idle
                            }
                        }
                    }
                } else {
                    Action::Idle
                }
            }
            SmallPhase::Broadcast => {
                if slot != 0 {
                    return Action::Idle;
                }
                if s.is_dominator {
                    s.done = true;
                    Action::Transmit { channel: 1, msg: CsaMsg::Final { dom: dom_id, est: s.est } }
                } else {
                    Action::Listen { channel: 1 }
                }
            }
            SmallPhase::Done => Action::Idle,
        }
    }

    fn observe(
        &mut self,
        node: usize,
        _round: u64,
        slot: u8,
        obs: &Observation<CsaMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        let Some(r) = &obs.reception else { return };
        let layout = self.layout;
        let params = self.params;
        let (radius, clear) = (self.radius, self.clear);
        let my_id = self.ids[node];
        let min_signal = params.signal_at(radius);
        let s = &mut self.st[node];
        let (phase, t) = layout.phase_of(s.local_t);
        match phase {
            SmallPhase::Election => match (slot, &r.msg) {
                (0, CsaMsg::Hello { id, dom }) => {
                    if *dom == s.dom_id && clear_reception_with(r, &params, radius, clear) {
                        s.el_clear_from = Some(*id);
                    }
                }
                (1, CsaMsg::HelloAck { target, dom }) => {
                    if *dom == s.dom_id && *target == my_id && r.sender_signal >= min_signal {
                        s.el_got_ack = true;
                    }
                }
                (2, CsaMsg::In { dom, .. }) => {
                    if *dom == s.dom_id && r.sender_signal >= min_signal {
                        s.el_halted = true;
                    }
                }
                _ => {}
            },
            SmallPhase::ChannelCsa => match &r.msg {
                CsaMsg::ChPing { dom, ch } if s.elected && *dom == s.dom_id && *ch == s.channel => {
                    s.ch_count += 1;
                    s.ch_got_any += 1;
                }
                CsaMsg::ChTerm { dom, ch, .. }
                    if !s.elected && *dom == s.dom_id && *ch == s.channel =>
                {
                    s.ch_done = true;
                }
                _ => {}
            },
            SmallPhase::Tree => {
                if s.is_dominator {
                    if t == layout.tree_rounds - 1 && slot == 0 {
                        if let CsaMsg::Sub { dom, pos: 1, value } = r.msg {
                            if dom == s.dom_id {
                                s.est = value + 1;
                                s.data_seen = true;
                            }
                        }
                    }
                    return;
                }
                if !s.elected || s.tree_done || s.tree_pos == 0 {
                    return;
                }
                let my_pos = s.tree_pos;
                let my_depth = (my_pos as f64).log2().floor() as u32;
                let my_tx_round = (layout.maxdepth - my_depth) as u64;
                match &r.msg {
                    CsaMsg::Sub { dom, pos, value } if *dom == s.dom_id => {
                        if t == my_tx_round && *pos == (my_pos ^ 1) {
                            s.sibling_seen = true;
                            s.sibling_value = *value;
                        } else if t + 1 == my_tx_round
                            && (*pos == my_pos * 2 || *pos == my_pos * 2 + 1)
                        {
                            s.tree_value += value;
                            s.data_seen = true;
                        }
                    }
                    CsaMsg::SubAck { dom, pos } if *dom == s.dom_id && *pos == my_pos => {
                        s.got_ack = true;
                    }
                    _ => {}
                }
            }
            SmallPhase::Broadcast => {
                if let CsaMsg::Final { dom, est } = r.msg {
                    if dom == s.dom_id {
                        s.est = est;
                        s.done = true;
                    }
                }
            }
            SmallPhase::Done => {}
        }
    }

    fn end_round(&mut self, round: u64, _trace: &mut Trace) {
        let layout = self.layout;
        let phi = self.phi;
        let t1 = layout.ch_phase_len - 1;
        for s in &mut self.st {
            if s.done || !tdma_gate(s.color, round, phi) {
                continue;
            }
            let (phase, t) = layout.phase_of(s.local_t);
            match phase {
                SmallPhase::Election => {
                    if s.el_sent_hello && s.el_got_ack && !s.elected {
                        s.elected = true;
                        s.el_halted = true;
                    }
                    if t + 1 == layout.election_rounds && !s.el_halted && !s.is_dominator {
                        s.elected = true;
                        s.el_halted = true;
                    }
                }
                SmallPhase::ChannelCsa => {
                    if t % layout.ch_phase_len == t1 {
                        s.ch_count = 0;
                    }
                }
                SmallPhase::Tree => {
                    if !s.is_dominator && s.elected && !s.tree_done && s.tree_pos > 0 {
                        let my_pos = s.tree_pos;
                        let my_depth = (my_pos as f64).log2().floor() as u32;
                        let my_tx_round = (layout.maxdepth - my_depth) as u64;
                        if t == my_tx_round && s.sent_this_tree_round {
                            if s.got_ack {
                                s.tree_done = true;
                            } else if my_pos > 1 {
                                if my_pos % 2 == 1 {
                                    // Odd child assumes the missing parent's
                                    // role, carrying the sibling's report.
                                    s.tree_value += s.sibling_value;
                                    s.tree_pos = my_pos / 2;
                                } else if s.sibling_seen {
                                    // Odd sibling exists and takes over.
                                    s.tree_done = true;
                                } else {
                                    s.tree_pos = my_pos / 2;
                                }
                            } else {
                                s.tree_done = true;
                            }
                            s.sent_this_tree_round = false;
                            s.got_ack = false;
                            s.sibling_seen = false;
                            s.sibling_value = 0;
                        }
                    }
                }
                _ => {}
            }
            s.local_t += 1;
        }
    }

    fn is_halted(&self, node: usize) -> bool {
        self.st[node].done
    }
}

// ---------------------------------------------------------------------------
// Dispatch.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsaPath {
    #[default]
    Auto,
    Large,
    Small,
}

/// The small path applies when the cluster-size bound fits the per-channel
/// budget: `delta_hat <= F * log n`.
pub fn use_small_path(delta_hat: u64, channels: u16, n_hat: f64) -> bool {
    (delta_hat as f64) <= channels as f64 * log_n(n_hat)
}

/// Run the size-approximation stage; returns (estimate, warning) per
/// dominator node index.
#[allow(clippy::too_many_arguments)]
pub fn run_csa(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    channels: u16,
    dominator_of: &[usize],
    colors: &BTreeMap<usize, u32>,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (BTreeMap<usize, (u64, bool)>, StageReport) {
    run_csa_path(
        CsaPath::Auto,
        topo,
        pm,
        params,
        consts,
        n_hat,
        delta_hat,
        channels,
        dominator_of,
        colors,
        seed,
        opts,
        trace,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_csa_path(
    path: CsaPath,
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    channels: u16,
    dominator_of: &[usize],
    colors: &BTreeMap<usize, u32>,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (BTreeMap<usize, (u64, bool)>, StageReport) {
    run_csa_path_view(
        path, topo, pm, params, params, consts, n_hat, delta_hat, channels, dominator_of, colors,
        seed, opts, trace,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_csa_path_view(
    path: CsaPath,
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    view: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    channels: u16,
    dominator_of: &[usize],
    colors: &BTreeMap<usize, u32>,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (BTreeMap<usize, (u64, bool)>, StageReport) {
    let small = match path {
        CsaPath::Auto => use_small_path(delta_hat, channels, n_hat),
        CsaPath::Large => false,
        CsaPath::Small => true,
    };
    if small {
        let r_c = crate::constants::cluster_radius(view);
        let mut driver = CsaSmallDriver::new(
            topo, view, consts, n_hat, delta_hat, channels, r_c, dominator_of, colors,
        );
        let budget = driver.total_gated_rounds() * consts.phi_cap as u64 + consts.phi_cap as u64;
        let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);
        (driver.estimates(), report)
    } else {
        let mut driver = CsaLargeDriver::new(topo, consts, n_hat, delta_hat, dominator_of, colors);
        let budget = driver.total_gated_rounds() * consts.phi_cap as u64 + consts.phi_cap as u64;
        let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);
        (driver.estimates(), report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_formula() {
        // Termination at phase 3 with delta_hat 1024 gives ceil(1024/4) = 256.
        assert_eq!(estimate_for_phase(1024, 3), 256);
        assert_eq!(estimate_for_phase(1024, 1), 1024);
        assert_eq!(estimate_for_phase(5, 4), 1);
    }

    #[test]
    fn phase_counts() {
        assert_eq!(phase_count(1024), 10);
        assert_eq!(phase_count(1), 1);
        assert_eq!(phase_count(3), 2);
    }

    #[test]
    fn small_path_dispatch() {
        let n_hat = 400.0;
        assert!(use_small_path(40, 8, n_hat));
        assert!(!use_small_path(512, 8, n_hat));
    }

    #[test]
    fn small_path_single_channel_degenerates_to_counting() {
        // With one channel the per-channel stage is the plain counting
        // protocol plus a one-hop tree.
        small_path_case(1, 30, 4242);
    }

    #[test]
    fn small_path_rides_over_empty_channels() {
        // Eight channels for three dominatees: most channel positions are
        // auxiliary and reports reach the dominator through takeover.
        small_path_case(8, 3, 77);
    }

    fn small_path_case(channels: u16, members: usize, seed: u64) {
        use crate::constants::cluster_radius;
        use crate::sim::{SimOptions, Trace, TraceLevel};
        let params = crate::sinr::SinrParams::default_unit();
        let mut consts = ProtocolConstants::practical();
        consts.phi_cap = 1;
        let r_c = cluster_radius(&params);
        let topo = crate::harness::shapes::blob(members + 1, 0.4 * r_c, seed);
        let pm = crate::sinr::PowerMatrix::new(&topo, &params);
        let dominator_of = vec![0usize; members + 1];
        let colors: BTreeMap<usize, u32> = [(0usize, 1u32)].into_iter().collect();
        let n_hat = (members + 1) as f64;
        let delta_hat = (channels as f64 * crate::constants::log_n(n_hat)).floor() as u64;
        let mut trace = Trace::new(TraceLevel::Metrics);
        let (estimates, report) = run_csa_path(
            CsaPath::Small,
            &topo,
            &pm,
            &params,
            &consts,
            n_hat,
            delta_hat.max(members as u64 + 1),
            channels,
            &dominator_of,
            &colors,
            seed,
            SimOptions::default(),
            &mut trace,
        );
        let (est, _) = estimates[&0];
        assert!(est >= 1);
        let ratio = est as f64 / (members + 1) as f64;
        assert!(
            (0.2..=8.0).contains(&ratio),
            "estimate {est} for true size {} (ratio {ratio})",
            members + 1
        );
        assert!(!report.budget_exhausted);
    }
}
