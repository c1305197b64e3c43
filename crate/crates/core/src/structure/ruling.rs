//! Randomized ruling-set computation over three slots per round: a greeting,
//! an acknowledgement gated on clear reception, and a join announcement that
//! halts nearby competitors. Survivors join when the rounds run out.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constants::ProtocolConstants;
use crate::sim::{run_stage, tdma_gate, Driver, Observation, SimOptions, StageReport, Trace, WireMsg};
use crate::sinr::{clear_reception_with, Action, ClearPolicy, PowerMatrix, SinrParams};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq)]
pub enum RulingMsg {
    Hello { id: u32, tag: u32 },
    Ack { target: u32, tag: u32 },
    In { id: u32, tag: u32 },
}

impl WireMsg for RulingMsg {
    fn kind(&self) -> &'static str {
        match self {
            RulingMsg::Hello { .. } => "hello",
            RulingMsg::Ack { .. } => "ack",
            RulingMsg::In { .. } => "in",
        }
    }
}

/// One ruling-set instance; many instances (per cluster, per channel) run in
/// the same driver without knowing of each other.
pub struct RulingConfig {
    /// Candidate flag per node.
    pub active: Vec<bool>,
    /// Independence radius.
    pub radius: f64,
    /// Greeting probability per node.
    pub hello_p: Vec<f64>,
    /// Acknowledgement probability.
    pub ack_p: f64,
    /// Rounds candidates stay in the protocol.
    pub rounds: u64,
    /// Channel per node (1-based).
    pub channel: Vec<u16>,
    /// Instance tag per node (cluster dominator id; 0 for the global case).
    /// Messages from other instances are ignored.
    pub tag: Vec<u32>,
    /// TDMA gating: cluster color per node and the cycle length; `None` runs
    /// ungated.
    pub tdma: Option<(Vec<u32>, u32)>,
    pub clear: ClearPolicy,
}

struct NodeSt {
    active: bool,
    joined: bool,
    halted: bool,
    halted_this_round: bool,
    sent_hello: bool,
    clear_from: Option<u32>,
    got_ack: bool,
    local_round: u64,
}

pub struct RulingSetDriver {
    cfg: RulingConfig,
    ids: Vec<u32>,
    st: Vec<NodeSt>,
    params: SinrParams,
    min_signal: f64,
}

impl RulingSetDriver {
    pub fn new(topo: &Topology, params: &SinrParams, cfg: RulingConfig) -> Self {
        let n = topo.len();
        let st = (0..n)
            .map(|i| NodeSt {
                active: cfg.active[i],
                joined: false,
                halted: !cfg.active[i],
                halted_this_round: false,
                sent_hello: false,
                clear_from: None,
                got_ack: false,
                local_round: 0,
            })
            .collect();
        let min_signal = params.signal_at(cfg.radius);
        Self { cfg, ids: topo.nodes().iter().map(|n| n.id.0).collect(), st, params: *params, min_signal }
    }

    fn gated(&self, node: usize, round: u64) -> bool {
        match &self.cfg.tdma {
            Some((colors, phi)) => tdma_gate(colors[node], round, *phi),
            None => true,
        }
    }

    pub fn joined(&self) -> Vec<usize> {
        (0..self.st.len()).filter(|&i| self.st[i].joined).collect()
    }
}

impl Driver for RulingSetDriver {
    type Msg = RulingMsg;

    fn label(&self) -> &'static str {
        "ruling_set"
    }

    fn slots_per_round(&self) -> u8 {
        3
    }

    fn act(&mut self, node: usize, round: u64, slot: u8, rng: &mut ChaCha8Rng) -> Action<RulingMsg> {
        if !self.gated(node, round) || !self.st[node].active {
            return Action::Idle;
        }
        let ch = self.cfg.channel[node];
        let tag = self.cfg.tag[node];
        match slot {
            0 => {
                let s = &mut self.st[node];
                s.got_ack = false;
                s.clear_from = None;
                if rng.random::<f64>() < self.cfg.hello_p[node] {
                    s.sent_hello = true;
                    Action::Transmit { channel: ch, msg: RulingMsg::Hello { id: self.ids[node], tag } }
                } else {
                    s.sent_hello = false;
                    Action::Listen { channel: ch }
                }
            }
            1 => {
                if self.st[node].sent_hello {
                    return Action::Listen { channel: ch };
                }
                if let Some(target) = self.st[node].clear_from {
                    if rng.random::<f64>() < self.cfg.ack_p {
                        return Action::Transmit {
                            channel: ch,
                            msg: RulingMsg::Ack { target, tag },
                        };
                    }
                }
                Action::Idle
            }
            _ => {
                if self.st[node].sent_hello && self.st[node].got_ack {
                    Action::Transmit { channel: ch, msg: RulingMsg::In { id: self.ids[node], tag } }
                } else {
                    Action::Listen { channel: ch }
                }
            }
        }
    }

    fn observe(
        &mut self,
        node: usize,
        _round: u64,
        slot: u8,
        obs: &Observation<RulingMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        if !self.st[node].active {
            return;
        }
        let my_tag = self.cfg.tag[node];
        match slot {
            0 => {
                if let Some(r) = &obs.reception {
                    if let RulingMsg::Hello { id, tag } = r.msg {
                        if tag == my_tag
                            && clear_reception_with(r, &self.params, self.cfg.radius, self.cfg.clear)
                        {
                            self.st[node].clear_from = Some(id);
                        }
                    }
                }
            }
            1 => {
                if let Some(r) = &obs.reception {
                    if let RulingMsg::Ack { target, tag } = r.msg {
                        if tag == my_tag
                            && target == self.ids[node]
                            && r.sender_signal >= self.min_signal
                        {
                            self.st[node].got_ack = true;
                        }
                    }
                }
            }
            _ => {
                if let Some(r) = &obs.reception {
                    if let RulingMsg::In { tag, .. } = r.msg {
                        if tag == my_tag && r.sender_signal >= self.min_signal {
                            self.st[node].halted = true;
                            self.st[node].halted_this_round = true;
                            self.st[node].active = false;
                        }
                    }
                }
            }
        }
    }

    fn end_round(&mut self, round: u64, trace: &mut Trace) {
        for i in 0..self.st.len() {
            if self.st[i].halted_this_round {
                self.st[i].halted_this_round = false;
                trace.milestone(round, i as u32, "halted", 0);
            }
            if !self.st[i].active {
                continue;
            }
            if !self.gated(i, round) {
                continue;
            }
            let s = &mut self.st[i];
            if s.sent_hello && s.got_ack {
                s.joined = true;
                s.halted = true;
                s.active = false;
                trace.milestone(round, i as u32, "joined", 0);
                continue;
            }
            s.local_round += 1;
            if s.local_round >= self.cfg.rounds {
                // Survivors enter the set.
                s.joined = true;
                s.halted = true;
                s.active = false;
                trace.milestone(round, i as u32, "joined_at_end", 0);
            }
        }
    }

    fn is_halted(&self, node: usize) -> bool {
        self.st[node].halted
    }
}

/// The standalone two-phase ruling-set operation: first a constant-density
/// dominating set at the target radius, then the greeting protocol among
/// those dominators. Returns the joined node indices.
#[allow(clippy::too_many_arguments)]
pub fn ruling_set(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    radius: f64,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (Vec<usize>, Vec<usize>, Vec<StageReport>) {
    ruling_set_view(topo, pm, params, params, consts, n_hat, radius, seed, opts, trace)
}

/// As [`ruling_set`], with protocol-side thresholds from a conservative view.
#[allow(clippy::too_many_arguments)]
pub fn ruling_set_view(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    view: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    radius: f64,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (Vec<usize>, Vec<usize>, Vec<StageReport>) {
    use super::clustering;
    if radius > view.r_t() / 2.0 {
        // The greeting protocol is specified for radii up to half the
        // transmission range.
        debug_assert!(radius <= view.r_t() / 2.0 + 1e-12, "ruling radius beyond r_t/2");
    }
    let (dominator_of, rep1) = clustering::run_clustering_view(
        topo,
        pm,
        params,
        view,
        consts,
        n_hat,
        radius,
        crate::sim::stage_seed(seed, 101),
        opts,
        trace,
    );
    let mut candidates: Vec<usize> = dominator_of.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let n = topo.len();
    let active: Vec<bool> = (0..n).map(|i| candidates.contains(&i)).collect();
    // The density bound mu counts candidates per radius-r ball; decoding
    // contends with candidates out to the transmission range, so the greeting
    // probability scales down by the squared range ratio.
    let scale = (view.r_t() / (2.0 * radius)).powi(2).max(1.0);
    let hello = (1.0 / (2.0 * consts.mu * scale)).min(0.5);
    let cfg = RulingConfig {
        active,
        radius,
        hello_p: vec![hello; n],
        ack_p: consts.ack_p,
        rounds: consts.rounds(consts.gamma, n_hat),
        channel: vec![1; n],
        tag: vec![0; n],
        tdma: None,
        clear: consts.clear,
    };
    let mut driver = RulingSetDriver::new(topo, view, cfg);
    let budget = consts.rounds(consts.gamma, n_hat) + 2;
    let rep2 = run_stage(
        pm,
        params,
        &mut driver,
        crate::sim::stage_seed(seed, 102),
        budget,
        opts,
        trace,
        &mut [],
    );
    (driver.joined(), candidates, vec![rep1, rep2])
}
