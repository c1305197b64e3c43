//! Cluster coloring. Each phase assigns one color through a few bit
//! tournaments: participants tone out a unique priority (random word,
//! id-suffixed) most-significant bit first and drop out as soon as they sense
//! another tone at in-range strength, so two dominators within the separation
//! radius can never both win. Winners of earlier tournaments in a phase keep
//! toning as occupancy beacons, letting later tournaments pack more
//! same-color winners into the phase. A dissemination tail then tells every
//! member its cluster color.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constants::ProtocolConstants;
use crate::sim::{run_stage, Driver, Observation, SimOptions, StageReport, Trace, WireMsg};
use crate::sinr::{Action, PowerMatrix, SinrParams};
use crate::topology::Topology;

/// Priority width: a random word with the unique node id as tie-breaking
/// suffix, played most-significant bit first.
const PRIORITY_BITS: u64 = 64;
/// Bit tournaments per color phase.
const SUBS_PER_PHASE: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum ColorMsg {
    Tone { id: u32 },
    Assign { dominator: u32, color: u32 },
}

impl WireMsg for ColorMsg {
    fn kind(&self) -> &'static str {
        match self {
            ColorMsg::Tone { .. } => "tone",
            ColorMsg::Assign { .. } => "assign",
        }
    }
}

struct NodeSt {
    is_dominator: bool,
    dominator_id: u32,
    color: Option<u32>,
    /// Won an earlier tournament of the current phase; tones as a beacon.
    won_phase: bool,
    participating: bool,
    dropped: bool,
    priority: u64,
    p_enter: f64,
    busy_first_sub: bool,
    member_color: Option<u32>,
}

pub struct ClusterColoringDriver {
    ids: Vec<u32>,
    st: Vec<NodeSt>,
    phases: u32,
    sense_threshold: f64,
    noise: f64,
    p_min: f64,
    total_rounds: u64,
    done: bool,
}

impl ClusterColoringDriver {
    pub fn new(
        topo: &Topology,
        params: &SinrParams,
        consts: &ProtocolConstants,
        n_hat: f64,
        dominator_of: &[usize],
    ) -> Self {
        let n = topo.len();
        // Optimistic entry: dense neighborhoods throttle themselves through
        // the busy-sensing feedback within a few phases.
        let p_enter = 0.5;
        let _ = consts.mu_big;
        let st = (0..n)
            .map(|i| NodeSt {
                is_dominator: dominator_of[i] == i,
                dominator_id: topo.id(dominator_of[i]).0,
                color: None,
                won_phase: false,
                participating: false,
                dropped: false,
                priority: 0,
                p_enter,
                busy_first_sub: false,
                member_color: None,
            })
            .collect();
        let phases = consts.phi_cap;
        let phase_rounds = PRIORITY_BITS * SUBS_PER_PHASE;
        Self {
            ids: topo.nodes().iter().map(|n| n.id.0).collect(),
            st,
            phases,
            sense_threshold: 0.999 * params.signal_at(params.r_eps_half()),
            noise: params.noise,
            // Throttling never drops entry below 1/16: stragglers must keep
            // appearing in tournaments once their neighborhoods thin out.
            p_min: (1f64 / 16.0).max(1.0 / (2.0 * n_hat.max(2.0))),
            total_rounds: phase_rounds * phases as u64 + phases as u64,
            done: false,
        }
    }

    fn tournament_rounds(&self) -> u64 {
        PRIORITY_BITS * SUBS_PER_PHASE * self.phases as u64
    }

    pub fn dominator_colors(&self, _topo: &Topology) -> BTreeMap<usize, u32> {
        (0..self.st.len())
            .filter(|&i| self.st[i].is_dominator)
            .map(|i| (i, self.st[i].color.unwrap_or(0)))
            .collect()
    }

    pub fn member_color(&self, node: usize) -> Option<u32> {
        if self.st[node].is_dominator {
            self.st[node].color
        } else {
            self.st[node].member_color
        }
    }
}

impl Driver for ClusterColoringDriver {
    type Msg = ColorMsg;

    fn label(&self) -> &'static str {
        "cluster_coloring"
    }

    fn slots_per_round(&self) -> u8 {
        1
    }

    fn act(&mut self, node: usize, round: u64, _slot: u8, rng: &mut ChaCha8Rng) -> Action<ColorMsg> {
        if round < self.tournament_rounds() {
            let in_phase = round % (PRIORITY_BITS * SUBS_PER_PHASE);
            let bit_round = in_phase % PRIORITY_BITS;
            let s = &mut self.st[node];
            if !s.is_dominator || s.color.is_some() {
                return Action::Idle;
            }
            if s.won_phase {
                // Occupancy beacon for the rest of the phase.
                return Action::Transmit { channel: 1, msg: ColorMsg::Tone { id: self.ids[node] } };
            }
            if bit_round == 0 {
                s.participating = rng.random::<f64>() < s.p_enter;
                s.dropped = false;
                s.priority = ((rng.random::<u32>() as u64) << 32) | self.ids[node] as u64;
            }
            if s.participating && !s.dropped {
                let bit = (s.priority >> (PRIORITY_BITS - 1 - bit_round)) & 1;
                if bit == 1 {
                    return Action::Transmit { channel: 1, msg: ColorMsg::Tone { id: self.ids[node] } };
                }
            }
            Action::Listen { channel: 1 }
        } else {
            let color_now = (round - self.tournament_rounds()) as u32 + 1;
            let s = &self.st[node];
            if s.is_dominator {
                if s.color == Some(color_now) {
                    Action::Transmit {
                        channel: 1,
                        msg: ColorMsg::Assign { dominator: self.ids[node], color: color_now },
                    }
                } else {
                    Action::Idle
                }
            } else if s.member_color.is_none() {
                Action::Listen { channel: 1 }
            } else {
                Action::Idle
            }
        }
    }

    fn observe(
        &mut self,
        node: usize,
        round: u64,
        _slot: u8,
        obs: &Observation<ColorMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        if round < self.tournament_rounds() {
            let in_phase = round % (PRIORITY_BITS * SUBS_PER_PHASE);
            let first_sub = in_phase < PRIORITY_BITS;
            let s = &mut self.st[node];
            if !s.is_dominator || s.color.is_some() {
                return;
            }
            if obs.sensed - self.noise >= self.sense_threshold {
                if first_sub {
                    s.busy_first_sub = true;
                }
                if s.participating {
                    s.dropped = true;
                }
            }
        } else if let Some(r) = &obs.reception {
            if let ColorMsg::Assign { dominator, color } = r.msg {
                let s = &mut self.st[node];
                if !s.is_dominator && dominator == s.dominator_id {
                    s.member_color = Some(color);
                }
            }
        }
    }

    fn end_round(&mut self, round: u64, trace: &mut Trace) {
        let phase_rounds = PRIORITY_BITS * SUBS_PER_PHASE;
        if round < self.tournament_rounds() {
            let in_phase = round % phase_rounds;
            let sub_ended = (in_phase + 1) % PRIORITY_BITS == 0;
            let phase_ended = (in_phase + 1) % phase_rounds == 0;
            if sub_ended {
                for s in &mut self.st {
                    if !s.is_dominator || s.color.is_some() {
                        continue;
                    }
                    if s.participating && !s.dropped {
                        s.won_phase = true;
                    }
                    s.participating = false;
                    s.dropped = false;
                }
            }
            if phase_ended {
                let phase = (round / phase_rounds) as u32 + 1;
                for i in 0..self.st.len() {
                    let s = &mut self.st[i];
                    if !s.is_dominator || s.color.is_some() {
                        continue;
                    }
                    if s.won_phase {
                        s.color = Some(phase);
                        s.won_phase = false;
                        trace.milestone(round, i as u32, "cluster_colored", phase as i64);
                    } else if s.busy_first_sub {
                        s.p_enter = (s.p_enter / 2.0).max(self.p_min);
                    } else {
                        s.p_enter = (s.p_enter * 2.0).min(0.5);
                    }
                    s.busy_first_sub = false;
                }
            }
        }
        if round + 1 >= self.total_rounds {
            self.done = true;
        }
    }

    fn is_halted(&self, node: usize) -> bool {
        if self.done {
            return true;
        }
        let s = &self.st[node];
        !s.is_dominator && s.member_color.is_some()
    }

    fn finished(&self) -> bool {
        self.done
    }
}

/// Returns colors per dominator index (0 marks an uncolored dominator).
#[allow(clippy::too_many_arguments)]
pub fn run_cluster_coloring(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    dominator_of: &[usize],
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (BTreeMap<usize, u32>, StageReport) {
    run_cluster_coloring_view(topo, pm, params, params, consts, n_hat, dominator_of, seed, opts, trace)
}

#[allow(clippy::too_many_arguments)]
pub fn run_cluster_coloring_view(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    view: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    dominator_of: &[usize],
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (BTreeMap<usize, u32>, StageReport) {
    let mut driver = ClusterColoringDriver::new(topo, view, consts, n_hat, dominator_of);
    let budget = driver.total_rounds + 2;
    let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);
    (driver.dominator_colors(topo), report)
}
