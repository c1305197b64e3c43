//! Decay-style randomized clustering: candidates announce with geometrically
//! decreasing probabilities, promote to dominator once somebody within the
//! cluster radius audibly responds, and every other node adopts the first
//! dominator it hears within that radius.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constants::ProtocolConstants;
use crate::sim::{run_stage, Driver, Observation, SimOptions, StageReport, Trace, WireMsg};
use crate::sinr::{clear_reception_with, Action, ClearPolicy, PowerMatrix, SinrParams};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterMsg {
    /// A candidate asking whether anyone nearby is undominated.
    Cand { id: u32 },
    /// An undominated node answering a candidate it heard within range.
    Rsvp { target: u32 },
    /// A committed dominator recruiting dominatees.
    Dom { id: u32 },
}

impl WireMsg for ClusterMsg {
    fn kind(&self) -> &'static str {
        match self {
            ClusterMsg::Cand { .. } => "cand",
            ClusterMsg::Rsvp { .. } => "rsvp",
            ClusterMsg::Dom { .. } => "dom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Candidate,
    Dominator,
    Dominatee { dominator: u32 },
}

pub struct ClusteringDriver {
    ids: Vec<u32>,
    roles: Vec<Role>,
    sent_cand: Vec<bool>,
    /// One-round memory: candidate heard within range in slot 0, answered in
    /// slot 1.
    rsvp_target: Vec<Option<u32>>,
    min_signal: f64,
    params: SinrParams,
    /// Answers promote only when received clearly at twice the cluster
    /// radius, keeping simultaneous nearby promotions out.
    promote_radius: f64,
    q_dom: f64,
    total_rounds: u64,
    rounds_per_level: u64,
    levels: u32,
    done: bool,
}

impl ClusteringDriver {
    pub fn new(
        topo: &Topology,
        params: &SinrParams,
        consts: &ProtocolConstants,
        n_hat: f64,
        radius: f64,
    ) -> Self {
        let n = topo.len();
        let total_rounds = consts.rounds(consts.gamma_d, n_hat);
        let levels = (n_hat.log2().ceil() as u32).max(1);
        let rounds_per_level = (total_rounds / levels as u64).max(1);
        Self {
            ids: topo.nodes().iter().map(|nd| nd.id.0).collect(),
            roles: vec![Role::Candidate; n],
            sent_cand: vec![false; n],
            rsvp_target: vec![None; n],
            min_signal: params.signal_at(radius),
            params: *params,
            promote_radius: 2.0 * radius,
            q_dom: consts.q_dom,
            total_rounds,
            rounds_per_level,
            levels,
            done: false,
        }
    }

    fn cand_prob(&self, round: u64) -> f64 {
        let level = (round / self.rounds_per_level).min(self.levels as u64 - 1);
        0.5f64.powi(level as i32 + 1)
    }

    /// Dominator node index for every node once the stage finished.
    pub fn dominator_of(&self, topo: &Topology) -> Vec<usize> {
        let index_of = |id: u32| topo.index_of(crate::topology::NodeId(id)).expect("known id");
        self.roles
            .iter()
            .enumerate()
            .map(|(i, r)| match r {
                Role::Dominator => i,
                Role::Dominatee { dominator } => index_of(*dominator),
                Role::Candidate => i,
            })
            .collect()
    }
}

impl Driver for ClusteringDriver {
    type Msg = ClusterMsg;

    fn label(&self) -> &'static str {
        "clustering"
    }

    fn slots_per_round(&self) -> u8 {
        3
    }

    fn act(&mut self, node: usize, round: u64, slot: u8, rng: &mut ChaCha8Rng) -> Action<ClusterMsg> {
        match slot {
            0 => match self.roles[node] {
                Role::Candidate => {
                    if rng.random::<f64>() < self.cand_prob(round) {
                        self.sent_cand[node] = true;
                        Action::Transmit { channel: 1, msg: ClusterMsg::Cand { id: self.ids[node] } }
                    } else {
                        self.sent_cand[node] = false;
                        Action::Listen { channel: 1 }
                    }
                }
                _ => Action::Idle,
            },
            1 => {
                if self.sent_cand[node] {
                    return Action::Listen { channel: 1 };
                }
                // Answering happens via a one-round memory: a node that just
                // decoded a candidate within range stored the target.
                if let Role::Candidate = self.roles[node] {
                    if let Some(target) = self.pending_rsvp(node) {
                        // Answer at the ladder probability: near the sweet
                        // spot one answer is expected among all decoders.
                        if rng.random::<f64>() < self.cand_prob(round) {
                            return Action::Transmit {
                                channel: 1,
                                msg: ClusterMsg::Rsvp { target },
                            };
                        }
                    }
                }
                Action::Idle
            }
            _ => match self.roles[node] {
                Role::Dominator => {
                    if rng.random::<f64>() < self.q_dom {
                        Action::Transmit { channel: 1, msg: ClusterMsg::Dom { id: self.ids[node] } }
                    } else {
                        Action::Idle
                    }
                }
                Role::Candidate => Action::Listen { channel: 1 },
                Role::Dominatee { .. } => Action::Idle,
            },
        }
    }

    fn observe(
        &mut self,
        node: usize,
        _round: u64,
        slot: u8,
        obs: &Observation<ClusterMsg>,
        _rng: &mut ChaCha8Rng,
    ) {
        match slot {
            0 => {
                if let Some(r) = &obs.reception {
                    if let ClusterMsg::Cand { id } = r.msg {
                        if r.sender_signal >= self.min_signal {
                            self.rsvp_target[node] = Some(id);
                            return;
                        }
                    }
                }
                self.rsvp_target[node] = None;
            }
            1 => {
                if !self.sent_cand[node] {
                    return;
                }
                let heard_rsvp = match &obs.reception {
                    Some(r) => {
                        matches!(r.msg, ClusterMsg::Rsvp { target } if target == self.ids[node])
                            && clear_reception_with(
                                r,
                                &self.params,
                                self.promote_radius,
                                ClearPolicy::RadiusScaled { theta: 0.5 },
                            )
                    }
                    None => false,
                };
                if heard_rsvp {
                    self.roles[node] = Role::Dominator;
                }
            }
            _ => {
                if let Role::Candidate = self.roles[node] {
                    if let Some(r) = &obs.reception {
                        if let ClusterMsg::Dom { id } = r.msg {
                            if r.sender_signal >= self.min_signal {
                                self.roles[node] = Role::Dominatee { dominator: id };
                            }
                        }
                    }
                }
            }
        }
    }

    fn end_round(&mut self, round: u64, trace: &mut Trace) {
        if round + 1 >= self.total_rounds {
            for i in 0..self.roles.len() {
                if self.roles[i] == Role::Candidate {
                    self.roles[i] = Role::Dominator;
                    trace.milestone(round, i as u32, "self_promoted", 0);
                }
            }
            self.done = true;
        }
    }

    fn is_halted(&self, node: usize) -> bool {
        matches!(self.roles[node], Role::Dominatee { .. })
    }

    fn finished(&self) -> bool {
        self.done
    }
}

// The one-round RSVP memory lives outside the state machine enum for brevity.
impl ClusteringDriver {
    fn pending_rsvp(&self, node: usize) -> Option<u32> {
        self.rsvp_target[node]
    }
}

/// Run clustering; returns the dominator index per node.
#[allow(clippy::too_many_arguments)]
pub fn run_clustering(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    consts: &ProtocolConstants,
    n_hat: f64,
    radius: f64,
    seed: u64,
    opts: SimOptions,
    trace: &mut Trace,
) -> (Vec<usize>, StageReport) {
    run_clustering_view(topo, pm, params, params, consts, n_hat, radius, seed, opts, trace)
}

/// As [`run_clustering`], with the protocol state machines built from a
/// (possibly conservative) parameter view while the physics keeps the truth.
#[allow(clippy::too_many_arguments)]
pub fn run_clustering_view(
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
) -> (Vec<usize>, StageReport) {
    let mut driver = ClusteringDriver::new(topo, view, consts, n_hat, radius);
    let budget = driver.total_rounds + 2;
    let report = run_stage(pm, params, &mut driver, seed, budget, opts, trace, &mut []);
    (driver.dominator_of(topo), report)
}

/// Centralized greedy clustering (ground-truth mode): pick undominated nodes
/// by ascending id as dominators.
pub fn greedy_clustering(topo: &Topology, radius: f64) -> Vec<usize> {
    let n = topo.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| topo.id(i));
    let mut dominator_of = vec![usize::MAX; n];
    for &i in &order {
        if dominator_of[i] != usize::MAX {
            continue;
        }
        dominator_of[i] = i;
        for &j in &order {
            if dominator_of[j] == usize::MAX && topo.distance(i, j) <= radius {
                dominator_of[j] = i;
            }
        }
    }
    dominator_of
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::cluster_radius;
    use crate::sim::TraceLevel;
    use crate::topology::{generate_topology, TopologyKind};

    #[test]
    fn singleton_becomes_its_own_dominator() {
        let topo = generate_topology(TopologyKind::Grid, 1, 10.0, 7).unwrap();
        let params = SinrParams::default_unit();
        let pm = PowerMatrix::new(&topo, &params);
        let consts = ProtocolConstants::practical();
        let mut trace = Trace::new(TraceLevel::Metrics);
        let (doms, _) = run_clustering(
            &topo,
            &pm,
            &params,
            &consts,
            1.0,
            cluster_radius(&params),
            3,
            SimOptions::default(),
            &mut trace,
        );
        assert_eq!(doms, vec![0]);
    }

    #[test]
    fn every_node_dominated_within_radius() {
        let topo = generate_topology(TopologyKind::UniformDisk, 200, 1.5, 11).unwrap();
        let params = SinrParams::default_unit();
        let pm = PowerMatrix::new(&topo, &params);
        let consts = ProtocolConstants::practical();
        let r_c = cluster_radius(&params);
        let mut trace = Trace::new(TraceLevel::Metrics);
        let (doms, _) = run_clustering(
            &topo, &pm, &params, &consts, 200.0, r_c, 17, SimOptions::default(), &mut trace,
        );
        for (v, &d) in doms.iter().enumerate() {
            assert!(topo.distance(v, d) <= r_c, "node {v} dominated beyond radius");
            assert_eq!(doms[d], d, "dominator of {v} is not itself a dominator");
        }
    }

    #[test]
    fn greedy_density_is_constant() {
        let topo = generate_topology(TopologyKind::UniformDisk, 300, 1.0, 2).unwrap();
        let params = SinrParams::default_unit();
        let r_c = cluster_radius(&params);
        let doms = greedy_clustering(&topo, r_c);
        let mut dominators: Vec<usize> = doms.clone();
        dominators.sort_unstable();
        dominators.dedup();
        let mu = super::super::measure_density(&topo, &dominators, r_c);
        assert!(mu <= 8, "greedy density {mu} unexpectedly high");
    }
}
