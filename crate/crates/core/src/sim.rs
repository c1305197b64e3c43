//! Lockstep round/slot scheduler.
//!
//! A protocol is a [`Driver`]: a state machine that, for every node and every
//! named slot of a round, produces one action, and consumes the listener-side
//! observations after the physical layer resolves the slot. Nodes only ever
//! see their own state, their own RNG stream and what they received; global
//! quantities reach protocols exclusively through configured constants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sinr::{resolve_slot, Action, PowerMatrix, Reception, SinrParams, SlotFrame, SlotOutcome};

/// Round-robin TDMA over `phi` cluster colors (1-based): color `i` owns every
/// round with `round mod phi + 1 == i`.
pub fn tdma_gate(cluster_color: u32, round: u64, phi: u32) -> bool {
    round % phi as u64 + 1 == cluster_color as u64
}

/// What a listener learns from one slot.
#[derive(Debug, Clone)]
pub struct Observation<M> {
    pub reception: Option<Reception<M>>,
    pub sensed: f64,
}

/// Wire-format tag used in traces.
pub trait WireMsg: Clone {
    fn kind(&self) -> &'static str;
}

impl WireMsg for () {
    fn kind(&self) -> &'static str {
        "unit"
    }
}

/// A protocol stage driven by the scheduler.
pub trait Driver {
    type Msg: WireMsg;

    fn label(&self) -> &'static str;

    fn slots_per_round(&self) -> u8;

    /// Action of `node` in `(round, slot)`. Called in node order.
    fn act(&mut self, node: usize, round: u64, slot: u8, rng: &mut ChaCha8Rng)
        -> Action<Self::Msg>;

    /// Listener-side delivery, called in node order for every listener.
    fn observe(
        &mut self,
        node: usize,
        round: u64,
        slot: u8,
        obs: &Observation<Self::Msg>,
        rng: &mut ChaCha8Rng,
    );

    /// Per-round bookkeeping after all slots resolved.
    fn end_round(&mut self, _round: u64, _trace: &mut Trace) {}

    fn is_halted(&self, node: usize) -> bool;

    /// A stage may finish before every node halts (e.g. fixed-length tails).
    fn finished(&self) -> bool {
        false
    }
}

/// Online slot inspector used by verification oracles, so large sweeps do not
/// need to retain full traces.
pub trait SlotObserver<M> {
    fn on_slot(&mut self, round: u64, slot: u8, frame: &SlotFrame<M>, outcome: &SlotOutcome<M>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    Off,
    Metrics,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct TxRecord {
    pub node: u32,
    pub channel: u16,
    pub kind: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RxRecord {
    pub receiver: u32,
    pub sender: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotRecord {
    pub round: u64,
    pub slot: u8,
    pub tx: Vec<TxRecord>,
    pub rx: Vec<RxRecord>,
}

/// Protocol milestone (join, halt, estimate fixed, backoff sent, ...).
#[derive(Debug, Clone, Serialize)]
pub struct Milestone {
    pub round: u64,
    pub node: u32,
    pub kind: &'static str,
    pub info: i64,
}

/// Per-round, per-cluster sum of follower transmission probabilities.
/// Recomputed scheduler-side; never fed back into protocol state.
#[derive(Debug, Clone, Serialize)]
pub struct ContentionRecord {
    pub round: u64,
    pub dominator: u32,
    pub p_sum: f64,
    pub f_v: u16,
    /// Followers still sending.
    pub active: u32,
    /// Follower transmissions this round.
    pub txs: u32,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub level: TraceLevel,
    pub stage: &'static str,
    pub slots: Vec<SlotRecord>,
    pub milestones: Vec<Milestone>,
    pub contention: Vec<ContentionRecord>,
}

impl Trace {
    pub fn new(level: TraceLevel) -> Self {
        Self { level, stage: "", slots: Vec::new(), milestones: Vec::new(), contention: Vec::new() }
    }

    pub fn milestone(&mut self, round: u64, node: u32, kind: &'static str, info: i64) {
        if self.level != TraceLevel::Off {
            self.milestones.push(Milestone { round, node, kind, info });
        }
    }

    pub fn contention(&mut self, rec: ContentionRecord) {
        if self.level != TraceLevel::Off {
            self.contention.push(rec);
        }
    }

    /// Line-delimited JSON: one record per slot, then milestone and
    /// contention records, each tagged with a `type` field.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            r#type: &'static str,
            stage: &'a str,
            #[serde(flatten)]
            rec: &'a T,
        }
        for s in &self.slots {
            serde_json::to_writer(&mut w, &Tagged { r#type: "slot", stage: self.stage, rec: s })?;
            w.write_all(b"\n")?;
        }
        for m in &self.milestones {
            serde_json::to_writer(&mut w, &Tagged { r#type: "milestone", stage: self.stage, rec: m })?;
            w.write_all(b"\n")?;
        }
        for c in &self.contention {
            serde_json::to_writer(&mut w, &Tagged { r#type: "contention", stage: self.stage, rec: c })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub rounds: u64,
    pub budget: u64,
    pub budget_exhausted: bool,
}

/// Optional physical-layer observation noise (robustness experiments).
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Multiplicative noise on sensed powers: each observed power value is
    /// scaled by a factor uniform in `[1-d, 1+d]`.
    pub sense_noise: Option<f64>,
}

/// Derive a per-node RNG stream from a stage seed. Streams are independent of
/// trace consumers by construction.
pub fn node_rng(stage_seed: u64, node: u32) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&stage_seed.to_le_bytes());
    seed[8..12].copy_from_slice(&node.to_le_bytes());
    seed[12..20].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Derive a stage seed from the run seed and a stage index (splitmix64).
pub fn stage_seed(run_seed: u64, stage: u64) -> u64 {
    let mut z = run_seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run one protocol stage to completion or budget exhaustion.
pub fn run_stage<D: Driver>(
    pm: &PowerMatrix,
    params: &SinrParams,
    driver: &mut D,
    seed: u64,
    round_budget: u64,
    opts: SimOptions,
    trace: &mut Trace,
    observers: &mut [&mut dyn SlotObserver<D::Msg>],
) -> StageReport {
    let n = pm.len();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| node_rng(seed, i as u32)).collect();
    let mut noise_rngs: Vec<ChaCha8Rng> = if opts.sense_noise.is_some() {
        (0..n).map(|i| node_rng(seed ^ 0x6e6f_6973, i as u32)).collect()
    } else {
        Vec::new()
    };
    trace.stage = driver.label();
    let slots = driver.slots_per_round();
    let mut rounds_run = 0u64;
    for round in 0..round_budget {
        if driver.finished() || (0..n).all(|i| driver.is_halted(i)) {
            break;
        }
        rounds_run = round + 1;
        for slot in 0..slots {
            let actions: Vec<Action<D::Msg>> = (0..n)
                .map(|i| {
                    if driver.is_halted(i) {
                        Action::Idle
                    } else {
                        driver.act(i, round, slot, &mut rngs[i])
                    }
                })
                .collect();
            let frame = SlotFrame { actions };
            let outcome = resolve_slot(pm, params, &frame);
            for obs in observers.iter_mut() {
                obs.on_slot(round, slot, &frame, &outcome);
            }
            if trace.level == TraceLevel::Full {
                trace.slots.push(SlotRecord {
                    round,
                    slot,
                    tx: frame
                        .actions
                        .iter()
                        .enumerate()
                        .filter_map(|(i, a)| match a {
                            Action::Transmit { channel, msg } => Some(TxRecord {
                                node: i as u32,
                                channel: *channel,
                                kind: msg.kind(),
                            }),
                            _ => None,
                        })
                        .collect(),
                    rx: outcome
                        .receptions
                        .iter()
                        .map(|r| RxRecord { receiver: r.receiver as u32, sender: r.sender as u32 })
                        .collect(),
                });
            }
            for v in 0..n {
                let Some(sensed) = outcome.sensed[v] else { continue };
                let mut ob = Observation {
                    reception: outcome.reception_for(v).cloned(),
                    sensed,
                };
                if let Some(d) = opts.sense_noise {
                    use rand::Rng;
                    let f = 1.0 + noise_rngs[v].random_range(-d..=d);
                    ob.sensed *= f;
                    if let Some(r) = ob.reception.as_mut() {
                        r.sender_signal *= f;
                        r.total_power *= f;
                    }
                }
                driver.observe(v, round, slot, &ob, &mut rngs[v]);
            }
        }
        driver.end_round(round, trace);
    }
    let finished = driver.finished() || (0..n).all(|i| driver.is_halted(i));
    StageReport {
        stage: driver.label(),
        rounds: rounds_run,
        budget: round_budget,
        budget_exhausted: !finished,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tdma_gate_round_robin() {
        assert!(tdma_gate(1, 0, 12));
        assert!(tdma_gate(3, 14, 12)); // 14 mod 12 = 2 -> color 3
        assert!(!tdma_gate(1, 1, 12));
        // Exactly one color per round.
        for round in 0..40u64 {
            let active: Vec<u32> = (1..=12).filter(|&c| tdma_gate(c, round, 12)).collect();
            assert_eq!(active.len(), 1);
        }
    }

    #[test]
    fn stage_seeds_differ() {
        let a = stage_seed(42, 0);
        let b = stage_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, stage_seed(42, 0));
    }

    #[test]
    fn node_rng_streams_are_independent_of_consumers() {
        use rand::Rng;
        let mut a = node_rng(7, 3);
        let mut b = node_rng(7, 3);
        let x: u64 = a.random();
        let y: u64 = b.random();
        assert_eq!(x, y);
        let mut c = node_rng(7, 4);
        let z: u64 = c.random();
        assert_ne!(x, z);
    }
}
