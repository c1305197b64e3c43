//! Physical-layer slot resolution: which transmissions are decoded by which
//! listeners, and what total power each listener senses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

/// Physical-layer constants shared by all nodes (uniform power assignment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrParams {
    /// Transmit power in watts.
    pub power: f64,
    /// Path-loss exponent, strictly greater than 2.
    pub alpha: f64,
    /// Decoding threshold, at least 1.
    pub beta: f64,
    /// Ambient noise in watts.
    pub noise: f64,
    /// Communication-range slack in (0, 1).
    pub epsilon: f64,
}

impl SinrParams {
    pub fn new(power: f64, alpha: f64, beta: f64, noise: f64, epsilon: f64) -> Result<Self> {
        let p = Self { power, alpha, beta, noise, epsilon };
        p.validate()?;
        Ok(p)
    }

    /// Defaults used across tests and the CLI: alpha 3, beta 1.5, unit power,
    /// noise chosen so the transmission range is 1, epsilon 1/3.
    pub fn default_unit() -> Self {
        Self { power: 1.0, alpha: 3.0, beta: 1.5, noise: 1.0 / 1.5, epsilon: 1.0 / 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 2.0) {
            return Err(Error::InvalidParams("alpha must be > 2".into()));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::InvalidParams("beta must be >= 1".into()));
        }
        if !(self.power > 0.0) || !(self.noise > 0.0) {
            return Err(Error::InvalidParams("power and noise must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParams("epsilon must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Transmission range: max distance decodable absent interference.
    pub fn r_t(&self) -> f64 {
        (self.power / (self.beta * self.noise)).powf(1.0 / self.alpha)
    }

    /// Reduced range `(1 - c) * r_t` for `c` in (0, 1).
    pub fn r_reduced(&self, c: f64) -> f64 {
        (1.0 - c) * self.r_t()
    }

    /// Communication-graph radius.
    pub fn r_eps(&self) -> f64 {
        self.r_reduced(self.epsilon)
    }

    /// Radius separating same-colored clusters.
    pub fn r_eps_half(&self) -> f64 {
        self.r_reduced(self.epsilon / 2.0)
    }

    /// Interference bound for a clear reception.
    pub fn t_s(&self) -> f64 {
        let a = self.alpha;
        let two_a = (2f64).powf(a);
        self.noise * ((two_a - 1.0) / two_a).min(0.5f64.powf(a) * self.beta)
    }

    /// Received power of this node's signal at distance `d`.
    pub fn signal_at(&self, d: f64) -> f64 {
        self.power / d.powf(self.alpha)
    }

    /// Distance a received signal strength implies under exact inversion.
    pub fn distance_from_signal(&self, signal: f64) -> f64 {
        (self.power / signal).powf(1.0 / self.alpha)
    }
}

/// Per-parameter uncertainty intervals. Protocols in the uncertainty mode see
/// only these; the physics always uses the true values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrRanges {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub noise: (f64, f64),
}

impl SinrRanges {
    /// Protocol-side parameters under uncertainty: extremal values that make
    /// every derived radius and threshold conservative (smaller ranges,
    /// stronger signal requirements). The physics keeps the true values.
    pub fn conservative_view(&self, base: &SinrParams) -> SinrParams {
        SinrParams {
            power: base.power,
            alpha: self.alpha.1,
            beta: self.beta.1,
            noise: self.noise.1,
            epsilon: base.epsilon,
        }
    }
}

/// What a protocol knows about the physical layer.
#[derive(Debug, Clone, Copy)]
pub enum ParamView {
    Exact(SinrParams),
    Ranges { power: f64, epsilon: f64, ranges: SinrRanges },
}

impl ParamView {
    /// Lower bound on the transmission range: extremal values make the range
    /// as small as the intervals allow.
    pub fn r_t_lower(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.r_t(),
            ParamView::Ranges { power, ranges, .. } => {
                let (_, beta_max) = ranges.beta;
                let (_, noise_max) = ranges.noise;
                let (_, alpha_max) = ranges.alpha;
                let base = power / (beta_max * noise_max);
                // With base > 1 a larger exponent denominator shrinks the
                // range; with base < 1 it grows it. Take the worse of both.
                let (alpha_min, _) = ranges.alpha;
                let a = (base).powf(1.0 / alpha_max);
                let b = (base).powf(1.0 / alpha_min);
                a.min(b)
            }
        }
    }

    pub fn alpha_max(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.alpha,
            ParamView::Ranges { ranges, .. } => ranges.alpha.1,
        }
    }

    pub fn alpha_min(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.alpha,
            ParamView::Ranges { ranges, .. } => ranges.alpha.0,
        }
    }

    pub fn beta_max(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.beta,
            ParamView::Ranges { ranges, .. } => ranges.beta.1,
        }
    }

    pub fn noise_max(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.noise,
            ParamView::Ranges { ranges, .. } => ranges.noise.1,
        }
    }

    pub fn power(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.power,
            ParamView::Ranges { power, .. } => *power,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            ParamView::Exact(p) => p.epsilon,
            ParamView::Ranges { epsilon, .. } => *epsilon,
        }
    }

    pub fn r_eps_lower(&self) -> f64 {
        (1.0 - self.epsilon()) * self.r_t_lower()
    }

    pub fn r_eps_half_lower(&self) -> f64 {
        (1.0 - self.epsilon() / 2.0) * self.r_t_lower()
    }
}

/// One node's action in one slot. Channels are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Action<M> {
    Transmit { channel: u16, msg: M },
    Listen { channel: u16 },
    Idle,
}

impl<M> Action<M> {
    pub fn listened_channel(&self) -> Option<u16> {
        match self {
            Action::Listen { channel } => Some(*channel),
            _ => None,
        }
    }
}

/// Exactly one action per node per slot, indexed by node position.
#[derive(Debug, Clone)]
pub struct SlotFrame<M> {
    pub actions: Vec<Action<M>>,
}

/// A successful decode at a listener.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception<M> {
    pub receiver: usize,
    pub sender: usize,
    pub msg: M,
    pub sinr: f64,
    pub sender_signal: f64,
    pub total_power: f64,
}

/// Result of resolving one slot: at most one reception per listener, plus the
/// total power sensed by every listener (noise included).
#[derive(Debug, Clone)]
pub struct SlotOutcome<M> {
    pub receptions: Vec<Reception<M>>,
    /// Indexed by node; `Some` exactly for listeners.
    pub sensed: Vec<Option<f64>>,
}

impl<M> SlotOutcome<M> {
    pub fn reception_for(&self, node: usize) -> Option<&Reception<M>> {
        self.receptions.iter().find(|r| r.receiver == node)
    }
}

/// Precomputed pairwise received powers for a fixed topology and parameters.
/// `power_at(i, j)` is the power of i's signal at j.
pub struct PowerMatrix {
    n: usize,
    p: Vec<f64>,
}

impl PowerMatrix {
    pub fn new(topo: &Topology, params: &SinrParams) -> Self {
        let n = topo.len();
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p[i * n + j] = params.power / topo.distance(i, j).powf(params.alpha);
                }
            }
        }
        Self { n, p }
    }

    #[inline]
    pub fn power_at(&self, from: usize, to: usize) -> f64 {
        self.p[from * self.n + to]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Resolve one slot. A listener on channel F decodes the strongest
/// same-channel transmitter whose SINR meets the threshold; with beta >= 1 at
/// most one transmitter can qualify. Transmitters hear nothing.
pub fn resolve_slot<M: Clone>(
    pm: &PowerMatrix,
    params: &SinrParams,
    frame: &SlotFrame<M>,
) -> SlotOutcome<M> {
    let n = frame.actions.len();
    assert_eq!(n, pm.len(), "frame does not match topology");
    let mut tx_by_channel: Vec<(u16, Vec<usize>)> = Vec::new();
    for (i, a) in frame.actions.iter().enumerate() {
        if let Action::Transmit { channel, .. } = a {
            match tx_by_channel.iter_mut().find(|(c, _)| c == channel) {
                Some((_, v)) => v.push(i),
                None => tx_by_channel.push((*channel, vec![i])),
            }
        }
    }
    let mut receptions = Vec::new();
    let mut sensed = vec![None; n];
    for (v, a) in frame.actions.iter().enumerate() {
        let ch = match a {
            Action::Listen { channel } => *channel,
            _ => continue,
        };
        let txs: &[usize] = tx_by_channel
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[]);
        let mut total = params.noise;
        let mut best = 0.0f64;
        let mut best_u = usize::MAX;
        for &u in txs {
            let s = pm.power_at(u, v);
            total += s;
            if s > best {
                best = s;
                best_u = u;
            }
        }
        sensed[v] = Some(total);
        if best_u != usize::MAX {
            let interference_noise = total - best;
            let sinr = best / interference_noise;
            if sinr >= params.beta {
                let msg = match &frame.actions[best_u] {
                    Action::Transmit { msg, .. } => msg.clone(),
                    _ => unreachable!(),
                };
                receptions.push(Reception {
                    receiver: v,
                    sender: best_u,
                    msg,
                    sinr,
                    sender_signal: best,
                    total_power: total,
                });
            }
        }
    }
    SlotOutcome { receptions, sensed }
}

/// How a protocol judges the residual interference of a decoded message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClearPolicy {
    /// The fixed model threshold `t_s`.
    Strict,
    /// Threshold scaled to the independence radius in use:
    /// `theta * P / (2r)^alpha`, certifying that no second transmitter sat
    /// within 2r of the receiver. Coincides with the strict bound at the
    /// maximum supported radius.
    RadiusScaled { theta: f64 },
}

impl ClearPolicy {
    pub fn threshold(&self, params: &SinrParams, radius: f64) -> f64 {
        match self {
            ClearPolicy::Strict => params.t_s(),
            ClearPolicy::RadiusScaled { theta } => {
                theta * params.power / (2.0 * radius).powf(params.alpha)
            }
        }
    }
}

/// A reception is clear for `radius` when the sender is within `radius`
/// (inferred from signal strength) and the residual interference stays under
/// the fixed model threshold.
pub fn clear_reception<M>(r: &Reception<M>, params: &SinrParams, radius: f64) -> bool {
    clear_reception_with(r, params, radius, ClearPolicy::Strict)
}

pub fn clear_reception_with<M>(
    r: &Reception<M>,
    params: &SinrParams,
    radius: f64,
    policy: ClearPolicy,
) -> bool {
    // Compare in the power domain: sender within `radius` iff its signal is
    // at least the signal a sender exactly at `radius` would produce.
    let min_signal = params.signal_at(radius);
    if r.sender_signal < min_signal {
        return false;
    }
    let interference = r.total_power - r.sender_signal - params.noise;
    interference <= policy.threshold(params, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Node, NodeId};

    fn topo(points: &[(f64, f64)]) -> Topology {
        Topology::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Node { id: NodeId(i as u32), x, y })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_link_hand_evaluation() {
        // d=1, P=1, alpha=3, N=1/16, beta=2: SINR = 16, sensed = 1/16 + 1.
        let params = SinrParams::new(1.0, 3.0, 2.0, 1.0 / 16.0, 0.25).unwrap();
        let t = topo(&[(0.0, 0.0), (1.0, 0.0)]);
        let pm = PowerMatrix::new(&t, &params);
        let frame = SlotFrame {
            actions: vec![
                Action::Transmit { channel: 1, msg: 7u32 },
                Action::Listen { channel: 1 },
            ],
        };
        let out = resolve_slot(&pm, &params, &frame);
        assert_eq!(out.receptions.len(), 1);
        let r = &out.receptions[0];
        assert_eq!((r.sender, r.receiver, r.msg), (0, 1, 7));
        assert!((r.sinr - 16.0).abs() < 1e-12);
        assert!((out.sensed[1].unwrap() - (1.0 / 16.0 + 1.0)).abs() < 1e-12);
        assert!(out.sensed[0].is_none());
    }

    #[test]
    fn channel_isolation() {
        let params = SinrParams::default_unit();
        let t = topo(&[(0.0, 0.0), (0.5, 0.0)]);
        let pm = PowerMatrix::new(&t, &params);
        let frame = SlotFrame {
            actions: vec![
                Action::Transmit { channel: 1, msg: 1u32 },
                Action::Listen { channel: 2 },
            ],
        };
        let out = resolve_slot(&pm, &params, &frame);
        assert!(out.receptions.is_empty());
        assert_eq!(out.sensed[1], Some(params.noise));
    }

    #[test]
    fn boundary_reception_at_r_t() {
        // Constructed so r_t = 2 exactly: P=1, alpha=3, beta=2, N=1/16.
        let params = SinrParams::new(1.0, 3.0, 2.0, 1.0 / 16.0, 0.25).unwrap();
        assert!((params.r_t() - 2.0).abs() < 1e-12);
        let t = topo(&[(0.0, 0.0), (2.0, 0.0)]);
        let pm = PowerMatrix::new(&t, &params);
        let frame = SlotFrame {
            actions: vec![
                Action::Transmit { channel: 1, msg: 0u8 },
                Action::Listen { channel: 1 },
            ],
        };
        let out = resolve_slot(&pm, &params, &frame);
        assert_eq!(out.receptions.len(), 1, "boundary SINR == beta must decode");
    }

    #[test]
    fn t_s_formula() {
        // alpha=3, beta=1, N=1: min(7/8, 1/8) = 1/8.
        let params = SinrParams::new(1.0, 3.0, 1.0, 1.0, 0.25).unwrap();
        assert!((params.t_s() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn clear_reception_cases() {
        let params = SinrParams::new(1.0, 3.0, 1.0, 1.0, 0.25).unwrap();
        let radius = 0.5;
        let sig = params.signal_at(radius);
        // No interferers: interference 0 <= t_s.
        let r = Reception {
            receiver: 0,
            sender: 1,
            msg: (),
            sinr: 10.0,
            sender_signal: sig,
            total_power: params.noise + sig,
        };
        assert!(clear_reception(&r, &params, radius));
        // Sender slightly beyond the radius.
        let far_sig = params.signal_at(radius * 1.01);
        let r2 = Reception { sender_signal: far_sig, total_power: params.noise + far_sig, ..r.clone() };
        assert!(!clear_reception(&r2, &params, radius));
        // Single interferer contributing 0.2 W > t_s = 0.125.
        let r3 = Reception { total_power: params.noise + sig + 0.2, ..r };
        assert!(!clear_reception(&r3, &params, radius));
    }

    #[test]
    fn half_duplex_transmitters_hear_nothing() {
        let params = SinrParams::default_unit();
        let t = topo(&[(0.0, 0.0), (0.1, 0.0)]);
        let pm = PowerMatrix::new(&t, &params);
        let frame = SlotFrame {
            actions: vec![
                Action::Transmit { channel: 1, msg: 1u8 },
                Action::Transmit { channel: 1, msg: 2u8 },
            ],
        };
        let out = resolve_slot(&pm, &params, &frame);
        assert!(out.receptions.is_empty());
        assert!(out.sensed.iter().all(Option::is_none));
    }
}
