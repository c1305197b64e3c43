//! Protocol constants. The `theory` preset derives every constant from the
//! analysis formulas given measured success constants; the `practical` preset
//! uses independently chosen smaller values that make desk-scale runs
//! feasible. The preset in force is recorded in every metrics row.

use serde::{Deserialize, Serialize};

use crate::sinr::{ClearPolicy, SinrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Theory,
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConstants {
    pub preset: Preset,
    /// Dominating-set density bound (candidates per ball at the protocol's
    /// working radius); hello probabilities are `1/(2 mu)`.
    pub mu: f64,
    /// Success constant for probabilistic delivery at the clustering radius.
    pub kappa: f64,
    /// Success constant for follower-to-reporter delivery.
    pub kappa1: f64,
    /// Contention cap; Bounded Contention keeps per-cluster probability sums
    /// at or below `lambda * f_v`.
    pub lambda: f64,
    /// Cluster-size-approximation termination threshold multiplier.
    pub omega1: f64,
    /// Cluster-size-approximation phase-length multiplier.
    pub gamma1: f64,
    /// Channel-count divisor: `f_v = min(ceil(est / (c1 ln n)), F)`.
    pub c1: f64,
    /// Follower-phase backoff threshold multiplier.
    pub omega2: f64,
    /// Follower-phase length multiplier.
    pub gamma2: f64,
    /// Ruling-set round multiplier.
    pub gamma: f64,
    /// Ruling-set acknowledgement probability.
    pub ack_p: f64,
    /// Small-instance leader-election round multiplier.
    pub gamma3: f64,

    // Artifact knobs, all public to every node.
    /// Clustering round multiplier (decay ladder length).
    pub gamma_d: f64,
    /// Dominator-announcement probability during clustering.
    pub q_dom: f64,
    /// Cluster-coloring phase-length multiplier.
    pub gamma_c: f64,
    /// Assumed dominator density inside a separation-radius ball; sets the
    /// cluster-coloring claim probability `1/(2 mu_big)`.
    pub mu_big: f64,
    /// TDMA cycle length (upper bound on usable cluster colors).
    pub phi_cap: u32,
    /// Backbone transmission probability.
    pub kappa_b: f64,
    /// Backbone stage budget multiplier: each sub-stage gets
    /// `c_backbone * (diameter_hint + log n)` gated rounds.
    pub c_backbone: f64,
    /// Small-instance size-approximation budget multiplier (times
    /// `log n * log log n`).
    pub c_small: f64,
    /// Clear-reception policy used inside randomized protocols.
    pub clear: ClearPolicy,
}

impl ProtocolConstants {
    /// Constants from the analysis formulas, given the measured success
    /// constants and the density bound.
    pub fn theory(kappa: f64, kappa1: f64, mu: f64) -> Self {
        let lambda = 0.5;
        let omega1 = 36.0;
        let omega2 = 96.0 / kappa1;
        Self {
            preset: Preset::Theory,
            mu,
            kappa,
            kappa1,
            lambda,
            omega1,
            gamma1: 4.0 * omega1 / (kappa * lambda),
            c1: 24.0,
            omega2,
            gamma2: 8.0 * omega2 / kappa1,
            gamma: 12.0 * mu * mu / (kappa * kappa),
            ack_p: 1.0 / (2.0 * mu),
            gamma3: 12.0 * mu * mu / (kappa * kappa),
            gamma_d: 12.0,
            q_dom: 0.25,
            gamma_c: 8.0,
            mu_big: 24.0,
            phi_cap: 64,
            kappa_b: 0.25,
            c_backbone: 8.0,
            c_small: 400.0,
            clear: ClearPolicy::Strict,
        }
    }

    /// Desk-scale defaults. Values are independently chosen (smaller than the
    /// analysis formulas produce) and recorded in run metrics.
    pub fn practical() -> Self {
        Self {
            preset: Preset::Practical,
            mu: 3.0,
            kappa: 0.25,
            kappa1: 0.25,
            lambda: 0.5,
            omega1: 4.5,
            gamma1: 32.0,
            c1: 8.0,
            omega2: 1.0,
            gamma2: 32.0,
            gamma: 100.0,
            ack_p: 0.5,
            gamma3: 10.0,
            gamma_d: 12.0,
            q_dom: 0.25,
            gamma_c: 8.0,
            mu_big: 24.0,
            phi_cap: 64,
            kappa_b: 0.25,
            c_backbone: 6.0,
            c_small: 140.0,
            clear: ClearPolicy::RadiusScaled { theta: 0.5 },
        }
    }

    /// Round count for a `multiplier * log n` stage. Clamped below so tiny
    /// instances still run their protocol shell.
    pub fn rounds(&self, multiplier: f64, n_hat: f64) -> u64 {
        (multiplier * log_n(n_hat)).ceil().max(1.0) as u64
    }
}

/// Natural log of the node-count estimate, clamped to at least 1 so that
/// per-phase round counts and channel formulas stay nondegenerate for tiny
/// instances.
pub fn log_n(n_hat: f64) -> f64 {
    n_hat.ln().max(1.0)
}

/// Reception-count threshold for size-approximation termination. The floor
/// keeps Poisson noise from firing a phase early on small instances.
pub fn csa_threshold(omega1: f64, n_hat: f64) -> f64 {
    (omega1 * log_n(n_hat)).max(16.0)
}

/// Reception-count threshold for the follower-phase backoff. Kept well below
/// the expected count at half the contention cap so the backoff fires before
/// doubling can break the cap, with a floor against small-instance noise.
pub fn backoff_threshold(omega2: f64, n_hat: f64) -> f64 {
    (omega2 * log_n(n_hat)).max(8.0)
}

/// `t = ((alpha-2) / (48 beta (alpha-1)))^(1/alpha)`: the separation factor
/// that makes independent transmitters decode deterministically at the scaled
/// radius.
pub fn separation_factor(params: &SinrParams) -> f64 {
    ((params.alpha - 2.0) / (48.0 * params.beta * (params.alpha - 1.0))).powf(1.0 / params.alpha)
}

/// Cluster radius: `min(t/(2t+2) * R_{eps/2}, eps R_T / 4)`.
pub fn cluster_radius(params: &SinrParams) -> f64 {
    let t = separation_factor(params);
    (t / (2.0 * t + 2.0) * params.r_eps_half()).min(params.epsilon * params.r_t() / 4.0)
}

/// Upper bound on cluster colors: `4 mu (R_{eps/2} + r_c/2)^2 / r_c^2`.
pub fn phi_bound(mu: f64, r_eps_half: f64, r_c: f64) -> f64 {
    4.0 * mu * (r_eps_half + r_c / 2.0).powi(2) / (r_c * r_c)
}

/// Channels used by a cluster of estimated size `est`:
/// `min(ceil(est / (c1 log n)), channels)`, never below 1.
pub fn cluster_channels(est: u64, n_hat: f64, c1: f64, channels: u16) -> u16 {
    if est <= 1 {
        return 1;
    }
    let f = (est as f64 / (c1 * log_n(n_hat))).ceil() as u64;
    f.clamp(1, channels as u64) as u16
}
