//! Monte-Carlo estimation of the delivery success constants and the
//! clustering density, written to a constants file consumed by the theory
//! preset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::cluster_radius;
use crate::sinr::{resolve_slot, Action, PowerMatrix, SinrParams, SlotFrame};
use crate::structure::clustering::greedy_clustering;
use crate::topology::{generate_topology, Topology, TopologyKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub kappa: f64,
    pub kappa1: f64,
    pub mu: f64,
    pub trials: usize,
    pub params: SinrParams,
}

/// Fraction of transmissions heard by every listener within `radius`, with
/// per-ball transmission-probability sums held at one half.
fn measure_success(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    radius: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = topo.len();
    // Pick the probability so the expected sum inside a radius ball is 1/2.
    let mut per_ball = 0usize;
    for v in 0..n {
        per_ball += (0..n).filter(|&u| topo.distance(u, v) <= radius).count();
    }
    let avg_ball = per_ball as f64 / n as f64;
    let p = (0.5 / avg_ball).min(0.5);
    let mut attempts = 0usize;
    let mut successes = 0usize;
    for _ in 0..trials {
        let tx: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
        let actions: Vec<Action<u32>> = (0..n)
            .map(|i| {
                if tx[i] {
                    Action::Transmit { channel: 1, msg: i as u32 }
                } else {
                    Action::Listen { channel: 1 }
                }
            })
            .collect();
        let frame = SlotFrame { actions };
        let out = resolve_slot(pm, params, &frame);
        for u in 0..n {
            if !tx[u] {
                continue;
            }
            let listeners: Vec<usize> = (0..n)
                .filter(|&v| v != u && !tx[v] && topo.distance(u, v) <= radius)
                .collect();
            if listeners.is_empty() {
                continue;
            }
            attempts += 1;
            let heard_by_all = listeners
                .iter()
                .all(|&v| out.reception_for(v).map(|r| r.sender == u).unwrap_or(false));
            if heard_by_all {
                successes += 1;
            }
        }
    }
    if attempts == 0 {
        1.0
    } else {
        successes as f64 / attempts as f64
    }
}

/// Estimate the success constants at the two working radii and measure the
/// clustering density.
pub fn calibrate(params: &SinrParams, n: usize, trials: usize, seed: u64) -> Calibration {
    let extent = 3.0 * params.r_t();
    let topo = generate_topology(TopologyKind::UniformDisk, n, extent, seed).expect("topology");
    let pm = PowerMatrix::new(&topo, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca11);
    let r_c = cluster_radius(params);
    let kappa = measure_success(&topo, &pm, params, r_c, trials, &mut rng);
    let kappa1 = measure_success(&topo, &pm, params, 2.0 * r_c, trials, &mut rng);
    let doms = greedy_clustering(&topo, r_c);
    let mut dominators: Vec<usize> = doms.clone();
    dominators.sort_unstable();
    dominators.dedup();
    let mu = crate::structure::measure_density(&topo, &dominators, r_c) as f64;
    Calibration { kappa, kappa1, mu, trials, params: *params }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_yields_positive_constants() {
        let params = SinrParams::default_unit();
        let c = calibrate(&params, 80, 40, 7);
        assert!(c.kappa > 0.0 && c.kappa <= 1.0);
        assert!(c.kappa1 > 0.0 && c.kappa1 <= 1.0);
        assert!(c.mu >= 1.0);
    }
}
