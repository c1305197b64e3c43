//! Purpose-built experiment topologies: dense blobs (degree-controlled) and
//! blob chains (backbone-diameter-controlled).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::topology::{Node, NodeId, Topology};

fn scatter(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    (cx + r * a.cos(), cy + r * a.sin())
}

/// One dense blob of `n` nodes inside `radius`: every pair is adjacent, so
/// the max degree is `n - 1`.
pub fn blob(n: usize, radius: f64, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10b);
    let nodes = (0..n)
        .map(|i| {
            let (x, y) = scatter(&mut rng, 0.0, 0.0, radius);
            Node { id: NodeId(i as u32), x, y }
        })
        .collect();
    Topology::new(nodes).expect("blob topology")
}

/// A chain of `k` blobs of `per` nodes, adjacent blobs `spacing` apart. With
/// spacing below the adjacency radius the backbone forms a line of about
/// `k - 1` hops.
pub fn blob_chain(k: usize, per: usize, blob_radius: f64, spacing: f64, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc4a1);
    let mut nodes = Vec::with_capacity(k * per);
    let mut id = 0u32;
    for b in 0..k {
        let cx = b as f64 * spacing;
        for _ in 0..per {
            let (x, y) = scatter(&mut rng, cx, 0.0, blob_radius);
            nodes.push(Node { id: NodeId(id), x, y });
            id += 1;
        }
    }
    Topology::new(nodes).expect("blob chain topology")
}

/// A grid of `k x k` blobs, for mid-size multi-cluster experiments.
pub fn blob_grid(k: usize, per: usize, blob_radius: f64, spacing: f64, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d1d);
    let mut nodes = Vec::with_capacity(k * k * per);
    let mut id = 0u32;
    for row in 0..k {
        for col in 0..k {
            let cx = col as f64 * spacing;
            let cy = row as f64 * spacing;
            for _ in 0..per {
                let (x, y) = scatter(&mut rng, cx, cy, blob_radius);
                nodes.push(Node { id: NodeId(id), x, y });
                id += 1;
            }
        }
    }
    Topology::new(nodes).expect("blob grid topology")
}

/// Well-separated blobs with explicit sizes (size-approximation studies).
pub fn sized_blobs(sizes: &[usize], blob_radius: f64, spacing: f64, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let mut nodes = Vec::new();
    let mut id = 0u32;
    for (b, &sz) in sizes.iter().enumerate() {
        let cx = b as f64 * spacing;
        for _ in 0..sz {
            let (x, y) = scatter(&mut rng, cx, 0.0, blob_radius);
            nodes.push(Node { id: NodeId(id), x, y });
            id += 1;
        }
    }
    Topology::new(nodes).expect("sized blobs topology")
}
