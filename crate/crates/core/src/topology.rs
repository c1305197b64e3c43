//! Node placement, topology generators, plain-text topology files and
//! communication-graph analytics (max degree, hop diameter).

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sinr::SinrParams;

pub const TOPO_HEADER: &str = "#mcsinr-topo v1";

/// Stable node identifier, unique within a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

/// A set of nodes on the plane. Node order is stable; protocol code works
/// with dense indices `0..n` and maps back to ids only at the edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    UniformDisk,
    Grid,
    ExponentialChain,
    Clustered,
}

impl TopologyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform_disk" | "uniform-disk" => Ok(Self::UniformDisk),
            "grid" => Ok(Self::Grid),
            "exponential_chain" | "exponential-chain" => Ok(Self::ExponentialChain),
            "clustered" => Ok(Self::Clustered),
            other => Err(Error::Config(format!("unknown topology kind `{other}`"))),
        }
    }
}

impl Topology {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidTopology("need at least one node".into()));
        }
        let mut ids: Vec<u32> = nodes.iter().map(|n| n.id.0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != nodes.len() {
            return Err(Error::InvalidTopology("duplicate node ids".into()));
        }
        for n in &nodes {
            if !n.x.is_finite() || !n.y.is_finite() {
                return Err(Error::InvalidTopology(format!(
                    "node {} has non-finite coordinates",
                    n.id
                )));
            }
        }
        let mut coords: Vec<(u64, u64)> = nodes
            .iter()
            .map(|n| (n.x.to_bits(), n.y.to_bits()))
            .collect();
        coords.sort_unstable();
        coords.dedup();
        if coords.len() != nodes.len() {
            return Err(Error::InvalidTopology(
                "two nodes share identical coordinates".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn id(&self, idx: usize) -> NodeId {
        self.nodes[idx].id
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = &self.nodes[i];
        let b = &self.nodes[j];
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TOPO_HEADER}")?;
        for n in &self.nodes {
            // `{:?}` prints the shortest representation that round-trips.
            writeln!(w, "{} {:?} {:?}", n.id.0, n.x, n.y)?;
        }
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load<R: std::io::Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        // Provenance comments (`# ...`) may precede the format header.
        let first = loop {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 1, msg: "empty topology file".into() })?;
            let line = line?;
            let t = line.trim().to_string();
            if t.is_empty() || t.starts_with("# ") {
                continue;
            }
            break (ln, t);
        };
        if first.1 != TOPO_HEADER {
            return Err(Error::Parse {
                line: first.0 + 1,
                msg: format!("expected header `{TOPO_HEADER}`, got `{}`", first.1),
            });
        }
        let mut nodes = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut parts = t.split_whitespace();
            let parse = |s: Option<&str>, what: &str| -> Result<String> {
                s.map(str::to_owned).ok_or_else(|| Error::Parse {
                    line: ln + 1,
                    msg: format!("missing {what}"),
                })
            };
            let id: u32 = parse(parts.next(), "id")?.parse().map_err(|e| Error::Parse {
                line: ln + 1,
                msg: format!("bad id: {e}"),
            })?;
            let x: f64 = parse(parts.next(), "x")?.parse().map_err(|e| Error::Parse {
                line: ln + 1,
                msg: format!("bad x: {e}"),
            })?;
            let y: f64 = parse(parts.next(), "y")?.parse().map_err(|e| Error::Parse {
                line: ln + 1,
                msg: format!("bad y: {e}"),
            })?;
            nodes.push(Node { id: NodeId(id), x, y });
        }
        Self::new(nodes)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(f)
    }
}

/// Deterministic topology generation: identical inputs give identical output.
pub fn generate_topology(
    kind: TopologyKind,
    n: usize,
    extent: f64,
    seed: u64,
) -> Result<Topology> {
    if n == 0 {
        return Err(Error::InvalidTopology("n must be at least 1".into()));
    }
    if kind != TopologyKind::ExponentialChain && !(extent > 0.0) {
        return Err(Error::InvalidTopology("extent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d63_7369_6e72_0001);
    let nodes = match kind {
        TopologyKind::UniformDisk => {
            let r = extent / 2.0;
            let (cx, cy) = (r, r);
            (0..n)
                .map(|i| {
                    let u: f64 = rng.random();
                    let v: f64 = rng.random();
                    let rad = r * u.sqrt();
                    let ang = v * std::f64::consts::TAU;
                    Node {
                        id: NodeId(i as u32),
                        x: cx + rad * ang.cos(),
                        y: cy + rad * ang.sin(),
                    }
                })
                .collect()
        }
        TopologyKind::Grid => {
            let side = (n as f64).sqrt().ceil() as usize;
            let step = if side > 1 { extent / (side - 1) as f64 } else { 0.0 };
            (0..n)
                .map(|i| {
                    let (row, col) = (i / side, i % side);
                    Node {
                        id: NodeId(i as u32),
                        x: if side > 1 { col as f64 * step } else { extent / 2.0 },
                        y: if side > 1 { row as f64 * step } else { extent / 2.0 },
                    }
                })
                .collect()
        }
        TopologyKind::ExponentialChain => {
            // Node i sits at x = 2^(i+1); the largest exponent must stay a
            // finite double.
            if n + 1 > 1023 {
                return Err(Error::Capacity(format!(
                    "exponential chain of {n} nodes overflows f64 coordinates"
                )));
            }
            (0..n)
                .map(|i| Node {
                    id: NodeId(i as u32),
                    x: (2f64).powi(i as i32 + 1),
                    y: 0.0,
                })
                .collect()
        }
        TopologyKind::Clustered => {
            let k = ((n as f64).sqrt() / 2.0).round().max(1.0) as usize;
            let centers: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.random::<f64>() * extent, rng.random::<f64>() * extent))
                .collect();
            let sigma = extent / (8.0 * (k as f64).sqrt());
            (0..n)
                .map(|i| {
                    let c = centers[rng.random_range(0..k)];
                    Node {
                        id: NodeId(i as u32),
                        x: c.0 + gaussian(&mut rng) * sigma,
                        y: c.1 + gaussian(&mut rng) * sigma,
                    }
                })
                .collect()
        }
    };
    Topology::new(nodes)
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// The communication graph: nodes adjacent iff within the reduced range
/// `R_eps` of each other (boundary inclusive).
#[derive(Debug, Clone)]
pub struct CommGraph {
    pub neighbors: Vec<Vec<u32>>,
    pub delta: usize,
    /// Hop diameter; `None` marks a disconnected graph.
    pub diameter: Option<usize>,
}

impl CommGraph {
    pub fn degree(&self, idx: usize) -> usize {
        self.neighbors[idx].len()
    }

    pub fn is_connected(&self) -> bool {
        self.diameter.is_some()
    }
}

pub fn build_comm_graph(topo: &Topology, params: &SinrParams) -> CommGraph {
    build_comm_graph_radius(topo, params.r_eps())
}

pub fn build_comm_graph_radius(topo: &Topology, radius: f64) -> CommGraph {
    let n = topo.len();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if topo.distance(i, j) <= radius {
                neighbors[i].push(j as u32);
                neighbors[j].push(i as u32);
            }
        }
    }
    let delta = neighbors.iter().map(Vec::len).max().unwrap_or(0);
    let diameter = hop_diameter(&neighbors);
    CommGraph { neighbors, delta, diameter }
}

fn hop_diameter(neighbors: &[Vec<u32>]) -> Option<usize> {
    let n = neighbors.len();
    let mut best = 0usize;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for start in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[start] = 0;
        queue.clear();
        queue.push_back(start);
        let mut seen = 1usize;
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                let v = v as usize;
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    best = best.max(dist[v]);
                    seen += 1;
                    queue.push_back(v);
                }
            }
        }
        if seen != n {
            return None;
        }
    }
    Some(best)
}
