//! Construction of the aggregation structure: clustering, cluster coloring,
//! cluster-size approximation and reporter election.

pub mod clustering;
pub mod cluster_coloring;
pub mod csa;
pub mod reporters;
pub mod ruling;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};

use serde::{Deserialize, Serialize};

use crate::constants::{cluster_channels, cluster_radius, ProtocolConstants};
use crate::error::{Error, Result};
use crate::sim::{self, SimOptions, StageReport, Trace, TraceLevel};
use crate::sinr::{PowerMatrix, SinrParams};
use crate::topology::Topology;

pub const STRUCTURE_HEADER: &str = "#mcsinr-structure v1";

/// Reason codes for failed or degraded runs. The set is fixed so acceptance
/// rates are comparable across machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailFlag {
    DisconnectedInput,
    UndominatedNode,
    UncoloredDominator,
    CsaNoTermination,
    EmptyElectionChannel,
    MultiReporter,
    FollowerUndelivered,
    BackboneIncomplete,
    NodeUncolored,
    BudgetExhausted,
}

/// One cluster: a dominator, its members, the cluster color, the size
/// estimate and the per-channel reporters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Node index of the dominator.
    pub dominator: usize,
    /// Cluster color in `1..=phi`.
    pub color: u32,
    /// All member node indices, dominator included.
    pub members: Vec<usize>,
    pub size_estimate: u64,
    pub estimate_warning: bool,
    /// Channels used by the cluster.
    pub f_v: u16,
    /// Reporter node index per channel `1..=f_v`.
    pub reporters: Vec<usize>,
    /// Members that are neither dominator nor reporter.
    pub followers: Vec<usize>,
}

impl ClusterState {
    pub fn true_size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone)]
pub struct StructureResult {
    pub clusters: Vec<ClusterState>,
    /// Node index -> cluster index.
    pub cluster_of: Vec<usize>,
    /// Largest color in use.
    pub phi_used: u32,
    pub flags: Vec<FailFlag>,
    /// Max dominators per cluster-radius ball, measured over ball centers at
    /// node positions.
    pub measured_mu: usize,
    /// Clusters that elected exactly one reporter per channel, over clusters
    /// that elect at all.
    pub election_clean: usize,
    pub election_total: usize,
    pub stage_reports: Vec<StageReport>,
}

impl StructureResult {
    pub fn ok(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn color_of(&self, node: usize) -> u32 {
        self.clusters[self.cluster_of[node]].color
    }

    pub fn dominator_of(&self, node: usize) -> usize {
        self.clusters[self.cluster_of[node]].dominator
    }
}

/// How the structure is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureMode {
    /// The distributed protocols.
    Distributed,
    /// Centralized ground-truth structure for isolating upper layers.
    Oracle,
}

/// Assemble cluster records from a dominator assignment, colors, estimates
/// and reporter sets; measure the dominator density on the way.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    topo: &Topology,
    r_c: f64,
    dominator_of: &[usize],
    colors: &BTreeMap<usize, u32>,
    estimates: &BTreeMap<usize, (u64, bool)>,
    f_v_of: &BTreeMap<usize, u16>,
    reporters_of: &BTreeMap<usize, Vec<usize>>,
    stage_reports: Vec<StageReport>,
    mut flags: Vec<FailFlag>,
) -> StructureResult {
    let n = topo.len();
    let mut dominators: Vec<usize> = dominator_of.to_vec();
    dominators.sort_unstable();
    dominators.dedup();
    let mut cluster_index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut clusters: Vec<ClusterState> = Vec::new();
    for &d in dominator_of.iter() {
        cluster_index.entry(d).or_insert_with(|| {
            let (est, warn) = estimates.get(&d).copied().unwrap_or((1, false));
            let color = colors.get(&d).copied().unwrap_or(0);
            clusters.push(ClusterState {
                dominator: d,
                color,
                members: Vec::new(),
                size_estimate: est,
                estimate_warning: warn,
                f_v: f_v_of.get(&d).copied().unwrap_or(0),
                reporters: reporters_of.get(&d).cloned().unwrap_or_default(),
                followers: Vec::new(),
            });
            clusters.len() - 1
        });
    }
    let mut cluster_of = vec![0usize; n];
    for (v, &d) in dominator_of.iter().enumerate() {
        let ci = cluster_index[&d];
        cluster_of[v] = ci;
        clusters[ci].members.push(v);
    }
    for c in &mut clusters {
        c.followers = c
            .members
            .iter()
            .copied()
            .filter(|&m| m != c.dominator && !c.reporters.contains(&m))
            .collect();
        if c.color == 0 {
            flags.push(FailFlag::UncoloredDominator);
        }
    }
    let phi_used = clusters.iter().map(|c| c.color).max().unwrap_or(0);
    // Domination-radius check.
    for (v, &d) in dominator_of.iter().enumerate() {
        if topo.distance(v, d) > r_c {
            flags.push(FailFlag::UndominatedNode);
            break;
        }
    }
    let measured_mu = measure_density(topo, &clusters.iter().map(|c| c.dominator).collect::<Vec<_>>(), r_c);
    flags.dedup();
    StructureResult {
        clusters,
        cluster_of,
        phi_used,
        flags,
        measured_mu,
        election_clean: 0,
        election_total: 0,
        stage_reports,
    }
}

/// Max number of the given nodes inside any radius-`r` ball centered at a
/// node position (brute force).
pub fn measure_density(topo: &Topology, points: &[usize], r: f64) -> usize {
    let mut best = 0;
    for c in 0..topo.len() {
        let count = points.iter().filter(|&&p| topo.distance(c, p) <= r).count();
        best = best.max(count);
    }
    best
}

/// Greedy coloring of a dominator set: lowest id first, smallest color not
/// used within the separation radius.
pub fn greedy_colors(topo: &Topology, doms: &[usize], sep: f64) -> BTreeMap<usize, u32> {
    let mut order: Vec<usize> = doms.to_vec();
    order.sort_by_key(|&d| topo.id(d));
    let mut colors: BTreeMap<usize, u32> = BTreeMap::new();
    for &d in &order {
        let mut used: Vec<u32> = order
            .iter()
            .filter(|&&o| o != d && colors.contains_key(&o) && topo.distance(d, o) <= sep)
            .map(|o| colors[o])
            .collect();
        used.sort_unstable();
        used.dedup();
        let mut c = 1u32;
        while used.contains(&c) {
            c += 1;
        }
        colors.insert(d, c);
    }
    colors
}

/// Centralized ground-truth structure: greedy dominators by ascending id,
/// greedy coloring, exact sizes, deterministic channel assignment.
pub fn oracle_structure(
    topo: &Topology,
    params: &SinrParams,
    channels: u16,
    consts: &ProtocolConstants,
    n_hat: f64,
) -> StructureResult {
    let n = topo.len();
    let r_c = cluster_radius(params);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| topo.id(i));
    let mut dominator_of = vec![usize::MAX; n];
    for &i in &order {
        if dominator_of[i] != usize::MAX {
            continue;
        }
        dominator_of[i] = i;
        for &j in &order {
            if dominator_of[j] == usize::MAX && topo.distance(i, j) <= r_c {
                dominator_of[j] = i;
            }
        }
    }
    let mut doms: Vec<usize> = dominator_of.clone();
    doms.sort_unstable();
    doms.dedup();
    doms.sort_by_key(|&d| topo.id(d));
    let colors = greedy_colors(topo, &doms, params.r_eps_half());
    let mut estimates: BTreeMap<usize, (u64, bool)> = BTreeMap::new();
    let mut f_v_of: BTreeMap<usize, u16> = BTreeMap::new();
    let mut reporters_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &d in &doms {
        let mut members: Vec<usize> =
            (0..n).filter(|&v| dominator_of[v] == d).collect();
        members.sort_by_key(|&v| topo.id(v));
        let size = members.len() as u64;
        estimates.insert(d, (size, false));
        let f = if size <= 1 {
            0
        } else {
            cluster_channels(size, n_hat, consts.c1, channels)
        };
        f_v_of.insert(d, f);
        // Deterministic channel assignment: non-dominator members round-robin
        // over channels; the lowest-id member on each channel reports.
        let mut reps = Vec::new();
        if f > 0 {
            let others: Vec<usize> = members.iter().copied().filter(|&v| v != d).collect();
            for ch in 0..f as usize {
                let mut on_ch: Vec<usize> =
                    others.iter().copied().skip(ch).step_by(f as usize).collect();
                on_ch.sort_by_key(|&v| topo.id(v));
                reps.push(on_ch[0]);
            }
        }
        reporters_of.insert(d, reps);
    }
    assemble(
        topo,
        r_c,
        &dominator_of,
        &colors,
        &estimates,
        &f_v_of,
        &reporters_of,
        Vec::new(),
        Vec::new(),
    )
}

/// Run the full distributed structure pipeline: clustering, cluster coloring,
/// size approximation, reporter election.
#[allow(clippy::too_many_arguments)]
pub fn build_structure(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    channels: u16,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    seed: u64,
    opts: SimOptions,
    trace_level: TraceLevel,
) -> (StructureResult, Trace) {
    build_structure_view(
        topo, pm, params, params, channels, consts, n_hat, delta_hat, seed, opts, trace_level,
    )
}

/// As [`build_structure`] with protocol state machines working from a
/// conservative parameter view; the physical layer keeps the true values.
#[allow(clippy::too_many_arguments)]
pub fn build_structure_view(
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    view: &SinrParams,
    channels: u16,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    seed: u64,
    opts: SimOptions,
    trace_level: TraceLevel,
) -> (StructureResult, Trace) {
    let r_c = cluster_radius(view);
    let mut trace = Trace::new(trace_level);
    let mut reports = Vec::new();

    // Stage 1: clustering.
    let cl_seed = sim::stage_seed(seed, 1);
    let (dominator_of, rep) = clustering::run_clustering_view(
        topo, pm, params, view, consts, n_hat, r_c, cl_seed, opts, &mut trace,
    );
    reports.push(rep);

    // Stage 2: cluster coloring + dissemination.
    let co_seed = sim::stage_seed(seed, 2);
    let (colors, rep) = cluster_coloring::run_cluster_coloring_view(
        topo, pm, params, view, consts, n_hat, &dominator_of, co_seed, opts, &mut trace,
    );
    reports.push(rep);

    // Stage 3: cluster-size approximation (TDMA-gated).
    let csa_seed = sim::stage_seed(seed, 3);
    let (estimates, rep) = csa::run_csa_path_view(
        csa::CsaPath::Auto,
        topo, pm, params, view, consts, n_hat, delta_hat, channels, &dominator_of, &colors,
        csa_seed, opts, &mut trace,
    );
    reports.push(rep);

    // Stage 4: reporter election.
    let el_seed = sim::stage_seed(seed, 4);
    let (reporters_of, f_v_of, mut flags, election_clean, election_total, rep) =
        reporters::run_election(
            topo, pm, params, view, consts, n_hat, channels, r_c, &dominator_of, &colors,
            &estimates, el_seed, opts, &mut trace,
        );
    reports.push(rep);

    for (_, &c) in colors.iter() {
        if c == 0 {
            flags.push(FailFlag::UncoloredDominator);
            break;
        }
    }

    let mut result = assemble(
        topo,
        r_c,
        &dominator_of,
        &colors,
        &estimates,
        &f_v_of,
        &reporters_of,
        reports,
        flags,
    );
    result.election_clean = election_clean;
    result.election_total = election_total;
    (result, trace)
}

/// Produce a structure per the requested mode.
#[allow(clippy::too_many_arguments)]
pub fn make_structure(
    mode: StructureMode,
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    channels: u16,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    seed: u64,
    opts: SimOptions,
    trace_level: TraceLevel,
) -> (StructureResult, Trace) {
    make_structure_view(
        mode, topo, pm, params, params, channels, consts, n_hat, delta_hat, seed, opts,
        trace_level,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn make_structure_view(
    mode: StructureMode,
    topo: &Topology,
    pm: &PowerMatrix,
    params: &SinrParams,
    view: &SinrParams,
    channels: u16,
    consts: &ProtocolConstants,
    n_hat: f64,
    delta_hat: u64,
    seed: u64,
    opts: SimOptions,
    trace_level: TraceLevel,
) -> (StructureResult, Trace) {
    match mode {
        StructureMode::Oracle => {
            (oracle_structure(topo, view, channels, consts, n_hat), Trace::new(trace_level))
        }
        StructureMode::Distributed => build_structure_view(
            topo, pm, params, view, channels, consts, n_hat, delta_hat, seed, opts, trace_level,
        ),
    }
}

/// Text dump of the structure, consumed by the verification oracles and as a
/// warm start for the aggregation and coloring pipelines.
pub fn save_structure<W: Write>(topo: &Topology, s: &StructureResult, mut w: W) -> Result<()> {
    writeln!(w, "{STRUCTURE_HEADER}")?;
    writeln!(w, "phi {}", s.phi_used)?;
    for c in &s.clusters {
        writeln!(
            w,
            "cluster {} {} {} {} {}",
            topo.id(c.dominator),
            c.color,
            c.size_estimate,
            c.f_v,
            u8::from(c.estimate_warning)
        )?;
    }
    for c in &s.clusters {
        for &m in &c.members {
            writeln!(w, "member {} {}", topo.id(m), topo.id(c.dominator))?;
        }
        for (ch, &r) in c.reporters.iter().enumerate() {
            writeln!(w, "reporter {} {} {}", topo.id(c.dominator), ch + 1, topo.id(r))?;
        }
    }
    Ok(())
}

pub fn load_structure<R: std::io::Read>(topo: &Topology, r: R) -> Result<StructureResult> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    // Provenance comments (`# ...`) may precede the format header.
    let first = loop {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty structure file".into() })?;
        let line = line?;
        let t = line.trim().to_string();
        if t.is_empty() || t.starts_with("# ") {
            continue;
        }
        break (ln, t);
    };
    if first.1 != STRUCTURE_HEADER {
        return Err(Error::Parse {
            line: first.0 + 1,
            msg: format!("expected header `{STRUCTURE_HEADER}`"),
        });
    }
    let idx = |id: u32, line: usize| -> Result<usize> {
        topo.index_of(crate::topology::NodeId(id)).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown node id {id}"),
        })
    };
    let mut colors = BTreeMap::new();
    let mut estimates = BTreeMap::new();
    let mut f_v_of = BTreeMap::new();
    let mut reporters_of: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    let mut dominator_of = vec![usize::MAX; topo.len()];
    for (ln, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let num = |s: &str| -> Result<u64> {
            s.parse().map_err(|e| Error::Parse { line: ln + 1, msg: format!("bad number: {e}") })
        };
        match parts[0] {
            "phi" => {}
            "cluster" if parts.len() == 6 => {
                let d = idx(num(parts[1])? as u32, ln + 1)?;
                colors.insert(d, num(parts[2])? as u32);
                estimates.insert(d, (num(parts[3])?, num(parts[5])? != 0));
                f_v_of.insert(d, num(parts[4])? as u16);
            }
            "member" if parts.len() == 3 => {
                let m = idx(num(parts[1])? as u32, ln + 1)?;
                let d = idx(num(parts[2])? as u32, ln + 1)?;
                dominator_of[m] = d;
            }
            "reporter" if parts.len() == 4 => {
                let d = idx(num(parts[1])? as u32, ln + 1)?;
                let ch = num(parts[2])? as usize;
                let r = idx(num(parts[3])? as u32, ln + 1)?;
                reporters_of.entry(d).or_default().push((ch, r));
            }
            other => {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("unknown record `{other}`"),
                })
            }
        }
    }
    if dominator_of.iter().any(|&d| d == usize::MAX) {
        return Err(Error::Parse { line: 0, msg: "structure misses members".into() });
    }
    let reporters_sorted: BTreeMap<usize, Vec<usize>> = reporters_of
        .into_iter()
        .map(|(d, mut v)| {
            v.sort_unstable();
            (d, v.into_iter().map(|(_, r)| r).collect())
        })
        .collect();
    // The dump does not carry the geometry; recompute density and radius
    // checks with a dummy radius of infinity (checks belong to `verify`).
    Ok(assemble(
        topo,
        f64::INFINITY,
        &dominator_of,
        &colors,
        &estimates,
        &f_v_of,
        &reporters_sorted,
        Vec::new(),
        Vec::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_topology, TopologyKind};

    #[test]
    fn oracle_structure_is_valid() {
        let topo = generate_topology(TopologyKind::UniformDisk, 120, 1.2, 5).unwrap();
        let params = SinrParams::default_unit();
        let consts = ProtocolConstants::practical();
        let s = oracle_structure(&topo, &params, 4, &consts, 120.0);
        let r_c = cluster_radius(&params);
        assert!(s.ok(), "flags: {:?}", s.flags);
        // Partition and radius.
        for (v, &ci) in s.cluster_of.iter().enumerate() {
            let c = &s.clusters[ci];
            assert!(c.members.contains(&v));
            assert!(topo.distance(v, c.dominator) <= r_c);
        }
        // Same color => separated.
        for a in &s.clusters {
            for b in &s.clusters {
                if a.dominator != b.dominator && a.color == b.color {
                    assert!(topo.distance(a.dominator, b.dominator) > params.r_eps_half());
                }
            }
        }
        // Reporter/follower partition.
        for c in &s.clusters {
            assert_eq!(c.reporters.len(), c.f_v as usize);
            let total = 1 + c.reporters.len() + c.followers.len();
            assert_eq!(total, c.members.len());
        }
    }

    #[test]
    fn structure_dump_round_trip() {
        let topo = generate_topology(TopologyKind::UniformDisk, 60, 1.0, 9).unwrap();
        let params = SinrParams::default_unit();
        let consts = ProtocolConstants::practical();
        let s = oracle_structure(&topo, &params, 4, &consts, 60.0);
        let mut buf = Vec::new();
        save_structure(&topo, &s, &mut buf).unwrap();
        let back = load_structure(&topo, &buf[..]).unwrap();
        assert_eq!(s.clusters.len(), back.clusters.len());
        for (a, b) in s.clusters.iter().zip(&back.clusters) {
            assert_eq!(a.dominator, b.dominator);
            assert_eq!(a.color, b.color);
            assert_eq!(a.size_estimate, b.size_estimate);
            assert_eq!(a.f_v, b.f_v);
            assert_eq!(a.reporters, b.reporters);
            let mut am = a.members.clone();
            let mut bm = b.members.clone();
            am.sort_unstable();
            bm.sort_unstable();
            assert_eq!(am, bm);
        }
    }
}
