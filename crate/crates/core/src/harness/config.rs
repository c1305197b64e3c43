//! Experiment configuration: a versioned JSON document embedded (as a hash)
//! in every output file for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregateFunction;
use crate::constants::{Preset, ProtocolConstants};
use crate::error::{Error, Result};
use crate::sim::TraceLevel;
use crate::sinr::SinrParams;
use crate::structure::csa::CsaPath;
use crate::structure::StructureMode;
use crate::topology::{generate_topology, Topology, TopologyKind};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Generated { kind: TopologyKind, n: usize, extent: f64, seed: u64 },
    File { file: PathBuf },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self {
            TopologySpec::Generated { kind, n, extent, seed } => {
                generate_topology(*kind, *n, *extent, *seed)
            }
            TopologySpec::File { file } => Topology::load_path(file),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Structure construction only.
    Structure,
    /// Structure plus data aggregation.
    Aggregate,
    /// Structure plus node coloring.
    Color,
    /// Standalone ruling set at `r = r_t / r_divisor`.
    RulingSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    /// All inputs 1.
    Ones,
    /// Input = node id.
    NodeId,
    /// Input = 2^index (index by node order); detects loss and duplication.
    PowersOfTwo,
    /// `id value` lines.
    File { file: PathBuf },
}

impl InputSpec {
    pub fn build(&self, topo: &Topology) -> Result<Vec<i64>> {
        match self {
            InputSpec::Ones => Ok(vec![1; topo.len()]),
            InputSpec::NodeId => Ok(topo.nodes().iter().map(|n| n.id.0 as i64).collect()),
            InputSpec::PowersOfTwo => {
                if topo.len() > 62 {
                    return Err(Error::Config(
                        "powers-of-two inputs need at most 62 nodes".into(),
                    ));
                }
                Ok((0..topo.len()).map(|i| 1i64 << i).collect())
            }
            InputSpec::File { file } => {
                let text = std::fs::read_to_string(file)?;
                let mut vals = vec![0i64; topo.len()];
                for (ln, line) in text.lines().enumerate() {
                    let t = line.trim();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    let mut parts = t.split_whitespace();
                    let id: u32 = parts
                        .next()
                        .ok_or_else(|| Error::Parse { line: ln + 1, msg: "missing id".into() })?
                        .parse()
                        .map_err(|e| Error::Parse { line: ln + 1, msg: format!("bad id: {e}") })?;
                    let value: i64 = parts
                        .next()
                        .ok_or_else(|| Error::Parse { line: ln + 1, msg: "missing value".into() })?
                        .parse()
                        .map_err(|e| Error::Parse { line: ln + 1, msg: format!("bad value: {e}") })?;
                    let idx = topo
                        .index_of(crate::topology::NodeId(id))
                        .ok_or_else(|| Error::Parse { line: ln + 1, msg: format!("unknown id {id}") })?;
                    vals[idx] = value;
                }
                Ok(vals)
            }
        }
    }
}

fn default_workers() -> usize {
    4
}

fn default_n_hat_exponent() -> f64 {
    1.0
}

fn default_r_divisor() -> f64 {
    4.0
}

fn default_diameter_hint() -> u64 {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub topology: TopologySpec,
    pub sinr: SinrParams,
    /// Channel counts to sweep.
    pub channels: Vec<u16>,
    pub seed_start: u64,
    pub seed_count: u64,
    pub preset: Preset,
    /// Full constants override; when absent the preset defaults apply.
    #[serde(default)]
    pub constants: Option<ProtocolConstants>,
    /// Calibration file produced by the calibrate subcommand (theory preset).
    #[serde(default)]
    pub calibration_file: Option<PathBuf>,
    #[serde(default = "default_n_hat_exponent")]
    pub n_hat_exponent: f64,
    #[serde(default)]
    pub delta_hat: Option<u64>,
    pub pipeline: Pipeline,
    #[serde(default = "StructureMode::distributed")]
    pub structure_mode: StructureMode,
    #[serde(default = "AggregateFunction::sum")]
    pub aggregate: AggregateFunction,
    #[serde(default = "InputSpec::ones")]
    pub inputs: InputSpec,
    #[serde(default = "default_r_divisor")]
    pub ruling_r_divisor: f64,
    #[serde(default = "default_diameter_hint")]
    pub diameter_hint: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "TraceLevel::metrics")]
    pub trace: TraceLevel,
    #[serde(default)]
    pub sense_noise: Option<f64>,
    /// When set, protocols derive radii and thresholds from extremal values
    /// of these intervals; the physics keeps the exact parameters.
    #[serde(default)]
    pub uncertainty: Option<crate::sinr::SinrRanges>,
    #[serde(default)]
    pub csa_path: CsaPath,
}

impl StructureMode {
    fn distributed() -> Self {
        StructureMode::Distributed
    }
}

impl AggregateFunction {
    fn sum() -> Self {
        AggregateFunction::Sum
    }
}

impl InputSpec {
    fn ones() -> Self {
        InputSpec::Ones
    }
}

impl TraceLevel {
    fn metrics() -> Self {
        TraceLevel::Metrics
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.sinr.validate()?;
        if self.channels.is_empty() || self.channels.iter().any(|&f| f == 0) {
            return Err(Error::Config("channels must be a nonempty list of positive counts".into()));
        }
        if self.seed_count == 0 {
            return Err(Error::Config("seed_count must be positive".into()));
        }
        Ok(())
    }

    /// Resolved protocol constants for this config.
    pub fn resolve_constants(&self) -> Result<ProtocolConstants> {
        if let Some(c) = self.constants {
            return Ok(c);
        }
        match self.preset {
            Preset::Practical => Ok(ProtocolConstants::practical()),
            Preset::Theory => {
                let (kappa, kappa1, mu) = match &self.calibration_file {
                    Some(p) => {
                        let text = std::fs::read_to_string(p)?;
                        let v: serde_json::Value = serde_json::from_str(&text)?;
                        (
                            v["kappa"].as_f64().unwrap_or(0.25),
                            v["kappa1"].as_f64().unwrap_or(0.25),
                            v["mu"].as_f64().unwrap_or(3.0),
                        )
                    }
                    None => (0.25, 0.25, 3.0),
                };
                Ok(ProtocolConstants::theory(kappa, kappa1, mu))
            }
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (self.seed_start..self.seed_start + self.seed_count).collect()
    }

    /// FNV-1a over the canonical JSON encoding; embedded in output headers.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        fnv1a(text.as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Provenance line written at the top of every output file.
pub fn provenance(hash: u64) -> String {
    format!("# mcsinr v{} config-hash={hash:016x}", crate::VERSION)
}
