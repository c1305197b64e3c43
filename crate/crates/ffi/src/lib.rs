//! C ABI over the simulator: opaque handles, integer status codes, and a
//! thread-local last-error message. The matching declarations live in
//! `include/mcsinr.h`; a test keeps the header and the exported symbols in
//! sync.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::os::raw::c_int;
use std::path::Path;
use std::ptr;

use mcsinr::aggregation::AggregateFunction;
use mcsinr::constants::ProtocolConstants;
use mcsinr::harness::config::{ExperimentConfig, InputSpec, Pipeline, TopologySpec};
use mcsinr::harness::runner::{run_cell, CellOutput};
use mcsinr::sinr::{PowerMatrix, SinrParams};
use mcsinr::topology::{build_comm_graph, generate_topology, Topology, TopologyKind};

pub const MCSINR_OK: c_int = 0;
pub const MCSINR_ERR_NULL: c_int = 1;
pub const MCSINR_ERR_INVALID: c_int = 2;
pub const MCSINR_ERR_IO: c_int = 3;
pub const MCSINR_ERR_RUN: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into()).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

/// Opaque topology handle.
pub struct McsinrTopology {
    topo: Topology,
}

/// Opaque run-result handle.
pub struct McsinrRun {
    out: CellOutput,
    colors: Vec<i64>,
    values: Vec<f64>,
}

/// Physical-layer parameters, by value across the boundary.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct McsinrParams {
    pub power: f64,
    pub alpha: f64,
    pub beta: f64,
    pub noise: f64,
    pub epsilon: f64,
}

impl McsinrParams {
    fn to_params(self) -> Result<SinrParams, String> {
        SinrParams::new(self.power, self.alpha, self.beta, self.noise, self.epsilon)
            .map_err(|e| e.to_string())
    }
}

/// Message of the most recent error on this thread; valid until the next
/// failing call.
#[no_mangle]
pub extern "C" fn mcsinr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Crate version as a static string.
#[no_mangle]
pub extern "C" fn mcsinr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generate a topology. `kind`: 0 uniform disk, 1 grid, 2 exponential chain,
/// 3 clustered.
#[no_mangle]
pub extern "C" fn mcsinr_topology_generate(
    kind: c_int,
    n: u64,
    extent: f64,
    seed: u64,
    out: *mut *mut McsinrTopology,
) -> c_int {
    if out.is_null() {
        set_error("out pointer is null");
        return MCSINR_ERR_NULL;
    }
    let kind = match kind {
        0 => TopologyKind::UniformDisk,
        1 => TopologyKind::Grid,
        2 => TopologyKind::ExponentialChain,
        3 => TopologyKind::Clustered,
        other => {
            set_error(format!("unknown topology kind {other}"));
            return MCSINR_ERR_INVALID;
        }
    };
    match generate_topology(kind, n as usize, extent, seed) {
        Ok(topo) => {
            unsafe { *out = Box::into_raw(Box::new(McsinrTopology { topo })) };
            MCSINR_OK
        }
        Err(e) => {
            set_error(e.to_string());
            MCSINR_ERR_INVALID
        }
    }
}

/// Load a topology file.
#[no_mangle]
pub extern "C" fn mcsinr_topology_load(
    path: *const c_char,
    out: *mut *mut McsinrTopology,
) -> c_int {
    if path.is_null() || out.is_null() {
        set_error("null argument");
        return MCSINR_ERR_NULL;
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return MCSINR_ERR_INVALID;
        }
    };
    match Topology::load_path(Path::new(path)) {
        Ok(topo) => {
            unsafe { *out = Box::into_raw(Box::new(McsinrTopology { topo })) };
            MCSINR_OK
        }
        Err(e) => {
            set_error(e.to_string());
            MCSINR_ERR_IO
        }
    }
}

/// Save a topology file.
#[no_mangle]
pub extern "C" fn mcsinr_topology_save(
    topo: *const McsinrTopology,
    path: *const c_char,
) -> c_int {
    if topo.is_null() || path.is_null() {
        set_error("null argument");
        return MCSINR_ERR_NULL;
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return MCSINR_ERR_INVALID;
        }
    };
    let t = unsafe { &*topo };
    match t.topo.save_path(Path::new(path)) {
        Ok(()) => MCSINR_OK,
        Err(e) => {
            set_error(e.to_string());
            MCSINR_ERR_IO
        }
    }
}

#[no_mangle]
pub extern "C" fn mcsinr_topology_len(topo: *const McsinrTopology) -> u64 {
    if topo.is_null() {
        return 0;
    }
    unsafe { &*topo }.topo.len() as u64
}

#[no_mangle]
pub extern "C" fn mcsinr_topology_free(topo: *mut McsinrTopology) {
    if !topo.is_null() {
        drop(unsafe { Box::from_raw(topo) });
    }
}

/// Max degree and hop diameter of the communication graph; the diameter is
/// -1 when the graph is disconnected.
#[no_mangle]
pub extern "C" fn mcsinr_comm_graph_stats(
    topo: *const McsinrTopology,
    params: McsinrParams,
    out_delta: *mut u64,
    out_diameter: *mut i64,
) -> c_int {
    if topo.is_null() || out_delta.is_null() || out_diameter.is_null() {
        set_error("null argument");
        return MCSINR_ERR_NULL;
    }
    let p = match params.to_params() {
        Ok(p) => p,
        Err(e) => {
            set_error(e);
            return MCSINR_ERR_INVALID;
        }
    };
    let g = build_comm_graph(&unsafe { &*topo }.topo, &p);
    unsafe {
        *out_delta = g.delta as u64;
        *out_diameter = g.diameter.map(|d| d as i64).unwrap_or(-1);
    }
    MCSINR_OK
}

fn default_cfg(topo: &Topology, params: SinrParams, channels: u16, pipeline: Pipeline) -> ExperimentConfig {
    ExperimentConfig {
        version: 1,
        topology: TopologySpec::Generated {
            kind: TopologyKind::Grid,
            n: topo.len(),
            extent: 1.0,
            seed: 0,
        },
        sinr: params,
        channels: vec![channels],
        seed_start: 0,
        seed_count: 1,
        preset: mcsinr::constants::Preset::Practical,
        constants: Some(ProtocolConstants::practical()),
        calibration_file: None,
        n_hat_exponent: 1.0,
        delta_hat: None,
        pipeline,
        structure_mode: mcsinr::structure::StructureMode::Distributed,
        aggregate: AggregateFunction::Sum,
        inputs: InputSpec::Ones,
        ruling_r_divisor: 4.0,
        diameter_hint: 8,
        workers: 1,
        trace: mcsinr::sim::TraceLevel::Off,
        sense_noise: None,
        uncertainty: None,
        csa_path: mcsinr::structure::csa::CsaPath::Auto,
    }
}

/// Run data aggregation (function codes: 0 sum, 1 max, 2 min, 3 count,
/// 4 average) over `inputs` (one value per node, in node order).
#[no_mangle]
pub extern "C" fn mcsinr_aggregate_run(
    topo: *const McsinrTopology,
    params: McsinrParams,
    channels: u16,
    seed: u64,
    function: c_int,
    inputs: *const i64,
    inputs_len: u64,
    out: *mut *mut McsinrRun,
) -> c_int {
    if topo.is_null() || out.is_null() || inputs.is_null() {
        set_error("null argument");
        return MCSINR_ERR_NULL;
    }
    let t = &unsafe { &*topo }.topo;
    if inputs_len as usize != t.len() {
        set_error("inputs length does not match the topology");
        return MCSINR_ERR_INVALID;
    }
    let p = match params.to_params() {
        Ok(p) => p,
        Err(e) => {
            set_error(e);
            return MCSINR_ERR_INVALID;
        }
    };
    let fun = match function {
        0 => AggregateFunction::Sum,
        1 => AggregateFunction::Max,
        2 => AggregateFunction::Min,
        3 => AggregateFunction::Count,
        4 => AggregateFunction::Average,
        other => {
            set_error(format!("unknown aggregate function {other}"));
            return MCSINR_ERR_INVALID;
        }
    };
    let input_slice = unsafe { std::slice::from_raw_parts(inputs, inputs_len as usize) };
    let mut cfg = default_cfg(t, p, channels.max(1), Pipeline::Aggregate);
    cfg.aggregate = fun;
    let pm = PowerMatrix::new(t, &p);
    // Run the stage directly over the explicit input vector.
    let cell = run_cell_with_inputs(&cfg, t, &pm, channels.max(1), seed, input_slice);
    match cell {
        Ok(outp) => {
            let values: Vec<f64> = outp
                .values
                .as_ref()
                .map(|v| {
                    v.iter()
                        .map(|x| x.map(|a| fun.finalize(a)).unwrap_or(f64::NAN))
                        .collect()
                })
                .unwrap_or_default();
            let run = McsinrRun { out: outp, colors: Vec::new(), values };
            unsafe { *out = Box::into_raw(Box::new(run)) };
            MCSINR_OK
        }
        Err(e) => {
            set_error(e);
            MCSINR_ERR_RUN
        }
    }
}

fn run_cell_with_inputs(
    cfg: &ExperimentConfig,
    topo: &Topology,
    pm: &PowerMatrix,
    channels: u16,
    seed: u64,
    inputs: &[i64],
) -> Result<CellOutput, String> {
    use mcsinr::sim::{self, SimOptions, Trace};
    // Build the structure, then run the aggregation stage over the explicit
    // input vector.
    let consts = cfg.resolve_constants().map_err(|e| e.to_string())?;
    let n_hat = topo.len() as f64;
    let delta_hat = topo.len() as u64;
    let graph = build_comm_graph(topo, &cfg.sinr);
    if !graph.is_connected() {
        return Err("communication graph is disconnected".into());
    }
    let opts = SimOptions::default();
    let (structure, _trace) = mcsinr::structure::make_structure(
        cfg.structure_mode,
        topo,
        pm,
        &cfg.sinr,
        channels,
        &consts,
        n_hat,
        delta_hat,
        seed,
        opts,
        mcsinr::sim::TraceLevel::Off,
    );
    let mut trace = Trace::new(mcsinr::sim::TraceLevel::Off);
    let agg = mcsinr::aggregation::run_aggregation(
        topo,
        pm,
        &cfg.sinr,
        &structure,
        &consts,
        n_hat,
        delta_hat,
        channels,
        cfg.aggregate,
        inputs,
        cfg.diameter_hint,
        sim::stage_seed(seed, 5),
        opts,
        &mut trace,
    );
    let mut flags = structure.flags.clone();
    flags.extend(agg.flags.iter().copied());
    flags.dedup();
    let metrics = mcsinr::harness::metrics::RunMetrics {
        n: topo.len(),
        channels,
        seed,
        ok: flags.is_empty(),
        flags: mcsinr::harness::metrics::RunMetrics::flags_string(&flags),
        rounds_stage: agg.report.rounds,
        ..Default::default()
    };
    Ok(CellOutput {
        metrics,
        structure: Some(structure),
        values: Some(agg.values),
        colors: None,
        ruling_set: None,
        trace,
        agg_metrics: Some(agg.metrics),
    })
}

/// Run node coloring.
#[no_mangle]
pub extern "C" fn mcsinr_color_run(
    topo: *const McsinrTopology,
    params: McsinrParams,
    channels: u16,
    seed: u64,
    out: *mut *mut McsinrRun,
) -> c_int {
    if topo.is_null() || out.is_null() {
        set_error("null argument");
        return MCSINR_ERR_NULL;
    }
    let t = &unsafe { &*topo }.topo;
    let p = match params.to_params() {
        Ok(p) => p,
        Err(e) => {
            set_error(e);
            return MCSINR_ERR_INVALID;
        }
    };
    let cfg = default_cfg(t, p, channels.max(1), Pipeline::Color);
    let pm = PowerMatrix::new(t, &p);
    match run_cell(&cfg, t, &pm, channels.max(1), seed) {
        Ok(outp) => {
            let colors: Vec<i64> = outp
                .colors
                .as_ref()
                .map(|c| c.colors.iter().map(|x| x.map(|v| v as i64).unwrap_or(-1)).collect())
                .unwrap_or_default();
            let run = McsinrRun { out: outp, colors, values: Vec::new() };
            unsafe { *out = Box::into_raw(Box::new(run)) };
            MCSINR_OK
        }
        Err(e) => {
            set_error(e.to_string());
            MCSINR_ERR_RUN
        }
    }
}

/// 1 when the run completed with no failure flags.
#[no_mangle]
pub extern "C" fn mcsinr_run_ok(run: *const McsinrRun) -> c_int {
    if run.is_null() {
        return 0;
    }
    c_int::from(unsafe { &*run }.out.metrics.ok)
}

/// Rounds the measured stage took.
#[no_mangle]
pub extern "C" fn mcsinr_run_rounds(run: *const McsinrRun) -> u64 {
    if run.is_null() {
        return 0;
    }
    unsafe { &*run }.out.metrics.rounds_stage
}

/// Aggregated value at a node (NaN when missing); valid after
/// mcsinr_aggregate_run.
#[no_mangle]
pub extern "C" fn mcsinr_run_value_at(run: *const McsinrRun, node: u64) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    let r = unsafe { &*run };
    r.values.get(node as usize).copied().unwrap_or(f64::NAN)
}

/// Color at a node (-1 when missing); valid after mcsinr_color_run.
#[no_mangle]
pub extern "C" fn mcsinr_run_color_at(run: *const McsinrRun, node: u64) -> i64 {
    if run.is_null() {
        return -1;
    }
    let r = unsafe { &*run };
    r.colors.get(node as usize).copied().unwrap_or(-1)
}

/// Number of clusters in the built structure.
#[no_mangle]
pub extern "C" fn mcsinr_run_clusters(run: *const McsinrRun) -> u64 {
    if run.is_null() {
        return 0;
    }
    unsafe { &*run }
        .out
        .structure
        .as_ref()
        .map(|s| s.clusters.len() as u64)
        .unwrap_or(0)
}

#[no_mangle]
pub extern "C" fn mcsinr_run_free(run: *mut McsinrRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

#[allow(unused)]
fn assert_null_handling() {
    // Free functions tolerate null.
    mcsinr_topology_free(ptr::null_mut());
    mcsinr_run_free(ptr::null_mut());
}
