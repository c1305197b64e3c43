//! Exercises the C surface from Rust and keeps the hand-maintained header in
//! sync with the exported symbols.

use std::ffi::CString;
use std::ptr;

use mcsinr_ffi::*;

fn params() -> McsinrParams {
    McsinrParams { power: 1.0, alpha: 3.0, beta: 1.5, noise: 1.0 / 1.5, epsilon: 1.0 / 3.0 }
}

#[test]
fn topology_lifecycle_and_stats() {
    let mut topo: *mut McsinrTopology = ptr::null_mut();
    let rc = mcsinr_topology_generate(0, 40, 1.2, 7, &mut topo);
    assert_eq!(rc, MCSINR_OK);
    assert_eq!(mcsinr_topology_len(topo), 40);

    let mut delta = 0u64;
    let mut diameter = 0i64;
    let rc = mcsinr_comm_graph_stats(topo, params(), &mut delta, &mut diameter);
    assert_eq!(rc, MCSINR_OK);
    assert!(delta > 0);

    let path = std::env::temp_dir().join("mcsinr_ffi_topo.txt");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(mcsinr_topology_save(topo, cpath.as_ptr()), MCSINR_OK);
    let mut topo2: *mut McsinrTopology = ptr::null_mut();
    assert_eq!(mcsinr_topology_load(cpath.as_ptr(), &mut topo2), MCSINR_OK);
    assert_eq!(mcsinr_topology_len(topo2), 40);
    mcsinr_topology_free(topo);
    mcsinr_topology_free(topo2);
    let _ = std::fs::remove_file(path);
}

#[test]
fn invalid_arguments_reported() {
    let mut topo: *mut McsinrTopology = ptr::null_mut();
    assert_eq!(mcsinr_topology_generate(9, 10, 1.0, 0, &mut topo), MCSINR_ERR_INVALID);
    assert_eq!(mcsinr_topology_generate(0, 0, 1.0, 0, &mut topo), MCSINR_ERR_INVALID);
    let msg = unsafe { std::ffi::CStr::from_ptr(mcsinr_last_error()) };
    assert!(!msg.to_bytes().is_empty());
    assert_eq!(mcsinr_topology_generate(0, 5, 1.0, 0, ptr::null_mut()), MCSINR_ERR_NULL);
}

#[test]
fn aggregate_over_ffi_is_exact() {
    let mut topo: *mut McsinrTopology = ptr::null_mut();
    assert_eq!(mcsinr_topology_generate(0, 30, 1.2, 3, &mut topo), MCSINR_OK);
    let inputs: Vec<i64> = (0..30).map(|i| i + 1).collect();
    let mut run: *mut McsinrRun = ptr::null_mut();
    let rc = mcsinr_aggregate_run(
        topo,
        params(),
        2,
        11,
        0,
        inputs.as_ptr(),
        inputs.len() as u64,
        &mut run,
    );
    assert_eq!(rc, MCSINR_OK);
    assert_eq!(mcsinr_run_ok(run), 1);
    let want: f64 = (1..=30).sum::<i64>() as f64;
    for v in 0..30 {
        assert_eq!(mcsinr_run_value_at(run, v), want);
    }
    assert!(mcsinr_run_rounds(run) > 0);
    assert!(mcsinr_run_clusters(run) > 0);
    mcsinr_run_free(run);
    mcsinr_topology_free(topo);
}

#[test]
fn coloring_over_ffi_is_proper() {
    let mut topo: *mut McsinrTopology = ptr::null_mut();
    assert_eq!(mcsinr_topology_generate(0, 30, 1.4, 5, &mut topo), MCSINR_OK);
    let mut run: *mut McsinrRun = ptr::null_mut();
    assert_eq!(mcsinr_color_run(topo, params(), 2, 9, &mut run), MCSINR_OK);
    assert_eq!(mcsinr_run_ok(run), 1);
    for v in 0..30 {
        assert!(mcsinr_run_color_at(run, v) >= 0);
    }
    mcsinr_run_free(run);
    mcsinr_topology_free(topo);
}

/// Every `extern "C"` function exported here must appear in the header, and
/// every mcsinr_ declaration in the header must exist in the source.
#[test]
fn header_matches_exports() {
    let src = include_str!("../src/lib.rs");
    let header = include_str!("../include/mcsinr.h");
    let mut exported = Vec::new();
    for part in src.split("pub extern \"C\" fn ").skip(1) {
        let name: String =
            part.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        exported.push(name);
    }
    assert!(!exported.is_empty());
    for name in &exported {
        assert!(header.contains(name), "header misses `{name}`");
    }
    for line in header.lines() {
        if let Some(idx) = line.find("mcsinr_") {
            let name: String = line[idx..]
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            if name.starts_with("mcsinr_") && line.contains('(') && !line.contains("MCSINR") {
                assert!(
                    exported.contains(&name),
                    "header declares `{name}` which is not exported"
                );
            }
        }
    }
}
