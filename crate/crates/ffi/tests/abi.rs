use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gapdecomp_ffi::*;

const SPEC: &str = r#"{"kind": "discrete_cells", "n_w": 3000, "n_b": 3000, "seed": 4,
  "cells": [
    {"x": [1], "mass_w": 0.5, "mass_b": 0, "outcome_w": {"atoms": [1], "probs": [1]}},
    {"x": [2], "mass_w": 0.5, "mass_b": 0.5, "outcome_w": {"atoms": [2], "probs": [1]}, "outcome_b": {"atoms": [2], "probs": [1]}},
    {"x": [3], "mass_w": 0, "mass_b": 0.5, "outcome_b": {"atoms": [3], "probs": [1]}}]}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gd_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn simulate_decompose_and_read_back() {
    let spec = CString::new(SPEC).unwrap();
    let mut table = ptr::null_mut();
    assert_eq!(unsafe { gd_table_simulate(spec.as_ptr(), &mut table) }, GdStatus::Ok);
    assert_eq!(unsafe { gd_table_num_rows(table) }, 6000);

    let config =
        CString::new(r#"{"model": {"estimator": "cell_ecdf"}, "dfl": {"propensity": {"model": "saturated_cells"}}}"#)
            .unwrap();
    let mut d = ptr::null_mut();
    let s = unsafe { gd_decompose(table, config.as_ptr(), &mut d) };
    assert_eq!(s, GdStatus::Ok, "{}", last_error());
    let m = unsafe { gd_decomposition_grid_len(d) };
    assert_eq!(m, 3);

    let mut buf = vec![0.0; m];
    for name in [
        "delta", "delta_x", "delta_0", "delta_w", "delta_b", "delta_os", "share_w", "h0_dfl", "grid",
    ] {
        let n = CString::new(name).unwrap();
        let s = unsafe { gd_decomposition_series(d, n.as_ptr(), buf.as_mut_ptr(), m) };
        assert_eq!(s, GdStatus::Ok, "{name}: {}", last_error());
    }
    let n = CString::new("delta").unwrap();
    unsafe { gd_decomposition_series(d, n.as_ptr(), buf.as_mut_ptr(), m) };
    let mut parts = vec![vec![0.0; m]; 4];
    for (name, p) in ["delta_x", "delta_0", "delta_w", "delta_b"]
        .iter()
        .zip(parts.iter_mut())
    {
        let n = CString::new(*name).unwrap();
        unsafe { gd_decomposition_series(d, n.as_ptr(), p.as_mut_ptr(), m) };
    }
    for i in 0..m {
        let sum: f64 = parts.iter().map(|p| p[i]).sum();
        assert!((buf[i] - sum).abs() <= 1e-12);
    }

    let missing = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { gd_decomposition_series(d, missing.as_ptr(), buf.as_mut_ptr(), m) },
        GdStatus::NotFound
    );
    assert_eq!(
        unsafe { gd_decomposition_series(d, n.as_ptr(), buf.as_mut_ptr(), m + 1) },
        GdStatus::InvalidArgument
    );

    let mut masses = GdMasses::default();
    assert_eq!(unsafe { gd_decomposition_masses(d, &mut masses) }, GdStatus::Ok);
    assert!((masses.w_in + masses.w_out - 1.0).abs() < 1e-12);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gd_decomposition_to_json(d, &mut json) }, GdStatus::Ok);
    let doc: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert!(doc["relaxed"]["total"].is_array());
    unsafe {
        gd_string_free(json);
        gd_decomposition_free(d);
        gd_table_free(table);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut table = ptr::null_mut();
    let bad = CString::new(r#"{"kind": "discrete_cells"}"#).unwrap();
    assert_eq!(unsafe { gd_table_simulate(bad.as_ptr(), &mut table) }, GdStatus::Synth);
    assert!(table.is_null());
    assert!(last_error().contains("InvalidSpec"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "y,group,x\n1,W,0\n2,W,1\n1,B,0\n3,B,1\n").unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let mapping = CString::new(r#"{"outcome": "y", "group": "group", "weight": "w"}"#).unwrap();
    assert_eq!(
        unsafe { gd_table_from_csv(p.as_ptr(), mapping.as_ptr(), &mut table) },
        GdStatus::Data
    );
    assert!(last_error().contains("UnknownColumn"));
    let mapping =
        CString::new(r#"{"outcome": "y", "group": "group", "covariates": [{"name": "x", "kind": "discrete"}]}"#)
            .unwrap();
    assert_eq!(
        unsafe { gd_table_from_csv(p.as_ptr(), mapping.as_ptr(), &mut table) },
        GdStatus::Ok
    );
    let config = CString::new(r#"{"unknown": 1}"#).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { gd_decompose(table, config.as_ptr(), &mut d) },
        GdStatus::Config
    );
    assert_eq!(
        unsafe { gd_decompose(ptr::null(), ptr::null(), &mut d) },
        GdStatus::NullPointer
    );
    unsafe { gd_table_free(table) };
    assert_eq!(unsafe { gd_table_num_rows(ptr::null()) }, 0);
    let v = unsafe { CStr::from_ptr(gd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Builds and runs a C program against the generated header and the shared
/// library that cargo produced next to this test binary.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    assert!(
        lib_dir.join("libgapdecomp_ffi.so").exists() || lib_dir.join("libgapdecomp_ffi.dylib").exists(),
        "shared library not found in {}",
        lib_dir.display()
    );
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lgapdecomp_ffi")
        .arg("-o")
        .arg(&bin)
        .status()
        .expect("a C compiler named `cc` on PATH");
    assert!(status.success());
    let out = Command::new(&bin)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .env("DYLD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("identity_ok=1 top=0 "), "{stdout}");
}
