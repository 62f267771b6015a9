//! C ABI over the `gapdecomp` library.
//!
//! Objects are opaque handles created by `gd_*` constructors and released
//! with the matching `*_free`. Every fallible call returns a [`GdStatus`];
//! on failure `gd_last_error_message` describes the error for the calling
//! thread. Configuration crosses the boundary as JSON in the same shape the
//! CLI accepts, so bindings do not need to mirror every option struct.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gapdecomp::data::{load_table_path, weighted_cdf, ColumnMapping, ObservationTable};
use gapdecomp::decompose::DecomposeError;
use gapdecomp::pipeline::{run_analysis, AnalysisConfig, AnalysisOutput};
use gapdecomp::synth::{generate, DgpSpec};
use gapdecomp::Error;
use serde_json::json;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Support = 4,
    Model = 5,
    Decompose = 6,
    Synth = 7,
    Config = 8,
    Io = 9,
    NotFound = 10,
    Panic = 11,
}

/// The four unmatched/matched weighted shares of a partition.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GdMasses {
    /// Share of W's weight inside B's support.
    pub w_in: f64,
    /// Share of W's weight outside B's support.
    pub w_out: f64,
    pub b_in: f64,
    pub b_out: f64,
}

/// Opaque observation table.
pub struct GdTable(ObservationTable);

/// Opaque result of `gd_decompose`.
pub struct GdDecomposition(AnalysisOutput);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> GdStatus {
    match e {
        Error::Data(_) | Error::Decompose(DecomposeError::Data(_)) => GdStatus::Data,
        Error::Support(_) => GdStatus::Support,
        Error::Model(_) | Error::Decompose(DecomposeError::Model(_)) => GdStatus::Model,
        Error::Decompose(_) => GdStatus::Decompose,
        Error::Synth(_) => GdStatus::Synth,
        Error::Config(_) => GdStatus::Config,
        Error::Io { .. } => GdStatus::Io,
    }
}

fn fail(status: GdStatus, msg: impl Into<String>) -> GdStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (GdStatus, String)>) -> GdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GdStatus::Ok
        }
        Ok(Err((s, m))) => fail(s, m),
        Err(_) => fail(GdStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: impl Into<Error>) -> (GdStatus, String) {
    let e = e.into();
    (status_of(&e), e.to_json().to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GdStatus, String)> {
    if p.is_null() {
        return Err((GdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn config_err(e: serde_json::Error) -> (GdStatus, String) {
    lib_err(Error::Config(e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next `gd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn gd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a CSV file. `mapping_json` is a column mapping such as
/// `{"outcome": "y", "group": "group", "covariates": [{"name": "x", "kind": "continuous"}]}`.
///
/// # Safety
/// `path` and `mapping_json` must be NUL-terminated strings; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_table_from_csv(
    path: *const c_char,
    mapping_json: *const c_char,
    out: *mut *mut GdTable,
) -> GdStatus {
    guard(|| {
        if out.is_null() {
            return Err((GdStatus::NullPointer, "out is null".into()));
        }
        let path = read_str(path, "path")?;
        let mapping: ColumnMapping =
            serde_json::from_str(read_str(mapping_json, "mapping_json")?).map_err(config_err)?;
        let table = load_table_path(path, &mapping).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GdTable(table)));
        Ok(())
    })
}

/// Draws a table from a synthetic DGP spec given as JSON.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_table_simulate(spec_json: *const c_char, out: *mut *mut GdTable) -> GdStatus {
    guard(|| {
        if out.is_null() {
            return Err((GdStatus::NullPointer, "out is null".into()));
        }
        let spec = DgpSpec::from_json(read_str(spec_json, "spec_json")?).map_err(lib_err)?;
        let table = generate(&spec).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GdTable(table)));
        Ok(())
    })
}

/// # Safety
/// `table` must come from a `gd_table_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn gd_table_free(table: *mut GdTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Row count, or 0 for a null handle.
///
/// # Safety
/// `table` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gd_table_num_rows(table: *const GdTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Runs the configured analyses. `config_json` may be null for defaults;
/// otherwise it has the shape of the CLI config's `analysis` object.
///
/// # Safety
/// `table` must be a live handle; `config_json` a NUL-terminated string or
/// null; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_decompose(
    table: *const GdTable,
    config_json: *const c_char,
    out: *mut *mut GdDecomposition,
) -> GdStatus {
    guard(|| {
        let Some(table) = table.as_ref() else {
            return Err((GdStatus::NullPointer, "table is null".into()));
        };
        if out.is_null() {
            return Err((GdStatus::NullPointer, "out is null".into()));
        }
        let config: AnalysisConfig = if config_json.is_null() {
            AnalysisConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(config_err)?
        };
        let result = run_analysis(&table.0, &config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GdDecomposition(result)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from `gd_decompose`, or be null.
#[no_mangle]
pub unsafe extern "C" fn gd_decomposition_free(d: *mut GdDecomposition) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gd_decomposition_grid_len(d: *const GdDecomposition) -> usize {
    d.as_ref().map_or(0, |d| d.0.grid.len())
}

fn series<'a>(d: &'a AnalysisOutput, name: &str) -> Option<&'a [f64]> {
    if name == "grid" {
        return Some(d.grid.points());
    }
    for c in [&d.relaxed, &d.conventional].into_iter().flatten() {
        if let Some((_, v)) = c.series().into_iter().find(|(n, _)| *n == name) {
            return Some(v);
        }
    }
    if let Some(s) = &d.shares {
        let found = match name {
            "share_x" => Some(&s.composition),
            "share_0" => Some(&s.structure),
            "share_w" => Some(&s.w_out),
            "share_b" => Some(&s.b_out),
            "share_out_of_support" => Some(&s.out_of_support),
            _ => None,
        };
        if found.is_some() {
            return found.map(Vec::as_slice);
        }
    }
    match (&d.dfl, name) {
        (Some(r), "h0_dfl") => Some(&r.counterfactual),
        _ => None,
    }
}

/// Copies the named series (`grid`, `delta`, `delta_x`, `delta_0`,
/// `delta_w`, `delta_b`, `delta_empirical`, the `_os` conventional series,
/// `share_*`, `h0_dfl`) into `buf`, which must hold `len` values and `len`
/// must equal the grid length.
///
/// # Safety
/// `d` must be a live handle, `name` a NUL-terminated string and `buf` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gd_decomposition_series(
    d: *const GdDecomposition,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> GdStatus {
    guard(|| {
        let Some(d) = d.as_ref() else {
            return Err((GdStatus::NullPointer, "decomposition is null".into()));
        };
        let name = read_str(name, "name")?;
        if buf.is_null() {
            return Err((GdStatus::NullPointer, "buf is null".into()));
        }
        let values = series(&d.0, name).ok_or_else(|| (GdStatus::NotFound, format!("no series `{name}`")))?;
        if values.len() != len {
            return Err((
                GdStatus::InvalidArgument,
                format!("buffer holds {len} values, series has {}", values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(values);
        Ok(())
    })
}

/// # Safety
/// `d` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_decomposition_masses(d: *const GdDecomposition, out: *mut GdMasses) -> GdStatus {
    guard(|| {
        let (Some(d), false) = (d.as_ref(), out.is_null()) else {
            return Err((GdStatus::NullPointer, "null argument".into()));
        };
        let m = d.0.partition.masses();
        *out = GdMasses {
            w_in: m.w_in,
            w_out: m.w_out,
            b_in: m.b_in,
            b_out: m.b_out,
        };
        Ok(())
    })
}

/// Every result as one JSON document. Release with `gd_string_free`.
///
/// # Safety
/// `d` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gd_decomposition_to_json(d: *const GdDecomposition, out: *mut *mut c_char) -> GdStatus {
    guard(|| {
        let (Some(d), false) = (d.as_ref(), out.is_null()) else {
            return Err((GdStatus::NullPointer, "null argument".into()));
        };
        let r = &d.0;
        let doc = json!({
            "grid": r.grid,
            "masses": r.partition.masses(),
            "counts": r.partition.counts(),
            "relaxed": r.relaxed,
            "conventional": r.conventional,
            "shares": r.shares,
            "dfl": r.dfl,
            "warnings": r.warnings,
        });
        let s = CString::new(doc.to_string()).map_err(|e| (GdStatus::Panic, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from a `gd_*` function documented to need this, or be null.
#[no_mangle]
pub unsafe extern "C" fn gd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Weighted share of `values` at or below `y`.
///
/// # Safety
/// `values` and `weights` must be valid for `n` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn gd_weighted_cdf(
    values: *const f64,
    weights: *const f64,
    n: usize,
    y: f64,
    out: *mut f64,
) -> GdStatus {
    guard(|| {
        if values.is_null() || weights.is_null() || out.is_null() {
            return Err((GdStatus::NullPointer, "null argument".into()));
        }
        let v = std::slice::from_raw_parts(values, n);
        let w = std::slice::from_raw_parts(weights, n);
        *out = weighted_cdf(v, w, y).map_err(lib_err)?;
        Ok(())
    })
}
