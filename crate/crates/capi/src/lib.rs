//! C ABI for the WCRT analysis toolkit.
//!
//! Mirrors `include/hpa.h`. Handles are opaque heap pointers; every function
//! is null-safe and reports failure through `hpa_status` codes. Strings cross
//! the boundary as NUL-terminated UTF-8.

use hpa_core::hpa::{analyze, AnalysisOptions, AnalysisResult};
use hpa_core::model::{parse_system, SystemModel};
use hpa_core::oracle;
use hpa_core::yw;
use std::ffi::{c_char, CStr};

pub const HPA_OK: i32 = 0;
pub const HPA_ERR_NULL: i32 = 1;
pub const HPA_ERR_UTF8: i32 = 2;
pub const HPA_ERR_PARSE: i32 = 3;
pub const HPA_ERR_ANALYSIS: i32 = 4;
pub const HPA_ERR_RANGE: i32 = 5;

pub struct Model(SystemModel);

pub struct Result_ {
    schedulable: bool,
    converged: bool,
    iterations: u32,
    per_graph_wcrt: Vec<u64>,
}

impl From<AnalysisResult> for Result_ {
    fn from(r: AnalysisResult) -> Self {
        Result_ {
            schedulable: r.schedulable,
            converged: r.converged,
            iterations: r.iterations,
            per_graph_wcrt: r.per_graph_wcrt,
        }
    }
}

/// Parses a JSON model. On success stores a new handle in `*out`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be valid for a
/// single pointer write.
#[no_mangle]
pub unsafe extern "C" fn hpa_model_parse(json: *const c_char, out: *mut *mut Model) -> i32 {
    if json.is_null() || out.is_null() {
        return HPA_ERR_NULL;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => return HPA_ERR_UTF8,
    };
    match parse_system(text) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(Model(m)));
            HPA_OK
        }
        Err(_) => HPA_ERR_PARSE,
    }
}

/// # Safety
/// `model` must come from `hpa_model_parse` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hpa_model_free(model: *mut Model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hpa_model_task_count(model: *const Model) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).0.tasks.len() as u64
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hpa_model_graph_count(model: *const Model) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).0.graphs.len() as u64
}

/// Runs the hybrid analysis. `exclusion` and `dp_elimination` toggle the
/// optimizations (nonzero = on). On success stores a result handle in `*out`.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hpa_analyze(
    model: *const Model,
    exclusion: i32,
    dp_elimination: i32,
    out: *mut *mut Result_,
) -> i32 {
    if model.is_null() || out.is_null() {
        return HPA_ERR_NULL;
    }
    let opts = AnalysisOptions {
        exclusion: exclusion != 0,
        dp_elimination: dp_elimination != 0,
        ..AnalysisOptions::default()
    };
    match analyze(&(*model).0, opts) {
        Ok(r) => {
            *out = Box::into_raw(Box::new(r.into()));
            HPA_OK
        }
        Err(_) => HPA_ERR_ANALYSIS,
    }
}

/// Runs the holistic baseline analysis.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hpa_yw_analyze(model: *const Model, out: *mut *mut Result_) -> i32 {
    if model.is_null() || out.is_null() {
        return HPA_ERR_NULL;
    }
    match yw::yw_analyze(&(*model).0) {
        Ok(r) => {
            *out = Box::into_raw(Box::new(Result_ {
                schedulable: r.schedulable,
                converged: r.converged,
                iterations: r.iterations,
                per_graph_wcrt: r.per_graph_wcrt,
            }));
            HPA_OK
        }
        Err(_) => HPA_ERR_ANALYSIS,
    }
}

/// Monte-Carlo scenario sampling; writes the max observed response of graph
/// `graph` to `*out_wcrt`.
///
/// # Safety
/// `model` must be a live handle; `out_wcrt` must be valid for a u64 write.
#[no_mangle]
pub unsafe extern "C" fn hpa_monte_carlo_wcrt(
    model: *const Model,
    samples: u64,
    seed: u64,
    graph: u64,
    out_wcrt: *mut u64,
) -> i32 {
    if model.is_null() || out_wcrt.is_null() {
        return HPA_ERR_NULL;
    }
    let m = &(*model).0;
    if graph as usize >= m.graphs.len() {
        return HPA_ERR_RANGE;
    }
    let r = oracle::monte_carlo_wcrt(m, samples, seed, None);
    *out_wcrt = r.per_graph_max[graph as usize];
    HPA_OK
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hpa_result_schedulable(result: *const Result_) -> i32 {
    if result.is_null() {
        return 0;
    }
    (*result).schedulable as i32
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hpa_result_converged(result: *const Result_) -> i32 {
    if result.is_null() {
        return 0;
    }
    (*result).converged as i32
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hpa_result_iterations(result: *const Result_) -> u32 {
    if result.is_null() {
        return 0;
    }
    (*result).iterations
}

/// Writes the WCRT of graph `graph` to `*out_wcrt`.
///
/// # Safety
/// `result` must be a live handle; `out_wcrt` must be valid for a u64 write.
#[no_mangle]
pub unsafe extern "C" fn hpa_result_wcrt(
    result: *const Result_,
    graph: u64,
    out_wcrt: *mut u64,
) -> i32 {
    if result.is_null() || out_wcrt.is_null() {
        return HPA_ERR_NULL;
    }
    match (&(*result).per_graph_wcrt).get(graph as usize) {
        Some(&w) => {
            *out_wcrt = w;
            HPA_OK
        }
        None => HPA_ERR_RANGE,
    }
}

/// # Safety
/// `result` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hpa_result_free(result: *mut Result_) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    const MODEL: &str = r#"{
        "pes": [{"id": "pe0", "policy": "preemptive"}],
        "graphs": [
            {"id": "g0", "period": 100, "deadline": 100, "tasks": [
                {"id": "a", "pe": "pe0", "priority": 2, "bcet": 10, "wcet": 10},
                {"id": "b", "pe": "pe0", "priority": 1, "bcet": 10, "wcet": 10, "preds": ["a"]}
            ]},
            {"id": "g1", "period": 50, "deadline": 50, "tasks": [
                {"id": "c", "pe": "pe0", "priority": 3, "bcet": 10, "wcet": 10}
            ]}
        ]
    }"#;

    #[test]
    fn round_trip_through_the_c_interface() {
        unsafe {
            let json = CString::new(MODEL).unwrap();
            let mut model: *mut Model = ptr::null_mut();
            assert_eq!(hpa_model_parse(json.as_ptr(), &mut model), HPA_OK);
            assert_eq!(hpa_model_task_count(model), 3);
            assert_eq!(hpa_model_graph_count(model), 2);

            let mut result: *mut Result_ = ptr::null_mut();
            assert_eq!(hpa_analyze(model, 1, 1, &mut result), HPA_OK);
            assert_eq!(hpa_result_schedulable(result), 1);
            assert_eq!(hpa_result_converged(result), 1);
            let mut wcrt = 0u64;
            assert_eq!(hpa_result_wcrt(result, 0, &mut wcrt), HPA_OK);
            assert!(wcrt > 0 && wcrt <= 100);
            assert_eq!(hpa_result_wcrt(result, 9, &mut wcrt), HPA_ERR_RANGE);
            hpa_result_free(result);

            let mut yw_result: *mut Result_ = ptr::null_mut();
            assert_eq!(hpa_yw_analyze(model, &mut yw_result), HPA_OK);
            hpa_result_free(yw_result);

            let mut mc = 0u64;
            assert_eq!(hpa_monte_carlo_wcrt(model, 50, 7, 0, &mut mc), HPA_OK);
            assert!(mc <= 100);
            hpa_model_free(model);
        }
        unsafe {
            // Null and garbage inputs must not crash.
            assert_eq!(hpa_model_parse(ptr::null(), ptr::null_mut()), HPA_ERR_NULL);
            let bad = CString::new("not json").unwrap();
            let mut model: *mut Model = ptr::null_mut();
            assert_eq!(hpa_model_parse(bad.as_ptr(), &mut model), HPA_ERR_PARSE);
            hpa_model_free(ptr::null_mut());
            hpa_result_free(ptr::null_mut());
        }
    }
}
