//! C interface to the numerical core.
//!
//! Every fallible call returns an `NrStatus`; results go through out
//! pointers. On failure `nr_last_error_message` describes the error for the
//! calling thread. Matrices cross the boundary as row-major `double` arrays.
//! Handles are owned by the caller and released with the matching `*_free`.

#![allow(clippy::missing_safety_doc, clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use neurorisk::attention::{attention_entropy, AttentionOutput};
use neurorisk::fractional::{caputo_derivative_uniform, memory_index, mittag_leffler, FractionalOrder};
use neurorisk::graphdiff::{fractional_diffuse, BrainGraph, DiffusionParams, DiffusionTrajectory, RiskState};
use neurorisk::manifold::{frechet_mean, geodesic_distance, SpdMatrix};
use neurorisk::model::metrics;
use neurorisk::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrStatus {
    Ok = 0,
    /// Null pointer, bad length or invalid UTF-8.
    InvalidArgument = 1,
    InvalidParameter = 2,
    Shape = 3,
    NotSpd = 4,
    Degenerate = 5,
    NoConvergence = 6,
    NonFinite = 7,
    Parse = 8,
    Io = 9,
    Config = 10,
    /// A Rust panic was caught at the boundary.
    Internal = 99,
}

fn status_of(e: &Error) -> NrStatus {
    match e {
        Error::InvalidParameter(_) => NrStatus::InvalidParameter,
        Error::Shape(_) => NrStatus::Shape,
        Error::NotSpd(_) => NrStatus::NotSpd,
        Error::Degenerate(_) => NrStatus::Degenerate,
        Error::NoConvergence { .. } => NrStatus::NoConvergence,
        Error::NonFinite { .. } => NrStatus::NonFinite,
        Error::Parse { .. } => NrStatus::Parse,
        Error::Io { .. } => NrStatus::Io,
        Error::Config(_) => NrStatus::Config,
        Error::Subject { source, .. } => status_of(source),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Fail(NrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn bad_arg(msg: &str) -> Fail {
    Fail(NrStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NrStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(bad_arg(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(bad_arg(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| bad_arg("output pointer is null"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| bad_arg("handle is null"))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(bad_arg("string is null"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad_arg("string is not UTF-8"))
}

fn order(alpha: f64) -> Result<FractionalOrder, Fail> {
    Ok(FractionalOrder::new(alpha)?)
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn nr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Symmetric positive definite matrix.
pub struct NrSpd(SpdMatrix);

/// Region graph.
pub struct NrGraph(BrainGraph);

/// Risk trajectory produced by `nr_diffuse`.
pub struct NrTrajectory(DiffusionTrajectory);

/// Copies an `n x n` row-major matrix into a new SPD handle.
#[no_mangle]
pub unsafe extern "C" fn nr_spd_new(data: *const f64, n: usize, result: *mut *mut NrSpd) -> NrStatus {
    guard(|| {
        let result = out(result)?;
        if n == 0 {
            return Err(bad_arg("dimension must be positive"));
        }
        let values = slice(data, n * n, "data")?;
        let m = SpdMatrix::new(DMatrix::from_row_slice(n, n, values))?;
        *result = Box::into_raw(Box::new(NrSpd(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nr_spd_free(h: *mut NrSpd) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Dimension of the matrix, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nr_spd_dim(h: *const NrSpd) -> usize {
    h.as_ref().map_or(0, |s| s.0.dim())
}

/// Writes the matrix row-major into `dst`, which must hold `dim * dim` values.
#[no_mangle]
pub unsafe extern "C" fn nr_spd_copy(h: *const NrSpd, dst: *mut f64, len: usize) -> NrStatus {
    guard(|| {
        let s = &handle(h)?.0;
        let n = s.dim();
        if len != n * n {
            return Err(bad_arg(&format!("buffer holds {len} values, matrix has {}", n * n)));
        }
        let dst = slice_mut(dst, len, "dst")?;
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = s.matrix()[(i, j)];
            }
        }
        Ok(())
    })
}

/// Affine-invariant geodesic distance.
#[no_mangle]
pub unsafe extern "C" fn nr_geodesic_distance(a: *const NrSpd, b: *const NrSpd, result: *mut f64) -> NrStatus {
    guard(|| {
        let d = geodesic_distance(&handle(a)?.0, &handle(b)?.0)?;
        *out(result)? = d;
        Ok(())
    })
}

/// Fréchet (Karcher) mean of `count` matrices into a new handle.
#[no_mangle]
pub unsafe extern "C" fn nr_frechet_mean(
    points: *const *const NrSpd,
    count: usize,
    tol: f64,
    max_iter: usize,
    result: *mut *mut NrSpd,
) -> NrStatus {
    guard(|| {
        let result = out(result)?;
        let hs = slice(points, count, "points")?;
        let pts = hs
            .iter()
            .map(|&h| handle(h).map(|s| s.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let m = frechet_mean(&pts, tol, max_iter)?;
        *result = Box::into_raw(Box::new(NrSpd(m)));
        Ok(())
    })
}

/// `E_α(z)` for real `z`.
#[no_mangle]
pub unsafe extern "C" fn nr_mittag_leffler(alpha: f64, z: f64, result: *mut f64) -> NrStatus {
    guard(|| {
        let v = mittag_leffler(order(alpha)?, z)?;
        *out(result)? = v;
        Ok(())
    })
}

/// Caputo derivative of order `alpha` of `n` samples spaced `h` apart;
/// `dst` receives `n` values.
#[no_mangle]
pub unsafe extern "C" fn nr_caputo_uniform(
    values: *const f64,
    n: usize,
    h: f64,
    alpha: f64,
    dst: *mut f64,
) -> NrStatus {
    guard(|| {
        let d = caputo_derivative_uniform(slice(values, n, "values")?, h, order(alpha)?)?;
        slice_mut(dst, n, "dst")?.copy_from_slice(&d);
        Ok(())
    })
}

/// DFA exponent of a series; `super_diffusive` (optional) is set to 1 when
/// the exponent is at least 1.
#[no_mangle]
pub unsafe extern "C" fn nr_memory_index(
    series: *const f64,
    n: usize,
    exponent: *mut f64,
    super_diffusive: *mut i32,
) -> NrStatus {
    guard(|| {
        let m = memory_index(slice(series, n, "series")?)?;
        *out(exponent)? = m.exponent;
        if let Some(flag) = super_diffusive.as_mut() {
            *flag = m.super_diffusive as i32;
        }
        Ok(())
    })
}

/// Mean row entropy of a `rows x cols` row-major attention weight matrix.
#[no_mangle]
pub unsafe extern "C" fn nr_attention_entropy(
    weights: *const f64,
    rows: usize,
    cols: usize,
    result: *mut f64,
) -> NrStatus {
    guard(|| {
        if rows == 0 || cols == 0 {
            return Err(bad_arg("empty weight matrix"));
        }
        let w = DMatrix::from_row_slice(rows, cols, slice(weights, rows * cols, "weights")?);
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(bad_arg("weights must be non-negative"));
        }
        *out(result)? = attention_entropy(&AttentionOutput {
            values: DMatrix::zeros(rows, 1),
            weights: w,
        });
        Ok(())
    })
}

/// Binary classification metrics at a threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NrMetrics {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

/// Metrics for `n` scores against 0/1 labels.
#[no_mangle]
pub unsafe extern "C" fn nr_metrics(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    threshold: f64,
    result: *mut NrMetrics,
) -> NrStatus {
    guard(|| {
        let m = metrics(slice(scores, n, "scores")?, slice(labels, n, "labels")?, threshold)?;
        *out(result)? = NrMetrics {
            acc: m.acc,
            auc: m.auc,
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            true_pos: m.tp,
            false_pos: m.fp,
            false_neg: m.fn_,
            true_neg: m.tn,
        };
        Ok(())
    })
}

/// The bundled 16-region graph.
#[no_mangle]
pub unsafe extern "C" fn nr_graph_default(result: *mut *mut NrGraph) -> NrStatus {
    guard(|| {
        *out(result)? = Box::into_raw(Box::new(NrGraph(BrainGraph::default_graph())));
        Ok(())
    })
}

/// Graph from JSON text `{"labels": [...], "adjacency": [[...], ...]}`.
#[no_mangle]
pub unsafe extern "C" fn nr_graph_from_json(json: *const c_char, result: *mut *mut NrGraph) -> NrStatus {
    guard(|| {
        let result = out(result)?;
        let g = BrainGraph::from_json(text(json)?, "<ffi>")?;
        *result = Box::into_raw(Box::new(NrGraph(g)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nr_graph_free(h: *mut NrGraph) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of regions, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nr_graph_regions(h: *const NrGraph) -> usize {
    h.as_ref().map_or(0, |g| g.0.n_regions())
}

/// Index of the region labelled `label`.
#[no_mangle]
pub unsafe extern "C" fn nr_graph_region_index(h: *const NrGraph, label: *const c_char, result: *mut usize) -> NrStatus {
    guard(|| {
        let g = &handle(h)?.0;
        let name = text(label)?;
        let i = g
            .region_index(name)
            .ok_or_else(|| Fail(NrStatus::InvalidParameter, format!("no region '{name}'")))?;
        *out(result)? = i;
        Ok(())
    })
}

/// Fractional risk diffusion from unit risk in `seed_region`.
#[no_mangle]
pub unsafe extern "C" fn nr_diffuse(
    graph: *const NrGraph,
    alpha: f64,
    beta: f64,
    gamma: f64,
    seed_region: usize,
    horizon: f64,
    step: f64,
    result: *mut *mut NrTrajectory,
) -> NrStatus {
    guard(|| {
        let result = out(result)?;
        let g = &handle(graph)?.0;
        let p = DiffusionParams::new(order(alpha)?, beta, gamma)?;
        let x0 = RiskState::seeded(g.n_regions(), seed_region)?;
        let traj = fractional_diffuse(g, &p, &x0, horizon, step)?;
        *result = Box::into_raw(Box::new(NrTrajectory(traj)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nr_trajectory_free(h: *mut NrTrajectory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of stored states, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nr_trajectory_len(h: *const NrTrajectory) -> usize {
    h.as_ref().map_or(0, |t| t.0.states.len())
}

/// Copies state `index` into `x` (`regions` values) and its time into `t`.
#[no_mangle]
pub unsafe extern "C" fn nr_trajectory_state(
    h: *const NrTrajectory,
    index: usize,
    t: *mut f64,
    x: *mut f64,
    regions: usize,
) -> NrStatus {
    guard(|| {
        let traj = &handle(h)?.0;
        let s = traj
            .states
            .get(index)
            .ok_or_else(|| bad_arg(&format!("state {index} out of range ({} stored)", traj.states.len())))?;
        if regions != s.x.len() {
            return Err(bad_arg(&format!("buffer holds {regions} values, state has {}", s.x.len())));
        }
        slice_mut(x, regions, "x")?.copy_from_slice(&s.x);
        *out(t)? = s.t;
        Ok(())
    })
}
