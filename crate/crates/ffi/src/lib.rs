//! C ABI over `flowlab`.
//!
//! Models are opaque handles created by `flowlab_model_*` constructors and
//! released with `flowlab_model_free`. Every fallible call returns a
//! `FlowlabStatus`; on failure `flowlab_last_error` gives a message for the
//! calling thread. Matrices are row-major `double` arrays of `n * dim`
//! entries.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowlab::extract::project;
use flowlab::flow::{Activation, Bijection, FlowNetwork};
use flowlab::numlin::Matrix;
use flowlab::optimize::{evaluate, load_checkpoint, save_checkpoint, train_split, Model, TrainConfig};
use flowlab::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowlabStatus {
    Ok = 0,
    /// Bad argument, shape mismatch, or null pointer.
    InvalidArgument = 1,
    /// Singular Jacobian, overflow, divergence, or other numeric failure.
    Numeric = 2,
    /// File could not be read, written, or parsed.
    Io = 3,
    /// A Rust panic was caught at the boundary.
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowlabActivation {
    Asinh = 0,
    Softplus = 1,
}

/// Training hyperparameters. Obtain defaults from
/// `flowlab_train_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowlabTrainConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Singular values outside [1/b, b] abort training; 0 disables.
    pub divergence_bound: f64,
    pub monitor_samples: usize,
}

/// Opaque model handle.
pub struct FlowlabModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into();
    msg.retain(|c| c != '\0');
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FlowlabStatus {
    match err {
        Error::Io(_) | Error::Parse { .. } | Error::Format(_) | Error::UnsupportedVersion(_) => {
            FlowlabStatus::Io
        }
        Error::InvalidArgument(_) | Error::Dimension(_) => FlowlabStatus::InvalidArgument,
        Error::Sample { source, .. } => status_of(source),
        _ => FlowlabStatus::Numeric,
    }
}

fn invalid(msg: &str) -> FlowlabStatus {
    set_error(msg);
    FlowlabStatus::InvalidArgument
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<FlowlabStatus, Error>) -> FlowlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            FlowlabStatus::Internal
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

unsafe fn matrix_arg(data: *const f64, n: usize, dim: usize) -> Option<Matrix> {
    if data.is_null() && n * dim > 0 {
        return None;
    }
    let values = if n * dim == 0 { Vec::new() } else { std::slice::from_raw_parts(data, n * dim).to_vec() };
    Matrix::new(n, dim, values).ok()
}

/// Message describing the last failure on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn flowlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn flowlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn flowlab_train_config_default() -> FlowlabTrainConfig {
    let d = TrainConfig::default();
    FlowlabTrainConfig {
        alpha: d.alpha,
        batch_size: d.batch_size,
        learning_rate: d.learning_rate,
        epochs: d.epochs,
        seed: d.seed,
        divergence_bound: d.divergence_bound,
        monitor_samples: d.monitor_samples,
    }
}

/// New dense flow with `hidden_layers` hidden layers, orthogonal weights
/// drawn from `seed`, and zero biases.
///
/// # Safety
/// `out` must be a valid pointer to write a handle to.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_new_dense(
    dim: usize,
    hidden_layers: usize,
    activation: FlowlabActivation,
    seed: u64,
    out: *mut *mut FlowlabModel,
) -> FlowlabStatus {
    if out.is_null() {
        return invalid("null output pointer");
    }
    guard(|| {
        let act = match activation {
            FlowlabActivation::Asinh => Activation::Asinh,
            FlowlabActivation::Softplus => Activation::Softplus,
        };
        let net = FlowNetwork::random(dim, hidden_layers, act, seed)?;
        *out = Box::into_raw(Box::new(FlowlabModel { model: net.into() }));
        Ok(FlowlabStatus::Ok)
    })
}

/// Loads a v1 checkpoint (dense or coupling model).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_load(
    path: *const c_char,
    out: *mut *mut FlowlabModel,
) -> FlowlabStatus {
    let Some(path) = path_arg(path) else {
        return invalid("path is null or not UTF-8");
    };
    if out.is_null() {
        return invalid("null output pointer");
    }
    guard(|| {
        let model = load_checkpoint(path)?;
        *out = Box::into_raw(Box::new(FlowlabModel { model }));
        Ok(FlowlabStatus::Ok)
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_save(
    model: *const FlowlabModel,
    path: *const c_char,
) -> FlowlabStatus {
    let Some(m) = model.as_ref() else {
        return invalid("null model");
    };
    let Some(path) = path_arg(path) else {
        return invalid("path is null or not UTF-8");
    };
    guard(|| {
        save_checkpoint(path, &m.model)?;
        Ok(FlowlabStatus::Ok)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_free(model: *mut FlowlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_dim(model: *const FlowlabModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.dim())
}

unsafe fn map_rows(
    model: *const FlowlabModel,
    x: *const f64,
    n: usize,
    out: *mut f64,
    inverse: bool,
) -> FlowlabStatus {
    let Some(m) = model.as_ref() else {
        return invalid("null model");
    };
    let d = m.model.dim();
    let Some(x) = matrix_arg(x, n, d) else {
        return invalid("null input");
    };
    if out.is_null() && n > 0 {
        return invalid("null output");
    }
    guard(|| {
        for (i, row) in x.row_iter().enumerate() {
            let y = if inverse { m.model.inverse(row) } else { m.model.forward(row) };
            let y = y.map_err(|e| e.at_sample(i))?;
            ptr::copy_nonoverlapping(y.as_ptr(), out.add(i * d), d);
        }
        Ok(FlowlabStatus::Ok)
    })
}

/// `out[i] = f(x[i])` for `n` rows.
///
/// # Safety
/// `x` and `out` must hold `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_forward(
    model: *const FlowlabModel,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> FlowlabStatus {
    map_rows(model, x, n, out, false)
}

/// `out[i] = f⁻¹(y[i])` for `n` rows.
///
/// # Safety
/// `y` and `out` must hold `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_inverse(
    model: *const FlowlabModel,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> FlowlabStatus {
    map_rows(model, y, n, out, true)
}

/// Per-sample log-likelihoods (optional, `n` entries) and their mean.
///
/// # Safety
/// `x` must hold `n * dim` doubles; `per_sample` null or `n` doubles;
/// `mean` null or one double.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_log_likelihood(
    model: *const FlowlabModel,
    x: *const f64,
    n: usize,
    per_sample: *mut f64,
    mean: *mut f64,
) -> FlowlabStatus {
    let Some(m) = model.as_ref() else {
        return invalid("null model");
    };
    let Some(x) = matrix_arg(x, n, m.model.dim()) else {
        return invalid("null input");
    };
    guard(|| {
        let ev = evaluate(&m.model, &x)?;
        if !per_sample.is_null() {
            ptr::copy_nonoverlapping(ev.per_sample.as_ptr(), per_sample, n);
        }
        if !mean.is_null() {
            *mean = ev.mean_log_likelihood;
        }
        Ok(FlowlabStatus::Ok)
    })
}

/// Un-whitened components of each row: the first `k` entries of `ŷ` go to
/// `y_hat` (`n * k`), their local variances to `variances` (`n * k`,
/// optional), both in descending-variance order.
///
/// # Safety
/// Buffers must have the sizes stated above.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_project(
    model: *const FlowlabModel,
    x: *const f64,
    n: usize,
    k: usize,
    y_hat: *mut f64,
    variances: *mut f64,
) -> FlowlabStatus {
    let Some(m) = model.as_ref() else {
        return invalid("null model");
    };
    let d = m.model.dim();
    if k > d {
        return invalid("k exceeds the model dimension");
    }
    let Some(x) = matrix_arg(x, n, d) else {
        return invalid("null input");
    };
    if y_hat.is_null() && n * k > 0 {
        return invalid("null output");
    }
    guard(|| {
        for (i, row) in x.row_iter().enumerate() {
            let p = project(&m.model, row).map_err(|e| e.at_sample(i))?;
            ptr::copy_nonoverlapping(p.y_hat.as_ptr(), y_hat.add(i * k), k);
            if !variances.is_null() {
                ptr::copy_nonoverlapping(p.variances.as_ptr(), variances.add(i * k), k);
            }
        }
        Ok(FlowlabStatus::Ok)
    })
}

/// Trains a model in place on `n` rows (no validation split). Writes the
/// final epoch's mean training log-likelihood to `final_ll` when non-null.
/// On failure the model is left unchanged.
///
/// # Safety
/// `data` must hold `n * dim` doubles; `config` must be valid.
#[no_mangle]
pub unsafe extern "C" fn flowlab_model_train(
    model: *mut FlowlabModel,
    data: *const f64,
    n: usize,
    config: *const FlowlabTrainConfig,
    final_ll: *mut f64,
) -> FlowlabStatus {
    let Some(m) = model.as_mut() else {
        return invalid("null model");
    };
    let Some(c) = config.as_ref() else {
        return invalid("null config");
    };
    let Some(x) = matrix_arg(data, n, m.model.dim()) else {
        return invalid("null data");
    };
    guard(|| {
        let cfg = TrainConfig {
            alpha: c.alpha,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            seed: c.seed,
            divergence_bound: if c.divergence_bound == 0.0 { f64::INFINITY } else { c.divergence_bound },
            monitor_samples: c.monitor_samples,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let (trained, metrics): (Model, _) = match &m.model {
            Model::Dense(net) => {
                let (net, r) = train_split(net.clone(), &x, None, &cfg, |_, _| Ok(()))?;
                (net.into(), r)
            }
            Model::RealNvp(net) => {
                let (net, r) = train_split(net.clone(), &x, None, &cfg, |_, _| Ok(()))?;
                (net.into(), r)
            }
        };
        m.model = trained;
        if !final_ll.is_null() {
            *final_ll = metrics.last().map_or(f64::NAN, |r| r.train_ll);
        }
        Ok(FlowlabStatus::Ok)
    })
}
