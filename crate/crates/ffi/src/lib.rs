//! C ABI over the `npmerge` library.
//!
//! Every function returns an [`NpmkStatus`]; on failure the message is
//! available from [`npmk_last_error`] on the same thread. Objects are opaque
//! handles created by `*_load`/`*_new`-style calls and released with the
//! matching `*_free`. Output handles are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use npmerge::align::{align_permute, align_weight_matching, apply_alignment, PermutationSet, DEFAULT_MAX_SWEEPS};
use npmerge::checkpoint::{load_model, save_model, Provenance};
use npmerge::data::{load_idx, synth_blobs, LabeledDataset};
use npmerge::merge::{np_optimize, uniform_merge, MergeConfig};
use npmerge::nn::{bn_reset, evaluate, train_model, MlpSpec, ModelParams, TrainConfig};
use npmerge::numerics::{lap_solve, Sense, Tensor};
use npmerge::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpmkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Dimension = 3,
    Format = 4,
    Numeric = 5,
    Io = 6,
    State = 7,
    Panic = 8,
}

/// Trained network parameters.
pub struct NpmkModel(ModelParams);

/// Labeled examples.
pub struct NpmkDataset(LabeledDataset);

/// One neuron permutation per hidden layer.
pub struct NpmkPermutations(PermutationSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> NpmkStatus {
    match err {
        Error::Dimension(_) => NpmkStatus::Dimension,
        Error::Numeric(_) => NpmkStatus::Numeric,
        Error::State(_) => NpmkStatus::State,
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) => NpmkStatus::Format,
        Error::Io { .. } => NpmkStatus::Io,
        Error::Input(_) | Error::Config { .. } => NpmkStatus::InvalidInput,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Runs `f`, converting errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Outcome) -> NpmkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NpmkStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            NpmkStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            NpmkStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, name: &'static str) -> std::result::Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn path(p: *const c_char, name: &'static str) -> std::result::Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Input(format!("`{name}` is not valid UTF-8"))))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &'static str) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, name: &'static str) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn npmk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn npmk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_model_load(path_: *const c_char, out: *mut *mut NpmkModel) -> NpmkStatus {
    guard(|| {
        let p = path(path_, "path")?;
        let (model, _) = load_model(&p)?;
        put(out, NpmkModel(model), "out")
    })
}

/// Writes a model checkpoint with the given seed in its provenance.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn npmk_model_save(model: *const NpmkModel, path_: *const c_char, seed: u64) -> NpmkStatus {
    guard(|| {
        let m = obj(model, "model")?;
        let p = path(path_, "path")?;
        save_model(&p, &m.0, Provenance::new(seed, [0; 32], "ffi"))?;
        Ok(())
    })
}

/// Number of trainable scalars.
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_model_num_parameters(model: *const NpmkModel, out: *mut usize) -> NpmkStatus {
    guard(|| write(out, obj(model, "model")?.0.num_parameters(), "out"))
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn npmk_model_free(model: *mut NpmkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads an IDX image/label pair; `normalize` standardises integer pixels.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_dataset_load_idx(
    images: *const c_char,
    labels: *const c_char,
    normalize: bool,
    out: *mut *mut NpmkDataset,
) -> NpmkStatus {
    guard(|| {
        let ds = load_idx(&path(images, "images")?, &path(labels, "labels")?, normalize)?;
        put(out, NpmkDataset(ds), "out")
    })
}

/// Seeded Gaussian blobs, one per class.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_dataset_synth_blobs(
    classes: usize,
    per_class: usize,
    dims: usize,
    spread: f64,
    seed: u64,
    out: *mut *mut NpmkDataset,
) -> NpmkStatus {
    guard(|| {
        let ds = synth_blobs(classes, per_class, dims, spread, seed)?;
        put(out, NpmkDataset(ds), "out")
    })
}

/// Number of examples.
///
/// # Safety
/// `data` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_dataset_len(data: *const NpmkDataset, out: *mut usize) -> NpmkStatus {
    guard(|| write(out, obj(data, "data")?.0.len(), "out"))
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn npmk_dataset_free(data: *mut NpmkDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Trains an MLP with layer widths `widths[0..n_widths]` using Adam.
///
/// # Safety
/// `widths` must point to `n_widths` values; `data` must come from this
/// library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_train(
    widths: *const usize,
    n_widths: usize,
    batchnorm: bool,
    data: *const NpmkDataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
    out: *mut *mut NpmkModel,
) -> NpmkStatus {
    guard(|| {
        if widths.is_null() {
            return Err(Failure::Null("widths"));
        }
        let widths = std::slice::from_raw_parts(widths, n_widths);
        let spec = MlpSpec::uniform(widths, batchnorm)?;
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            seed,
            ..TrainConfig::default()
        };
        let trained = train_model(&spec, &obj(data, "data")?.0, &cfg)?;
        put(out, NpmkModel(trained.params), "out")
    })
}

/// Accuracy and mean cross-entropy on `data`.
///
/// # Safety
/// Handles must come from this library; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_evaluate(
    model: *const NpmkModel,
    data: *const NpmkDataset,
    accuracy: *mut f64,
    loss: *mut f64,
) -> NpmkStatus {
    guard(|| {
        let e = evaluate(&obj(model, "model")?.0, &obj(data, "data")?.0)?;
        write(accuracy, e.accuracy, "accuracy")?;
        write(loss, e.loss, "loss")
    })
}

/// Permutations aligning `b` onto `a` by activation correlation on `probe`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_align_permute(
    a: *const NpmkModel,
    b: *const NpmkModel,
    probe: *const NpmkDataset,
    out: *mut *mut NpmkPermutations,
) -> NpmkStatus {
    guard(|| {
        let p = align_permute(&obj(a, "a")?.0, &obj(b, "b")?.0, &obj(probe, "probe")?.0, 256)?;
        put(out, NpmkPermutations(p), "out")
    })
}

/// Permutations aligning `b` onto `a` by weight matching.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_align_weight_matching(
    a: *const NpmkModel,
    b: *const NpmkModel,
    seed: u64,
    out: *mut *mut NpmkPermutations,
) -> NpmkStatus {
    guard(|| {
        let p = align_weight_matching(&obj(a, "a")?.0, &obj(b, "b")?.0, DEFAULT_MAX_SWEEPS, seed)?;
        put(out, NpmkPermutations(p), "out")
    })
}

/// Applies hidden-layer permutations; the result computes the same function.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_apply_alignment(
    model: *const NpmkModel,
    perms: *const NpmkPermutations,
    out: *mut *mut NpmkModel,
) -> NpmkStatus {
    guard(|| {
        let m = apply_alignment(&obj(model, "model")?.0, &obj(perms, "perms")?.0)?;
        put(out, NpmkModel(m), "out")
    })
}

/// Releases a permutation set. Null is ignored.
///
/// # Safety
/// `perms` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn npmk_permutations_free(perms: *mut NpmkPermutations) {
    if !perms.is_null() {
        drop(Box::from_raw(perms));
    }
}

/// `alpha · a + (1 − alpha) · b` for every trainable tensor.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_uniform_merge(
    a: *const NpmkModel,
    b: *const NpmkModel,
    alpha: f64,
    out: *mut *mut NpmkModel,
) -> NpmkStatus {
    guard(|| {
        let m = uniform_merge(&obj(a, "a")?.0, &obj(b, "b")?.0, alpha)?;
        put(out, NpmkModel(m), "out")
    })
}

/// Learns per-parameter coefficients between `a` and an already aligned
/// `b` on `opt_data` (Adam, coefficients start at 0.5), then recomputes
/// BatchNorm statistics. `mean_alpha` may be null.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_np_merge(
    a: *const NpmkModel,
    b: *const NpmkModel,
    opt_data: *const NpmkDataset,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    out: *mut *mut NpmkModel,
    mean_alpha: *mut f64,
) -> NpmkStatus {
    guard(|| {
        let cfg = MergeConfig {
            learning_rate,
            epochs,
            batch_size,
            seed,
            ..MergeConfig::default()
        };
        let r = np_optimize(&obj(a, "a")?.0, &obj(b, "b")?.0, &obj(opt_data, "opt_data")?.0, &cfg)?;
        if !mean_alpha.is_null() {
            *mean_alpha = r.alphas.stats().mean;
        }
        put(out, NpmkModel(r.merged), "out")
    })
}

/// Recomputes BatchNorm running statistics on `data`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npmk_bn_reset(
    model: *const NpmkModel,
    data: *const NpmkDataset,
    batch_size: usize,
    out: *mut *mut NpmkModel,
) -> NpmkStatus {
    guard(|| {
        let (m, _) = bn_reset(&obj(model, "model")?.0, obj(data, "data")?.0.features(), batch_size)?;
        put(out, NpmkModel(m), "out")
    })
}

/// Solves the linear assignment problem on a row-major `n × n` matrix.
/// Row `i` is assigned column `mapping[i]`; `value` receives the total.
///
/// # Safety
/// `cost` must hold `n * n` values and `mapping` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn npmk_lap_solve(
    cost: *const f64,
    n: usize,
    maximize: bool,
    mapping: *mut usize,
    value: *mut f64,
) -> NpmkStatus {
    guard(|| {
        if cost.is_null() {
            return Err(Failure::Null("cost"));
        }
        if mapping.is_null() {
            return Err(Failure::Null("mapping"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Error::Input("matrix size overflows".into()))?;
        let t = Tensor::new(vec![n, n], std::slice::from_raw_parts(cost, len).to_vec())?;
        let sense = if maximize { Sense::Maximize } else { Sense::Minimize };
        let a = lap_solve(&t, sense)?;
        std::slice::from_raw_parts_mut(mapping, n).copy_from_slice(a.mapping.as_slice());
        write(value, a.value, "value")
    })
}
