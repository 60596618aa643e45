//! C ABI for `cwrec`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `cw_*_new`/`cw_*_load`/`cw_*_train` call and released by the matching
//! `cw_*_free`. Fallible calls return a [`CwStatus`]; on failure the message
//! is available from [`cw_last_error_message`] on the same thread until the
//! next failing call. Panics are caught and reported as `CW_STATUS_PANIC`.
//!
//! Strings are NUL-terminated UTF-8. Nothing returned by the library needs to
//! be freed except the handles.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cwrec::backbones::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMode, Model, ScoreSnapshot};
use cwrec::cli::{prepare_data, prior_for, test_report, ExperimentConfig};
use cwrec::data::{InteractionDataset, SplitDataset};
use cwrec::losses::{row_loss, PairScoreContext};
use cwrec::optim::train;
use cwrec::Error;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigInvalid = 3,
    DataEmpty = 4,
    DataMalformed = 5,
    Nonfinite = 6,
    CheckpointInvalid = 7,
    IoError = 8,
    Internal = 9,
    Panic = 10,
}

impl From<&Error> for CwStatus {
    fn from(e: &Error) -> Self {
        match e.tag() {
            "CONFIG_INVALID" => CwStatus::ConfigInvalid,
            "DATA_EMPTY" => CwStatus::DataEmpty,
            "DATA_MALFORMED" => CwStatus::DataMalformed,
            "NONFINITE" => CwStatus::Nonfinite,
            "CHECKPOINT_INVALID" => CwStatus::CheckpointInvalid,
            "IO_ERROR" => CwStatus::IoError,
            _ => CwStatus::Internal,
        }
    }
}

/// Experiment configuration (`key = value` settings).
pub struct CwConfig(ExperimentConfig);

/// Indexed interactions with their train/validation/test split.
pub struct CwDataset {
    data: InteractionDataset,
    split: SplitDataset,
}

/// A trained or loaded model with cached inference scores.
pub struct CwModel {
    model: Model,
    snapshot: ScoreSnapshot,
}

/// Test metrics at one cutoff.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CwMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub users_evaluated: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CwStatus::from(&e), format!("{}: {e}", e.tag()))
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(CwStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CwStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(CwStatus::NullPointer, format!("{name} is null")))
}

unsafe fn as_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(CwStatus::NullPointer, format!("{name} is null")))
}

unsafe fn as_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CwStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn as_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(CwStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = as_mut(out, "out")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration holding the defaults.
#[no_mangle]
pub extern "C" fn cw_config_new() -> *mut CwConfig {
    Box::into_raw(Box::new(CwConfig(ExperimentConfig::default())))
}

/// Reads a `key = value` config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_config_load(path: *const c_char, out: *mut *mut CwConfig) -> CwStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(as_str(path, "path")?)?;
        write_out(out, CwConfig(cfg))
    })
}

/// Sets one key, e.g. `("loss.kind", "CW")`.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cw_config_set(cfg: *mut CwConfig, key: *const c_char, value: *const c_char) -> CwStatus {
    guard(|| {
        let cfg = as_mut(cfg, "cfg")?;
        cfg.0.set(as_str(key, "key")?, as_str(value, "value")?)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be NULL; it must not be used again.
#[no_mangle]
pub unsafe extern "C" fn cw_config_free(cfg: *mut CwConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Loads, filters and splits the data named by `data.path`.
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_prepare(cfg: *const CwConfig, out: *mut *mut CwDataset) -> CwStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        cfg.0.validate()?;
        let (data, split) = prepare_data(&cfg.0)?;
        write_out(out, CwDataset { data, split })
    })
}

/// # Safety
/// `ds` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_num_users(ds: *const CwDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.num_users())
}

/// # Safety
/// `ds` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_num_items(ds: *const CwDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.num_items())
}

/// Pair counts of the three views. Any output pointer may be NULL.
///
/// # Safety
/// `ds` must come from this library; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_split_sizes(
    ds: *const CwDataset,
    train: *mut usize,
    validation: *mut usize,
    test: *mut usize,
) -> CwStatus {
    guard(|| {
        let ds = as_ref(ds, "ds")?;
        for (p, n) in [
            (train, ds.split.train.len()),
            (validation, ds.split.validation.len()),
            (test, ds.split.test.len()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = n;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library or be NULL; it must not be used again.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_free(ds: *mut CwDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn wrap(model: Model) -> Result<CwModel, Failure> {
    let snapshot = model.snapshot()?;
    Ok(CwModel { model, snapshot })
}

/// Trains with the configuration's backbone, loss, sampler, optimizer and
/// schedule; the returned model is the best by validation NDCG.
///
/// # Safety
/// `cfg` and `ds` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cw_model_train(
    cfg: *const CwConfig,
    ds: *const CwDataset,
    out: *mut *mut CwModel,
) -> CwStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let ds = as_ref(ds, "ds")?;
        cfg.0.validate()?;
        let prior = prior_for(&cfg.0, &ds.split)?;
        let outcome = train(&ds.split, &cfg.0.train_config(), &prior, cfg.0.train_seed)?;
        write_out(out, wrap(outcome.model)?)
    })
}

/// Writes `len` scores for `user` into `scores`; `len` must equal the number
/// of items.
///
/// # Safety
/// `model` must come from this library and `scores` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cw_model_score_user(
    model: *const CwModel,
    user: usize,
    scores: *mut f64,
    len: usize,
) -> CwStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let snap = &m.snapshot;
        if user >= snap.num_users() {
            return Err(invalid(format!(
                "user {user} out of range ({} users)",
                snap.num_users()
            )));
        }
        if len != snap.num_items() {
            return Err(invalid(format!(
                "buffer holds {len} scores, model has {} items",
                snap.num_items()
            )));
        }
        if scores.is_null() {
            return Err(Failure(CwStatus::NullPointer, "scores is null".into()));
        }
        let mut row = Vec::with_capacity(len);
        snap.score_into(user, &mut row);
        std::slice::from_raw_parts_mut(scores, len).copy_from_slice(&row);
        Ok(())
    })
}

/// Saves the base embeddings; `binary` selects the binary layout.
///
/// # Safety
/// `model` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cw_model_save(model: *const CwModel, path: *const c_char, binary: c_int) -> CwStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let mode = if binary != 0 {
            CheckpointMode::Binary
        } else {
            CheckpointMode::Text
        };
        save_checkpoint(
            PathBuf::from(as_str(path, "path")?),
            &Checkpoint::of_model(&m.model),
            mode,
        )?;
        Ok(())
    })
}

/// Loads a checkpoint; `ds` supplies the training graph and must have the
/// checkpoint's shape.
///
/// # Safety
/// `path` must be NUL-terminated, `ds` must come from this library and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn cw_model_load(path: *const c_char, ds: *const CwDataset, out: *mut *mut CwModel) -> CwStatus {
    guard(|| {
        let ds = as_ref(ds, "ds")?;
        let model = load_checkpoint(PathBuf::from(as_str(path, "path")?))?.into_model(&ds.split.train)?;
        write_out(out, wrap(model)?)
    })
}

/// Recall@k and NDCG@k on the test view, masking train and validation.
///
/// # Safety
/// `model` and `ds` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cw_model_evaluate(
    model: *const CwModel,
    ds: *const CwDataset,
    k: usize,
    out: *mut CwMetrics,
) -> CwStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let ds = as_ref(ds, "ds")?;
        let out = as_mut(out, "out")?;
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let report = test_report(&m.model, &ds.split, k)?;
        *out = CwMetrics {
            recall: report.mean_recall,
            ndcg: report.mean_ndcg,
            users_evaluated: report.users_evaluated,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be NULL; it must not be used again.
#[no_mangle]
pub unsafe extern "C" fn cw_model_free(model: *mut CwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loss of one row under the configuration's `loss.*` settings, from the
/// anchor score, `n` negative scores and `m` extra positive scores.
/// `grad_negs` (length `n`) and `grad_extra` (length `m`) may be NULL;
/// otherwise they receive the derivatives with respect to those scores.
///
/// # Safety
/// `cfg` must come from this library; the arrays must hold the stated
/// number of doubles and `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_row_loss(
    cfg: *const CwConfig,
    r_ui: f64,
    r_uj: *const f64,
    n: usize,
    r_uik: *const f64,
    m: usize,
    tau_plus: f64,
    value: *mut f64,
    grad_negs: *mut f64,
    grad_extra: *mut f64,
) -> CwStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let value = as_mut(value, "value")?;
        if !(0.0..1.0).contains(&tau_plus) {
            return Err(invalid(format!("tau_plus must lie in [0, 1), got {tau_plus}")));
        }
        let loss = cfg.0.train_config().loss;
        loss.validate()?;
        let ctx = PairScoreContext::new(
            r_ui,
            as_slice(r_uj, n, "r_uj")?.to_vec(),
            as_slice(r_uik, m, "r_uik")?.to_vec(),
        );
        let row = row_loss(&ctx, &loss, tau_plus)?;
        *value = row.value;
        if !grad_negs.is_null() && n > 0 {
            std::slice::from_raw_parts_mut(grad_negs, n).copy_from_slice(&row.grad_negs);
        }
        if !grad_extra.is_null() && m > 0 {
            std::slice::from_raw_parts_mut(grad_extra, m).copy_from_slice(&row.grad_extra);
        }
        Ok(())
    })
}
