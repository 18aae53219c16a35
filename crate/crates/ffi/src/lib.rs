//! C ABI over `pairsim`.
//!
//! Every function returns a [`PairsimStatus`]; on failure a message is kept
//! per thread and can be read with [`pairsim_last_error`]. Models are opaque
//! handles created by [`pairsim_model_load`] and released with
//! [`pairsim_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pairsim::config::RunConfig;
use pairsim::embeddings::FusedLexicon;
use pairsim::evaldata::{pearson, tokenize};
use pairsim::model::{Model, PairInput, Prediction};
use pairsim::training::load_checkpoint;
use pairsim::Error;

/// Result codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairsimStatus {
    Ok = 0,
    ConfigError = 1,
    DataError = 2,
    NumericError = 3,
    NullArgument = 4,
    InvalidUtf8 = 5,
    WrongTask = 6,
    Panic = 7,
}

/// A loaded model together with its embedding tables.
pub struct PairsimModel {
    model: Model,
    lexicon: FusedLexicon,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn from_error(e: Error) -> PairsimStatus {
    set_error(e.to_string());
    match e.exit_code() {
        1 => PairsimStatus::ConfigError,
        3 => PairsimStatus::NumericError,
        _ => PairsimStatus::DataError,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), PairsimStatus>) -> PairsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PairsimStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            PairsimStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, PairsimStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(PairsimStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        PairsimStatus::InvalidUtf8
    })
}

fn load(config: &str, checkpoint: &str) -> Result<PairsimModel, Error> {
    let cfg = RunConfig::from_file(Path::new(config))?;
    cfg.validate()?;
    let lexicon = FusedLexicon::load(&cfg.embedding_paths()?, cfg.oov_scale()?, cfg.seed()?)?;
    let ckpt = load_checkpoint(Path::new(checkpoint))?;
    ckpt.check_config(&cfg.model_config(lexicon.dims())?)?;
    Ok(PairsimModel {
        model: ckpt.into_model()?,
        lexicon,
    })
}

/// Loads a checkpoint using the embeddings and dimensions named in a
/// configuration file. On success `*out` receives a handle owned by the
/// caller.
///
/// # Safety
/// `config_path` and `checkpoint_path` must be NUL-terminated strings and
/// `out` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pairsim_model_load(
    config_path: *const c_char,
    checkpoint_path: *const c_char,
    out: *mut *mut PairsimModel,
) -> PairsimStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return Err(PairsimStatus::NullArgument);
        }
        *out = ptr::null_mut();
        let config = text(config_path, "config_path")?;
        let checkpoint = text(checkpoint_path, "checkpoint_path")?;
        let model = load(config, checkpoint).map_err(from_error)?;
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a handle. Null is accepted.
///
/// # Safety
/// `model` must be null or a handle from [`pairsim_model_load`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn pairsim_model_free(model: *mut PairsimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn predict<'a>(
    model: *const PairsimModel,
    s1: *const c_char,
    s2: *const c_char,
) -> Result<(Prediction, &'a PairsimModel), PairsimStatus> {
    let Some(m) = model.as_ref() else {
        set_error("model is null");
        return Err(PairsimStatus::NullArgument);
    };
    let (t1, t2) = (tokenize(text(s1, "s1")?), tokenize(text(s2, "s2")?));
    if t1.is_empty() || t2.is_empty() {
        set_error("both sentences must contain at least one token");
        return Err(PairsimStatus::DataError);
    }
    let input = PairInput::lookup(&m.lexicon, &t1, &t2);
    let pred = m.model.predict(&input).map_err(from_error)?;
    Ok((pred, m))
}

/// Similarity score of a sentence pair in the dataset's native range.
/// Fails with `WrongTask` for classification models.
///
/// # Safety
/// `model` must be a live handle, `s1`/`s2` NUL-terminated strings and
/// `out_score` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pairsim_score(
    model: *const PairsimModel,
    s1: *const c_char,
    s2: *const c_char,
    out_score: *mut f64,
) -> PairsimStatus {
    guarded(|| {
        if out_score.is_null() {
            set_error("out_score is null");
            return Err(PairsimStatus::NullArgument);
        }
        let (pred, _) = predict(model, s1, s2)?;
        match pred.score {
            Some(s) => {
                *out_score = s;
                Ok(())
            }
            None => {
                set_error("model is a classifier; use pairsim_label");
                Err(PairsimStatus::WrongTask)
            }
        }
    })
}

/// Predicted class index of a sentence pair. The label name is written to
/// `*out_name` when it is non-null; the string is static.
/// Fails with `WrongTask` for similarity models.
///
/// # Safety
/// `model` must be a live handle, `s1`/`s2` NUL-terminated strings,
/// `out_label` a valid pointer and `out_name` null or valid.
#[no_mangle]
pub unsafe extern "C" fn pairsim_label(
    model: *const PairsimModel,
    s1: *const c_char,
    s2: *const c_char,
    out_label: *mut i32,
    out_name: *mut *const c_char,
) -> PairsimStatus {
    static NAMES: [&CStr; 5] = [c"entailment", c"contradiction", c"neutral", c"0", c"1"];
    guarded(|| {
        if out_label.is_null() {
            set_error("out_label is null");
            return Err(PairsimStatus::NullArgument);
        }
        let (pred, m) = predict(model, s1, s2)?;
        let Some(label) = pred.label else {
            set_error("model is a similarity regressor; use pairsim_score");
            return Err(PairsimStatus::WrongTask);
        };
        *out_label = label as i32;
        if !out_name.is_null() {
            let name = m.model.config.task.label_names()[label];
            let cname = NAMES
                .iter()
                .find(|n| n.to_bytes() == name.as_bytes())
                .expect("known label");
            *out_name = cname.as_ptr();
        }
        Ok(())
    })
}

/// Pearson correlation of two arrays of length `n`.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn pairsim_pearson(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> PairsimStatus {
    guarded(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            set_error("null argument");
            return Err(PairsimStatus::NullArgument);
        }
        let (xs, ys) = (
            std::slice::from_raw_parts(x, n),
            std::slice::from_raw_parts(y, n),
        );
        *out = pearson(xs, ys).map_err(from_error)?;
        Ok(())
    })
}

/// Message of the last failure on this thread, or an empty string. Valid
/// until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pairsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pairsim_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version contains a nul byte"),
        };
    VERSION.as_ptr()
}
