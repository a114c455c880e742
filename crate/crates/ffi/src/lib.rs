//! C ABI over the `s2vt` library.
//!
//! Models are opaque handles created by `s2vt_model_load` and released with
//! `s2vt_model_free`. Every fallible call returns an `S2vtStatus`; on failure
//! `s2vt_last_error` describes the most recent error on the calling thread.
//! Strings handed out by the library must be released with `s2vt_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use s2vt::data::tokenize;
use s2vt::decoding::{fused_decode, greedy_decode, DecodeConfig};
use s2vt::eval::{levenshtein, meteor, stem, MeteorParams};
use s2vt::model::{load_checkpoint, save_checkpoint, S2VTModel};
use s2vt::S2vtError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S2vtStatus {
    Ok = 0,
    InvalidArgument = 1,
    DimensionMismatch = 2,
    VocabularyMismatch = 3,
    Format = 4,
    Diverged = 5,
    Io = 6,
    NullPointer = 7,
    InvalidUtf8 = 8,
    Panic = 9,
}

impl From<&S2vtError> for S2vtStatus {
    fn from(e: &S2vtError) -> Self {
        match e {
            S2vtError::InvalidArgument(_) => S2vtStatus::InvalidArgument,
            S2vtError::DimensionMismatch { .. } => S2vtStatus::DimensionMismatch,
            S2vtError::VocabularyMismatch(_) => S2vtStatus::VocabularyMismatch,
            S2vtError::Format { .. } => S2vtStatus::Format,
            S2vtError::Diverged { .. } => S2vtStatus::Diverged,
            S2vtError::Io(_) => S2vtStatus::Io,
        }
    }
}

/// Opaque trained model.
pub struct S2vtModel {
    inner: S2VTModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(S2vtStatus, String);

impl From<S2vtError> for Failure {
    fn from(e: S2vtError) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn set_last_error(msg: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).expect("NULs removed"));
    });
}

/// Runs `f`, records its error message and converts panics to `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> S2vtStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        Err(Failure(S2vtStatus::Panic, "internal panic".into()))
    });
    match outcome {
        Ok(()) => {
            set_last_error(None);
            S2vtStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_last_error(Some(msg));
            status
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(S2vtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(S2vtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(p: *const S2vtModel, what: &str) -> Result<&'a S2VTModel, Failure> {
    p.as_ref().map(|m| &m.inner).ok_or_else(|| null(what))
}

/// Splits a row-major `n_frames × frame_dim` buffer into frames.
unsafe fn frames_arg(p: *const f64, n_frames: usize, frame_dim: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if n_frames == 0 || frame_dim == 0 {
        return Err(S2vtError::InvalidArgument("frames must be non-empty".into()).into());
    }
    if p.is_null() {
        return Err(null("frames"));
    }
    let len = n_frames
        .checked_mul(frame_dim)
        .ok_or_else(|| Failure(S2vtStatus::InvalidArgument, "frame buffer too large".into()))?;
    Ok(slice::from_raw_parts(p, len).chunks(frame_dim).map(<[f64]>::to_vec).collect())
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(S2vtStatus::InvalidArgument, "string contains NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn decode_config(max_len: usize, alpha: f64) -> Result<DecodeConfig, Failure> {
    let cfg = DecodeConfig { max_len, alpha };
    cfg.validate()?;
    Ok(cfg)
}

/// Library version, a static string that must not be freed.
#[no_mangle]
pub extern "C" fn s2vt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn s2vt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned through an out-parameter. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn s2vt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn s2vt_model_load(path: *const c_char, out: *mut *mut S2vtModel) -> S2vtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(S2vtModel { inner }));
        Ok(())
    })
}

/// Writes the model to a checkpoint file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn s2vt_model_save(model: *const S2vtModel, path: *const c_char) -> S2vtStatus {
    guard(|| {
        let model = model_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        save_checkpoint(model, Path::new(path))?;
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from `s2vt_model_load` and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn s2vt_model_free(model: *mut S2vtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reports the model's widths and vocabulary size. Any out pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn s2vt_model_dims(
    model: *const S2vtModel,
    frame_dim: *mut usize,
    embed_dim: *mut usize,
    hidden_dim: *mut usize,
    vocab_size: *mut usize,
) -> S2vtStatus {
    guard(|| {
        let m = model_arg(model, "model")?;
        let d = m.dims();
        for (p, v) in [
            (frame_dim, d.frame_dim),
            (embed_dim, d.embed_dim),
            (hidden_dim, d.hidden_dim),
            (vocab_size, m.vocab_size()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Greedy caption for `n_frames` row-major frames of width `frame_dim`.
/// The caption is written to `*out` and must be freed with `s2vt_string_free`.
///
/// # Safety
/// `frames` must hold `n_frames * frame_dim` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn s2vt_caption_greedy(
    model: *const S2vtModel,
    frames: *const f64,
    n_frames: usize,
    frame_dim: usize,
    max_len: usize,
    out: *mut *mut c_char,
) -> S2vtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = model_arg(model, "model")?;
        let frames = frames_arg(frames, n_frames, frame_dim)?;
        let ids = greedy_decode(m, &frames, &decode_config(max_len, 0.5)?)?;
        out_string(out, m.vocab.render(&ids))
    })
}

/// Caption from two models whose word distributions are mixed with weight
/// `alpha` on model A. Each model reads its own frames.
///
/// # Safety
/// Frame buffers must hold `n * dim` doubles each and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn s2vt_caption_fused(
    model_a: *const S2vtModel,
    model_b: *const S2vtModel,
    frames_a: *const f64,
    n_frames_a: usize,
    frame_dim_a: usize,
    frames_b: *const f64,
    n_frames_b: usize,
    frame_dim_b: usize,
    alpha: f64,
    max_len: usize,
    out: *mut *mut c_char,
) -> S2vtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = model_arg(model_a, "model_a")?;
        let b = model_arg(model_b, "model_b")?;
        let fa = frames_arg(frames_a, n_frames_a, frame_dim_a)?;
        let fb = frames_arg(frames_b, n_frames_b, frame_dim_b)?;
        let ids = fused_decode(a, b, &fa, &fb, &decode_config(max_len, alpha)?)?;
        out_string(out, a.vocab.render(&ids))
    })
}

/// METEOR-lite score of a hypothesis against `n_refs` references, with the
/// default parameters. Sentences are tokenized like training captions.
///
/// # Safety
/// `hypothesis` and each of the `n_refs` entries of `references` must be
/// NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn s2vt_meteor(
    hypothesis: *const c_char,
    references: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> S2vtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hyp = tokenize(str_arg(hypothesis, "hypothesis")?);
        if references.is_null() && n_refs > 0 {
            return Err(null("references"));
        }
        let mut refs = Vec::with_capacity(n_refs);
        for i in 0..n_refs {
            refs.push(tokenize(str_arg(*references.add(i), "reference")?));
        }
        *out = meteor(&hyp, &refs, &MeteorParams::default())?;
        Ok(())
    })
}

/// Word-level edit distance between two sentences.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn s2vt_levenshtein_words(a: *const c_char, b: *const c_char, out: *mut usize) -> S2vtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = tokenize(str_arg(a, "a")?);
        let b = tokenize(str_arg(b, "b")?);
        *out = levenshtein(&a, &b);
        Ok(())
    })
}

/// Porter stem of one word, to be freed with `s2vt_string_free`.
///
/// # Safety
/// `word` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn s2vt_stem(word: *const c_char, out: *mut *mut c_char) -> S2vtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(out, stem(str_arg(word, "word")?))
    })
}
