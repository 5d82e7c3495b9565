//! C interface to the depablate parser.
//!
//! Every fallible function returns a [`DaStatus`]; on failure
//! [`da_last_error`] describes what went wrong on the calling thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use depablate::analysis::{las, pair_treebanks};
use depablate::conllu::{overlay_tags, parse_conllu, write_conllu, TagSource, Treebank};
use depablate::error::Error;
use depablate::parser::ParserModel;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Structure = 4,
    Config = 5,
    Io = 6,
    Checkpoint = 7,
    /// Inputs that do not fit together, such as misaligned treebanks.
    Contract = 8,
    Other = 9,
    Panic = 10,
}

/// A set of CoNLL-U sentences.
pub struct DaTreebank(Treebank);

/// A trained parser loaded from a checkpoint.
pub struct DaModel(ParserModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(DaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } => DaStatus::Parse,
            Error::Structure { .. } | Error::Alignment { .. } => DaStatus::Structure,
            Error::Config(_) => DaStatus::Config,
            Error::Io { .. } => DaStatus::Io,
            Error::Checkpoint(_) | Error::Json(_) => DaStatus::Checkpoint,
            Error::Contract(_) => DaStatus::Contract,
            _ => DaStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(DaStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DaStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(DaStatus::NullPointer, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(DaStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn da_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reads a CoNLL-U file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn da_treebank_read(path: *const c_char, out: *mut *mut DaTreebank) -> DaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let tb = Treebank::read(path, "")?;
        *out = Box::into_raw(Box::new(DaTreebank(tb)));
        Ok(())
    })
}

/// Parses CoNLL-U text held in memory.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn da_treebank_parse(text: *const c_char, out: *mut *mut DaTreebank) -> DaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        *out = Box::into_raw(Box::new(DaTreebank(parse_conllu(text, "")?)));
        Ok(())
    })
}

/// Number of sentences, or 0 for a null handle.
///
/// # Safety
/// `tb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn da_treebank_sentences(tb: *const DaTreebank) -> usize {
    tb.as_ref().map_or(0, |t| t.0.sentences.len())
}

/// Number of tokens, or 0 for a null handle.
///
/// # Safety
/// `tb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn da_treebank_tokens(tb: *const DaTreebank) -> usize {
    tb.as_ref().map_or(0, |t| t.0.token_count())
}

/// Serialises a treebank as CoNLL-U. Release the string with
/// [`da_string_free`].
///
/// # Safety
/// `tb` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn da_treebank_to_conllu(tb: *const DaTreebank, out: *mut *mut c_char) -> DaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let tb = ref_arg(tb, "treebank")?;
        let text = CString::new(write_conllu(&tb.0))
            .map_err(|_| Failure(DaStatus::Other, "output contains a nul byte".into()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `tb` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn da_treebank_free(tb: *mut DaTreebank) {
    if !tb.is_null() {
        drop(Box::from_raw(tb));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn da_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint written by training.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn da_model_load(path: *const c_char, out: *mut *mut DaModel) -> DaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        *out = Box::into_raw(Box::new(DaModel(ParserModel::load(path)?)));
        Ok(())
    })
}

/// Whether the model reads POS tags, in which case [`da_model_parse`] needs
/// `gold_tags` set or tags already present in the input.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn da_model_uses_pos(model: *const DaModel) -> bool {
    model.as_ref().is_some_and(|m| m.0.config().representation.use_pos)
}

/// Parses every sentence of `input` into a new treebank. With `gold_tags`
/// the gold UPOS column is used as the predicted tags.
///
/// # Safety
/// `model` and `input` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn da_model_parse(
    model: *const DaModel,
    input: *const DaTreebank,
    gold_tags: bool,
    out: *mut *mut DaTreebank,
) -> DaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let model = ref_arg(model, "model")?;
        let input = ref_arg(input, "input")?;
        let parsed = if gold_tags {
            model.0.parse_treebank(&overlay_tags(&input.0, TagSource::Gold)?)?
        } else {
            model.0.parse_treebank(&input.0)?
        };
        *out = Box::into_raw(Box::new(DaTreebank(parsed)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn da_model_free(model: *mut DaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Labelled attachment score in percent.
///
/// # Safety
/// `gold` and `predicted` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn da_evaluate_las(gold: *const DaTreebank, predicted: *const DaTreebank, out: *mut f64) -> DaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let gold = ref_arg(gold, "gold")?;
        let predicted = ref_arg(predicted, "predicted")?;
        *out = las(&pair_treebanks(&gold.0, &predicted.0)?)?;
        Ok(())
    })
}
