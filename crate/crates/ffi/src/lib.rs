//! C interface to the abd-nmt library.
//!
//! Every function returns an [`AbdStatus`]; on failure a message is kept
//! per thread and can be read with [`abd_last_error`]. Strings handed out
//! by the library must be released with [`abd_string_free`], translators
//! with [`abd_translator_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use abd_nmt::checkpoint;
use abd_nmt::data::Vocabulary;
use abd_nmt::decoding::{translate, DecodeConfig};
use abd_nmt::eval::{bleu, MAX_ORDER};
use abd_nmt::model::{count_params, Architecture, Model};
use abd_nmt::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad arguments or an unsupported request.
    InvalidInput = 3,
    /// Malformed or mismatched data.
    DataError = 4,
    /// A checkpoint or vocabulary file could not be parsed.
    FormatError = 5,
    /// A file could not be read.
    IoError = 6,
    /// A non-finite value appeared during computation.
    NumericError = 7,
    /// An internal error; the library state is unchanged.
    Panic = 8,
}

/// Decoding modes for [`abd_translate`].
pub const ABD_MODE_MODEL: i32 = -1;
pub const ABD_MODE_ABD: i32 = 0;
pub const ABD_MODE_L2R: i32 = 1;
pub const ABD_MODE_R2L: i32 = 2;

/// A loaded model with its vocabularies.
pub struct AbdTranslator {
    model: Model<f32>,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AbdStatus {
    match e {
        Error::Input(_) => AbdStatus::InvalidInput,
        Error::Format { .. } => AbdStatus::FormatError,
        Error::Io { .. } => AbdStatus::IoError,
        Error::Numeric(_) => AbdStatus::NumericError,
        Error::Shape { .. } | Error::Domain(_) | Error::Index { .. } | Error::Data(_) => {
            AbdStatus::DataError
        }
    }
}

struct Fail(AbdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AbdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AbdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AbdStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AbdStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AbdStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn opt_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(|s| Some(PathBuf::from(s)))
    }
}

fn out_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(AbdStatus::DataError, "output contains a NUL byte".into()))
}

/// The message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn abd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn abd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. Null vocabulary paths mean `src.vocab` / `tgt.vocab`
/// next to the checkpoint.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abd_translator_load(
    model_path: *const c_char,
    src_vocab_path: *const c_char,
    tgt_vocab_path: *const c_char,
    out: *mut *mut AbdTranslator,
) -> AbdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model_path = PathBuf::from(str_arg(model_path, "model_path")?);
        let dir = model_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let src_path =
            opt_path(src_vocab_path, "src_vocab_path")?.unwrap_or_else(|| dir.join("src.vocab"));
        let tgt_path =
            opt_path(tgt_vocab_path, "tgt_vocab_path")?.unwrap_or_else(|| dir.join("tgt.vocab"));
        let model = checkpoint::load(&model_path)?;
        let src_vocab = Vocabulary::load(&src_path)?;
        let tgt_vocab = Vocabulary::load(&tgt_path)?;
        if src_vocab.len() != model.config.src_vocab || tgt_vocab.len() != model.config.tgt_vocab {
            return Err(Fail(
                AbdStatus::DataError,
                format!(
                    "vocabularies have {}/{} entries but the model expects {}/{}",
                    src_vocab.len(),
                    tgt_vocab.len(),
                    model.config.src_vocab,
                    model.config.tgt_vocab
                ),
            ));
        }
        *out = Box::into_raw(Box::new(AbdTranslator {
            model,
            src_vocab,
            tgt_vocab,
        }));
        Ok(())
    })
}

/// Releases a translator. Null is ignored.
///
/// # Safety
/// `t` must come from [`abd_translator_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn abd_translator_free(t: *mut AbdTranslator) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of trainable scalars in the loaded model, or 0 for null.
///
/// # Safety
/// `t` must be null or a live translator.
#[no_mangle]
pub unsafe extern "C" fn abd_translator_param_count(t: *const AbdTranslator) -> u64 {
    t.as_ref()
        .map_or(0, |t| count_params(&t.model.config) as u64)
}

/// Translates one whitespace-tokenized sentence. `mode` is one of the
/// `ABD_MODE_*` constants. The result goes to `*out` and must be released
/// with [`abd_string_free`].
///
/// # Safety
/// `t` must be a live translator, `sentence` NUL-terminated and `out` writable.
/// A translator may be shared between threads.
#[no_mangle]
pub unsafe extern "C" fn abd_translate(
    t: *const AbdTranslator,
    sentence: *const c_char,
    beam: u32,
    mode: i32,
    out: *mut *mut c_char,
) -> AbdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let t = t.as_ref().ok_or_else(|| null("translator"))?;
        let text = str_arg(sentence, "sentence")?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mode = match mode {
            ABD_MODE_MODEL => t.model.config.architecture,
            ABD_MODE_ABD => Architecture::Abd,
            ABD_MODE_L2R => Architecture::L2r,
            ABD_MODE_R2L => Architecture::R2l,
            other => {
                return Err(Fail(
                    AbdStatus::InvalidInput,
                    format!("unknown mode {other}"),
                ))
            }
        };
        let rendered = if tokens.is_empty() {
            String::new()
        } else {
            let cfg = DecodeConfig {
                mode,
                beam: beam as usize,
                length_normalize: false,
            };
            let result = translate(&t.model, &t.src_vocab.encode(&tokens), &cfg)?;
            t.tgt_vocab.decode(&result.tokens)?.join(" ")
        };
        *out = out_string(rendered)?;
        Ok(())
    })
}

/// Corpus BLEU (4-gram, single reference) of `n` hypothesis/reference
/// sentence pairs, written to `*score` in `[0, 1]`.
///
/// # Safety
/// `hyps` and `refs` must point to `n` NUL-terminated strings each.
#[no_mangle]
pub unsafe extern "C" fn abd_corpus_bleu(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    n: usize,
    lowercase: bool,
    score: *mut f64,
) -> AbdStatus {
    guard(|| {
        if score.is_null() {
            return Err(null("score"));
        }
        if n > 0 && (hyps.is_null() || refs.is_null()) {
            return Err(null(if hyps.is_null() { "hyps" } else { "refs" }));
        }
        let split = |arr: *const *const c_char, what: &str| -> Result<Vec<Vec<String>>, Fail> {
            (0..n)
                .map(|i| {
                    Ok(str_arg(*arr.add(i), what)?
                        .split_whitespace()
                        .map(str::to_string)
                        .collect())
                })
                .collect()
        };
        let (h, r) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            (split(hyps, "hyps")?, split(refs, "refs")?)
        };
        *score = bleu(&h, &[r], MAX_ORDER, lowercase)?.score;
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn abd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
