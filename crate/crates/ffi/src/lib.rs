//! C ABI over the numanchor toolkit.
//!
//! Every fallible call returns a `NaStatus`; on failure the message is kept
//! in a thread-local slot readable with `na_last_error_message`. Objects are
//! handed out as opaque pointers and must be released with their `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use numanchor::augment::{strip_augmentation, Augmenter, Strategy};
use numanchor::gmm::{fit_best, induce_anchors, AnchorTable, Direction, FitOptions, Space};
use numanchor::mlm::{embed_numeral, EncoderCheckpoint, OodEmbedding};
use numanchor::numeral::{parse_numeral, scan_document};
use numanchor::pipeline::{validate_config, Overrides, Pipeline, Stage};
use numanchor::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Validation = 5,
    Dependency = 6,
    Stale = 7,
    Io = 8,
    Format = 9,
    Domain = 10,
    Runtime = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaSpace {
    Linear = 0,
    Log = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaDirection {
    /// Anchor is smaller than the numeral.
    Left = 0,
    /// Anchor is larger than the numeral.
    Right = 1,
    Exact = 2,
}

/// Opaque anchor table.
pub struct NaAnchorTable(AnchorTable);

/// Opaque trained encoder checkpoint.
pub struct NaCheckpoint(EncoderCheckpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NaStatus {
    match e {
        Error::Config(_) => NaStatus::Config,
        Error::Validation(_) => NaStatus::Validation,
        Error::Dependency { .. } => NaStatus::Dependency,
        Error::Stale { .. } => NaStatus::Stale,
        Error::Io { .. } => NaStatus::Io,
        Error::Format { .. } | Error::Checkpoint(_) | Error::Decode { .. } => NaStatus::Format,
        Error::NotANumeral(_)
        | Error::NumeralRange(_)
        | Error::Domain(_)
        | Error::UnsupportedShape(_)
        | Error::AlreadyAugmented { .. }
        | Error::CorruptAugmentation(_) => NaStatus::Domain,
        _ => NaStatus::Runtime,
    }
}

struct Fail(NaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

/// Runs `body`, records any error or panic, and maps it to a status.
fn guard(body: impl FnOnce() -> FfiResult) -> NaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => NaStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NaStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(NaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(NaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn to_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(NaStatus::InvalidArgument, "output contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn na_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn na_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn na_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses one numeral surface form ("1,234.5").
///
/// # Safety
/// `surface` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_parse_numeral(surface: *const c_char, out: *mut f64) -> NaStatus {
    guard(|| {
        let s = str_arg(surface, "surface")?;
        let out = out_arg(out, "out")?;
        *out = parse_numeral(s)?;
        Ok(())
    })
}

/// Fits a K-component mixture to positive-or-zero numeral values and
/// returns its anchor table. In log space the values are given as-is and
/// transformed internally; non-positive values are skipped.
///
/// # Safety
/// `values` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_fit(
    values: *const f64,
    n: usize,
    k: usize,
    space: NaSpace,
    restarts: usize,
    seed: u64,
    out: *mut *mut NaAnchorTable,
) -> NaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if values.is_null() && n > 0 {
            return Err(null("values"));
        }
        let values = if n == 0 { &[][..] } else { std::slice::from_raw_parts(values, n) };
        let (space, data): (Space, Vec<f64>) = match space {
            NaSpace::Linear => (Space::Linear, values.to_vec()),
            NaSpace::Log => (Space::Log, values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect()),
        };
        let opts = FitOptions {
            seed,
            ..FitOptions::default()
        };
        let model = fit_best(&data, k, space, restarts.max(1), opts)?;
        *out = Box::into_raw(Box::new(NaAnchorTable(induce_anchors(&model))));
        Ok(())
    })
}

/// Reads an anchor table file written by the `anchors` stage.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_read(path: *const c_char, out: *mut *mut NaAnchorTable) -> NaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let file = File::open(path).map_err(|e| Error::io(format!("opening {path}"), e))?;
        *out = Box::into_raw(Box::new(NaAnchorTable(AnchorTable::read(BufReader::new(file))?)));
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_free(table: *mut NaAnchorTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of anchors, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_len(table: *const NaAnchorTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_space(table: *const NaAnchorTable) -> NaSpace {
    match table.as_ref().map(|t| t.0.space) {
        Some(Space::Log) => NaSpace::Log,
        _ => NaSpace::Linear,
    }
}

/// Copies up to `cap` anchors (ascending, in the table's space) into `buf`
/// and stores the total count in `len`.
///
/// # Safety
/// `buf` must have room for `cap` doubles; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_anchors(
    table: *const NaAnchorTable,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> NaStatus {
    guard(|| {
        let t = handle(table, "table")?;
        let len = out_arg(len, "len")?;
        *len = t.0.len();
        if cap < t.0.len() {
            return Err(Fail(
                NaStatus::BufferTooSmall,
                format!("need room for {} anchors, got {cap}", t.0.len()),
            ));
        }
        if t.0.is_empty() {
            return Ok(());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, t.0.len()).copy_from_slice(&t.0.anchors);
        Ok(())
    })
}

/// Nearest anchor to `value`, in the table's space, with its direction.
///
/// # Safety
/// `table` must be a live handle; `anchor` and `direction` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_anchor_table_nearest(
    table: *const NaAnchorTable,
    value: f64,
    anchor: *mut f64,
    direction: *mut NaDirection,
) -> NaStatus {
    guard(|| {
        let t = handle(table, "table")?;
        let anchor = out_arg(anchor, "anchor")?;
        let direction = out_arg(direction, "direction")?;
        let a = t.0.nearest_anchor(value)?;
        *anchor = a.anchor;
        *direction = match a.direction {
            Direction::Left => NaDirection::Left,
            Direction::Right => NaDirection::Right,
            Direction::Exact => NaDirection::Exact,
        };
        Ok(())
    })
}

/// Tokenizes `text` and inserts priming groups under `strategy`
/// ("anchors", "ln-anchors", "anchors-dir", "ln-anchors-dir"). The result
/// is space-joined and must be released with `na_string_free`.
///
/// # Safety
/// String arguments must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_augment_text(
    table: *const NaAnchorTable,
    strategy: *const c_char,
    text: *const c_char,
    out: *mut *mut c_char,
) -> NaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = handle(table, "table")?;
        let strategy: Strategy = str_arg(strategy, "strategy")?.parse()?;
        let doc = scan_document(0, str_arg(text, "text")?)?;
        let augmented = Augmenter::new(&t.0, strategy)?.augment(&doc.tokens, &doc.numerals)?;
        *out = to_c_string(augmented.tokens.join(" "))?;
        Ok(())
    })
}

/// Removes priming groups from a space-separated augmented token stream.
///
/// # Safety
/// `text` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_strip_text(text: *const c_char, out: *mut *mut c_char) -> NaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let tokens: Vec<String> = str_arg(text, "text")?.split_whitespace().map(str::to_string).collect();
        *out = to_c_string(strip_augmentation(&tokens)?.join(" "))?;
        Ok(())
    })
}

/// Loads a checkpoint written by the `train` stage.
///
/// # Safety
/// `path` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_checkpoint_load(path: *const c_char, out: *mut *mut NaCheckpoint) -> NaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let file = File::open(path).map_err(|e| Error::io(format!("opening {path}"), e))?;
        *out = Box::into_raw(Box::new(NaCheckpoint(EncoderCheckpoint::read(BufReader::new(file))?)));
        Ok(())
    })
}

/// # Safety
/// `ckpt` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn na_checkpoint_free(ckpt: *mut NaCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Embedding width, or 0 for a null handle.
///
/// # Safety
/// `ckpt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn na_checkpoint_dim(ckpt: *const NaCheckpoint) -> usize {
    ckpt.as_ref().map_or(0, |c| c.0.encoder.hidden())
}

/// Embeds `value` with the fixed template; out-of-vocabulary numerals use
/// the neighbour-mean fallback. `buf` must hold `na_checkpoint_dim` doubles.
///
/// # Safety
/// `ckpt` must be a live handle; `buf` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn na_checkpoint_embed(
    ckpt: *const NaCheckpoint,
    value: f64,
    buf: *mut f64,
    cap: usize,
) -> NaStatus {
    guard(|| {
        let c = handle(ckpt, "checkpoint")?;
        let dim = c.0.encoder.hidden();
        if cap < dim {
            return Err(Fail(NaStatus::BufferTooSmall, format!("need room for {dim} values, got {cap}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let e = embed_numeral(&c.0, value, 0, OodEmbedding::NeighbourMean)?;
        std::slice::from_raw_parts_mut(buf, dim).copy_from_slice(&e.vector);
        Ok(())
    })
}

/// Runs one pipeline stage ("extract" ... "report", or "run-all") for the
/// config at `config_path`.
///
/// # Safety
/// String arguments must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn na_pipeline_run(config_path: *const c_char, stage: *const c_char) -> NaStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let stage = str_arg(stage, "stage")?;
        let pipeline = Pipeline::new(validate_config(Path::new(path), &Overrides::default())?);
        if stage == "run-all" {
            pipeline.run_all()?;
        } else {
            let s: Stage = stage.parse()?;
            pipeline.run_stage(s)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_slot_is_cleared_on_success() {
        let mut v = 0.0;
        let bad = CString::new("2nd").unwrap();
        assert_eq!(unsafe { na_parse_numeral(bad.as_ptr(), &mut v) }, NaStatus::Domain);
        assert!(!na_last_error_message().is_null());
        let good = CString::new("1,234").unwrap();
        assert_eq!(unsafe { na_parse_numeral(good.as_ptr(), &mut v) }, NaStatus::Ok);
        assert_eq!(v, 1234.0);
        assert!(na_last_error_message().is_null());
    }
}
