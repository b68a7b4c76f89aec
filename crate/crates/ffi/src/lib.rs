//! C ABI over `icr-core`.
//!
//! Every fallible function returns an [`IcrStatus`]; on failure the message is
//! available from [`icr_last_error`] on the same thread. Handles are opaque,
//! created by `*_build`/`*_load`/`*_new`/`*_parse` and released by the matching
//! `*_free`. Strings returned as `*mut c_char` are owned by the caller and
//! released with [`icr_string_free`]; `*const c_char` results borrow from their
//! handle and stay valid until it is freed.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use icr_core::corpus::{read_collection, CollectionFormat};
use icr_core::crdg::{parse_trajectory, serialize_steps};
use icr_core::eval::{mrr, ndcg_at_3, recall_at_k};
use icr_core::fusion::{fuse, FusionConfig, FusionMode};
use icr_core::ranking::{Hit, RankedList};
use icr_core::sparse::{Bm25Params, SparseIndex};
use icr_core::Error;
use libc::{c_char, size_t};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    MalformedInput = 5,
    NotFound = 6,
    Provider = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcrFusionMode {
    Prrf = 0,
    Rrf = 1,
    FinalOnly = 2,
}

/// Binary-relevance metrics of one ranked list.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IcrMetrics {
    pub mrr: f64,
    pub ndcg3: f64,
    pub recall10: f64,
    pub recall100: f64,
}

pub struct IcrSparseIndex(SparseIndex);

/// Ranked list plus NUL-terminated copies of its ids, index-aligned.
pub struct IcrRankedList {
    list: RankedList,
    c_ids: Vec<CString>,
}

pub struct IcrTrajectory {
    pairs: Vec<(CString, CString)>,
    warnings: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IcrStatus {
    match err {
        Error::Io { .. } => IcrStatus::Io,
        Error::InvalidParameter(_) | Error::EmptyInput | Error::EmptyCollection | Error::DuplicateId(_) => {
            IcrStatus::InvalidArgument
        }
        Error::GoldMissingFromCollection(_) => IcrStatus::NotFound,
        e if e.is_provider_error() => IcrStatus::Provider,
        _ => IcrStatus::MalformedInput,
    }
}

struct Fail(IcrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IcrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IcrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside icr-ffi");
            IcrStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(IcrStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(IcrStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IcrStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

/// # Safety
/// `p` is null or points to a live `T` created by this library.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_ptr<T>(out: *mut T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

fn c_string(s: &str) -> Result<CString, Fail> {
    CString::new(s).map_err(|_| invalid("string contains an interior NUL"))
}

fn boxed_list(list: RankedList) -> Result<*mut IcrRankedList, Fail> {
    let c_ids = list.ids().map(c_string).collect::<Result<_, _>>()?;
    Ok(Box::into_raw(Box::new(IcrRankedList { list, c_ids })))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn icr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if it succeeded.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn icr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is null or was returned by this library as `*mut c_char`.
#[no_mangle]
pub unsafe extern "C" fn icr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the BM25 parameters of a named profile (`topiocqa` or `qrecc`).
///
/// # Safety
/// `name` is a NUL-terminated string; `k1` and `b` are writable.
#[no_mangle]
pub unsafe extern "C" fn icr_bm25_profile(name: *const c_char, k1: *mut f64, b: *mut f64) -> IcrStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        out_ptr(k1, "k1")?;
        out_ptr(b, "b")?;
        let p =
            Bm25Params::profile(name).ok_or_else(|| Fail(IcrStatus::NotFound, format!("unknown profile `{name}`")))?;
        *k1 = p.k1;
        *b = p.b;
        Ok(())
    })
}

/// Builds a BM25 index over a TSV or JSONL collection (format from the extension).
///
/// # Safety
/// `collection_path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_sparse_index_build(
    collection_path: *const c_char,
    k1: f64,
    b: f64,
    out: *mut *mut IcrSparseIndex,
) -> IcrStatus {
    guard(|| {
        let path = Path::new(str_arg(collection_path, "collection_path")?);
        out_ptr(out, "out")?;
        let params = Bm25Params::new(k1, b)?;
        let passages = read_collection(path, CollectionFormat::from_path(path))?;
        let index = SparseIndex::build(passages, params)?;
        *out = Box::into_raw(Box::new(IcrSparseIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_sparse_index_load(path: *const c_char, out: *mut *mut IcrSparseIndex) -> IcrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_ptr(out, "out")?;
        let index = SparseIndex::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(IcrSparseIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `index` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn icr_sparse_index_save(index: *const IcrSparseIndex, path: *const c_char) -> IcrStatus {
    guard(|| {
        let index = handle(index, "index")?;
        index.0.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of indexed passages; 0 for a null handle.
///
/// # Safety
/// `index` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn icr_sparse_index_doc_count(index: *const IcrSparseIndex) -> size_t {
    index.as_ref().map_or(0, |i| i.0.doc_count())
}

/// Top-`k` BM25 search.
///
/// # Safety
/// `index` is a live handle; `query` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_sparse_index_search(
    index: *const IcrSparseIndex,
    query: *const c_char,
    k: size_t,
    out: *mut *mut IcrRankedList,
) -> IcrStatus {
    guard(|| {
        let index = handle(index, "index")?;
        let query = str_arg(query, "query")?;
        out_ptr(out, "out")?;
        *out = boxed_list(index.0.search(query, k))?;
        Ok(())
    })
}

/// # Safety
/// `index` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn icr_sparse_index_free(index: *mut IcrSparseIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Empty list to be filled in rank order with [`icr_ranked_list_push`].
///
/// # Safety
/// `query_tag` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_ranked_list_new(query_tag: *const c_char, out: *mut *mut IcrRankedList) -> IcrStatus {
    guard(|| {
        let tag = str_arg(query_tag, "query_tag")?;
        out_ptr(out, "out")?;
        *out = boxed_list(RankedList {
            query_tag: tag.to_string(),
            entries: Vec::new(),
        })?;
        Ok(())
    })
}

/// Appends a hit at the next rank. Ids must be unique within the list.
///
/// # Safety
/// `list` is a live handle; `passage_id` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn icr_ranked_list_push(
    list: *mut IcrRankedList,
    passage_id: *const c_char,
    score: f64,
) -> IcrStatus {
    guard(|| {
        let list = list.as_mut().ok_or_else(|| null("list"))?;
        let id = str_arg(passage_id, "passage_id")?;
        if list.list.rank_of(id).is_some() {
            return Err(invalid(format!("duplicate passage id `{id}`")));
        }
        list.c_ids.push(c_string(id)?);
        list.list.entries.push(Hit {
            passage_id: id.to_string(),
            score,
        });
        Ok(())
    })
}

/// # Safety
/// `list` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn icr_ranked_list_len(list: *const IcrRankedList) -> size_t {
    list.as_ref().map_or(0, |l| l.list.len())
}

/// Hit at 0-based position `i`. `passage_id` borrows from the list.
///
/// # Safety
/// `list` is a live handle; `passage_id` and `score` are writable.
#[no_mangle]
pub unsafe extern "C" fn icr_ranked_list_get(
    list: *const IcrRankedList,
    i: size_t,
    passage_id: *mut *const c_char,
    score: *mut f64,
) -> IcrStatus {
    guard(|| {
        let list = handle(list, "list")?;
        out_ptr(passage_id, "passage_id")?;
        out_ptr(score, "score")?;
        let hit = list
            .list
            .entries
            .get(i)
            .ok_or_else(|| invalid(format!("position {i} out of range ({})", list.list.len())))?;
        *passage_id = list.c_ids[i].as_ptr();
        *score = hit.score;
        Ok(())
    })
}

/// # Safety
/// `list` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn icr_ranked_list_free(list: *mut IcrRankedList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Fuses `n` lists given in iteration order; list i (1-based) weighs i under PRRF.
///
/// # Safety
/// `lists` points to `n` live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_fuse(
    lists: *const *const IcrRankedList,
    n: size_t,
    mode: IcrFusionMode,
    k: f64,
    depth: size_t,
    out: *mut *mut IcrRankedList,
) -> IcrStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if lists.is_null() && n > 0 {
            return Err(null("lists"));
        }
        let handles: &[*const IcrRankedList] = if n == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(lists, n)
        };
        let owned = handles
            .iter()
            .map(|&h| handle(h, "lists[i]").map(|l| l.list.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let config = FusionConfig {
            mode: match mode {
                IcrFusionMode::Prrf => FusionMode::Prrf,
                IcrFusionMode::Rrf => FusionMode::Rrf,
                IcrFusionMode::FinalOnly => FusionMode::FinalOnly,
            },
            k,
            depth,
        };
        *out = boxed_list(fuse(&owned, &config)?)?;
        Ok(())
    })
}

/// MRR, NDCG@3, R@10 and R@100 against `n_relevant` relevant passage ids.
///
/// # Safety
/// `list` is a live handle; `relevant` points to `n_relevant` NUL-terminated
/// strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_metrics(
    list: *const IcrRankedList,
    relevant: *const *const c_char,
    n_relevant: size_t,
    out: *mut IcrMetrics,
) -> IcrStatus {
    guard(|| {
        let list = &handle(list, "list")?.list;
        out_ptr(out, "out")?;
        if relevant.is_null() && n_relevant > 0 {
            return Err(null("relevant"));
        }
        let ptrs: &[*const c_char] = if n_relevant == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(relevant, n_relevant)
        };
        let rel = ptrs
            .iter()
            .map(|&p| str_arg(p, "relevant[i]").map(str::to_string))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let grades = rel.iter().map(|r| (r.clone(), 1)).collect();
        *out = IcrMetrics {
            mrr: mrr(list, &rel),
            ndcg3: ndcg_at_3(list, &grades),
            recall10: recall_at_k(list, &rel, 10),
            recall100: recall_at_k(list, &rel, 100),
        };
        Ok(())
    })
}

/// Parses `[Clarification] c [Rewrite] r ...` text. Malformed segments are
/// dropped and counted by [`icr_trajectory_warnings`].
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_trajectory_parse(text: *const c_char, out: *mut *mut IcrTrajectory) -> IcrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        out_ptr(out, "out")?;
        let parsed = parse_trajectory(text);
        let pairs = parsed
            .pairs
            .iter()
            .map(|(c, r)| Ok((c_string(c)?, c_string(r)?)))
            .collect::<Result<_, Fail>>()?;
        *out = Box::into_raw(Box::new(IcrTrajectory {
            pairs,
            warnings: parsed.warnings,
        }));
        Ok(())
    })
}

/// # Safety
/// `t` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn icr_trajectory_len(t: *const IcrTrajectory) -> size_t {
    t.as_ref().map_or(0, |t| t.pairs.len())
}

/// # Safety
/// `t` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn icr_trajectory_warnings(t: *const IcrTrajectory) -> size_t {
    t.as_ref().map_or(0, |t| t.warnings)
}

/// Step `i` (0-based). Both strings borrow from the trajectory.
///
/// # Safety
/// `t` is a live handle; `clarification` and `rewrite` are writable.
#[no_mangle]
pub unsafe extern "C" fn icr_trajectory_step(
    t: *const IcrTrajectory,
    i: size_t,
    clarification: *mut *const c_char,
    rewrite: *mut *const c_char,
) -> IcrStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        out_ptr(clarification, "clarification")?;
        out_ptr(rewrite, "rewrite")?;
        let (c, r) = t
            .pairs
            .get(i)
            .ok_or_else(|| invalid(format!("step {i} out of range ({})", t.pairs.len())))?;
        *clarification = c.as_ptr();
        *rewrite = r.as_ptr();
        Ok(())
    })
}

/// Canonical serialization; free the result with [`icr_string_free`].
///
/// # Safety
/// `t` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn icr_trajectory_serialize(t: *const IcrTrajectory, out: *mut *mut c_char) -> IcrStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        out_ptr(out, "out")?;
        let pairs: Vec<(&str, &str)> = t
            .pairs
            .iter()
            .map(|(c, r)| (c.to_str().unwrap_or_default(), r.to_str().unwrap_or_default()))
            .collect();
        *out = c_string(&serialize_steps(pairs))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `t` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn icr_trajectory_free(t: *mut IcrTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
