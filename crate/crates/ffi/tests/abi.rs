use std::ffi::{CStr, CString};
use std::ptr;

use icr_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = icr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn ids(list: *const IcrRankedList) -> Vec<(String, f64)> {
    (0..icr_ranked_list_len(list))
        .map(|i| {
            let (mut id, mut score) = (ptr::null(), 0.0);
            assert_eq!(icr_ranked_list_get(list, i, &mut id, &mut score), IcrStatus::Ok);
            (CStr::from_ptr(id).to_str().unwrap().to_string(), score)
        })
        .collect()
}

unsafe fn new_list(tag: &str, hits: &[&str]) -> *mut IcrRankedList {
    let mut l = ptr::null_mut();
    assert_eq!(icr_ranked_list_new(cs(tag).as_ptr(), &mut l), IcrStatus::Ok);
    for (i, h) in hits.iter().enumerate() {
        assert_eq!(
            icr_ranked_list_push(l, cs(h).as_ptr(), (hits.len() - i) as f64),
            IcrStatus::Ok
        );
    }
    l
}

#[test]
fn sparse_index_build_search_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let coll = dir.path().join("c.tsv");
    std::fs::write(
        &coll,
        "d1\tapollo apollo moon\nd2\tborealis lights\nd3\tapollo borealis\n",
    )
    .unwrap();
    unsafe {
        let (mut k1, mut b) = (0.0, 0.0);
        assert_eq!(icr_bm25_profile(cs("qrecc").as_ptr(), &mut k1, &mut b), IcrStatus::Ok);
        assert_eq!((k1, b), (0.82, 0.68));
        assert_eq!(
            icr_bm25_profile(cs("nope").as_ptr(), &mut k1, &mut b),
            IcrStatus::NotFound
        );
        assert!(last_error().contains("nope"));

        let mut idx = ptr::null_mut();
        let path = cs(coll.to_str().unwrap());
        assert_eq!(icr_sparse_index_build(path.as_ptr(), k1, b, &mut idx), IcrStatus::Ok);
        assert!(icr_last_error().is_null());
        assert_eq!(icr_sparse_index_doc_count(idx), 3);

        let mut hits = ptr::null_mut();
        assert_eq!(
            icr_sparse_index_search(idx, cs("apollo").as_ptr(), 10, &mut hits),
            IcrStatus::Ok
        );
        let got = ids(hits);
        assert_eq!(got.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>(), ["d1", "d3"]);
        assert!(got[0].1 > got[1].1);

        let saved = cs(dir.path().join("s.idx").to_str().unwrap());
        assert_eq!(icr_sparse_index_save(idx, saved.as_ptr()), IcrStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(icr_sparse_index_load(saved.as_ptr(), &mut again), IcrStatus::Ok);
        let mut hits2 = ptr::null_mut();
        assert_eq!(
            icr_sparse_index_search(again, cs("apollo").as_ptr(), 10, &mut hits2),
            IcrStatus::Ok
        );
        assert_eq!(ids(hits2), got);

        icr_ranked_list_free(hits);
        icr_ranked_list_free(hits2);
        icr_sparse_index_free(idx);
        icr_sparse_index_free(again);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut idx = ptr::null_mut();
        let missing = cs("/nonexistent/collection.tsv");
        assert_eq!(
            icr_sparse_index_build(missing.as_ptr(), 0.9, 0.4, &mut idx),
            IcrStatus::Io
        );
        assert!(idx.is_null());
        assert_eq!(
            icr_sparse_index_build(ptr::null(), 0.9, 0.4, &mut idx),
            IcrStatus::NullPointer
        );
        assert_eq!(
            icr_sparse_index_build(missing.as_ptr(), -1.0, 0.4, &mut idx),
            IcrStatus::InvalidArgument
        );

        let bad = [0xffu8, 0];
        let mut t = ptr::null_mut();
        assert_eq!(
            icr_trajectory_parse(bad.as_ptr().cast(), &mut t),
            IcrStatus::InvalidUtf8
        );

        let l = new_list("q", &["a"]);
        assert_eq!(
            icr_ranked_list_push(l, cs("a").as_ptr(), 0.0),
            IcrStatus::InvalidArgument
        );
        let (mut id, mut score) = (ptr::null(), 0.0);
        assert_eq!(
            icr_ranked_list_get(l, 5, &mut id, &mut score),
            IcrStatus::InvalidArgument
        );
        let mut fused = ptr::null_mut();
        assert_eq!(
            icr_fuse(ptr::null(), 0, IcrFusionMode::Prrf, 60.0, 10, &mut fused),
            IcrStatus::InvalidArgument
        );
        let lists = [l as *const IcrRankedList];
        assert_eq!(
            icr_fuse(lists.as_ptr(), 1, IcrFusionMode::Rrf, -1.0, 10, &mut fused),
            IcrStatus::InvalidArgument
        );
        icr_ranked_list_free(l);

        // null handles are tolerated by free and the length queries
        icr_ranked_list_free(ptr::null_mut());
        icr_sparse_index_free(ptr::null_mut());
        icr_trajectory_free(ptr::null_mut());
        icr_string_free(ptr::null_mut());
        assert_eq!(icr_ranked_list_len(ptr::null()), 0);
    }
}

#[test]
fn fusion_matches_hand_computed_scores() {
    unsafe {
        let a = new_list("q1", &["x", "y"]);
        let b = new_list("q2", &["y", "x"]);
        let lists = [a as *const IcrRankedList, b as *const IcrRankedList];
        let mut prrf = ptr::null_mut();
        assert_eq!(
            icr_fuse(lists.as_ptr(), 2, IcrFusionMode::Prrf, 60.0, 100, &mut prrf),
            IcrStatus::Ok
        );
        assert_eq!(
            ids(prrf),
            [
                ("y".to_string(), 1.0 / 62.0 + 2.0 / 61.0),
                ("x".to_string(), 1.0 / 61.0 + 2.0 / 62.0)
            ]
        );
        let mut last = ptr::null_mut();
        assert_eq!(
            icr_fuse(lists.as_ptr(), 2, IcrFusionMode::FinalOnly, 60.0, 1, &mut last),
            IcrStatus::Ok
        );
        assert_eq!(ids(last).len(), 1);
        assert_eq!(ids(last)[0].0, "y");
        for l in [a, b, prrf, last] {
            icr_ranked_list_free(l);
        }
    }
}

#[test]
fn metrics_with_binary_relevance() {
    unsafe {
        let l = new_list("q", &["a", "b", "c", "d"]);
        let rel = [cs("c"), cs("z")];
        let ptrs: Vec<_> = rel.iter().map(|c| c.as_ptr()).collect();
        let mut m = IcrMetrics::default();
        assert_eq!(icr_metrics(l, ptrs.as_ptr(), ptrs.len(), &mut m), IcrStatus::Ok);
        assert!((m.mrr - 1.0 / 3.0).abs() < 1e-12);
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert!((m.ndcg3 - 0.5 / idcg).abs() < 1e-12);
        assert_eq!((m.recall10, m.recall100), (0.5, 0.5));
        assert_eq!(icr_metrics(l, ptr::null(), 0, &mut m), IcrStatus::Ok);
        assert_eq!(m, IcrMetrics::default());
        icr_ranked_list_free(l);
    }
}

#[test]
fn trajectory_round_trip() {
    unsafe {
        let text =
            cs("[Clarification]  who? [Rewrite] Belbin  [Rewrite] orphan [Clarification] when? [Rewrite] 2004 album");
        let mut t = ptr::null_mut();
        assert_eq!(icr_trajectory_parse(text.as_ptr(), &mut t), IcrStatus::Ok);
        assert_eq!(icr_trajectory_len(t), 2);
        assert_eq!(icr_trajectory_warnings(t), 1);
        let (mut c, mut r) = (ptr::null(), ptr::null());
        assert_eq!(icr_trajectory_step(t, 1, &mut c, &mut r), IcrStatus::Ok);
        assert_eq!(CStr::from_ptr(c).to_str().unwrap(), "when?");
        assert_eq!(CStr::from_ptr(r).to_str().unwrap(), "2004 album");
        let mut s = ptr::null_mut();
        assert_eq!(icr_trajectory_serialize(t, &mut s), IcrStatus::Ok);
        assert_eq!(
            CStr::from_ptr(s).to_str().unwrap(),
            "[Clarification] who? [Rewrite] Belbin [Clarification] when? [Rewrite] 2004 album"
        );
        icr_string_free(s);
        icr_trajectory_free(t);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(icr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
