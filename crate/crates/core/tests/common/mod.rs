//! Shared fixtures and brute-force oracles for the integration tests.
//!
//! Oracles are written from the metric and scoring definitions directly and
//! share no code with the library beyond its data types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use icr_core::corpus::{CqrSample, Passage, Turn};
use icr_core::dense::{DenseIndex, DenseRetriever, MockEmbedder};
use icr_core::eval::Retrievers;
use icr_core::gen::{GenKind, GenRequest, Generator, ScriptedMock};
use icr_core::ranking::Retriever;
use icr_core::sparse::{Bm25Params, SparseIndex};
use icr_core::{Hit, RankedList, Result};

// ---------------------------------------------------------------- oracles

pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Direct BM25: every query-term occurrence contributes
/// idf · tf · (k1 + 1) / (tf + k1 · (1 − b + b · len / avglen)),
/// idf = ln(1 + (N − df + 0.5) / (df + 0.5)). Non-matching documents are
/// dropped; ties go to the smaller id.
pub fn bm25_oracle(docs: &[(String, String)], query: &str, k1: f64, b: f64, k: usize) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs.iter().map(|(_, t)| oracle_tokens(t)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let q = oracle_tokens(query);
    let mut scored = Vec::new();
    for (d, (id, _)) in docs.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for term in &q {
            let tf = toks[d].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = toks.iter().filter(|ts| ts.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let len = toks[d].len() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
        }
        if matched {
            scored.push((id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn oracle_mrr(ranking: &[String], relevant: &BTreeSet<String>) -> f64 {
    for (i, id) in ranking.iter().enumerate() {
        if relevant.contains(id) {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

pub fn oracle_ndcg3(ranking: &[String], grades: &BTreeMap<String, u32>) -> f64 {
    let mut dcg = 0.0;
    for (i, id) in ranking.iter().take(3).enumerate() {
        let g = *grades.get(id).unwrap_or(&0) as f64;
        dcg += g / (i as f64 + 2.0).log2();
    }
    let mut best: Vec<u32> = grades.values().copied().collect();
    best.sort_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, g) in best.iter().take(3).enumerate() {
        idcg += *g as f64 / (i as f64 + 2.0).log2();
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn oracle_recall(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let top: BTreeSet<&String> = ranking.iter().take(k).collect();
    relevant.iter().filter(|r| top.contains(r)).count() as f64 / relevant.len() as f64
}

/// Weighted reciprocal-rank fusion: list i (1-based) contributes weight(i) / (rank + k).
pub fn oracle_fuse(lists: &[Vec<String>], k: f64, weight: impl Fn(usize) -> f64) -> Vec<(String, f64)> {
    let mut acc: HashMap<String, f64> = HashMap::new();
    for (i, l) in lists.iter().enumerate() {
        for (r, id) in l.iter().enumerate() {
            *acc.entry(id.clone()).or_default() += weight(i + 1) / (r as f64 + 1.0 + k);
        }
    }
    let mut out: Vec<(String, f64)> = acc.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn oracle_rank(fused: &[(String, f64)], id: &str) -> Option<usize> {
    fused.iter().position(|(p, _)| p == id).map(|p| p + 1)
}

/// F over the given retrievers, binary relevance against `gold`, depth 100.
pub fn oracle_f(lists: &[RankedList], gold: &BTreeSet<String>) -> f64 {
    let grades: BTreeMap<String, u32> = gold.iter().map(|g| (g.clone(), 1)).collect();
    lists
        .iter()
        .map(|l| {
            let ids: Vec<String> = l.ids().take(100).map(str::to_string).collect();
            oracle_mrr(&ids, gold)
                + oracle_ndcg3(&ids, &grades)
                + oracle_recall(&ids, gold, 10)
                + oracle_recall(&ids, gold, 100)
        })
        .sum()
}

pub fn list(tag: &str, ids: &[&str]) -> RankedList {
    RankedList {
        query_tag: tag.into(),
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| Hit {
                passage_id: id.to_string(),
                score: (ids.len() - i) as f64,
            })
            .collect(),
    }
}

// --------------------------------------------------------------- fixtures

pub const DENSE_DIM: usize = 1033;
pub const GOLD: &str = "p20";

fn passage(id: &str, text: &str) -> Passage {
    Passage {
        id: id.into(),
        text: text.into(),
    }
}

/// 20 four-token passages. Gold `p20` holds `apollo borealis cygnus` once
/// each; p01–p09 hold `apollo` twice, p10–p11 hold `borealis` twice. Querying
/// `apollo`, `borealis`, `cygnus` puts gold at rank 10, 3 and 1 in both
/// retrievers.
pub fn crdg_corpus() -> Vec<Passage> {
    let mut out = Vec::new();
    for i in 1..=9 {
        out.push(passage(&format!("p{i:02}"), &format!("apollo apollo fa{i} fb{i}")));
    }
    for i in 10..=11 {
        out.push(passage(&format!("p{i:02}"), &format!("borealis borealis fa{i} fb{i}")));
    }
    for i in 12..=19 {
        out.push(passage(&format!("p{i:02}"), &format!("fa{i} fb{i} fc{i} fd{i}")));
    }
    out.push(passage(GOLD, "apollo borealis cygnus gilded"));
    out
}

/// 20 passages for the fusion scenario: `alpha` ranks w first, `beta` ranks v
/// then w, `gamma` ranks only the gold passage `g`.
pub fn fusion_corpus() -> Vec<Passage> {
    let mut out = vec![
        passage("g", "gamma ga gb gc"),
        passage("v", "beta beta va vb"),
        passage("w", "alpha alpha beta wa"),
    ];
    for i in 4..=20 {
        out.push(passage(&format!("f{i:02}"), &format!("fa{i} fb{i} fc{i} fd{i}")));
    }
    out
}

pub struct Toy {
    pub sparse: SparseIndex,
    pub dense: DenseRetriever,
}

impl Toy {
    /// Panics if two distinct tokens of the corpus or `queries` share a mock
    /// embedding bucket, which would perturb the intended rankings.
    pub fn new(passages: &[Passage], queries: &[&str]) -> Toy {
        let embedder = MockEmbedder::new(DENSE_DIM).unwrap();
        let mut buckets: HashMap<usize, String> = HashMap::new();
        let texts = passages.iter().map(|p| p.text.as_str()).chain(queries.iter().copied());
        for tok in texts.flat_map(oracle_tokens) {
            let b = embedder.bucket(&tok);
            if let Some(prev) = buckets.insert(b, tok.clone()) {
                assert_eq!(prev, tok, "bucket collision in toy corpus");
            }
        }
        let sparse = SparseIndex::build(passages.iter().cloned(), Bm25Params::TOPIOCQA).unwrap();
        let index = DenseIndex::build(passages.iter().cloned(), &embedder, 8).unwrap();
        let dense = DenseRetriever::new(index, Box::new(embedder)).unwrap();
        Toy { sparse, dense }
    }

    pub fn crdg() -> Toy {
        Toy::new(&crdg_corpus(), &CRDG_QUERIES)
    }

    pub fn retrievers(&self) -> Retrievers<'_> {
        Retrievers::new(
            Some(&self.sparse as &dyn Retriever),
            Some(&self.dense as &dyn Retriever),
        )
    }

    pub fn lists(&self, query: &str) -> Vec<RankedList> {
        vec![
            self.sparse.search(query, 100),
            Retriever::search(&self.dense, query, 100).unwrap(),
        ]
    }
}

pub const ORIGINAL: &str = "what about its stars";
pub const CRDG_QUERIES: [&str; 5] = [ORIGINAL, "apollo", "borealis", "cygnus", "what about its stars please"];

pub fn sample(id: &str, query: &str) -> CqrSample {
    CqrSample {
        sample_id: id.into(),
        history: vec![Turn {
            query: "tell me about the night sky".into(),
            answer: "It is full of constellations.".into(),
        }],
        query: query.into(),
        gold_passage_ids: [GOLD.to_string()].into(),
    }
}

/// Rewrites `from → to` for every attempt, with a fixed clarification.
pub fn chain(mut mock: ScriptedMock, steps: &[(&str, &str)]) -> ScriptedMock {
    for (i, (from, to)) in steps.iter().enumerate() {
        mock = mock
            .on(GenKind::Clarify, from, None, &format!("clarify {i}"))
            .on(GenKind::Rewrite, from, None, to);
    }
    mock
}

/// Original query → apollo → borealis → cygnus, after which rewrites repeat.
pub fn ladder_script() -> ScriptedMock {
    chain(
        ScriptedMock::new(),
        &[
            (ORIGINAL, "apollo"),
            ("apollo", "borealis"),
            ("borealis", "cygnus"),
            ("cygnus", "cygnus"),
        ],
    )
}

/// Counts calls to an inner generator.
pub struct Counting<G> {
    pub inner: G,
    pub calls: AtomicUsize,
}

impl<G> Counting<G> {
    pub fn new(inner: G) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<G: Generator> Generator for Counting<G> {
    fn generate(&self, request: &GenRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(request)
    }
}

/// Retriever whose query `step N` ranks the gold passage at `max(1, 60 - 5N)`
/// among 99 fillers, so every successive step strictly improves F.
pub struct Staircase;

impl Retriever for Staircase {
    fn name(&self) -> &str {
        "staircase"
    }

    fn search(&self, query: &str, k: usize) -> Result<RankedList> {
        let n: usize = query.rsplit(' ').next().and_then(|s| s.parse().ok()).unwrap_or(0);
        let gold_rank = 60usize.saturating_sub(5 * n).max(1);
        let mut ids: Vec<String> = (1..=99).map(|i| format!("f{i:03}")).collect();
        ids.insert(gold_rank - 1, GOLD.to_string());
        let hits = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| Hit {
                passage_id: id,
                score: 1000.0 - i as f64,
            })
            .collect();
        Ok(RankedList::from_hits(query, hits, k))
    }

    fn contains(&self, _passage_id: &str) -> bool {
        true
    }
}

/// `step N → step N+1` for N in 0..=20.
pub fn staircase_script() -> ScriptedMock {
    let mut m = ScriptedMock::new();
    for n in 0..=20 {
        let from = format!("step {n}");
        m = m
            .on(GenKind::Clarify, &from, None, &format!("which step after {n}?"))
            .on(GenKind::Rewrite, &from, None, &format!("step {}", n + 1));
    }
    m
}
