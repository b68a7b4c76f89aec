//! In-memory BM25 inverted index.
//!
//! Scoring, for each query term occurrence `t` and document `d`:
//!
//! ```text
//! idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avglen))
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! Repeated query terms contribute once per occurrence.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::ranking::{Hit, RankedList, Retriever};

const MAGIC: &[u8; 8] = b"ICRBM25\0";
const FORMAT_VERSION: u32 = 1;

/// Lowercases and splits on any non-alphanumeric character. No stemming, no
/// stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Bm25Params {
    /// TopiOCQA profile.
    pub const TOPIOCQA: Bm25Params = Bm25Params { k1: 0.9, b: 0.4 };
    /// QReCC profile.
    pub const QRECC: Bm25Params = Bm25Params { k1: 0.82, b: 0.68 };

    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidParameter(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "topiocqa" => Some(Self::TOPIOCQA),
            "qrecc" => Some(Self::QRECC),
            _ => None,
        }
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self::TOPIOCQA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct SparseIndex {
    params: Bm25Params,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    ids: Vec<String>,
    ordinals: HashMap<String, u32>,
}

impl SparseIndex {
    /// Builds the index in collection order. Ordinals follow input order.
    pub fn build<I>(collection: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = Passage>,
    {
        params.validate()?;
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::new();
        let mut ids = Vec::new();
        let mut ordinals = HashMap::new();
        for passage in collection {
            let ordinal =
                u32::try_from(ids.len()).map_err(|_| Error::InvalidParameter("collection too large".into()))?;
            if ordinals.insert(passage.id.clone(), ordinal).is_some() {
                return Err(Error::DuplicateId(passage.id));
            }
            let tokens = tokenize(&passage.text);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens.iter() {
                *counts.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { ordinal, tf });
            }
            doc_lengths.push(tokens.len() as u32);
            ids.push(passage.id);
        }
        Self::from_parts(params, postings, doc_lengths, ids, ordinals)
    }

    /// Convenience wrapper over a fallible passage stream.
    pub fn build_from_stream<I>(stream: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = Result<Passage>>,
    {
        let mut err = None;
        let iter = stream.into_iter().map_while(|r| match r {
            Ok(p) => Some(p),
            Err(e) => {
                err = Some(e);
                None
            }
        });
        let built = Self::build(iter, params);
        match err {
            Some(e) => Err(e),
            None => built,
        }
    }

    fn from_parts(
        params: Bm25Params,
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: Vec<u32>,
        ids: Vec<String>,
        ordinals: HashMap<String, u32>,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyCollection);
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(SparseIndex {
            params,
            postings,
            doc_lengths,
            avg_doc_length,
            ids,
            ordinals,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, ordinal: usize) -> u32 {
        self.doc_lengths[ordinal]
    }

    pub fn passage_id(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 top-`k`. Only passages matching at least one query term appear.
    pub fn search(&self, query: &str, k: usize) -> RankedList {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        let Bm25Params { k1, b } = self.params;
        for term in tokenize(query) {
            let plist = self.postings(&term);
            if plist.is_empty() {
                continue;
            }
            let idf = self.idf(plist.len());
            for p in plist {
                let tf = f64::from(p.tf);
                let len = f64::from(self.doc_lengths[p.ordinal as usize]);
                let norm = k1 * (1.0 - b + b * len / self.avg_doc_length);
                *acc.entry(p.ordinal).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let hits = acc
            .into_iter()
            .map(|(ord, score)| Hit {
                passage_id: self.ids[ord as usize].clone(),
                score,
            })
            .collect();
        RankedList::from_hits(query, hits, k)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for (id, len) in self.ids.iter().zip(&self.doc_lengths) {
            write_str(&mut w, id)?;
            w.write_all(&len.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        for (term, plist) in &self.postings {
            write_str(&mut w, term)?;
            w.write_all(&(plist.len() as u32).to_le_bytes())?;
            for p in plist {
                w.write_all(&p.ordinal.to_le_bytes())?;
                w.write_all(&p.tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::InvalidIndex(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a sparse index"));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::InvalidIndex(format!("unsupported version {version}")));
        }
        let params = Bm25Params::new(read_f64(&mut r)?, read_f64(&mut r)?)?;
        let n = read_u64(&mut r)? as usize;
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut doc_lengths = Vec::with_capacity(n.min(1 << 20));
        let mut ordinals = HashMap::new();
        for ord in 0..n {
            let id = read_str(&mut r)?;
            if ordinals.insert(id.clone(), ord as u32).is_some() {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
            doc_lengths.push(read_u32(&mut r)?);
        }
        let terms = read_u64(&mut r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let term = read_str(&mut r)?;
            let len = read_u32(&mut r)? as usize;
            let mut plist = Vec::with_capacity(len.min(n));
            let mut last: Option<u32> = None;
            for _ in 0..len {
                let ordinal = read_u32(&mut r)?;
                let tf = read_u32(&mut r)?;
                if ordinal as usize >= n || last.is_some_and(|l| l >= ordinal) {
                    return Err(bad("posting ordinals out of range or unsorted"));
                }
                last = Some(ordinal);
                plist.push(Posting { ordinal, tf });
            }
            postings.insert(term, plist);
        }
        Self::from_parts(params, postings, doc_lengths, ids, ordinals)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

impl Retriever for SparseIndex {
    fn name(&self) -> &str {
        "sparse"
    }

    fn search(&self, query: &str, k: usize) -> Result<RankedList> {
        Ok(SparseIndex::search(self, query, k))
    }

    fn contains(&self, passage_id: &str) -> bool {
        self.ordinals.contains_key(passage_id)
    }
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::InvalidIndex("truncated string".into()))?;
    String::from_utf8(buf).map_err(|_| Error::InvalidIndex("invalid utf-8".into()))
}

macro_rules! read_num {
    ($name:ident, $ty:ty) => {
        pub(crate) fn $name<R: Read>(r: &mut R) -> Result<$ty> {
            let mut buf = [0u8; std::mem::size_of::<$ty>()];
            r.read_exact(&mut buf)
                .map_err(|_| Error::InvalidIndex("truncated artifact".into()))?;
            Ok(<$ty>::from_le_bytes(buf))
        }
    };
}

read_num!(read_u32, u32);
read_num!(read_u64, u64);
read_num!(read_f64, f64);

#[cfg(test)]
mod tests {
    use super::*;

    fn passages(texts: &[&str]) -> Vec<Passage> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Passage {
                id: format!("p{}", i + 1),
                text: t.to_string(),
            })
            .collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, World!"), ["hello", "world"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("BM25-k1"), ["bm25", "k1"]);
    }

    #[test]
    fn two_doc_build() {
        let idx = SparseIndex::build(passages(&["a b", "a"]), Bm25Params::default()).unwrap();
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.avg_doc_length(), 1.5);
        assert_eq!(
            idx.postings("a"),
            [Posting { ordinal: 0, tf: 1 }, Posting { ordinal: 1, tf: 1 }]
        );
        assert_eq!(idx.postings("b"), [Posting { ordinal: 0, tf: 1 }]);
    }

    #[test]
    fn empty_collection() {
        assert!(matches!(
            SparseIndex::build(Vec::new(), Bm25Params::default()),
            Err(Error::EmptyCollection)
        ));
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let ps = passages(&["the cat sat", "a dog ran far", "cat and dog"]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        SparseIndex::build(ps.clone(), Bm25Params::default())
            .unwrap()
            .write_to(&mut a)
            .unwrap();
        SparseIndex::build(ps, Bm25Params::default())
            .unwrap()
            .write_to(&mut b)
            .unwrap();
        assert_eq!(a, b);
        let back = SparseIndex::read_from(a.as_slice()).unwrap();
        let mut c = Vec::new();
        back.write_to(&mut c).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn single_term_hand_evaluated() {
        // p2 is the only doc containing "zebra"; tf=2, len=4; lengths 3,4,2.
        let ps = passages(&["red blue green", "zebra zebra runs fast", "blue sky"]);
        let idx = SparseIndex::build(ps, Bm25Params::TOPIOCQA).unwrap();
        let got = idx.search("zebra", 10);
        let (k1, b) = (0.9_f64, 0.4_f64);
        let n = 3.0_f64;
        let avg = 9.0 / 3.0;
        let idf = (1.0 + (n - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let expected = idf * 2.0 * (k1 + 1.0) / (2.0 + k1 * (1.0 - b + b * 4.0 / avg));
        assert_eq!(got.entries.len(), 1);
        assert_eq!(got.entries[0].passage_id, "p2");
        assert!((got.entries[0].score - expected).abs() < 1e-9);
    }

    #[test]
    fn unknown_term_empty_and_truncation() {
        let idx = SparseIndex::build(
            passages(&["apple pie", "apple tart apple", "banana"]),
            Bm25Params::default(),
        )
        .unwrap();
        assert!(idx.search("zzz", 10).is_empty());
        let all = idx.search("apple", 10);
        let top = idx.search("apple", 1);
        assert_eq!(top.len(), 1);
        assert_eq!(top.entries[0], all.entries[0]);
    }

    #[test]
    fn rejects_corrupt_artifacts() {
        assert!(SparseIndex::read_from(&b"nope"[..]).is_err());
        let idx = SparseIndex::build(passages(&["x y"]), Bm25Params::default()).unwrap();
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(SparseIndex::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(0.9, 1.5).is_err());
        assert_eq!(Bm25Params::profile("qrecc"), Some(Bm25Params { k1: 0.82, b: 0.68 }));
    }
}
