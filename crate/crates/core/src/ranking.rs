//! Ranked retrieval output and the TREC run format.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub passage_id: String,
    pub score: f64,
}

/// Score descending, passage id ascending.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.passage_id.cmp(&b.passage_id))
}

/// Ordered retrieval result for one query.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub query_tag: String,
    pub entries: Vec<Hit>,
}

impl RankedList {
    /// Sorts unordered hits into canonical order and keeps the best `k`.
    /// Passage ids must be unique in `hits`.
    pub fn from_hits(query_tag: impl Into<String>, mut hits: Vec<Hit>, k: usize) -> Self {
        if k == 0 {
            hits.clear();
        } else if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_by(hit_order);
        RankedList {
            query_tag: query_tag.into(),
            entries: hits,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|h| h.passage_id.as_str())
    }

    /// 1-based rank of a passage, if present.
    pub fn rank_of(&self, passage_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|h| h.passage_id == passage_id)
            .map(|p| p + 1)
    }

    /// Checks ordering, uniqueness and the optional length bound.
    pub fn is_canonical(&self, max_len: Option<usize>) -> bool {
        let sorted = self
            .entries
            .windows(2)
            .all(|w| hit_order(&w[0], &w[1]) == Ordering::Less);
        sorted && max_len.is_none_or(|k| self.entries.len() <= k)
    }
}

/// A top-K retriever over a fixed passage collection.
pub trait Retriever: Sync {
    fn name(&self) -> &str;

    fn search(&self, query: &str, k: usize) -> Result<RankedList>;

    fn contains(&self, passage_id: &str) -> bool;
}

/// Writes `qid Q0 docid rank score tag` lines, one block per list in order.
pub fn write_run<W: Write>(mut w: W, lists: &[RankedList], tag: &str) -> std::io::Result<()> {
    for list in lists {
        for (i, h) in list.entries.iter().enumerate() {
            writeln!(
                w,
                "{} Q0 {} {} {} {}",
                list.query_tag,
                h.passage_id,
                i + 1,
                h.score,
                tag
            )?;
        }
    }
    Ok(())
}

pub fn save_run(path: &Path, lists: &[RankedList], tag: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_run(&mut w, lists, tag).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a TREC run. Lists come back in first-appearance order of their query
/// id, entries ordered by the rank column.
pub fn parse_run<R: BufRead>(reader: R) -> Result<Vec<RankedList>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, Hit)>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let malformed = |reason: String| Error::MalformedRecord { line: line_no, reason };
        if cols.len() != 6 {
            return Err(malformed(format!("expected 6 columns, found {}", cols.len())));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| malformed(format!("bad rank `{}`", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| malformed(format!("bad score `{}`", cols[4])))?;
        let qid = cols[0].to_string();
        let bucket = rows.entry(qid.clone()).or_insert_with(|| {
            order.push(qid.clone());
            Vec::new()
        });
        if bucket.iter().any(|(_, h)| h.passage_id == cols[2]) {
            return Err(malformed(format!("duplicate passage `{}` for `{qid}`", cols[2])));
        }
        bucket.push((
            rank,
            Hit {
                passage_id: cols[2].to_string(),
                score,
            },
        ));
    }
    Ok(order
        .into_iter()
        .map(|qid| {
            let mut hits = rows.remove(&qid).unwrap_or_default();
            hits.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| hit_order(&a.1, &b.1)));
            RankedList {
                query_tag: qid,
                entries: hits.into_iter().map(|(_, h)| h).collect(),
            }
        })
        .collect())
}

pub fn load_run(path: &Path) -> Result<Vec<RankedList>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_run(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hit(id: &str, score: f64) -> Hit {
        Hit {
            passage_id: id.into(),
            score,
        }
    }

    #[test]
    fn ties_break_by_id() {
        let l = RankedList::from_hits("q", vec![hit("b", 1.0), hit("a", 1.0), hit("c", 2.0)], 10);
        assert_eq!(l.ids().collect::<Vec<_>>(), ["c", "a", "b"]);
        assert!(l.is_canonical(Some(3)));
    }

    #[test]
    fn truncates_to_k() {
        let l = RankedList::from_hits("q", vec![hit("b", 1.0), hit("a", 3.0), hit("c", 2.0)], 1);
        assert_eq!(l.ids().collect::<Vec<_>>(), ["a"]);
        assert_eq!(l.rank_of("a"), Some(1));
        assert_eq!(l.rank_of("b"), None);
    }

    #[test]
    fn rejects_bad_run_lines() {
        assert!(parse_run("q Q0 d 1 x t\n".as_bytes()).is_err());
        assert!(parse_run("q Q0 d 1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn run_roundtrip(scores in proptest::collection::btree_map("[a-z]{1,4}", -1e6f64..1e6, 0..30)) {
            let hits = scores.into_iter().map(|(id, s)| hit(&id, s)).collect();
            let lists = vec![RankedList::from_hits("s1", hits, 100)];
            let mut buf = Vec::new();
            write_run(&mut buf, &lists, "T").unwrap();
            let back = parse_run(buf.as_slice()).unwrap();
            if lists[0].is_empty() {
                prop_assert!(back.is_empty());
            } else {
                prop_assert_eq!(back, lists);
            }
        }
    }
}
