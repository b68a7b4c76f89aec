//! Passage collections, conversational samples and relevance judgments.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub answer: String,
}

/// One conversational query rewriting instance: history, current query and
/// the passages judged relevant to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqrSample {
    pub sample_id: String,
    pub history: Vec<Turn>,
    pub query: String,
    pub gold_passage_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionFormat {
    Tsv,
    Jsonl,
}

impl CollectionFormat {
    /// Picks the format from a file extension; anything but `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CollectionFormat::Jsonl,
            _ => CollectionFormat::Tsv,
        }
    }
}

impl std::str::FromStr for CollectionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CollectionFormat::Tsv),
            "jsonl" => Ok(CollectionFormat::Jsonl),
            other => Err(Error::InvalidParameter(format!("unknown collection format `{other}`"))),
        }
    }
}

/// Streaming passage reader. Holds one line buffer and the set of ids seen so
/// far; passage text is never retained.
pub struct CollectionReader<R> {
    lines: std::io::Lines<R>,
    format: CollectionFormat,
    line_no: usize,
    seen: HashSet<String>,
    failed: bool,
}

impl<R: BufRead> CollectionReader<R> {
    pub fn new(reader: R, format: CollectionFormat) -> Self {
        CollectionReader {
            lines: reader.lines(),
            format,
            line_no: 0,
            seen: HashSet::new(),
            failed: false,
        }
    }

    fn parse(&self, line: &str) -> Result<Passage> {
        let malformed = |reason: &str| Error::MalformedRecord {
            line: self.line_no,
            reason: reason.to_string(),
        };
        let (id, text) = match self.format {
            CollectionFormat::Tsv => {
                let (id, text) = line
                    .split_once('\t')
                    .ok_or_else(|| malformed("expected `id<TAB>text`"))?;
                (id.to_string(), text.to_string())
            }
            CollectionFormat::Jsonl => {
                let v: Value = serde_json::from_str(line).map_err(|e| malformed(&format!("invalid json: {e}")))?;
                let id = v
                    .get("id")
                    .and_then(Value::as_str)
                    .ok_or_else(|| malformed("missing string field `id`"))?;
                let text = v
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or_else(|| malformed("missing string field `text`"))?;
                (id.to_string(), text.to_string())
            }
        };
        if id.is_empty() {
            return Err(malformed("empty passage id"));
        }
        Ok(Passage { id, text })
    }
}

impl<R: BufRead> Iterator for CollectionReader<R> {
    type Item = Result<Passage>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::MalformedRecord {
                        line: self.line_no + 1,
                        reason: e.to_string(),
                    }));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let item = self.parse(&line).and_then(|p| {
                if self.seen.insert(p.id.clone()) {
                    Ok(p)
                } else {
                    Err(Error::DuplicateId(p.id))
                }
            });
            if item.is_err() {
                self.failed = true;
            }
            return Some(item);
        }
    }
}

/// Opens a passage collection for streaming. Yields passages in file order;
/// the first malformed or duplicate record ends the stream with an error.
pub fn load_collection(path: &Path, format: CollectionFormat) -> Result<CollectionReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CollectionReader::new(BufReader::new(file), format))
}

pub fn read_collection(path: &Path, format: CollectionFormat) -> Result<Vec<Passage>> {
    load_collection(path, format)?.collect()
}

pub fn write_collection(path: &Path, passages: &[Passage], format: CollectionFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in passages {
        match format {
            CollectionFormat::Tsv => {
                if p.id.contains(['\t', '\n']) || p.text.contains('\n') {
                    return Err(Error::InvalidParameter(format!(
                        "passage `{}` cannot be written as TSV",
                        p.id
                    )));
                }
                writeln!(w, "{}\t{}", p.id, p.text)
            }
            CollectionFormat::Jsonl => writeln!(w, "{}", serde_json::to_string(p)?),
        }
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_sample(line: &str, line_no: usize) -> Result<CqrSample> {
    let v: Value = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
        line: line_no,
        reason: format!("invalid json: {e}"),
    })?;
    let malformed = |reason: String| Error::MalformedRecord { line: line_no, reason };
    let field = |name: &str| v.get(name).ok_or_else(|| Error::MissingField(name.into()));
    let string = |name: &str| -> Result<String> {
        field(name)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| malformed(format!("`{name}` must be a string")))
    };

    let sample_id = string("sample_id")?;
    let query = string("query")?;
    if query.is_empty() {
        return Err(malformed("`query` is empty".into()));
    }
    let history = field("history")?
        .as_array()
        .ok_or_else(|| malformed("`history` must be a list".into()))?
        .iter()
        .map(|t| {
            let get = |k: &str| {
                t.get(k)
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| malformed(format!("history turn missing string `{k}`")))
            };
            let turn = Turn {
                query: get("query")?,
                answer: get("answer")?,
            };
            if turn.query.is_empty() {
                return Err(malformed("history turn has empty query".into()));
            }
            Ok(turn)
        })
        .collect::<Result<Vec<_>>>()?;
    let gold_passage_ids = field("gold_passage_ids")?
        .as_array()
        .ok_or_else(|| malformed("`gold_passage_ids` must be a list".into()))?
        .iter()
        .map(|g| {
            g.as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed("gold passage ids must be strings".into()))
        })
        .collect::<Result<BTreeSet<_>>>()?;

    Ok(CqrSample {
        sample_id,
        history,
        query,
        gold_passage_ids,
    })
}

pub fn load_cqr_dataset(path: &Path) -> Result<Vec<CqrSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_sample(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_cqr_dataset(path: &Path, samples: &[CqrSample]) -> Result<()> {
    write_jsonl(path, samples)
}

/// TREC-style relevance judgments keyed by sample id then passage id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
    /// Number of duplicate (sample, passage) lines that overwrote an earlier grade.
    pub overwrite_warnings: usize,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binary judgments derived from each sample's gold ids.
    pub fn from_samples(samples: &[CqrSample]) -> Self {
        let mut q = Qrels::new();
        for s in samples {
            for g in &s.gold_passage_ids {
                q.insert(&s.sample_id, g, 1);
            }
        }
        q
    }

    /// Inserts a judgment; returns the previous grade if one was overwritten.
    pub fn insert(&mut self, sample_id: &str, passage_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(sample_id.to_string())
            .or_default()
            .insert(passage_id.to_string(), grade)
    }

    pub fn grade(&self, sample_id: &str, passage_id: &str) -> u32 {
        self.judgments
            .get(sample_id)
            .and_then(|m| m.get(passage_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_sample(&self, sample_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(sample_id)
    }

    /// Passage ids with grade ≥ 1 for a sample.
    pub fn relevant(&self, sample_id: &str) -> BTreeSet<String> {
        self.for_sample(sample_id)
            .map(|m| m.iter().filter(|(_, g)| **g >= 1).map(|(p, _)| p.clone()).collect())
            .unwrap_or_default()
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gold ids that are not judged relevant here, as (sample_id, passage_id).
    pub fn inconsistencies(&self, samples: &[CqrSample]) -> Vec<(String, String)> {
        samples
            .iter()
            .flat_map(|s| {
                s.gold_passage_ids
                    .iter()
                    .filter(|g| self.grade(&s.sample_id, g) == 0)
                    .map(|g| (s.sample_id.clone(), g.clone()))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
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
        if cols.len() != 4 {
            return Err(malformed(format!("expected 4 columns, found {}", cols.len())));
        }
        let grade: u32 = cols[3]
            .parse()
            .map_err(|_| malformed(format!("grade `{}` is not a non-negative integer", cols[3])))?;
        if qrels.insert(cols[0], cols[2], grade).is_some() {
            qrels.overwrite_warnings += 1;
            log::warn!(
                "qrels line {line_no}: duplicate judgment ({}, {}) overwritten",
                cols[0],
                cols[2]
            );
        }
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(BufReader::new(file))
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (sid, docs) in &qrels.judgments {
        for (pid, grade) in docs {
            writeln!(w, "{sid} 0 {pid} {grade}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
