//! Clarification-rewriting trajectory generation.
//!
//! Each round asks the generator for a clarification of the current best
//! query and a rewrite conditioned on it, then scores the rewrite with F. A
//! rewrite is accepted only if it strictly beats the best F so far (which
//! starts at the original query's F). A round that fails to improve after the
//! resample budget counts as one non-improvement; `early_stop` consecutive
//! non-improving rounds or `max_iters` rounds end the loop.

use std::collections::{BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CqrSample, Turn};
use crate::dense::fnv1a;
use crate::error::{Error, Result};
use crate::eval::{f_score, FMode, QualityScore, Retrievers};
use crate::gen::{generate_clarification, generate_rewrite, Generator};

pub const CLARIFICATION_MARKER: &str = "[Clarification]";
pub const REWRITE_MARKER: &str = "[Rewrite]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub clarification: String,
    pub rewrite: String,
    pub f: QualityScore,
    /// Generator calls spent in the round that produced this step.
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxIterations,
    ProviderFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_id: String,
    pub original_query: String,
    #[serde(default)]
    pub history: Vec<Turn>,
    #[serde(default)]
    pub gold_passage_ids: BTreeSet<String>,
    pub f0: QualityScore,
    pub steps: Vec<TrajectoryStep>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    /// The sample this trajectory was generated for.
    pub fn sample(&self) -> CqrSample {
        CqrSample {
            sample_id: self.sample_id.clone(),
            history: self.history.clone(),
            query: self.original_query.clone(),
            gold_passage_ids: self.gold_passage_ids.clone(),
        }
    }

    /// F of the original query followed by F of each accepted rewrite.
    pub fn f_path(&self) -> Vec<f64> {
        std::iter::once(self.f0.f)
            .chain(self.steps.iter().map(|s| s.f.f))
            .collect()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.f_path().windows(2).all(|w| w[0] < w[1])
    }

    pub fn last_f(&self) -> f64 {
        self.steps.last().map_or(self.f0.f, |s| s.f.f)
    }

    /// Query the next step would start from.
    pub fn last_query(&self) -> &str {
        self.steps
            .last()
            .map_or(self.original_query.as_str(), |s| s.rewrite.as_str())
    }

    pub fn serialize(&self) -> String {
        serialize_steps(
            self.steps
                .iter()
                .map(|s| (s.clarification.as_str(), s.rewrite.as_str())),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrdgConfig {
    pub early_stop: u32,
    pub max_iters: u32,
    pub resample_budget: u32,
    pub f_mode: FMode,
}

impl Default for CrdgConfig {
    fn default() -> Self {
        CrdgConfig {
            early_stop: 3,
            max_iters: 10,
            resample_budget: 3,
            f_mode: FMode::Both,
        }
    }
}

impl CrdgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.early_stop < 1 {
            return Err(Error::InvalidParameter("early_stop must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-sample seed derived from the run seed.
pub fn sample_seed(seed: u64, sample_id: &str) -> u64 {
    seed ^ fnv1a(sample_id.as_bytes())
}

/// Runs the accept-if-improved loop for one sample.
///
/// Generator failures end the loop with [`StopReason::ProviderFailure`] and
/// keep the steps accepted so far. Resample attempts are numbered
/// cumulatively from the moment the current best query was adopted.
pub fn generate_trajectory(
    sample: &CqrSample,
    client: &dyn Generator,
    retrievers: &Retrievers<'_>,
    config: &CrdgConfig,
    seed: u64,
) -> Result<Trajectory> {
    config.validate()?;
    let mode = config.f_mode;
    let f0 = f_score(&sample.query, sample, retrievers, mode)?;
    let mut t = Trajectory {
        sample_id: sample.sample_id.clone(),
        original_query: sample.query.clone(),
        history: sample.history.clone(),
        gold_passage_ids: sample.gold_passage_ids.clone(),
        f0,
        steps: Vec::new(),
        stop_reason: StopReason::MaxIterations,
    };
    let seed = sample_seed(seed, &sample.sample_id);
    let mut best = f0.f;
    let mut failures = 0u32;
    let mut attempt_base = 0u32;

    for _round in 0..config.max_iters {
        let current = t.last_query().to_string();
        let mut accepted = None;
        let mut used = 0u32;
        for a in 0..=config.resample_budget {
            let attempt = attempt_base + a;
            used += 1;
            let sampled = generate_clarification(client, &current, attempt, seed)
                .and_then(|c| generate_rewrite(client, &sample.history, &current, &c, attempt, seed).map(|r| (c, r)));
            let (c, r) = match sampled {
                Ok(pair) => pair,
                Err(e) if e.is_provider_error() => {
                    log::warn!("sample {}: generator failed: {e}", sample.sample_id);
                    t.stop_reason = StopReason::ProviderFailure;
                    return Ok(t);
                }
                Err(e) => return Err(e),
            };
            let f = f_score(&r, sample, retrievers, mode)?;
            if f.f > best {
                accepted = Some(TrajectoryStep {
                    clarification: c,
                    rewrite: r,
                    f,
                    attempts: a + 1,
                });
                break;
            }
        }
        match accepted {
            Some(step) => {
                best = step.f.f;
                t.steps.push(step);
                failures = 0;
                attempt_base = 0;
            }
            None => {
                failures += 1;
                attempt_base += used;
                if failures >= config.early_stop {
                    t.stop_reason = StopReason::EarlyStop;
                    return Ok(t);
                }
            }
        }
    }
    Ok(t)
}

/// `[Clarification] c [Rewrite] r` segments joined by single spaces.
pub fn serialize_steps<'a>(steps: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    steps
        .into_iter()
        .map(|(c, r)| format!("{CLARIFICATION_MARKER} {c} {REWRITE_MARKER} {r}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedTrajectory {
    pub pairs: Vec<(String, String)>,
    pub warnings: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Marker {
    Clarification,
    Rewrite,
}

/// Marker positions in text order.
fn markers(text: &str) -> Vec<(usize, Marker)> {
    let mut out: Vec<(usize, Marker)> = text
        .match_indices(CLARIFICATION_MARKER)
        .map(|(i, _)| (i, Marker::Clarification))
        .chain(text.match_indices(REWRITE_MARKER).map(|(i, _)| (i, Marker::Rewrite)))
        .collect();
    out.sort_by_key(|(i, _)| *i);
    out
}

/// Scans left to right for clarification/rewrite pairs. Orphaned markers and
/// empty segments are dropped and counted as warnings.
pub fn parse_trajectory(text: &str) -> ParsedTrajectory {
    let ms = markers(text);
    let mut out = ParsedTrajectory::default();
    let mut pending: Option<String> = None;
    for (n, &(start, kind)) in ms.iter().enumerate() {
        let marker_len = match kind {
            Marker::Clarification => CLARIFICATION_MARKER.len(),
            Marker::Rewrite => REWRITE_MARKER.len(),
        };
        let end = ms.get(n + 1).map_or(text.len(), |(i, _)| *i);
        let content = text[start + marker_len..end].trim().to_string();
        match kind {
            Marker::Clarification => {
                if pending.is_some() {
                    out.warnings += 1;
                }
                pending = Some(content);
            }
            Marker::Rewrite => match pending.take() {
                Some(c) if !c.is_empty() && !content.is_empty() => out.pairs.push((c, content)),
                _ => out.warnings += 1,
            },
        }
    }
    if pending.is_some() {
        out.warnings += 1;
    }
    out
}

/// One line of the trajectory dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrdgRecord {
    pub sample_id: String,
    pub original_query: String,
    #[serde(default)]
    pub history: Vec<Turn>,
    #[serde(default)]
    pub gold_passage_ids: BTreeSet<String>,
    #[serde(default)]
    pub f0: Option<QualityScore>,
    #[serde(default)]
    pub steps: Vec<TrajectoryStep>,
    pub serialized: String,
    #[serde(default)]
    pub stop_reason: Option<StopReason>,
    /// No step was accepted.
    pub empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CrdgRecord {
    pub fn from_trajectory(t: Trajectory) -> Self {
        CrdgRecord {
            serialized: t.serialize(),
            empty: t.steps.is_empty(),
            sample_id: t.sample_id,
            original_query: t.original_query,
            history: t.history,
            gold_passage_ids: t.gold_passage_ids,
            f0: Some(t.f0),
            steps: t.steps,
            stop_reason: Some(t.stop_reason),
            error: None,
        }
    }

    pub fn from_error(sample: &CqrSample, err: &Error) -> Self {
        CrdgRecord {
            sample_id: sample.sample_id.clone(),
            original_query: sample.query.clone(),
            history: sample.history.clone(),
            gold_passage_ids: sample.gold_passage_ids.clone(),
            f0: None,
            steps: Vec::new(),
            serialized: String::new(),
            stop_reason: None,
            empty: true,
            error: Some(err.to_string()),
        }
    }

    /// The trajectory, unless the record carries an error.
    pub fn trajectory(&self) -> Option<Trajectory> {
        if self.error.is_some() {
            return None;
        }
        Some(Trajectory {
            sample_id: self.sample_id.clone(),
            original_query: self.original_query.clone(),
            history: self.history.clone(),
            gold_passage_ids: self.gold_passage_ids.clone(),
            f0: self.f0?,
            steps: self.steps.clone(),
            stop_reason: self.stop_reason?,
        })
    }
}

pub fn load_crdg_records(path: &Path) -> Result<Vec<CrdgRecord>> {
    crate::corpus::read_jsonl(path)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CrdgSummary {
    pub written: usize,
    pub resumed: usize,
    pub empty: usize,
    pub errors: usize,
}

/// Path of the completion log kept beside a dataset file.
pub fn completion_log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".done");
    PathBuf::from(s)
}

/// Generates one record per sample into `out` (JSONL).
///
/// Completed sample ids are appended to a `.done` log as records are flushed;
/// a rerun keeps logged records, drops any partial tail and continues with the
/// remaining samples. Records are written in input order; `workers` samples
/// are generated concurrently per batch.
pub fn build_crdg_dataset(
    samples: &[CqrSample],
    client: &dyn Generator,
    retrievers: &Retrievers<'_>,
    config: &CrdgConfig,
    seed: u64,
    out: &Path,
    workers: usize,
) -> Result<CrdgSummary> {
    config.validate()?;
    let log_path = completion_log_path(out);
    let done: HashSet<String> = match File::open(&log_path) {
        Ok(f) => BufReader::new(f)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(&log_path, e))?,
        Err(_) => HashSet::new(),
    };

    let kept: Vec<CrdgRecord> = if done.is_empty() || !out.exists() {
        Vec::new()
    } else {
        load_crdg_records(out)?
            .into_iter()
            .filter(|r| done.contains(&r.sample_id))
            .collect()
    };
    let kept_ids: HashSet<&str> = kept.iter().map(|r| r.sample_id.as_str()).collect();

    let mut summary = CrdgSummary {
        resumed: kept.len(),
        ..Default::default()
    };
    let mut w = BufWriter::new(File::create(out).map_err(|e| Error::io(out, e))?);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    for r in &kept {
        writeln!(w, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(out, e))?;
        writeln!(log, "{}", r.sample_id).map_err(|e| Error::io(&log_path, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let todo: Vec<&CqrSample> = samples
        .iter()
        .filter(|s| !kept_ids.contains(s.sample_id.as_str()))
        .collect();
    let make = |s: &CqrSample| match generate_trajectory(s, client, retrievers, config, seed) {
        Ok(t) => CrdgRecord::from_trajectory(t),
        Err(e) => CrdgRecord::from_error(s, &e),
    };
    for chunk in todo.chunks(workers.max(1)) {
        let records: Vec<CrdgRecord> = if chunk.len() == 1 {
            vec![make(chunk[0])]
        } else {
            chunk.par_iter().map(|s| make(s)).collect()
        };
        for r in records {
            if r.error.is_some() {
                summary.errors += 1;
            } else if r.empty {
                summary.empty += 1;
            }
            writeln!(w, "{}", serde_json::to_string(&r)?).map_err(|e| Error::io(out, e))?;
            w.flush().map_err(|e| Error::io(out, e))?;
            writeln!(log, "{}", r.sample_id).map_err(|e| Error::io(&log_path, e))?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            summary.written += 1;
        }
    }
    Ok(summary)
}

/// Appends a sample id to a completion log (used by tests simulating crashes).
pub fn append_completion(log_path: &Path, sample_id: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)
        .map_err(|e| Error::io(log_path, e))?;
    writeln!(f, "{sample_id}").map_err(|e| Error::io(log_path, e))
}
