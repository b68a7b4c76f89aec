//! Rejected-trajectory construction for preference training.
//!
//! The accepted trajectory is always the chosen side. Rejected sides:
//!
//! - overthinking (`ot`): the chosen steps plus k ≥ 1 redundant steps whose F
//!   never rises above the previous step's F;
//! - underthinking (`ut`): the first e steps, e drawn from [1, n-1];
//! - insufficient decomposition (`id`): steps j and j+1 merged into one step
//!   with both clarifications (space-joined) and rewrite j+1.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crdg::{sample_seed, CrdgRecord, Trajectory, TrajectoryStep};
use crate::error::{Error, Result};
use crate::eval::{f_score, FMode, Retrievers};
use crate::gen::{generate_clarification, generate_rewrite, render_conversation, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Ot,
    Ut,
    Id,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    /// Number of redundant steps appended (ot).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Truncation length e (ut) or 1-based merge position j (id).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub sample_id: String,
    pub context: String,
    pub chosen: String,
    pub rejected: String,
    pub dimension: Dimension,
    pub meta: PairMeta,
    pub f_chosen_last: f64,
    /// Absent on error records.
    pub f_rejected_last: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub trajectory: Trajectory,
    pub meta: PairMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtConfig {
    pub resample_budget: u32,
    pub f_mode: FMode,
    /// Append k ∈ {1,2,3,4} redundant steps instead of exactly one.
    pub multi: bool,
}

impl Default for OtConfig {
    fn default() -> Self {
        OtConfig {
            resample_budget: 3,
            f_mode: FMode::Both,
            multi: false,
        }
    }
}

/// Appends redundant steps sampled from the last rewrite. Returns `None` when
/// the trajectory is empty or no non-improving step is found within budget.
pub fn make_overthinking(
    t: &Trajectory,
    client: &dyn Generator,
    retrievers: &Retrievers<'_>,
    config: &OtConfig,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<Option<Rejected>> {
    if t.steps.is_empty() {
        return Ok(None);
    }
    let k = if config.multi { rng.gen_range(1..=4usize) } else { 1 };
    let sample = t.sample();
    let mut out = t.clone();
    for _ in 0..k {
        let prev_f = out.last_f();
        let current = out.last_query().to_string();
        let mut found = None;
        for attempt in 0..=config.resample_budget {
            let c = generate_clarification(client, &current, attempt, seed)?;
            let r = generate_rewrite(client, &t.history, &current, &c, attempt, seed)?;
            let f = f_score(&r, &sample, retrievers, config.f_mode)?;
            if f.f <= prev_f {
                found = Some(TrajectoryStep {
                    clarification: c,
                    rewrite: r,
                    f,
                    attempts: attempt + 1,
                });
                break;
            }
        }
        match found {
            Some(step) => out.steps.push(step),
            None => return Ok(None),
        }
    }
    Ok(Some(Rejected {
        trajectory: out,
        meta: PairMeta {
            k: Some(k),
            position: None,
        },
    }))
}

/// Keeps the first e steps, e uniform in [1, n-1]. `None` when n < 2.
pub fn make_underthinking(t: &Trajectory, rng: &mut ChaCha8Rng) -> Option<Rejected> {
    let n = t.steps.len();
    if n < 2 {
        return None;
    }
    let e = rng.gen_range(1..=n - 1);
    let mut out = t.clone();
    out.steps.truncate(e);
    Some(Rejected {
        trajectory: out,
        meta: PairMeta {
            k: None,
            position: Some(e),
        },
    })
}

/// Merges step j with step j+1 (1-based j uniform in [1, n-1]). `None` when n < 2.
pub fn make_insufficient_decomposition(t: &Trajectory, rng: &mut ChaCha8Rng) -> Option<Rejected> {
    let n = t.steps.len();
    if n < 2 {
        return None;
    }
    let j = rng.gen_range(1..=n - 1);
    Some(Rejected {
        trajectory: merge_steps(t, j),
        meta: PairMeta {
            k: None,
            position: Some(j),
        },
    })
}

/// Merges 1-based step `j` into step `j + 1`.
pub fn merge_steps(t: &Trajectory, j: usize) -> Trajectory {
    let (a, b) = (&t.steps[j - 1], &t.steps[j]);
    let merged = TrajectoryStep {
        clarification: format!("{} {}", a.clarification, b.clarification),
        rewrite: b.rewrite.clone(),
        f: b.f,
        attempts: a.attempts + b.attempts,
    };
    let mut out = t.clone();
    out.steps.splice(j - 1..=j, std::iter::once(merged));
    out
}

fn pair(t: &Trajectory, dimension: Dimension, rejected: Rejected) -> PreferencePair {
    PreferencePair {
        sample_id: t.sample_id.clone(),
        context: render_conversation(&t.history, &t.original_query),
        chosen: t.serialize(),
        rejected: rejected.trajectory.serialize(),
        dimension,
        meta: rejected.meta,
        f_chosen_last: t.last_f(),
        f_rejected_last: Some(rejected.trajectory.last_f()),
        error: None,
    }
}

fn error_pair(t: &Trajectory, dimension: Dimension, err: &Error) -> PreferencePair {
    PreferencePair {
        sample_id: t.sample_id.clone(),
        context: render_conversation(&t.history, &t.original_query),
        chosen: t.serialize(),
        rejected: String::new(),
        dimension,
        meta: PairMeta::default(),
        f_chosen_last: t.last_f(),
        f_rejected_last: None,
        error: Some(err.to_string()),
    }
}

/// All pairs constructible from one trajectory, in ot, ut, id order.
pub fn pairs_for_trajectory(
    t: &Trajectory,
    client: &dyn Generator,
    retrievers: &Retrievers<'_>,
    config: &OtConfig,
    seed: u64,
) -> Vec<PreferencePair> {
    let seed = sample_seed(seed, &t.sample_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    match make_overthinking(t, client, retrievers, config, &mut rng, seed) {
        Ok(Some(r)) => out.push(pair(t, Dimension::Ot, r)),
        Ok(None) => {}
        Err(e) => out.push(error_pair(t, Dimension::Ot, &e)),
    }
    if let Some(r) = make_underthinking(t, &mut rng) {
        out.push(pair(t, Dimension::Ut, r));
    }
    if let Some(r) = make_insufficient_decomposition(t, &mut rng) {
        out.push(pair(t, Dimension::Id, r));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PrefSummary {
    pub ot: usize,
    pub ut: usize,
    pub id: usize,
    pub ot_not_found: usize,
    pub errors: usize,
    pub skipped_records: usize,
}

impl PrefSummary {
    pub fn total(&self) -> usize {
        self.ot + self.ut + self.id
    }
}

/// Writes all preference pairs for a trajectory dataset as JSONL.
pub fn build_pref_dataset(
    records: &[CrdgRecord],
    client: &dyn Generator,
    retrievers: &Retrievers<'_>,
    config: &OtConfig,
    seed: u64,
    out: &Path,
) -> Result<PrefSummary> {
    let trajectories: Vec<Option<Trajectory>> = records.iter().map(CrdgRecord::trajectory).collect();
    let per_record: Vec<Vec<PreferencePair>> = trajectories
        .par_iter()
        .map(|t| match t {
            Some(t) => pairs_for_trajectory(t, client, retrievers, config, seed),
            None => Vec::new(),
        })
        .collect();

    let mut summary = PrefSummary::default();
    let mut w = BufWriter::new(File::create(out).map_err(|e| Error::io(out, e))?);
    for (t, pairs) in trajectories.iter().zip(&per_record) {
        let Some(t) = t else {
            summary.skipped_records += 1;
            continue;
        };
        if !t.steps.is_empty() && !pairs.iter().any(|p| p.dimension == Dimension::Ot) {
            summary.ot_not_found += 1;
        }
        for p in pairs {
            if p.error.is_some() {
                summary.errors += 1;
            } else {
                match p.dimension {
                    Dimension::Ot => summary.ot += 1,
                    Dimension::Ut => summary.ut += 1,
                    Dimension::Id => summary.id += 1,
                }
            }
            writeln!(w, "{}", serde_json::to_string(p)?).map_err(|e| Error::io(out, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(summary)
}
