//! Rank fusion over the per-iteration retrieval lists.
//!
//! With lists ordered by iteration `i = 1..n` and 1-based ranks:
//!
//! - `rrf`:  score(d) = Σ_i 1 / (rank_i(d) + k)
//! - `prrf`: score(d) = Σ_i i / (rank_i(d) + k)
//!
//! A passage missing from list `i` receives nothing from it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{Hit, RankedList};

pub const DEFAULT_RRF_K: f64 = 60.0;
pub const DEFAULT_DEPTH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Rrf,
    #[default]
    Prrf,
    FinalOnly,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rrf" => Ok(FusionMode::Rrf),
            "prrf" => Ok(FusionMode::Prrf),
            "final_only" => Ok(FusionMode::FinalOnly),
            other => Err(Error::InvalidParameter(format!("unknown fusion mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Rrf => "rrf",
            FusionMode::Prrf => "prrf",
            FusionMode::FinalOnly => "final_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub k: f64,
    pub mode: FusionMode,
    pub depth: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            k: DEFAULT_RRF_K,
            mode: FusionMode::Prrf,
            depth: DEFAULT_DEPTH,
        }
    }
}

impl FusionConfig {
    pub fn new(mode: FusionMode) -> Self {
        FusionConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidParameter(format!("fusion k must be > 0, got {}", self.k)));
        }
        if self.depth == 0 {
            return Err(Error::InvalidParameter("fusion depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fuses lists given in iteration order. The output carries the last list's tag.
pub fn fuse(lists: &[RankedList], config: &FusionConfig) -> Result<RankedList> {
    config.validate()?;
    let last = lists.last().ok_or(Error::EmptyInput)?;
    if config.mode == FusionMode::FinalOnly {
        let mut out = last.clone();
        out.entries.truncate(config.depth);
        return Ok(out);
    }
    let mut terms: HashMap<&str, Vec<f64>> = HashMap::new();
    for (i, list) in lists.iter().enumerate() {
        let weight = match config.mode {
            FusionMode::Prrf => (i + 1) as f64,
            _ => 1.0,
        };
        for (r, hit) in list.entries.iter().enumerate() {
            let rank = (r + 1) as f64;
            terms.entry(hit.passage_id.as_str()).or_default().push(weight / (rank + config.k));
        }
    }
    // Summing in sorted order makes a score depend only on its multiset of
    // terms, so RRF is exactly invariant to list order and exact ties reach
    // the id tie-break.
    let hits = terms
        .into_iter()
        .map(|(id, mut t)| {
            t.sort_by(f64::total_cmp);
            Hit {
                passage_id: id.to_string(),
                score: t.iter().sum(),
            }
        })
        .collect();
    Ok(RankedList::from_hits(last.query_tag.clone(), hits, config.depth))
}
