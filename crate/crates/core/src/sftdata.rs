//! Progressive fine-tuning data: serialized trajectories labeled with typed
//! character spans and per-epoch loss masks.
//!
//! Epoch 1 masks rewrite spans, epoch 2 masks clarification spans, epoch 3
//! masks nothing. Marker literals take the type of the segment they open;
//! whitespace between segments is `other` and never masked.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crdg::{CrdgRecord, CLARIFICATION_MARKER, REWRITE_MARKER};
use crate::error::{Error, Result};
use crate::gen::render_conversation;

pub const EPOCHS: [u8; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanType {
    Clarification,
    Rewrite,
    Other,
}

/// Byte range `[start, end)` of the serialized trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub span_type: SpanType,
}

/// Loss mask for a span type in a given epoch (1, 2 or 3).
pub fn epoch_mask(span_type: SpanType, epoch: u8) -> u8 {
    match (span_type, epoch) {
        (SpanType::Rewrite, 1) | (SpanType::Clarification, 2) => 0,
        _ => 1,
    }
}

/// Splits a serialized trajectory into tiling spans.
pub fn label_spans(serialized: &str) -> Result<Vec<Span>> {
    if serialized.is_empty() {
        return Ok(Vec::new());
    }
    let mut marks: Vec<(usize, SpanType)> = serialized
        .match_indices(CLARIFICATION_MARKER)
        .map(|(i, _)| (i, SpanType::Clarification))
        .chain(
            serialized
                .match_indices(REWRITE_MARKER)
                .map(|(i, _)| (i, SpanType::Rewrite)),
        )
        .collect();
    marks.sort_by_key(|(i, _)| *i);
    if marks.is_empty() {
        return Err(Error::MalformedTrajectory("no markers".into()));
    }
    for (n, (_, t)) in marks.iter().enumerate() {
        let expected = if n % 2 == 0 {
            SpanType::Clarification
        } else {
            SpanType::Rewrite
        };
        if *t != expected {
            return Err(Error::MalformedTrajectory(format!("marker {} out of order", n + 1)));
        }
    }
    if !marks.len().is_multiple_of(2) {
        return Err(Error::MalformedTrajectory("clarification without rewrite".into()));
    }

    let mut spans = Vec::new();
    let first = marks[0].0;
    if first > 0 {
        if !serialized[..first].trim().is_empty() {
            return Err(Error::MalformedTrajectory("text before first marker".into()));
        }
        spans.push(Span {
            start: 0,
            end: first,
            span_type: SpanType::Other,
        });
    }
    for (n, &(start, span_type)) in marks.iter().enumerate() {
        let seg_end = marks.get(n + 1).map_or(serialized.len(), |(i, _)| *i);
        let body_end = start + serialized[start..seg_end].trim_end().len();
        spans.push(Span {
            start,
            end: body_end,
            span_type,
        });
        if body_end < seg_end {
            spans.push(Span {
                start: body_end,
                end: seg_end,
                span_type: SpanType::Other,
            });
        }
    }
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub sample_id: String,
    pub input: String,
    pub target: String,
    pub spans: Vec<Span>,
    pub epoch_masks: BTreeMap<u8, Vec<u8>>,
}

impl SftRecord {
    pub fn new(sample_id: &str, input: String, target: String) -> Result<Self> {
        let spans = label_spans(&target)?;
        let epoch_masks = EPOCHS
            .iter()
            .map(|&e| (e, spans.iter().map(|s| epoch_mask(s.span_type, e)).collect()))
            .collect();
        Ok(SftRecord {
            sample_id: sample_id.to_string(),
            input,
            target,
            spans,
            epoch_masks,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SftSummary {
    pub written: usize,
    pub skipped: usize,
}

/// One record per non-empty trajectory; empty or errored records are skipped.
pub fn emit_sft_dataset(records: &[CrdgRecord], out: &Path) -> Result<SftSummary> {
    let mut summary = SftSummary::default();
    let mut w = BufWriter::new(File::create(out).map_err(|e| Error::io(out, e))?);
    for r in records {
        if r.error.is_some() || r.steps.is_empty() {
            summary.skipped += 1;
            continue;
        }
        let rec = SftRecord::new(
            &r.sample_id,
            render_conversation(&r.history, &r.original_query),
            r.serialized.clone(),
        )?;
        writeln!(w, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(out, e))?;
        summary.written += 1;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(summary)
}
