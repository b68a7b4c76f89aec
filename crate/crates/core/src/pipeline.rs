//! Inference: generate a trajectory, extract its rewrites, retrieve for each
//! and fuse the lists in iteration order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CqrSample;
use crate::crdg::{parse_trajectory, sample_seed, serialize_steps};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionConfig};
use crate::gen::{generate_clarification, generate_rewrite, GenRequest, Generator};
use crate::ranking::{write_run, RankedList, Retriever};

pub const RUN_TAG: &str = "ICR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverChoice {
    #[default]
    Sparse,
    Dense,
    /// Run both retrievers and report each separately.
    BothReport,
}

impl std::str::FromStr for RetrieverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(RetrieverChoice::Sparse),
            "dense" => Ok(RetrieverChoice::Dense),
            "both-report" | "both_report" => Ok(RetrieverChoice::BothReport),
            other => Err(Error::InvalidParameter(format!("unknown retriever `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// One generator call returns the whole serialized trajectory.
    #[default]
    OneShot,
    /// Clarify/rewrite calls issued step by step.
    Stepwise,
}

impl std::str::FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_shot" => Ok(GenerationMode::OneShot),
            "stepwise" => Ok(GenerationMode::Stepwise),
            other => Err(Error::InvalidParameter(format!("unknown generation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub max_iters: u32,
    pub retrieval_k: usize,
    pub fusion: FusionConfig,
    pub retriever: RetrieverChoice,
    pub generation: GenerationMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            max_iters: 10,
            retrieval_k: 100,
            fusion: FusionConfig::default(),
            retriever: RetrieverChoice::Sparse,
            generation: GenerationMode::OneShot,
        }
    }
}

/// Raw generator output for a sample.
///
/// Stepwise mode stops after `max_iters` steps or when a rewrite repeats the
/// query it was produced from.
pub fn run_inference(
    sample: &CqrSample,
    client: &dyn Generator,
    config: &InferenceConfig,
    seed: u64,
) -> Result<String> {
    let seed = sample_seed(seed, &sample.sample_id);
    match config.generation {
        GenerationMode::OneShot => {
            client.generate(&GenRequest::trajectory(&sample.history, &sample.query).with_seed(seed))
        }
        GenerationMode::Stepwise => {
            let mut steps: Vec<(String, String)> = Vec::new();
            let mut current = sample.query.clone();
            for _ in 0..config.max_iters {
                let c = generate_clarification(client, &current, 0, seed)?;
                let r = generate_rewrite(client, &sample.history, &current, &c, 0, seed)?;
                if r == current {
                    break;
                }
                current = r.clone();
                steps.push((c, r));
            }
            Ok(serialize_steps(steps.iter().map(|(c, r)| (c.as_str(), r.as_str()))))
        }
    }
}

/// Rewrites in trajectory order, duplicates kept.
pub fn extract_queries(trajectory_text: &str) -> Vec<String> {
    parse_trajectory(trajectory_text)
        .pairs
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub retriever: String,
    pub per_query_runs: Vec<RankedList>,
    pub fused: RankedList,
}

impl RetrievalOutcome {
    /// Re-fuses the stored per-query runs under another configuration.
    pub fn refuse(&self, config: &FusionConfig) -> Result<RankedList> {
        fuse(&self.per_query_runs, config)
    }
}

/// Retrieves each query at depth `k` and fuses in iteration order. All lists
/// are tagged with `tag`.
pub fn retrieve_and_fuse(
    tag: &str,
    queries: &[String],
    retriever: &dyn Retriever,
    k: usize,
    fusion: &FusionConfig,
) -> Result<RetrievalOutcome> {
    if queries.is_empty() {
        return Err(Error::InvalidParameter("no queries to retrieve".into()));
    }
    let per_query_runs = queries
        .iter()
        .map(|q| {
            retriever.search(q, k).map(|mut l| {
                l.query_tag = tag.to_string();
                l
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse(&per_query_runs, fusion)?;
    Ok(RetrievalOutcome {
        retriever: retriever.name().to_string(),
        per_query_runs,
        fused,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub sample_id: String,
    pub trajectory_text: String,
    pub queries: Vec<String>,
    /// The trajectory yielded no rewrite; the original query was retrieved instead.
    pub fallback: bool,
    pub outcomes: Vec<RetrievalOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock generation time. Not persisted so result files stay reproducible.
    #[serde(skip)]
    pub latency_seconds: f64,
}

impl InferenceResult {
    pub fn outcome(&self, retriever: &str) -> Option<&RetrievalOutcome> {
        self.outcomes.iter().find(|o| o.retriever == retriever)
    }
}

/// Runs generation, parsing, retrieval and fusion for one sample. Generator
/// failures are recorded and the sample falls back to its original query.
pub fn infer_sample(
    sample: &CqrSample,
    client: &dyn Generator,
    retrievers: &[&dyn Retriever],
    config: &InferenceConfig,
    seed: u64,
) -> Result<InferenceResult> {
    let start = Instant::now();
    let generated = run_inference(sample, client, config, seed);
    let latency_seconds = start.elapsed().as_secs_f64();
    let (trajectory_text, error) = match generated {
        Ok(t) => (t, None),
        Err(e) if e.is_provider_error() => (String::new(), Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let queries = extract_queries(&trajectory_text);
    let fallback = queries.is_empty();
    if fallback {
        log::warn!("sample {}: no rewrite parsed, using original query", sample.sample_id);
    }
    let search: Vec<String> = if fallback {
        vec![sample.query.clone()]
    } else {
        queries.clone()
    };
    let outcomes = retrievers
        .iter()
        .map(|r| retrieve_and_fuse(&sample.sample_id, &search, *r, config.retrieval_k, &config.fusion))
        .collect::<Result<Vec<_>>>()?;
    Ok(InferenceResult {
        sample_id: sample.sample_id.clone(),
        trajectory_text,
        queries,
        fallback,
        outcomes,
        error,
        latency_seconds,
    })
}

/// Runs [`infer_sample`] over a batch; output order follows input order.
pub fn infer_batch(
    samples: &[CqrSample],
    client: &dyn Generator,
    retrievers: &[&dyn Retriever],
    config: &InferenceConfig,
    seed: u64,
) -> Result<Vec<InferenceResult>> {
    samples
        .par_iter()
        .map(|s| infer_sample(s, client, retrievers, config, seed))
        .collect()
}

pub fn save_results(path: &Path, results: &[InferenceResult]) -> Result<()> {
    crate::corpus::write_jsonl(path, results)
}

pub fn load_results(path: &Path) -> Result<Vec<InferenceResult>> {
    crate::corpus::read_jsonl(path)
}

/// Writes the fused lists for one retriever as a TREC run. Samples with an
/// empty fused list contribute no lines; their count is returned.
pub fn emit_run<W: Write>(results: &[InferenceResult], retriever: &str, w: W) -> Result<usize> {
    let mut empty = 0;
    let lists: Vec<RankedList> = results
        .iter()
        .filter_map(|r| {
            let fused = r.outcome(retriever).map(|o| o.fused.clone()).unwrap_or_default();
            if fused.is_empty() {
                log::warn!("sample {}: empty fused list", r.sample_id);
                empty += 1;
                None
            } else {
                Some(RankedList {
                    query_tag: r.sample_id.clone(),
                    entries: fused.entries,
                })
            }
        })
        .collect();
    write_run(w, &lists, RUN_TAG).map_err(|e| Error::io("<run>", e))?;
    Ok(empty)
}

pub fn save_run_file(path: &Path, results: &[InferenceResult], retriever: &str) -> Result<usize> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let empty = emit_run(results, retriever, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(empty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub per_sample: Vec<(String, f64)>,
    pub mean_seconds: Option<f64>,
}

/// Times generation only (no retrieval), sequentially per sample.
pub fn measure_latency(
    samples: &[CqrSample],
    client: &dyn Generator,
    config: &InferenceConfig,
    seed: u64,
) -> Result<LatencyReport> {
    let mut per_sample = Vec::with_capacity(samples.len());
    for s in samples {
        let start = Instant::now();
        run_inference(s, client, config, seed)?;
        per_sample.push((s.sample_id.clone(), start.elapsed().as_secs_f64()));
    }
    let mean_seconds = if per_sample.is_empty() {
        None
    } else {
        Some(per_sample.iter().map(|(_, t)| t).sum::<f64>() / per_sample.len() as f64)
    };
    Ok(LatencyReport {
        per_sample,
        mean_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{GenKind, ScriptedMock};

    fn sample() -> CqrSample {
        CqrSample {
            sample_id: "s1".into(),
            history: vec![],
            query: "q".into(),
            gold_passage_ids: ["p1".to_string()].into(),
        }
    }

    #[test]
    fn one_shot_passthrough() {
        let text = "[Clarification] a [Rewrite] b [Clarification] c [Rewrite] d [Clarification] e [Rewrite] f";
        let mock = ScriptedMock::new().on(GenKind::Trajectory, "q", None, text);
        let got = run_inference(&sample(), &mock, &InferenceConfig::default(), 0).unwrap();
        assert_eq!(got, text);
    }

    #[test]
    fn stepwise_respects_cap() {
        let mock = ScriptedMock::new()
            .on(GenKind::Clarify, "q", None, "c1")
            .on(GenKind::Rewrite, "q", None, "q1")
            .on(GenKind::Clarify, "q1", None, "c2")
            .on(GenKind::Rewrite, "q1", None, "q2")
            .on(GenKind::Clarify, "q2", None, "c3")
            .on(GenKind::Rewrite, "q2", None, "q3");
        let cfg = InferenceConfig {
            max_iters: 2,
            generation: GenerationMode::Stepwise,
            ..Default::default()
        };
        let got = run_inference(&sample(), &mock, &cfg, 0).unwrap();
        assert_eq!(got, "[Clarification] c1 [Rewrite] q1 [Clarification] c2 [Rewrite] q2");
    }

    #[test]
    fn outage_propagates() {
        let mock = ScriptedMock::new();
        assert!(run_inference(&sample(), &mock, &InferenceConfig::default(), 0)
            .unwrap_err()
            .is_provider_error());
    }

    #[test]
    fn query_extraction() {
        assert_eq!(
            extract_queries("[Clarification] a [Rewrite] b [Clarification] c [Rewrite] d"),
            ["b", "d"]
        );
        assert!(extract_queries("garbage").is_empty());
        assert_eq!(
            extract_queries("[Clarification] a [Rewrite] b [Clarification] c [Rewrite] b"),
            ["b", "b"]
        );
    }

    #[test]
    fn latency_of_empty_batch() {
        let r = measure_latency(&[], &ScriptedMock::new(), &InferenceConfig::default(), 0).unwrap();
        assert!(r.per_sample.is_empty());
        assert_eq!(r.mean_seconds, None);
    }
}
