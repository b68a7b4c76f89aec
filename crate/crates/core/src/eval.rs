//! Retrieval metrics, the composite query-quality score F, and the
//! success-rate diagnostics over F paths.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{CqrSample, Qrels};
use crate::error::{Error, Result};
use crate::ranking::{RankedList, Retriever};

/// Retrieval depth used when scoring a query.
pub const F_DEPTH: usize = 100;

/// Reciprocal rank of the first relevant entry over the full list; 0 if none.
pub fn mrr(list: &RankedList, relevant: &BTreeSet<String>) -> f64 {
    list.ids()
        .position(|id| relevant.contains(id))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// NDCG@3 with linear gain (gain = grade). 0 when nothing is judged relevant.
pub fn ndcg_at_3(list: &RankedList, grades: &BTreeMap<String, u32>) -> f64 {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = list
        .ids()
        .take(3)
        .enumerate()
        .map(|(i, id)| f64::from(grades.get(id).copied().unwrap_or(0)) * discount(i))
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(3)
        .enumerate()
        .map(|(i, &g)| f64::from(g) * discount(i))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

/// Fraction of relevant passages found in the top `k`; 0 for an empty relevant set.
pub fn recall_at_k(list: &RankedList, relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let found = list.ids().take(k).filter(|id| relevant.contains(*id)).count();
    found as f64 / relevant.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub mrr: f64,
    pub ndcg3: f64,
    pub recall10: f64,
    pub recall100: f64,
    /// No relevant passage was judged for the sample; all values are 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl MetricSet {
    pub fn compute(list: &RankedList, grades: &BTreeMap<String, u32>) -> Self {
        let relevant: BTreeSet<String> = grades.iter().filter(|(_, g)| **g > 0).map(|(p, _)| p.clone()).collect();
        MetricSet {
            mrr: mrr(list, &relevant),
            ndcg3: ndcg_at_3(list, grades),
            recall10: recall_at_k(list, &relevant, 10),
            recall100: recall_at_k(list, &relevant, 100),
            degenerate: relevant.is_empty(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.mrr + self.ndcg3 + self.recall10 + self.recall100
    }

    pub fn mean(sets: &[MetricSet]) -> MetricSet {
        if sets.is_empty() {
            return MetricSet::default();
        }
        let n = sets.len() as f64;
        let total = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        MetricSet {
            mrr: total(|m| m.mrr),
            ndcg3: total(|m| m.ndcg3),
            recall10: total(|m| m.recall10),
            recall100: total(|m| m.recall100),
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    #[default]
    Both,
    SparseOnly,
    DenseOnly,
}

impl FMode {
    pub fn uses_sparse(self) -> bool {
        matches!(self, FMode::Both | FMode::SparseOnly)
    }

    pub fn uses_dense(self) -> bool {
        matches!(self, FMode::Both | FMode::DenseOnly)
    }
}

impl std::str::FromStr for FMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(FMode::Both),
            "sparse_only" => Ok(FMode::SparseOnly),
            "dense_only" => Ok(FMode::DenseOnly),
            other => Err(Error::InvalidParameter(format!("unknown f mode `{other}`"))),
        }
    }
}

/// F for one query: the sum of MRR, NDCG@3, R@10 and R@100 over the
/// retrievers selected by `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<MetricSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<MetricSet>,
    pub mode: FMode,
}

impl QualityScore {
    /// Sums the components required by `mode`; components the mode ignores are dropped.
    pub fn from_parts(mode: FMode, sparse: Option<MetricSet>, dense: Option<MetricSet>) -> Self {
        let sparse = sparse.filter(|_| mode.uses_sparse());
        let dense = dense.filter(|_| mode.uses_dense());
        let f = sparse.map_or(0.0, |m| m.sum()) + dense.map_or(0.0, |m| m.sum());
        QualityScore { f, sparse, dense, mode }
    }
}

/// The retrievers available for F scoring.
#[derive(Clone, Copy, Default)]
pub struct Retrievers<'a> {
    pub sparse: Option<&'a dyn Retriever>,
    pub dense: Option<&'a dyn Retriever>,
}

impl<'a> Retrievers<'a> {
    pub fn new(sparse: Option<&'a dyn Retriever>, dense: Option<&'a dyn Retriever>) -> Self {
        Retrievers { sparse, dense }
    }

    fn required(&self, mode: FMode) -> Result<Vec<(&'a dyn Retriever, bool)>> {
        let mut out = Vec::new();
        if mode.uses_sparse() {
            let r = self
                .sparse
                .ok_or_else(|| Error::InvalidParameter("f mode needs a sparse index".into()))?;
            out.push((r, true));
        }
        if mode.uses_dense() {
            let r = self
                .dense
                .ok_or_else(|| Error::InvalidParameter("f mode needs a dense index".into()))?;
            out.push((r, false));
        }
        Ok(out)
    }

    /// Errors if any gold passage is absent from a retriever the mode uses.
    pub fn check_gold(&self, sample: &CqrSample, mode: FMode) -> Result<()> {
        let mut missing = BTreeSet::new();
        for (r, _) in self.required(mode)? {
            for g in &sample.gold_passage_ids {
                if !r.contains(g) {
                    missing.insert(g.clone());
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::GoldMissingFromCollection(missing.into_iter().collect()))
        }
    }
}

/// Scores `query_text` against the sample's gold passages (binary grades).
pub fn f_score(query_text: &str, sample: &CqrSample, retrievers: &Retrievers<'_>, mode: FMode) -> Result<QualityScore> {
    retrievers.check_gold(sample, mode)?;
    let grades: BTreeMap<String, u32> = sample.gold_passage_ids.iter().map(|g| (g.clone(), 1)).collect();
    let mut sparse = None;
    let mut dense = None;
    for (r, is_sparse) in retrievers.required(mode)? {
        let list = r.search(query_text, F_DEPTH)?;
        let m = MetricSet::compute(&list, &grades);
        if is_sparse {
            sparse = Some(m);
        } else {
            dense = Some(m);
        }
    }
    Ok(QualityScore::from_parts(mode, sparse, dense))
}

fn step_improvements(path: &[f64]) -> impl Iterator<Item = bool> + '_ {
    path.windows(2).map(|w| w[0] < w[1])
}

/// Local success rate: mean over paths of the fraction of improving steps.
/// `path[0]` is the original query's F. Paths with no steps count as 1.
pub fn lsr(paths: &[Vec<f64>]) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let total: f64 = paths
        .iter()
        .map(|p| {
            let steps = p.len().saturating_sub(1);
            if steps == 0 {
                1.0
            } else {
                step_improvements(p).filter(|&b| b).count() as f64 / steps as f64
            }
        })
        .sum();
    total / paths.len() as f64
}

/// Global success rate: fraction of paths whose every step improves.
pub fn gsr(paths: &[Vec<f64>]) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let ok = paths.iter().filter(|p| step_improvements(p).all(|b| b)).count();
    ok as f64 / paths.len() as f64
}

/// Number of paths with no steps (counted as successes by [`lsr`] and [`gsr`]).
pub fn empty_paths(paths: &[Vec<f64>]) -> usize {
    paths.iter().filter(|p| p.len() < 2).count()
}

/// For each requested trajectory length n, the mean F change at each of the n
/// adjacent steps, over paths with exactly n steps.
pub fn delta_f_profile(paths: &[Vec<f64>], lengths: &BTreeSet<usize>) -> BTreeMap<usize, Vec<f64>> {
    lengths
        .iter()
        .map(|&n| {
            let rows: Vec<&Vec<f64>> = paths.iter().filter(|p| p.len() == n + 1).collect();
            let means = if rows.is_empty() {
                Vec::new()
            } else {
                (1..=n)
                    .map(|j| rows.iter().map(|p| p[j] - p[j - 1]).sum::<f64>() / rows.len() as f64)
                    .collect()
            };
            (n, means)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: BTreeMap<String, MetricSet>,
    pub aggregate: MetricSet,
    pub samples: usize,
    pub degenerate_samples: usize,
    /// Run query ids with no judgments; not scored.
    pub unjudged_runs: Vec<String>,
}

/// Scores every judged sample; samples without a run score 0.
pub fn evaluate_run(runs: &[RankedList], qrels: &Qrels) -> EvalReport {
    let by_id: BTreeMap<&str, &RankedList> = runs.iter().map(|l| (l.query_tag.as_str(), l)).collect();
    let empty = RankedList::default();
    let mut per_sample = BTreeMap::new();
    for sid in qrels.sample_ids() {
        let list = by_id.get(sid).copied().unwrap_or(&empty);
        let grades = qrels.for_sample(sid).cloned().unwrap_or_default();
        per_sample.insert(sid.to_string(), MetricSet::compute(list, &grades));
    }
    let unjudged_runs = runs
        .iter()
        .filter(|l| qrels.for_sample(&l.query_tag).is_none())
        .map(|l| l.query_tag.clone())
        .collect();
    let sets: Vec<MetricSet> = per_sample.values().copied().collect();
    EvalReport {
        aggregate: MetricSet::mean(&sets),
        samples: sets.len(),
        degenerate_samples: sets.iter().filter(|m| m.degenerate).count(),
        per_sample,
        unjudged_runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::Hit;

    fn list(ids: &[&str]) -> RankedList {
        RankedList {
            query_tag: "q".into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| Hit {
                    passage_id: id.to_string(),
                    score: -(i as f64),
                })
                .collect(),
        }
    }

    fn rel(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn grades(ids: &[&str]) -> BTreeMap<String, u32> {
        ids.iter().map(|s| (s.to_string(), 1)).collect()
    }

    #[test]
    fn mrr_cases() {
        assert_eq!(mrr(&list(&["g", "a"]), &rel(&["g"])), 1.0);
        assert_eq!(mrr(&list(&["a", "b", "c", "g"]), &rel(&["g"])), 0.25);
        assert_eq!(mrr(&list(&["a", "b"]), &rel(&["g"])), 0.0);
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg_at_3(&list(&["g", "a", "b"]), &grades(&["g"])), 1.0);
        let expected = (1.0 / 4f64.log2()) / (1.0 / 2f64.log2());
        let got = ndcg_at_3(&list(&["a", "b", "g"]), &grades(&["g"]));
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.5).abs() < 1e-12);
        assert_eq!(ndcg_at_3(&list(&["a"]), &BTreeMap::new()), 0.0);
    }

    #[test]
    fn recall_cases() {
        let l = list(&["a", "g1", "b", "g2"]);
        assert_eq!(recall_at_k(&l, &rel(&["g1", "g2"]), 10), 1.0);
        assert_eq!(recall_at_k(&list(&["g1"]), &rel(&["g1", "g2"]), 10), 0.5);
        assert_eq!(recall_at_k(&l, &rel(&[]), 10), 0.0);
        assert!(MetricSet::compute(&l, &BTreeMap::new()).degenerate);
    }

    #[test]
    fn quality_score_modes() {
        let ones = MetricSet {
            mrr: 1.0,
            ndcg3: 1.0,
            recall10: 1.0,
            recall100: 1.0,
            degenerate: false,
        };
        assert_eq!(QualityScore::from_parts(FMode::Both, Some(ones), Some(ones)).f, 8.0);
        assert_eq!(
            QualityScore::from_parts(FMode::SparseOnly, Some(ones), Some(ones)).f,
            4.0
        );
        let d = QualityScore::from_parts(FMode::DenseOnly, Some(ones), Some(ones));
        assert_eq!(d.f, 4.0);
        assert!(d.sparse.is_none());
    }

    #[test]
    fn success_rates() {
        let paths = vec![vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]];
        assert_eq!(lsr(&paths[..1]), 1.0);
        assert_eq!(lsr(&paths[1..]), 0.5);
        assert_eq!(lsr(&paths), 0.75);
        assert_eq!(gsr(&paths), 0.5);
        assert_eq!(gsr(&[vec![0.0, 1.0], vec![2.0, 3.0, 4.0]]), 1.0);
        assert_eq!(lsr(&[vec![5.0]]), 1.0);
        assert_eq!(empty_paths(&[vec![5.0]]), 1);
    }

    #[test]
    fn delta_profile() {
        let lens: BTreeSet<usize> = [2].into();
        assert_eq!(delta_f_profile(&[vec![0.0, 2.0, 3.0]], &lens)[&2], vec![2.0, 1.0]);
        let two = [vec![0.0, 2.0, 3.0], vec![0.0, 4.0, 7.0]];
        assert_eq!(delta_f_profile(&two, &lens)[&2], vec![3.0, 2.0]);
        let lens: BTreeSet<usize> = [4, 5, 6].into();
        let prof = delta_f_profile(&two, &lens);
        assert!(prof.values().all(Vec::is_empty));
        assert_eq!(prof.len(), 3);
    }

    #[test]
    fn evaluate_run_report() {
        let mut q = Qrels::new();
        q.insert("s1", "g", 1);
        q.insert("s2", "h", 1);
        let mut l1 = list(&["g"]);
        l1.query_tag = "s1".into();
        let mut l3 = list(&["x"]);
        l3.query_tag = "s3".into();
        let r = evaluate_run(&[l1, l3], &q);
        assert_eq!(r.samples, 2);
        assert_eq!(r.per_sample["s1"].mrr, 1.0);
        assert_eq!(r.per_sample["s2"].mrr, 0.0);
        assert_eq!(r.aggregate.mrr, 0.5);
        assert_eq!(r.unjudged_runs, vec!["s3".to_string()]);
    }
}
