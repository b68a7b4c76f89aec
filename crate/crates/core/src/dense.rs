//! Embedding providers and exact inner-product search.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::ranking::{Hit, RankedList, Retriever};
use crate::sparse::{read_f64, read_str, read_u32, read_u64, tokenize, write_str};
use crate::throttle::{InFlightCap, RetryPolicy};

const MAGIC: &[u8; 8] = b"ICRDENS\0";
const FORMAT_VERSION: u32 = 1;

/// Whether the text being embedded is a query or a passage. Providers may
/// ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedRole {
    Query,
    Passage,
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str], role: EmbedRole) -> Result<Vec<Vec<f32>>>;

    fn embed(&self, text: &str, role: EmbedRole) -> Result<Vec<f32>> {
        self.embed_batch(&[text], role)?
            .pop()
            .ok_or_else(|| Error::provider(0, "provider returned no vector"))
    }
}

/// FNV-1a, 64-bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic hashing embedder: each token adds 1.0 to bucket
/// `fnv1a(token) % dim`, then the vector is L2-normalized. A text with no
/// tokens maps to the zero vector.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    name: String,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dim must be > 0".into()));
        }
        Ok(MockEmbedder {
            name: format!("mock-hash-{dim}"),
            dim,
        })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for t in tokenize(text) {
            acc[self.bucket(&t)] += 1.0;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        acc.into_iter().map(|x| x as f32).collect()
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str], _role: EmbedRole) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub url: String,
    pub name: String,
    pub dim: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

/// Remote embedder: `POST {"texts":[...],"role":...}` → `{"vectors":[[...],...]}`.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    agent: ureq::Agent,
    cap: InFlightCap,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
    role: EmbedRole,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::InvalidParameter("embedding dim must be > 0".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let cap = InFlightCap::new(config.max_in_flight);
        Ok(HttpEmbedder { config, agent, cap })
    }

    fn post_once(&self, texts: &[&str], role: EmbedRole) -> std::result::Result<EmbedResponse, String> {
        let _permit = self.cap.acquire();
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(EmbedRequest { texts, role })
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<EmbedResponse>().map_err(|e| e.to_string())
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[&str], role: EmbedRole) -> Result<Vec<Vec<f32>>> {
        let resp = self
            .config
            .retry
            .run(|_| self.post_once(texts, role))
            .map_err(|(e, attempts)| Error::provider(0, format!("{e} (after {attempts} attempts)")))?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::provider(
                0,
                format!("expected {} vectors, got {}", texts.len(), resp.vectors.len()),
            ));
        }
        for v in &resp.vectors {
            if v.len() != self.config.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.dim,
                    actual: v.len(),
                });
            }
        }
        Ok(resp.vectors)
    }
}

/// Row-major passage embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    provider_name: String,
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
    ordinals: HashMap<String, usize>,
}

impl DenseIndex {
    /// Embeds every passage in collection order, `batch_size` texts per call.
    pub fn build<I>(collection: I, provider: &dyn EmbeddingProvider, batch_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = Passage>,
    {
        let dim = provider.dim();
        let batch_size = batch_size.max(1);
        let mut ids = Vec::new();
        let mut ordinals = HashMap::new();
        let mut vectors = Vec::new();
        let mut batch: Vec<Passage> = Vec::with_capacity(batch_size);

        let flush = |batch: &mut Vec<Passage>, ids: &mut Vec<String>, vectors: &mut Vec<f32>| -> Result<()> {
            if batch.is_empty() {
                return Ok(());
            }
            let texts: Vec<&str> = batch.iter().map(|p| p.text.as_str()).collect();
            let embedded = provider.embed_batch(&texts, EmbedRole::Passage).map_err(|e| match e {
                Error::ProviderUnavailable { reason, .. } => Error::provider(ids.len(), reason),
                other => other,
            })?;
            if embedded.len() != batch.len() {
                return Err(Error::provider(ids.len(), "short batch from provider"));
            }
            for (p, v) in batch.drain(..).zip(embedded) {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                vectors.extend_from_slice(&v);
                ids.push(p.id);
            }
            Ok(())
        };

        for p in collection {
            if ordinals.insert(p.id.clone(), ordinals.len()).is_some() {
                return Err(Error::DuplicateId(p.id));
            }
            batch.push(p);
            if batch.len() == batch_size {
                flush(&mut batch, &mut ids, &mut vectors)?;
            }
        }
        flush(&mut batch, &mut ids, &mut vectors)?;
        if ids.is_empty() {
            return Err(Error::EmptyCollection);
        }
        Ok(DenseIndex {
            provider_name: provider.name().to_string(),
            dim,
            ids,
            vectors,
            ordinals,
        })
    }

    pub fn provider_name(&self) -> &str {
        &self.provider_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_count(&self) -> usize {
        self.ids.len()
    }

    pub fn passage_id(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    pub fn row(&self, ordinal: usize) -> &[f32] {
        &self.vectors[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    pub fn contains(&self, passage_id: &str) -> bool {
        self.ordinals.contains_key(passage_id)
    }

    pub fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        if provider.name() != self.provider_name || provider.dim() != self.dim {
            return Err(Error::ProviderMismatch {
                index: self.provider_name.clone(),
                index_dim: self.dim,
                provider: provider.name().to_string(),
                provider_dim: provider.dim(),
            });
        }
        Ok(())
    }

    /// Exhaustive inner-product scan with a pre-computed query vector.
    pub fn search_vector(&self, query_tag: &str, query: &[f32], k: usize) -> Result<RankedList> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let hits = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| Hit {
                passage_id: id.clone(),
                score: dot(self.row(i), query),
            })
            .collect();
        Ok(RankedList::from_hits(query_tag, hits, k))
    }

    pub fn search(&self, query: &str, k: usize, provider: &dyn EmbeddingProvider) -> Result<RankedList> {
        self.check_provider(provider)?;
        let qv = provider.embed(query, EmbedRole::Query)?;
        self.search_vector(query, &qv, k)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(&mut w, &self.provider_name)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for id in &self.ids {
            write_str(&mut w, id)?;
        }
        for x in &self.vectors {
            w.write_all(&f64::from(*x).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::InvalidIndex("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::InvalidIndex("not a dense index".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::InvalidIndex(format!("unsupported version {version}")));
        }
        let provider_name = read_str(&mut r)?;
        let dim = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        if dim == 0 || n == 0 {
            return Err(Error::InvalidIndex("empty dense index".into()));
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut ordinals = HashMap::new();
        for i in 0..n {
            let id = read_str(&mut r)?;
            if ordinals.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
        }
        let mut vectors = Vec::with_capacity((n * dim).min(1 << 24));
        for _ in 0..n * dim {
            vectors.push(read_f64(&mut r)? as f32);
        }
        Ok(DenseIndex {
            provider_name,
            dim,
            ids,
            vectors,
            ordinals,
        })
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

/// Inner product accumulated in f64.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

/// A dense index paired with the provider that encodes its queries.
pub struct DenseRetriever {
    pub index: DenseIndex,
    pub provider: Box<dyn EmbeddingProvider>,
}

impl DenseRetriever {
    pub fn new(index: DenseIndex, provider: Box<dyn EmbeddingProvider>) -> Result<Self> {
        index.check_provider(provider.as_ref())?;
        Ok(DenseRetriever { index, provider })
    }
}

impl Retriever for DenseRetriever {
    fn name(&self) -> &str {
        "dense"
    }

    fn search(&self, query: &str, k: usize) -> Result<RankedList> {
        self.index.search(query, k, self.provider.as_ref())
    }

    fn contains(&self, passage_id: &str) -> bool {
        self.index.contains(passage_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn passages(n: usize) -> Vec<Passage> {
        (0..n)
            .map(|i| Passage {
                id: format!("p{i}"),
                text: format!("passage number {i} about topic{}", i % 3),
            })
            .collect()
    }

    #[test]
    fn mock_empty_text_is_zero() {
        let m = MockEmbedder::new(8).unwrap();
        assert_eq!(m.embed("", EmbedRole::Query).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn mock_deterministic_and_normalized() {
        let m = MockEmbedder::new(8).unwrap();
        let a = m.embed("abc", EmbedRole::Query).unwrap();
        let b = m.embed("abc", EmbedRole::Passage).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-6);
        // collisions are predictable from the bucket function
        let v = m.vector("abc abc xyz");
        let (ba, bx) = (m.bucket("abc"), m.bucket("xyz"));
        if ba != bx {
            assert!((v[ba] / v[bx] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn build_shape_and_determinism() {
        let m = MockEmbedder::new(8).unwrap();
        let a = DenseIndex::build(passages(3), &m, 2).unwrap();
        assert_eq!(a.doc_count(), 3);
        assert_eq!(a.dim(), 8);
        let b = DenseIndex::build(passages(3), &m, 1).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(DenseIndex::read_from(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn empty_collection() {
        let m = MockEmbedder::new(4).unwrap();
        assert!(matches!(
            DenseIndex::build(Vec::new(), &m, 4),
            Err(Error::EmptyCollection)
        ));
    }

    struct Flaky {
        inner: MockEmbedder,
        budget: AtomicUsize,
    }

    impl EmbeddingProvider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn embed_batch(&self, texts: &[&str], role: EmbedRole) -> Result<Vec<Vec<f32>>> {
            let left = self.budget.load(Ordering::SeqCst);
            if left < texts.len() {
                return Err(Error::provider(0, "outage"));
            }
            self.budget.fetch_sub(texts.len(), Ordering::SeqCst);
            self.inner.embed_batch(texts, role)
        }
    }

    #[test]
    fn outage_reports_progress() {
        let p = Flaky {
            inner: MockEmbedder::new(4).unwrap(),
            budget: AtomicUsize::new(4),
        };
        match DenseIndex::build(passages(10), &p, 2) {
            Err(Error::ProviderUnavailable { completed, .. }) => assert_eq!(completed, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_similarity_ranks_first() {
        let m = MockEmbedder::new(16).unwrap();
        let idx = DenseIndex::build(passages(10), &m, 4).unwrap();
        let q = idx.row(5).to_vec();
        let got = idx.search_vector("q", &q, 3).unwrap();
        assert_eq!(got.entries[0].passage_id, "p5");
    }

    #[test]
    fn k_beyond_count_returns_all() {
        let m = MockEmbedder::new(16).unwrap();
        let idx = DenseIndex::build(passages(6), &m, 4).unwrap();
        let got = idx.search("topic1 passage", 50, &m).unwrap();
        assert_eq!(got.len(), 6);
        assert!(got.is_canonical(None));
    }

    #[test]
    fn provider_mismatch() {
        let m = MockEmbedder::new(16).unwrap();
        let other = MockEmbedder::new(8).unwrap();
        let idx = DenseIndex::build(passages(3), &m, 4).unwrap();
        assert!(matches!(
            idx.search("x", 3, &other),
            Err(Error::ProviderMismatch { .. })
        ));
    }
}
