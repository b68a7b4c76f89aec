//! Strict TOML configuration. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! workers = 4
//! [data]       # collection, collection_format, dataset, qrels, sparse_index, dense_index
//! [bm25]       # profile = "topiocqa" | "qrecc", k1, b
//! [embedder]   # kind = "mock" | "http", dim, url, name, batch_size, max_in_flight, timeout_secs, max_retries
//! [generator]  # kind = "mock" | "http", script, url, model, temperature, max_in_flight, rate_per_sec, timeout_secs, max_retries
//! [crdg]       # early_stop, max_iters, resample_budget, f_mode
//! [prefdata]   # multi
//! [inference]  # max_iters, retrieval_k, retriever, generation
//! [fusion]     # k, mode, depth
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::corpus::CollectionFormat;
use crate::crdg::CrdgConfig;
use crate::dense::{EmbeddingProvider, HttpEmbedder, HttpEmbedderConfig, MockEmbedder};
use crate::error::{Error, Result};
use crate::gen::{Generator, HttpGenerator, HttpGeneratorConfig, ScriptedMock};
use crate::pipeline::InferenceConfig;
use crate::prefdata::OtConfig;
use crate::sparse::Bm25Params;
use crate::throttle::RetryPolicy;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DataConfig {
    pub collection: Option<PathBuf>,
    pub collection_format: Option<CollectionFormat>,
    pub dataset: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub sparse_index: Option<PathBuf>,
    pub dense_index: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
    pub url: Option<String>,
    pub name: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: ProviderKind::Mock,
            dim: 64,
            url: None,
            name: None,
            batch_size: 32,
            max_in_flight: 4,
            timeout_secs: 60,
            max_retries: 3,
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        match self.kind {
            ProviderKind::Mock => Ok(Box::new(MockEmbedder::new(self.dim)?)),
            ProviderKind::Http => {
                let url = self
                    .url
                    .clone()
                    .ok_or_else(|| Error::MissingRequired("embedder.url".into()))?;
                Ok(Box::new(HttpEmbedder::new(HttpEmbedderConfig {
                    name: self.name.clone().unwrap_or_else(|| url.clone()),
                    url,
                    dim: self.dim,
                    timeout: Duration::from_secs(self.timeout_secs),
                    retry: RetryPolicy {
                        max_retries: self.max_retries,
                        ..Default::default()
                    },
                    max_in_flight: self.max_in_flight,
                })?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorConfig {
    pub kind: ProviderKind,
    pub script: Option<PathBuf>,
    /// Falls back to `ICR_GEN_URL`.
    pub url: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub rate_per_sec: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: ProviderKind::Mock,
            script: None,
            url: None,
            model: None,
            temperature: 0.7,
            max_in_flight: 4,
            rate_per_sec: 0.0,
            timeout_secs: 60,
            max_retries: 3,
        }
    }
}

impl GeneratorConfig {
    /// The API key is only ever read from `ICR_GEN_KEY`.
    pub fn build(&self) -> Result<Box<dyn Generator>> {
        match self.kind {
            ProviderKind::Mock => {
                let script = self
                    .script
                    .as_deref()
                    .ok_or_else(|| Error::MissingRequired("generator.script".into()))?;
                Ok(Box::new(ScriptedMock::load(script)?))
            }
            ProviderKind::Http => {
                let mut cfg = match &self.url {
                    Some(url) => {
                        let mut c = HttpGeneratorConfig::with_url(url);
                        c.api_key = std::env::var(HttpGeneratorConfig::ENV_KEY).ok();
                        if let Ok(m) = std::env::var(HttpGeneratorConfig::ENV_MODEL) {
                            c.model = m;
                        }
                        c
                    }
                    None => {
                        HttpGeneratorConfig::from_env().map_err(|_| Error::MissingRequired("generator.url".into()))?
                    }
                };
                if let Some(m) = &self.model {
                    cfg.model = m.clone();
                }
                cfg.temperature = self.temperature;
                cfg.max_in_flight = self.max_in_flight;
                cfg.rate_per_sec = self.rate_per_sec;
                cfg.timeout = Duration::from_secs(self.timeout_secs);
                cfg.retry.max_retries = self.max_retries;
                Ok(Box::new(HttpGenerator::new(cfg)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub workers: usize,
    pub data: DataConfig,
    pub bm25_profile: String,
    pub bm25: Bm25Params,
    pub embedder: EmbedderConfig,
    pub generator: GeneratorConfig,
    pub crdg: CrdgConfig,
    pub prefdata_multi: bool,
    pub inference: InferenceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            workers: 4,
            data: DataConfig::default(),
            bm25_profile: "topiocqa".into(),
            bm25: Bm25Params::TOPIOCQA,
            embedder: EmbedderConfig::default(),
            generator: GeneratorConfig::default(),
            crdg: CrdgConfig::default(),
            prefdata_multi: false,
            inference: InferenceConfig::default(),
        }
    }
}

impl Config {
    pub fn ot_config(&self) -> OtConfig {
        OtConfig {
            resample_budget: self.crdg.resample_budget,
            f_mode: self.crdg.f_mode,
            multi: self.prefdata_multi,
        }
    }
}

/// Tracks which keys of a table were read so leftovers can be rejected.
struct Section<'a> {
    prefix: String,
    table: &'a toml::Table,
    seen: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(prefix: &str, table: &'a toml::Table) -> Self {
        Section {
            prefix: prefix.to_string(),
            table,
            seen: BTreeSet::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&mut self, key: &'a str) -> Option<&'a toml::Value> {
        self.seen.insert(key);
        self.table.get(key)
    }

    fn mismatch(&self, key: &str, reason: impl Into<String>) -> Error {
        Error::TypeMismatch {
            key: self.path(key),
            reason: reason.into(),
        }
    }

    fn string(&mut self, key: &'a str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.mismatch(key, format!("expected string, got {}", v.type_str()))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &'a str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.string(key)? {
            None => Ok(None),
            Some(s) => s.parse::<T>().map(Some).map_err(|e| self.mismatch(key, e.to_string())),
        }
    }

    fn path_value(&mut self, key: &'a str, base: &Path) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(|s| base.join(s)))
    }

    fn uint(&mut self, key: &'a str, min: u64) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 && *i as u64 >= min => Ok(Some(*i as u64)),
            Some(toml::Value::Integer(i)) => Err(self.mismatch(key, format!("must be >= {min}, got {i}"))),
            Some(v) => Err(self.mismatch(key, format!("expected integer, got {}", v.type_str()))),
        }
    }

    fn uint32(&mut self, key: &'a str, min: u64) -> Result<Option<u32>> {
        match self.uint(key, min)? {
            None => Ok(None),
            Some(v) => u32::try_from(v)
                .map(Some)
                .map_err(|_| self.mismatch(key, "out of range")),
        }
    }

    fn usize(&mut self, key: &'a str, min: u64) -> Result<Option<usize>> {
        Ok(self.uint(key, min)?.map(|v| v as usize))
    }

    /// Integer or float.
    fn number(&mut self, key: &'a str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(v) => Err(self.mismatch(key, format!("expected number, got {}", v.type_str()))),
        }
    }

    fn positive(&mut self, key: &'a str) -> Result<Option<f64>> {
        match self.number(key)? {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(self.mismatch(key, format!("must be > 0, got {x}"))),
            other => Ok(other),
        }
    }

    fn non_negative(&mut self, key: &'a str) -> Result<Option<f64>> {
        match self.number(key)? {
            Some(x) if !(x.is_finite() && x >= 0.0) => Err(self.mismatch(key, format!("must be >= 0, got {x}"))),
            other => Ok(other),
        }
    }

    fn boolean(&mut self, key: &'a str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(self.mismatch(key, format!("expected boolean, got {}", v.type_str()))),
        }
    }

    fn section(&mut self, key: &'a str) -> Result<Option<Section<'a>>> {
        let path = self.path(key);
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Table(t)) => Ok(Some(Section::new(&path, t))),
            Some(v) => Err(self.mismatch(key, format!("expected table, got {}", v.type_str()))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().find(|k| !self.seen.contains(k.as_str())) {
            Some(k) => Err(Error::UnknownKey(self.path(k))),
            None => Ok(()),
        }
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config(&text, base)
}

/// Parses config text; relative paths are joined onto `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<Config> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::MalformedRecord {
            line,
            reason: e.message().to_string(),
        }
    })?;
    let mut cfg = Config::default();
    let mut root = Section::new("", &table);

    if let Some(w) = root.usize("workers", 1)? {
        cfg.workers = w;
    }

    if let Some(mut s) = root.section("data")? {
        let d = &mut cfg.data;
        d.collection = s.path_value("collection", base)?;
        d.collection_format = s.parsed("collection_format")?;
        d.dataset = s.path_value("dataset", base)?;
        d.qrels = s.path_value("qrels", base)?;
        d.sparse_index = s.path_value("sparse_index", base)?;
        d.dense_index = s.path_value("dense_index", base)?;
        s.finish()?;
    }

    if let Some(mut s) = root.section("bm25")? {
        if let Some(p) = s.string("profile")? {
            cfg.bm25 =
                Bm25Params::profile(&p).ok_or_else(|| s.mismatch("profile", format!("unknown profile `{p}`")))?;
            cfg.bm25_profile = p;
        }
        if let Some(k1) = s.non_negative("k1")? {
            cfg.bm25.k1 = k1;
        }
        if let Some(b) = s.number("b")? {
            if !(0.0..=1.0).contains(&b) {
                return Err(s.mismatch("b", format!("must be in [0, 1], got {b}")));
            }
            cfg.bm25.b = b;
        }
        s.finish()?;
    }

    if let Some(mut s) = root.section("embedder")? {
        let e = &mut cfg.embedder;
        if let Some(k) = s.string("kind")? {
            e.kind = provider_kind(&s, "kind", &k)?;
        }
        if let Some(v) = s.usize("dim", 1)? {
            e.dim = v;
        }
        e.url = s.string("url")?;
        e.name = s.string("name")?;
        if let Some(v) = s.usize("batch_size", 1)? {
            e.batch_size = v;
        }
        if let Some(v) = s.usize("max_in_flight", 1)? {
            e.max_in_flight = v;
        }
        if let Some(v) = s.uint("timeout_secs", 1)? {
            e.timeout_secs = v;
        }
        if let Some(v) = s.uint32("max_retries", 0)? {
            e.max_retries = v;
        }
        if e.kind == ProviderKind::Http && e.url.is_none() {
            return Err(Error::MissingRequired("embedder.url".into()));
        }
        s.finish()?;
    }

    if let Some(mut s) = root.section("generator")? {
        let g = &mut cfg.generator;
        if let Some(k) = s.string("kind")? {
            g.kind = provider_kind(&s, "kind", &k)?;
        }
        g.script = s.path_value("script", base)?;
        g.url = s.string("url")?;
        g.model = s.string("model")?;
        if let Some(v) = s.non_negative("temperature")? {
            g.temperature = v;
        }
        if let Some(v) = s.usize("max_in_flight", 1)? {
            g.max_in_flight = v;
        }
        if let Some(v) = s.non_negative("rate_per_sec")? {
            g.rate_per_sec = v;
        }
        if let Some(v) = s.uint("timeout_secs", 1)? {
            g.timeout_secs = v;
        }
        if let Some(v) = s.uint32("max_retries", 0)? {
            g.max_retries = v;
        }
        s.finish()?;
    }

    if let Some(mut s) = root.section("crdg")? {
        let c = &mut cfg.crdg;
        if let Some(v) = s.uint32("early_stop", 1)? {
            c.early_stop = v;
        }
        if let Some(v) = s.uint32("max_iters", 1)? {
            c.max_iters = v;
        }
        if let Some(v) = s.uint32("resample_budget", 0)? {
            c.resample_budget = v;
        }
        if let Some(v) = s.parsed("f_mode")? {
            c.f_mode = v;
        }
        s.finish()?;
    }

    if let Some(mut s) = root.section("prefdata")? {
        if let Some(v) = s.boolean("multi")? {
            cfg.prefdata_multi = v;
        }
        s.finish()?;
    }

    if let Some(mut s) = root.section("inference")? {
        let i = &mut cfg.inference;
        if let Some(v) = s.uint32("max_iters", 1)? {
            i.max_iters = v;
        }
        if let Some(v) = s.usize("retrieval_k", 1)? {
            i.retrieval_k = v;
        }
        if let Some(v) = s.parsed("retriever")? {
            i.retriever = v;
        }
        if let Some(v) = s.parsed("generation")? {
            i.generation = v;
        }
        s.finish()?;
    }

    if let Some(mut s) = root.section("fusion")? {
        let f = &mut cfg.inference.fusion;
        if let Some(v) = s.positive("k")? {
            f.k = v;
        }
        if let Some(v) = s.parsed("mode")? {
            f.mode = v;
        }
        if let Some(v) = s.usize("depth", 1)? {
            f.depth = v;
        }
        s.finish()?;
    }

    root.finish()?;
    Ok(cfg)
}

fn provider_kind(s: &Section<'_>, key: &str, value: &str) -> Result<ProviderKind> {
    match value {
        "mock" => Ok(ProviderKind::Mock),
        "http" => Ok(ProviderKind::Http),
        other => Err(s.mismatch(key, format!("expected \"mock\" or \"http\", got `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::FMode;
    use crate::fusion::FusionMode;
    use crate::pipeline::RetrieverChoice;

    fn parse(text: &str) -> Result<Config> {
        parse_config(text, Path::new("/base"))
    }

    #[test]
    fn empty_is_default() {
        let c = parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.crdg.early_stop, 3);
        assert_eq!(c.crdg.max_iters, 10);
        assert_eq!(c.inference.fusion.k, 60.0);
        assert_eq!(c.bm25, Bm25Params { k1: 0.9, b: 0.4 });
    }

    #[test]
    fn unknown_keys() {
        assert!(matches!(parse("foo = 1"), Err(Error::UnknownKey(k)) if k == "foo"));
        assert!(matches!(parse("[crdg]\nfoo = 1"), Err(Error::UnknownKey(k)) if k == "crdg.foo"));
    }

    #[test]
    fn negative_fusion_k() {
        assert!(matches!(parse("[fusion]\nk = -1"), Err(Error::TypeMismatch { key, .. }) if key == "fusion.k"));
        assert!(matches!(parse("[fusion]\nk = \"x\""), Err(Error::TypeMismatch { .. })));
        assert!(matches!(
            parse("[crdg]\nearly_stop = -2"),
            Err(Error::TypeMismatch { .. })
        ));
    }

    #[test]
    fn qrecc_profile_and_overrides() {
        let c = parse(
            "[bm25]\nprofile = \"qrecc\"\n[fusion]\nmode = \"rrf\"\nk = 30\n\
             [inference]\nretriever = \"both-report\"\n[crdg]\nf_mode = \"dense_only\"\n\
             [data]\nqrels = \"q.tsv\"",
        )
        .unwrap();
        assert_eq!(c.bm25, Bm25Params { k1: 0.82, b: 0.68 });
        assert_eq!(c.inference.fusion.mode, FusionMode::Rrf);
        assert_eq!(c.inference.fusion.k, 30.0);
        assert_eq!(c.inference.retriever, RetrieverChoice::BothReport);
        assert_eq!(c.crdg.f_mode, FMode::DenseOnly);
        assert_eq!(c.data.qrels.as_deref(), Some(Path::new("/base/q.tsv")));
    }

    #[test]
    fn missing_required() {
        assert!(matches!(
            parse("[embedder]\nkind = \"http\""),
            Err(Error::MissingRequired(k)) if k == "embedder.url"
        ));
        assert!(matches!(
            Config::default().generator.build(),
            Err(Error::MissingRequired(k)) if k == "generator.script"
        ));
    }

    #[test]
    fn syntax_error_has_line() {
        assert!(matches!(
            parse("a = 1\n[[["),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
    }
}
