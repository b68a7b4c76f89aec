//! Generator boundary: prompt rendering plus a remote chat-completion client
//! and a deterministic scripted mock.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::Turn;
use crate::error::{Error, Result};
use crate::throttle::{InFlightCap, RetryPolicy, TokenBucket};

const CLARIFY_TEMPLATE: &str = r#"Given a query, this query may be ambiguous. For example, in this query, pronouns may be used to refer to entities or some components may be omitted, so you need to perform coreference resolution and ellipsis resolution. Please ask a question to clarify any unclear points in the query. You only need to output the clarification question, no need to output extra content. Here are some examples.
Examples:
#Query#: Has she produced anything else?
#Clarification Question#: Who does "she" refer to?

#Query#: Has she produced anything else?
#Clarification Question#: What does "anything else" exclude here?

#Query#: Who were the first settlers?
#Clarification Question#: Where are the settlers referred to here?

Please ask a clarification question about the following query.
#Query#: {Current Query}
#Clarification Question#:"#;

const REWRITE_TEMPLATE: &str = r#"Given a conversation and a clarification question, the final query in the conversation may be ambiguous. Please rephrase the final query based on the clarification question, address the issue raised, and do not change the original meaning. You only need to output the rephrased query without any extra content. Here are some examples.
Examples:
#Clarification Question#:
Who does "she" refer to?
#Conversation#:
Q: Who produced the original show one foot in the grave?
A: Susan Belbin.
Q: Has she produced anything else?
#Rewritten Query#:
Has susan belbin produced anything else?

#Clarification Question#:
What does "anything else" exclude here?
#Conversation#:
Q: Who produced the original show one foot in the grave?
A: Susan Belbin.
Q: Has she produced anything else?
#Rewritten Query#:
Has she produced anything else besides one foot in the grave?

#Clarification Question#:
Where are the settlers referred to here?
#Conversation#:
Q: Where was the indian ocean mentioned above located?
A: Indian Ocean is the third-largest of the world's oceanic divisions, it  is bounded by Asia to the north, Africa to the west and Australia to the east. To the south it is bounded by the Southern Ocean or Antarctica, depending on the definition in use. Along its core, the Indian Ocean has some large marginal or regional seas such as the Arabian Sea, the Laccadive Sea, the Somali Sea, Bay of Bengal, and the Andaman Sea.
Q: Who were the first settlers?
#Rewritten Query#:
Who were the first settlers of the indian ocean?

Please rephrase the last query in the conversation based on the clarification question below.
#Clarification Question#:
{Clarification Question}
#Conversation#:
{Conversation}
#Rewritten Query#:"#;

/// History as `Q:`/`A:` lines followed by `Q: <query>`.
pub fn render_conversation(history: &[Turn], query: &str) -> String {
    let mut out = String::new();
    for t in history {
        out.push_str("Q: ");
        out.push_str(&t.query);
        out.push_str("\nA: ");
        out.push_str(&t.answer);
        out.push('\n');
    }
    out.push_str("Q: ");
    out.push_str(query);
    out
}

pub fn render_clarify_prompt(query: &str) -> String {
    CLARIFY_TEMPLATE.replace("{Current Query}", query)
}

pub fn render_rewrite_prompt(clarification: &str, history: &[Turn], query: &str) -> String {
    // single pass: substituted text is never rescanned for placeholders
    let (head, rest) = REWRITE_TEMPLATE
        .split_once("{Clarification Question}")
        .expect("template placeholder");
    let (mid, tail) = rest.split_once("{Conversation}").expect("template placeholder");
    format!(
        "{head}{clarification}{mid}{}{tail}",
        render_conversation(history, query)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Clarify,
    Rewrite,
    /// One-shot generation of a whole serialized trajectory from the context.
    Trajectory,
}

impl std::fmt::Display for GenKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GenKind::Clarify => "clarify",
            GenKind::Rewrite => "rewrite",
            GenKind::Trajectory => "trajectory",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub kind: GenKind,
    pub query: String,
    pub history: Vec<Turn>,
    pub clarification: String,
    pub temperature: f64,
    /// Resample index for the same input; lets remote clients vary the seed
    /// and mocks script distinct resamples.
    pub attempt: u32,
    pub seed: u64,
}

impl GenRequest {
    pub fn clarify(query: &str, attempt: u32) -> Self {
        GenRequest {
            kind: GenKind::Clarify,
            query: query.to_string(),
            history: Vec::new(),
            clarification: String::new(),
            temperature: 0.0,
            attempt,
            seed: 0,
        }
    }

    pub fn rewrite(history: &[Turn], query: &str, clarification: &str, attempt: u32) -> Self {
        GenRequest {
            kind: GenKind::Rewrite,
            query: query.to_string(),
            history: history.to_vec(),
            clarification: clarification.to_string(),
            temperature: 0.0,
            attempt,
            seed: 0,
        }
    }

    pub fn trajectory(history: &[Turn], query: &str) -> Self {
        GenRequest {
            kind: GenKind::Trajectory,
            query: query.to_string(),
            history: history.to_vec(),
            clarification: String::new(),
            temperature: 0.0,
            attempt: 0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn prompt(&self) -> String {
        match self.kind {
            GenKind::Clarify => render_clarify_prompt(&self.query),
            GenKind::Rewrite => render_rewrite_prompt(&self.clarification, &self.history, &self.query),
            GenKind::Trajectory => render_conversation(&self.history, &self.query),
        }
    }

    /// Script lookup keys, most specific first.
    pub fn fingerprints(&self) -> Vec<String> {
        match self.kind {
            GenKind::Rewrite => vec![
                rewrite_fingerprint(&self.query, &self.clarification),
                self.query.clone(),
            ],
            _ => vec![self.query.clone()],
        }
    }
}

/// Fingerprint of a rewrite request that pins the clarification as well.
pub fn rewrite_fingerprint(query: &str, clarification: &str) -> String {
    format!("{query} || {clarification}")
}

pub trait Generator: Send + Sync {
    /// Raw model output for a request.
    fn generate(&self, request: &GenRequest) -> Result<String>;

    /// Whether requests leave the process.
    fn is_remote(&self) -> bool {
        false
    }
}

fn non_empty(text: String) -> Result<String> {
    let t = text.trim();
    if t.is_empty() {
        Err(Error::EmptyResponse)
    } else {
        Ok(t.to_string())
    }
}

pub fn generate_clarification(client: &dyn Generator, query: &str, attempt: u32, seed: u64) -> Result<String> {
    non_empty(client.generate(&GenRequest::clarify(query, attempt).with_seed(seed))?)
}

pub fn generate_rewrite(
    client: &dyn Generator,
    history: &[Turn],
    query: &str,
    clarification: &str,
    attempt: u32,
    seed: u64,
) -> Result<String> {
    non_empty(client.generate(&GenRequest::rewrite(history, query, clarification, attempt).with_seed(seed))?)
}

/// One line of a mock script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub kind: GenKind,
    pub fingerprint: String,
    /// `None` matches any attempt not scripted explicitly.
    #[serde(default)]
    pub attempt: Option<u32>,
    pub response: String,
}

/// Deterministic generator answering from a script. Unscripted requests fail.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    script: HashMap<(GenKind, String, Option<u32>), String>,
    delay: Duration,
}

impl ScriptedMock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut m = ScriptedMock::new();
        for e in entries {
            m.insert(e);
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut m = ScriptedMock::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
            m.insert(entry);
        }
        Ok(m)
    }

    pub fn insert(&mut self, e: ScriptEntry) {
        self.script.insert((e.kind, e.fingerprint, e.attempt), e.response);
    }

    pub fn on(mut self, kind: GenKind, fingerprint: &str, attempt: Option<u32>, response: &str) -> Self {
        self.insert(ScriptEntry {
            kind,
            fingerprint: fingerprint.to_string(),
            attempt,
            response: response.to_string(),
        });
        self
    }

    /// Sleep injected before every response.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl Generator for ScriptedMock {
    fn generate(&self, request: &GenRequest) -> Result<String> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let fps = request.fingerprints();
        for fp in &fps {
            for attempt in [Some(request.attempt), None] {
                if let Some(r) = self.script.get(&(request.kind, fp.clone(), attempt)) {
                    return Ok(r.clone());
                }
            }
        }
        Err(Error::MissingScriptEntry {
            kind: request.kind.to_string(),
            fingerprint: fps.into_iter().next().unwrap_or_default(),
            attempt: request.attempt,
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpGeneratorConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    /// Requests per second; 0 disables limiting.
    pub rate_per_sec: f64,
}

impl HttpGeneratorConfig {
    pub const ENV_URL: &'static str = "ICR_GEN_URL";
    pub const ENV_KEY: &'static str = "ICR_GEN_KEY";
    pub const ENV_MODEL: &'static str = "ICR_GEN_MODEL";

    /// Reads `ICR_GEN_URL` (required), `ICR_GEN_KEY` and `ICR_GEN_MODEL`.
    pub fn from_env() -> Result<Self> {
        let url =
            std::env::var(Self::ENV_URL).map_err(|_| Error::provider(0, format!("{} is not set", Self::ENV_URL)))?;
        Ok(HttpGeneratorConfig {
            url,
            api_key: std::env::var(Self::ENV_KEY).ok(),
            model: std::env::var(Self::ENV_MODEL).unwrap_or_else(|_| "default".into()),
            ..Self::with_url("")
        })
    }

    pub fn with_url(url: &str) -> Self {
        HttpGeneratorConfig {
            url: url.to_string(),
            api_key: None,
            model: "default".into(),
            temperature: 0.7,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            rate_per_sec: 0.0,
        }
    }
}

/// Chat-completion client (`{model, messages, temperature, seed}` →
/// `choices[0].message.content`).
pub struct HttpGenerator {
    config: HttpGeneratorConfig,
    agent: ureq::Agent,
    cap: InFlightCap,
    bucket: TokenBucket,
}

impl HttpGenerator {
    pub fn new(config: HttpGeneratorConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let cap = InFlightCap::new(config.max_in_flight);
        let bucket = TokenBucket::new(config.rate_per_sec, config.max_in_flight as f64);
        HttpGenerator {
            config,
            agent,
            cap,
            bucket,
        }
    }

    pub fn body(&self, request: &GenRequest) -> Value {
        let temperature = if request.temperature > 0.0 {
            request.temperature
        } else {
            self.config.temperature
        };
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt()}],
            "temperature": temperature,
            "seed": request.seed.wrapping_add(u64::from(request.attempt)),
        })
    }

    fn post_once(&self, body: &Value) -> std::result::Result<String, String> {
        self.bucket.take();
        let _permit = self.cap.acquire();
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let v: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "response lacks choices[0].message.content".to_string())
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, request: &GenRequest) -> Result<String> {
        let body = self.body(request);
        self.config
            .retry
            .run(|_| self.post_once(&body))
            .map_err(|(e, attempts)| Error::provider(0, format!("{e} (after {attempts} attempts)")))
    }

    fn is_remote(&self) -> bool {
        true
    }
}
