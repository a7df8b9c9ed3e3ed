//! Model service clients: page artifact extraction, text embedding,
//! query expansion, and answer generation. Each operation has a live
//! JSON-over-HTTP implementation and a deterministic offline mock, with
//! an optional content-addressed response cache in front.

use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use pagepyramid_core::embed::{EmbedError, Embedder, HashEmbedder};
use pagepyramid_core::model::{EmbeddingVector, PageArtifacts};
use pagepyramid_core::protocol::{
    parse_artifacts, EXTRACTION_PROMPT, KEYWORDS_PROMPT, SYNONYMS_PROMPT,
};
use pagepyramid_core::query::{LexicalExpander, QueryBundle, QueryError, QueryExpander};
use pagepyramid_core::text;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_MAX_ANSWER_PAGES: usize = 100;
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_BACKOFF_MS: u64 = 250;

#[derive(Debug, thiserror::Error)]
pub enum ClientsError {
    #[error("ServiceError: {0}")]
    Service(String),
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("FixtureMissing: {0}")]
    FixtureMissing(String),
    #[error("EmptyText: nothing to embed")]
    EmptyText,
    #[error("EmptyQuery: question is empty")]
    EmptyQuery,
    #[error("NoPages: answer generation needs at least one page")]
    NoPages,
    #[error("TooManyPages: got {got}, limit {max}")]
    TooManyPages { got: usize, max: usize },
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
}

/// Whether calls go to an HTTP endpoint or stay in-process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientMode {
    Live,
    #[default]
    Mock,
}

impl std::str::FromStr for ClientMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(ClientMode::Live),
            "mock" => Ok(ClientMode::Mock),
            other => Err(format!(
                "client mode must be 'live' or 'mock', got '{other}'"
            )),
        }
    }
}

/// One page image to analyze. In mock mode the "image" bytes are a
/// UTF-8 fixture with labeled artifact blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionRequest {
    pub page_image_bytes: Vec<u8>,
    pub dpi: u32,
}

/// Content hash addressing one cached response: operation name, model
/// name, and the full request payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    digest: String,
}

impl CacheKey {
    pub fn new(operation: &str, model: &str, payload: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(operation.as_bytes());
        h.update([0]);
        h.update(model.as_bytes());
        h.update([0]);
        h.update(payload);
        Self {
            digest: hex::encode(h.finalize()),
        }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// File-per-key response cache. Values are canonical JSON; writes go
/// through a temp file then rename, so concurrent writers of the same
/// deterministic value cannot tear each other.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path_of(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest()))
    }

    pub fn get(&self, key: &CacheKey) -> io::Result<Option<Vec<u8>>> {
        match std::fs::read(self.path_of(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &CacheKey, value: &[u8]) -> io::Result<()> {
        let target = self.path_of(key);
        let tmp = self
            .dir
            .join(format!(".{}.tmp-{}", key.digest(), std::process::id()));
        std::fs::write(&tmp, value)?;
        std::fs::rename(&tmp, &target)
    }
}

/// Connection settings for live mode.
#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub endpoint_url: String,
    pub api_key: String,
    pub model_extract: String,
    pub model_embed: String,
    pub model_generate: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl LiveConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            api_key: String::new(),
            model_extract: "vision-default".into(),
            model_embed: "embed-default".into(),
            model_generate: "chat-default".into(),
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_ms: DEFAULT_BACKOFF_MS,
        }
    }
}

struct LiveClient {
    http: reqwest::blocking::Client,
    cfg: LiveConfig,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: Vec<ChatPart<'a>>,
}

#[derive(Serialize)]
#[serde(tag = "type")]
enum ChatPart<'a> {
    #[serde(rename = "text")]
    Text { text: &'a str },
    #[serde(rename = "image_url")]
    ImageUrl { image_url: ImageUrlBody },
}

#[derive(Serialize)]
struct ImageUrlBody {
    url: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
    dimensions: usize,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

impl LiveClient {
    fn new(cfg: LiveConfig) -> Result<Self, ClientsError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ClientsError::Service(e.to_string()))?;
        Ok(Self { http, cfg })
    }

    fn retryable(status: reqwest::StatusCode) -> bool {
        status.as_u16() == 429 || status.is_server_error()
    }

    /// POSTs with at most `max_retries` retries and exponential backoff
    /// on transport failures, 429, and 5xx.
    fn post_json<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, ClientsError> {
        let url = format!("{}/{}", self.cfg.endpoint_url.trim_end_matches('/'), path);
        let mut attempt: u32 = 0;
        loop {
            let mut req = self.http.post(&url).json(body);
            if !self.cfg.api_key.is_empty() {
                req = req.bearer_auth(&self.cfg.api_key);
            }
            let outcome = req.send();
            let failure = match outcome {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<R>()
                        .map_err(|e| ClientsError::Parse(format!("bad response body: {e}")));
                }
                Ok(resp) if Self::retryable(resp.status()) => {
                    format!("HTTP {} from {url}", resp.status())
                }
                Ok(resp) => {
                    return Err(ClientsError::Service(format!(
                        "HTTP {} from {url}",
                        resp.status()
                    )));
                }
                Err(e) => format!("transport error on {url}: {e}"),
            };
            if attempt >= self.cfg.max_retries {
                return Err(ClientsError::Service(format!(
                    "{failure} (after {attempt} retries)"
                )));
            }
            std::thread::sleep(Duration::from_millis(
                self.cfg.backoff_ms.saturating_mul(1u64 << attempt.min(16)),
            ));
            attempt += 1;
        }
    }

    fn chat(&self, model: &str, parts: Vec<ChatPart<'_>>) -> Result<String, ClientsError> {
        let body = ChatRequest {
            model,
            temperature: 0.0,
            messages: vec![ChatMessage {
                role: "user",
                content: parts,
            }],
        };
        let resp: ChatResponse = self.post_json("chat/completions", &body)?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(ClientsError::Parse("model returned empty content".into()));
        }
        Ok(content)
    }

    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f32>, ClientsError> {
        let body = EmbedRequest {
            model: &self.cfg.model_embed,
            input: text,
            dimensions: dim,
        };
        let resp: EmbedResponse = self.post_json("embeddings", &body)?;
        resp.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ClientsError::Parse("embedding response had no data".into()))
    }
}

fn image_part(bytes: &[u8]) -> ChatPart<'static> {
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    ChatPart::ImageUrl {
        image_url: ImageUrlBody {
            url: format!("data:image/png;base64,{encoded}"),
        },
    }
}

/// All model operations behind one handle. Mock mode is a pure
/// function of the inputs; live mode talks to an HTTP endpoint with
/// retries. Either way, responses can be cached by content hash.
pub struct ServiceClients {
    mode: ClientMode,
    dim: usize,
    max_answer_pages: usize,
    cache: Option<ResponseCache>,
    live: Option<LiveClient>,
    mock_embedder: HashEmbedder,
    expander: LexicalExpander,
    embed_model_id: String,
}

impl ServiceClients {
    pub fn mock(dim: usize) -> Self {
        let mock_embedder = HashEmbedder::new(dim);
        let embed_model_id = mock_embedder.model_id().to_string();
        Self {
            mode: ClientMode::Mock,
            dim,
            max_answer_pages: DEFAULT_MAX_ANSWER_PAGES,
            cache: None,
            live: None,
            mock_embedder,
            expander: LexicalExpander::builtin(),
            embed_model_id,
        }
    }

    pub fn live(dim: usize, cfg: LiveConfig) -> Result<Self, ClientsError> {
        let embed_model_id = format!("{}@{dim}", cfg.model_embed);
        Ok(Self {
            mode: ClientMode::Live,
            dim,
            max_answer_pages: DEFAULT_MAX_ANSWER_PAGES,
            cache: None,
            live: Some(LiveClient::new(cfg)?),
            mock_embedder: HashEmbedder::new(dim),
            expander: LexicalExpander::builtin(),
            embed_model_id,
        })
    }

    pub fn with_cache_dir(mut self, dir: impl AsRef<Path>) -> io::Result<Self> {
        self.cache = Some(ResponseCache::open(dir.as_ref())?);
        Ok(self)
    }

    pub fn with_max_answer_pages(mut self, max: usize) -> Self {
        self.max_answer_pages = max;
        self
    }

    pub fn mode(&self) -> ClientMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Identifier of the embedding backend, recorded in index metadata.
    pub fn embed_model_id(&self) -> &str {
        &self.embed_model_id
    }

    fn live_client(&self) -> &LiveClient {
        self.live
            .as_ref()
            .expect("live client present in live mode")
    }

    fn model_for(&self, live_model: impl Fn(&LiveConfig) -> &str) -> &str {
        match self.mode {
            ClientMode::Mock => "mock",
            ClientMode::Live => live_model(&self.live_client().cfg),
        }
    }

    /// Runs `compute` through the cache: hit returns the stored bytes,
    /// miss computes, stores, and returns them.
    fn cached<F>(
        &self,
        op: &str,
        model: &str,
        payload: &[u8],
        compute: F,
    ) -> Result<Vec<u8>, ClientsError>
    where
        F: FnOnce() -> Result<Vec<u8>, ClientsError>,
    {
        let key = CacheKey::new(op, model, payload);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                return Ok(hit);
            }
        }
        let value = compute()?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &value)?;
        }
        Ok(value)
    }

    /// Analyzes one page image into its four artifact sets.
    pub fn extract_page(&self, req: &ExtractionRequest) -> Result<PageArtifacts, ClientsError> {
        if req.page_image_bytes.is_empty() {
            return Err(ClientsError::FixtureMissing("page image is empty".into()));
        }
        let mut payload = req.dpi.to_le_bytes().to_vec();
        payload.extend_from_slice(&req.page_image_bytes);
        let model = self.model_for(|c| &c.model_extract).to_string();
        let raw = self.cached("extract_page", &model, &payload, || match self.mode {
            ClientMode::Mock => {
                let fixture = std::str::from_utf8(&req.page_image_bytes)
                    .map_err(|_| ClientsError::Parse("mock page fixture is not UTF-8".into()))?;
                serde_json::to_vec(fixture).map_err(|e| ClientsError::Parse(e.to_string()))
            }
            ClientMode::Live => {
                let content = self.live_client().chat(
                    &self.live_client().cfg.model_extract,
                    vec![
                        ChatPart::Text {
                            text: EXTRACTION_PROMPT,
                        },
                        image_part(&req.page_image_bytes),
                    ],
                )?;
                serde_json::to_vec(&content).map_err(|e| ClientsError::Parse(e.to_string()))
            }
        })?;
        let content: String =
            serde_json::from_slice(&raw).map_err(|e| ClientsError::Parse(e.to_string()))?;
        parse_artifacts(&content).map_err(|e| ClientsError::Parse(e.to_string()))
    }

    /// Embeds text into a unit vector of the configured dimension.
    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ClientsError> {
        if text.is_empty() {
            return Err(ClientsError::EmptyText);
        }
        let model = format!("{}#{}", self.model_for(|c| &c.model_embed), self.dim);
        let raw = self.cached("embed_text", &model, text.as_bytes(), || {
            let values = match self.mode {
                ClientMode::Mock => self
                    .mock_embedder
                    .embed(text)
                    .map_err(|e| match e {
                        EmbedError::EmptyText => ClientsError::EmptyText,
                        other => ClientsError::Service(other.to_string()),
                    })?
                    .values()
                    .to_vec(),
                ClientMode::Live => {
                    let raw_values = self.live_client().embed(text, self.dim)?;
                    pagepyramid_core::model::normalize(&raw_values)
                        .map_err(|e| ClientsError::Parse(format!("unusable embedding: {e}")))?
                        .values()
                        .to_vec()
                }
            };
            serde_json::to_vec(&values).map_err(|e| ClientsError::Parse(e.to_string()))
        })?;
        let values: Vec<f32> =
            serde_json::from_slice(&raw).map_err(|e| ClientsError::Parse(e.to_string()))?;
        if values.len() != self.dim {
            return Err(ClientsError::Parse(format!(
                "embedding has dimension {}, expected {}",
                values.len(),
                self.dim
            )));
        }
        EmbeddingVector::from_unit(values)
            .map_err(|e| ClientsError::Parse(format!("non-unit embedding: {e}")))
    }

    /// Produces the three query variants.
    pub fn expand_query(&self, question: &str) -> Result<QueryBundle, ClientsError> {
        if question.trim().is_empty() {
            return Err(ClientsError::EmptyQuery);
        }
        match self.mode {
            ClientMode::Mock => self.expander.expand(question).map_err(|e| match e {
                QueryError::EmptyQuery => ClientsError::EmptyQuery,
                other => ClientsError::Service(other.to_string()),
            }),
            ClientMode::Live => {
                let keywords = self.expansion_call("expand_keywords", KEYWORDS_PROMPT, question)?;
                let synonyms = self.expansion_call("expand_synonyms", SYNONYMS_PROMPT, question)?;
                Ok(QueryBundle {
                    original: question.to_string(),
                    keywords,
                    synonyms,
                })
            }
        }
    }

    fn expansion_call(
        &self,
        op: &str,
        prompt: &str,
        question: &str,
    ) -> Result<String, ClientsError> {
        let model = self.live_client().cfg.model_generate.clone();
        let raw = self.cached(op, &model, question.as_bytes(), || {
            let text = format!("{prompt}\n\n{question}");
            let content = self
                .live_client()
                .chat(&model, vec![ChatPart::Text { text: &text }])?;
            serde_json::to_vec(content.trim()).map_err(|e| ClientsError::Parse(e.to_string()))
        })?;
        let content: String =
            serde_json::from_slice(&raw).map_err(|e| ClientsError::Parse(e.to_string()))?;
        if content.is_empty() {
            return Err(ClientsError::Parse("empty expansion from model".into()));
        }
        Ok(content)
    }

    /// Answers a question from retrieved page images, most relevant
    /// first. The mock returns the first fact line of the first page
    /// whose text shares a non-stopword token with the question, or
    /// "UNKNOWN".
    pub fn generate_answer(
        &self,
        question: &str,
        pages: &[Vec<u8>],
    ) -> Result<String, ClientsError> {
        if pages.is_empty() {
            return Err(ClientsError::NoPages);
        }
        if pages.len() > self.max_answer_pages {
            return Err(ClientsError::TooManyPages {
                got: pages.len(),
                max: self.max_answer_pages,
            });
        }
        let model = self.model_for(|c| &c.model_generate).to_string();
        let mut payload = Vec::new();
        payload.extend_from_slice(question.as_bytes());
        for page in pages {
            payload.push(0);
            payload.extend_from_slice(page);
        }
        let raw = self.cached("generate_answer", &model, &payload, || match self.mode {
            ClientMode::Mock => {
                let answer = self.mock_answer(question, pages)?;
                serde_json::to_vec(&answer).map_err(|e| ClientsError::Parse(e.to_string()))
            }
            ClientMode::Live => {
                let mut parts = vec![ChatPart::Text { text: question }];
                for page in pages {
                    parts.push(image_part(page));
                }
                let content = self
                    .live_client()
                    .chat(&self.live_client().cfg.model_generate, parts)?;
                serde_json::to_vec(&content).map_err(|e| ClientsError::Parse(e.to_string()))
            }
        })?;
        serde_json::from_slice(&raw).map_err(|e| ClientsError::Parse(e.to_string()))
    }

    fn mock_answer(&self, question: &str, pages: &[Vec<u8>]) -> Result<String, ClientsError> {
        let content_tokens: Vec<String> = text::tokens(question)
            .into_iter()
            .filter(|t| !self.expander.is_stopword(t))
            .collect();
        if content_tokens.is_empty() {
            return Ok("UNKNOWN".to_string());
        }
        for page in pages {
            let Ok(fixture) = std::str::from_utf8(page) else {
                continue;
            };
            let page_tokens: std::collections::BTreeSet<String> =
                text::tokens(fixture).into_iter().collect();
            if !content_tokens.iter().any(|t| page_tokens.contains(t)) {
                continue;
            }
            if let Ok(artifacts) = parse_artifacts(fixture) {
                if let Some(fact) = artifacts.facts.first() {
                    return Ok(fact.clone());
                }
            }
        }
        Ok("UNKNOWN".to_string())
    }

    /// View of this handle as a core embedder.
    pub fn embedder(&self) -> ClientEmbedder<'_> {
        ClientEmbedder { clients: self }
    }

    /// View of this handle as a core query expander.
    pub fn query_expander(&self) -> ClientExpander<'_> {
        ClientExpander { clients: self }
    }
}

/// Adapter implementing the core embedding trait over [`ServiceClients`].
pub struct ClientEmbedder<'a> {
    clients: &'a ServiceClients,
}

impl Embedder for ClientEmbedder<'_> {
    fn dim(&self) -> usize {
        self.clients.dim
    }

    fn model_id(&self) -> &str {
        &self.clients.embed_model_id
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        self.clients.embed_text(text).map_err(|e| match e {
            ClientsError::EmptyText => EmbedError::EmptyText,
            other => EmbedError::Service(other.to_string()),
        })
    }
}

/// Adapter implementing the core expansion trait over [`ServiceClients`].
pub struct ClientExpander<'a> {
    clients: &'a ServiceClients,
}

impl QueryExpander for ClientExpander<'_> {
    fn expand(&self, question: &str) -> Result<QueryBundle, QueryError> {
        self.clients.expand_query(question).map_err(|e| match e {
            ClientsError::EmptyQuery => QueryError::EmptyQuery,
            other => QueryError::Service(other.to_string()),
        })
    }
}
