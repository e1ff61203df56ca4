//! Client for an OpenAI-compatible `/embeddings` endpoint with a
//! persistent id-keyed cache.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{load_store, save_store, EmbedOutcome, EmbeddingProvider, EmbeddingStore, ProviderConfig, ProviderKind};
use crate::corpus::PostId;
use crate::error::{Error, Result};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "DUPDETECT_API_KEY";

#[derive(Deserialize)]
struct ResponseBody {
    data: Vec<ResponseItem>,
}

#[derive(Deserialize)]
struct ResponseItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

pub struct RemoteProvider {
    cfg: ProviderConfig,
    api_key: String,
    cache_path: Option<PathBuf>,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

impl RemoteProvider {
    pub fn new(cfg: ProviderConfig, api_key: impl Into<String>) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != ProviderKind::Remote {
            return Err(Error::Config("remote provider needs kind = remote".into()));
        }
        let api_key = api_key.into();
        if api_key.is_empty() {
            return Err(Error::Config(format!("{API_KEY_ENV} is empty")));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Ok(Self { cfg, api_key, cache_path: None, agent, requests: AtomicUsize::new(0) })
    }

    /// Reads the API key from [`API_KEY_ENV`].
    pub fn from_env(cfg: ProviderConfig) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| Error::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::new(cfg, key)
    }

    /// Persist fetched vectors to `path` and reuse them on later runs.
    pub fn with_cache(mut self, path: impl Into<PathBuf>) -> Self {
        self.cache_path = Some(path.into());
        self
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_made(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn load_cache(&self) -> Result<EmbeddingStore> {
        let tag = self.provider_tag();
        if let Some(path) = self.cache_path.as_ref().filter(|p| p.exists()) {
            let cached = load_store(path)?;
            if cached.provider_tag() != tag || cached.dim() != self.cfg.dim {
                return Err(Error::Config(format!(
                    "cache {} was built by {} (dim {}), not {tag} (dim {})",
                    path.display(),
                    cached.provider_tag(),
                    cached.dim(),
                    self.cfg.dim
                )));
            }
            return Ok(cached);
        }
        Ok(EmbeddingStore::new(self.cfg.dim, tag))
    }

    fn persist(&self, cache: &EmbeddingStore) -> Result<()> {
        match &self.cache_path {
            Some(path) => save_store(path, cache),
            None => Ok(()),
        }
    }

    fn request(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f32>>, Failure> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}/embeddings", self.cfg.base_url.trim_end_matches('/'));
        let body = json!({ "model": self.cfg.model_name, "input": texts });
        let response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if status != 200 {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let parsed: ResponseBody = response
            .into_body()
            .read_json()
            .map_err(|e| Failure::Fatal(format!("bad response body: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(Failure::Fatal(format!("asked for {} embeddings, got {}", texts.len(), parsed.data.len())));
        }
        let mut out = vec![None; texts.len()];
        for (pos, item) in parsed.data.into_iter().enumerate() {
            let slot = item.index.unwrap_or(pos);
            if slot >= out.len() || out[slot].is_some() {
                return Err(Failure::Fatal(format!("response index {slot} out of range or repeated")));
            }
            if item.embedding.len() != self.cfg.dim {
                return Err(Failure::Fatal(format!("embedding of length {}, expected {}", item.embedding.len(), self.cfg.dim)));
            }
            out[slot] = Some(item.embedding);
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }

    fn request_with_retry(&self, texts: &[&str], stop: &AtomicBool) -> std::result::Result<Vec<Vec<f32>>, String> {
        let mut attempt = 0u32;
        loop {
            match self.request(texts) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(msg)) => return Err(msg),
                Err(Failure::Retryable(msg)) => {
                    if attempt >= self.cfg.retry_limit || stop.load(Ordering::SeqCst) {
                        return Err(format!("{msg} (after {} attempts)", attempt + 1));
                    }
                    let delay = self.cfg.backoff_ms.saturating_mul(1u64 << attempt.min(20));
                    log::warn!("embedding request failed ({msg}); retrying in {delay} ms");
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_tag(&self) -> String {
        self.cfg.provider_tag()
    }

    /// Fetches vectors for ids missing from the cache. Up to
    /// `max_concurrency` requests run at once; fetched vectors are written
    /// to the cache by the calling thread only. A non-retryable failure
    /// aborts the run after saving whatever was fetched.
    fn embed(&self, items: &[(PostId, String)]) -> Result<EmbedOutcome> {
        let mut cache = self.load_cache()?;
        let mut queued = std::collections::HashSet::new();
        let missing: Vec<&(PostId, String)> =
            items.iter().filter(|(id, _)| !cache.contains(*id) && queued.insert(*id)).collect();
        let batches: Vec<&[&(PostId, String)]> = missing.chunks(self.cfg.request_batch).collect();

        if !batches.is_empty() {
            let queue = Mutex::new(0usize);
            let stop = AtomicBool::new(false);
            let (tx, rx) = mpsc::channel::<(usize, std::result::Result<Vec<Vec<f32>>, String>)>();
            let workers = self.cfg.max_concurrency.min(batches.len());
            let mut first_error: Option<String> = None;

            thread::scope(|scope| {
                for _ in 0..workers {
                    let (tx, queue, stop, batches) = (tx.clone(), &queue, &stop, &batches);
                    scope.spawn(move || loop {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let next = {
                            let mut q = queue.lock().unwrap();
                            let i = *q;
                            *q += 1;
                            i
                        };
                        let Some(batch) = batches.get(next) else { break };
                        let texts: Vec<&str> = batch.iter().map(|(_, t)| t.as_str()).collect();
                        let result = self.request_with_retry(&texts, stop);
                        let failed = result.is_err();
                        if failed {
                            stop.store(true, Ordering::SeqCst);
                        }
                        if tx.send((next, result)).is_err() || failed {
                            break;
                        }
                    });
                }
                drop(tx);

                for (batch_idx, result) in rx {
                    match result {
                        Ok(vectors) => {
                            for ((id, _), v) in batches[batch_idx].iter().zip(vectors) {
                                if let Err(e) = cache.insert(*id, &v) {
                                    first_error.get_or_insert(e.to_string());
                                    stop.store(true, Ordering::SeqCst);
                                }
                            }
                            if let Err(e) = self.persist(&cache) {
                                first_error.get_or_insert(e.to_string());
                                stop.store(true, Ordering::SeqCst);
                            }
                        }
                        Err(msg) => {
                            first_error.get_or_insert(msg);
                            stop.store(true, Ordering::SeqCst);
                        }
                    }
                }
            });

            if let Some(msg) = first_error {
                self.persist(&cache)?;
                return Err(Error::Http(msg));
            }
        }

        let mut store = EmbeddingStore::new(self.cfg.dim, self.provider_tag());
        for (id, _) in items {
            if !store.contains(*id) {
                store.insert(*id, cache.get(*id).expect("fetched or cached above"))?;
            }
        }
        Ok(EmbedOutcome { store, failures: Vec::new() })
    }
}
