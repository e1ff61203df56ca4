//! Semantic vectors for posts: the id-keyed store, its file format, and
//! the providers that fill it.

pub(crate) mod format;
mod offline;
mod remote;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Post, PostId};
use crate::error::{Error, Result};

pub use offline::OfflineHashProvider;
pub use remote::{RemoteProvider, API_KEY_ENV};

pub const STORE_MAGIC: &[u8; 4] = b"EMB1";

/// Characters per token assumed when budgeting provider input.
pub const CHARS_PER_TOKEN: usize = 4;

/// Fixed-dimension `f32` vectors keyed by post id, in insertion order.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<PostId>,
    data: Vec<f32>,
    index: HashMap<PostId, usize>,
    provider_tag: String,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.ids == other.ids
            && self.provider_tag == other.provider_tag
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize, provider_tag: impl Into<String>) -> Self {
        Self { dim, ids: Vec::new(), data: Vec::new(), index: HashMap::new(), provider_tag: provider_tag.into() }
    }

    pub fn insert(&mut self, id: PostId, values: &[f32]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Domain(format!("vector for {id} has length {}, store dim is {}", values.len(), self.dim)));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("vector for {id} has non-finite entries")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Domain(format!("id {id} already stored")));
        }
        self.index.insert(id, self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    /// Copy holding only the ids for which `keep` is true, order preserved.
    pub fn restrict(&self, keep: impl Fn(PostId) -> bool) -> Self {
        let mut out = Self::new(self.dim, self.provider_tag.clone());
        for (id, v) in self.iter().filter(|(id, _)| keep(*id)) {
            out.insert(id, v).expect("ids are unique and vectors valid");
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn ids(&self) -> &[PostId] {
        &self.ids
    }

    pub fn contains(&self, id: PostId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn get(&self, id: PostId) -> Option<&[f32]> {
        self.index.get(&id).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (PostId, &[f32])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    /// Serializes to the `EMB1` layout. The provider tag is not part of the
    /// binary format; [`save_store`] keeps it in a sidecar file.
    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        format::write_records(w, STORE_MAGIC, self.dim, &self.ids, &self.data)
    }

    pub fn from_bytes(bytes: &[u8], provider_tag: impl Into<String>) -> Result<Self> {
        let rec = format::read_records(bytes, STORE_MAGIC)?;
        let mut index = HashMap::with_capacity(rec.ids.len());
        for (i, &id) in rec.ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                let offset = (format::HEADER_LEN + i * (8 + 4 * rec.dim)) as u64;
                return Err(Error::format(offset, format!("repeated id {id}")));
            }
        }
        Ok(Self { dim: rec.dim, ids: rec.ids, data: rec.data, index, provider_tag: provider_tag.into() })
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Sidecar {
    pub provider_tag: String,
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub(crate) fn write_sidecar(path: &Path, provider_tag: &str) -> Result<()> {
    let meta = serde_json::to_string(&Sidecar { provider_tag: provider_tag.to_string() })?;
    format::write_atomic(&sidecar_path(path), meta.as_bytes())
}

pub(crate) fn read_sidecar(path: &Path) -> Result<Option<String>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let meta: Sidecar = serde_json::from_slice(&format::read_file(&side)?)?;
    Ok(Some(meta.provider_tag))
}

/// Tag assigned to stores loaded without a sidecar.
pub const UNKNOWN_PROVIDER: &str = "unknown";

/// Writes `path` in `EMB1` format plus `path.meta.json` holding the provider tag.
pub fn save_store(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    store.write_to(&mut buf)?;
    format::write_atomic(path, &buf)?;
    write_sidecar(path, store.provider_tag())
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = format::read_file(path)?;
    let tag = read_sidecar(path)?.unwrap_or_else(|| UNKNOWN_PROVIDER.to_string());
    EmbeddingStore::from_bytes(&bytes, tag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Remote,
    OfflineHash,
}

/// Settings for either provider; fields irrelevant to the chosen kind are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model_name: String,
    pub max_tokens: usize,
    pub dim: usize,
    pub seed: u64,
    pub max_concurrency: usize,
    pub retry_limit: u32,
    /// Texts per remote request.
    pub request_batch: usize,
    /// First retry delay; doubled on each further attempt.
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self::offline(256, 0)
    }
}

impl ProviderConfig {
    pub fn offline(dim: usize, seed: u64) -> Self {
        Self {
            kind: ProviderKind::OfflineHash,
            base_url: "https://api.openai.com/v1".into(),
            model_name: "text-embedding-ada-002".into(),
            max_tokens: 8191,
            dim,
            seed,
            max_concurrency: 4,
            retry_limit: 5,
            request_batch: 64,
            backoff_ms: 500,
        }
    }

    pub fn remote(base_url: impl Into<String>) -> Self {
        Self { kind: ProviderKind::Remote, base_url: base_url.into(), dim: 1536, ..Self::offline(1536, 0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(Error::Config("max_concurrency must be at least 1".into()));
        }
        if self.request_batch == 0 {
            return Err(Error::Config("request_batch must be at least 1".into()));
        }
        Ok(())
    }

    /// Provenance string recorded in stores built with this configuration.
    pub fn provider_tag(&self) -> String {
        match self.kind {
            ProviderKind::OfflineHash => format!("offline-hash:dim={}:seed={}", self.dim, self.seed),
            ProviderKind::Remote => format!("remote:{}", self.model_name),
        }
    }
}

/// Vectors produced for a batch of texts, plus per-item failures.
#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub store: EmbeddingStore,
    pub failures: Vec<(PostId, String)>,
}

pub trait EmbeddingProvider {
    fn provider_tag(&self) -> String;

    fn embed(&self, items: &[(PostId, String)]) -> Result<EmbedOutcome>;

    /// Embeds a single text; per-item failures become argument errors.
    fn embed_one(&self, text: &str) -> Result<Vec<f32>> {
        let out = self.embed(&[(0, text.to_string())])?;
        if let Some((_, msg)) = out.failures.into_iter().next() {
            return Err(Error::Argument(msg));
        }
        out.store.get(0).map(<[f32]>::to_vec).ok_or_else(|| Error::Argument("provider returned no vector".into()))
    }
}

/// Provider input for a post: title, newline, body, truncated to the
/// character budget implied by `max_tokens`. Returns `None` when the post
/// has no text.
pub fn build_input(post: &Post, max_tokens: usize) -> Option<String> {
    if post.is_empty_text() {
        return None;
    }
    let text = format!("{}\n{}", post.title, post.body);
    let budget = max_tokens.saturating_mul(CHARS_PER_TOKEN);
    match text.char_indices().nth(budget) {
        Some((cut, _)) => Some(text[..cut].to_string()),
        None => Some(text),
    }
}

/// Result of embedding a whole corpus.
#[derive(Debug, Clone)]
pub struct CorpusEmbedding {
    pub outcome: EmbedOutcome,
    /// Posts skipped because their cleaned text is empty.
    pub skipped_empty: Vec<PostId>,
}

/// Embeds every post with non-empty text, in ascending id order.
pub fn embed_corpus(corpus: &Corpus, provider: &dyn EmbeddingProvider, max_tokens: usize) -> Result<CorpusEmbedding> {
    let mut items = Vec::with_capacity(corpus.len());
    let mut skipped_empty = Vec::new();
    for post in corpus.posts() {
        match build_input(post, max_tokens) {
            Some(text) => items.push((post.id, text)),
            None => skipped_empty.push(post.id),
        }
    }
    let outcome = provider.embed(&items)?;
    Ok(CorpusEmbedding { outcome, skipped_empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::post;

    #[test]
    fn input_is_title_newline_body() {
        let mut p = post(1, "T", &[]);
        p.body = "B".into();
        assert_eq!(build_input(&p, 10).unwrap(), "T\nB");
    }

    #[test]
    fn input_truncated_to_budget() {
        let mut p = post(1, "Title", &[]);
        p.body = "é".repeat(100);
        let full = format!("Title\n{}", p.body);
        let out = build_input(&p, 5).unwrap();
        assert_eq!(out.chars().count(), 20);
        assert!(full.starts_with(&out));
    }

    #[test]
    fn empty_post_skipped() {
        let mut p = post(1, " ", &[]);
        p.body = "\n".into();
        assert_eq!(build_input(&p, 10), None);
    }

    #[test]
    fn store_invariants() {
        let mut s = EmbeddingStore::new(2, "t");
        s.insert(5, &[1.0, 2.0]).unwrap();
        assert!(s.insert(5, &[1.0, 2.0]).is_err());
        assert!(s.insert(6, &[1.0]).is_err());
        assert!(s.insert(7, &[f32::NAN, 0.0]).is_err());
        assert_eq!(s.get(5), Some(&[1.0, 2.0][..]));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.emb");
        let mut s = EmbeddingStore::new(3, "offline-hash:dim=3:seed=0");
        s.insert(9, &[0.1, -0.0, 3.5e-30]).unwrap();
        save_store(&path, &s).unwrap();
        assert_eq!(load_store(&path).unwrap(), s);
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert_eq!(load_store(&path).unwrap().provider_tag(), UNKNOWN_PROVIDER);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut s = EmbeddingStore::new(2, "t");
        s.insert(1, &[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        for cut in [0, 3, 15, 20, buf.len() - 1] {
            assert!(matches!(EmbeddingStore::from_bytes(&buf[..cut], "t"), Err(Error::Format { .. })));
        }
        let mut dup = buf.clone();
        dup[8..16].copy_from_slice(&2u64.to_le_bytes());
        dup.extend_from_slice(&buf[16..]);
        assert!(matches!(EmbeddingStore::from_bytes(&dup, "t"), Err(Error::Format { offset: 32, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::offline(0, 0).validate().is_err());
        let mut c = ProviderConfig::remote("http://x");
        c.max_concurrency = 0;
        assert!(c.validate().is_err());
        assert_eq!(ProviderConfig::remote("http://x").provider_tag(), "remote:text-embedding-ada-002");
    }
}
