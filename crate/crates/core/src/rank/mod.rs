//! Latent index construction and exact cosine top-k search.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{Corpus, PostId};
use crate::embedding::format::{self, read_file, write_atomic};
use crate::embedding::{read_sidecar, write_sidecar, EmbeddingProvider, EmbeddingStore, UNKNOWN_PROVIDER};
use crate::error::{Error, Result};
use crate::refine::ProjectionHead;
use crate::scalar::{dot_f32, Scalar};

pub const INDEX_MAGIC: &[u8; 4] = b"LAT1";

/// Unit-normalized latent vectors keyed by post id.
#[derive(Debug, Clone)]
pub struct LatentIndex {
    dim: usize,
    ids: Vec<PostId>,
    data: Vec<f32>,
    positions: HashMap<PostId, usize>,
    provider_tag: String,
}

impl PartialEq for LatentIndex {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.ids == other.ids
            && self.provider_tag == other.provider_tag
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Outcome of [`project`]: the index plus ids whose latent had zero norm.
#[derive(Debug, Clone)]
pub struct Projection {
    pub index: LatentIndex,
    pub rejected: Vec<PostId>,
}

fn unit_f32<F: Scalar>(z: &[F]) -> Option<Vec<f32>> {
    let n = crate::scalar::norm(z);
    if n == F::zero() || !n.is_finite() {
        return None;
    }
    Some(z.iter().map(|&v| (v / n).to_f32_lossy()).collect())
}

/// Maps every stored vector through the head and L2-normalizes the result.
pub fn project<F: Scalar>(store: &EmbeddingStore, head: &ProjectionHead<F>) -> Result<Projection> {
    if store.dim() != head.in_dim() {
        return Err(Error::Config(format!("store dim {} does not match head in_dim {}", store.dim(), head.in_dim())));
    }
    let mut index = LatentIndex::empty(head.out_dim(), store.provider_tag());
    let mut rejected = Vec::new();
    for (id, x) in store.iter() {
        match unit_f32(&head.forward_f32(x)) {
            Some(u) => index.push(id, &u)?,
            None => rejected.push(id),
        }
    }
    if !rejected.is_empty() {
        log::warn!("{} vectors projected to zero and were left out of the index", rejected.len());
    }
    Ok(Projection { index, rejected })
}

impl LatentIndex {
    fn empty(dim: usize, provider_tag: &str) -> Self {
        Self { dim, ids: Vec::new(), data: Vec::new(), positions: HashMap::new(), provider_tag: provider_tag.to_string() }
    }

    fn push(&mut self, id: PostId, unit: &[f32]) -> Result<()> {
        if self.positions.insert(id, self.ids.len()).is_some() {
            return Err(Error::Domain(format!("id {id} indexed twice")));
        }
        self.ids.push(id);
        self.data.extend_from_slice(unit);
        Ok(())
    }

    /// Copy holding only the ids for which `keep` is true, order preserved.
    pub fn restrict(&self, keep: impl Fn(PostId) -> bool) -> Self {
        let mut out = Self::empty(self.dim, &self.provider_tag);
        for (id, v) in self.iter().filter(|(id, _)| keep(*id)) {
            out.push(id, v).expect("ids are unique");
        }
        out
    }

    /// Index over the raw store vectors, normalized, with no head applied.
    pub fn from_store(store: &EmbeddingStore) -> Projection {
        let mut index = Self::empty(store.dim(), store.provider_tag());
        let mut rejected = Vec::new();
        for (id, x) in store.iter() {
            let as64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            match unit_f32(&as64) {
                Some(u) => index.push(id, &u).expect("store ids are unique"),
                None => rejected.push(id),
            }
        }
        Projection { index, rejected }
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

    pub fn ids(&self) -> &[PostId] {
        &self.ids
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn contains(&self, id: PostId) -> bool {
        self.positions.contains_key(&id)
    }

    pub fn vector(&self, id: PostId) -> Option<&[f32]> {
        self.positions.get(&id).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (PostId, &[f32])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    /// Cosine similarity of two indexed posts.
    pub fn similarity(&self, a: PostId, b: PostId) -> Result<f64> {
        let va = self.vector(a).ok_or_else(|| Error::NotFound(format!("post {a} not in index")))?;
        let vb = self.vector(b).ok_or_else(|| Error::NotFound(format!("post {b} not in index")))?;
        Ok(clamp_score(dot_f32(va, vb)))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        format::write_records(w, INDEX_MAGIC, self.dim, &self.ids, &self.data)
    }

    pub fn from_bytes(bytes: &[u8], provider_tag: impl Into<String>) -> Result<Self> {
        let rec = format::read_records(bytes, INDEX_MAGIC)?;
        let mut index = Self::empty(rec.dim, &provider_tag.into());
        for (i, (id, v)) in rec.ids.iter().zip(rec.data.chunks_exact(rec.dim)).enumerate() {
            index.push(*id, v).map_err(|_| {
                Error::format((format::HEADER_LEN + i * (8 + 4 * rec.dim)) as u64, format!("repeated id {id}"))
            })?;
        }
        Ok(index)
    }

    /// Writes `LAT1` plus a `.meta.json` sidecar with the provider tag.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        write_atomic(path, &buf)?;
        write_sidecar(path, &self.provider_tag)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tag = read_sidecar(path)?.unwrap_or_else(|| UNKNOWN_PROVIDER.to_string());
        Self::from_bytes(&read_file(path)?, tag)
    }
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

/// Ranked candidates for one query; scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    /// `None` for free-text queries.
    pub query_id: Option<PostId>,
    pub hits: Vec<(PostId, f64)>,
}

impl RankedList {
    pub fn candidate_ids(&self) -> impl Iterator<Item = PostId> + '_ {
        self.hits.iter().map(|h| h.0)
    }

    /// CSV rows `query_id,rank,candidate_id,score` with 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "query_id,rank,candidate_id,score")?;
        }
        let q = self.query_id.map(|q| q.to_string()).unwrap_or_default();
        for (rank, (id, score)) in self.hits.iter().enumerate() {
            writeln!(w, "{q},{},{id},{}", rank + 1, sig9(*score))?;
        }
        Ok(())
    }
}

/// Formats with 9 significant digits in plain decimal notation.
fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Restricts candidates to posts sharing at least one tag with `tags`.
#[derive(Debug, Clone)]
pub struct TagFilter<'a> {
    tags: BTreeSet<String>,
    corpus: &'a Corpus,
}

impl<'a> TagFilter<'a> {
    pub fn new<I, S>(tags: I, corpus: &'a Corpus) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { tags: crate::corpus::normalize_tags(tags).into_iter().collect(), corpus }
    }

    pub fn admits(&self, id: PostId) -> bool {
        self.corpus.post(id).is_some_and(|p| p.tags.iter().any(|t| self.tags.contains(t)))
    }

    pub fn tags(&self) -> &BTreeSet<String> {
        &self.tags
    }
}

#[derive(PartialEq)]
struct Candidate {
    score: f64,
    id: PostId,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    /// Greater means ranked earlier: higher score, then lower id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn select_top(index: &LatentIndex, query: &[f32], exclude: Option<PostId>, k: usize, filter: Option<&TagFilter>) -> Vec<(PostId, f64)> {
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::with_capacity(k + 1);
    for (id, v) in index.iter() {
        if Some(id) == exclude || filter.is_some_and(|f| !f.admits(id)) {
            continue;
        }
        let cand = Candidate { score: clamp_score(dot_f32(query, v)), id };
        if heap.len() < k {
            heap.push(Reverse(cand));
        } else if heap.peek().is_some_and(|worst| cand > worst.0) {
            heap.pop();
            heap.push(Reverse(cand));
        }
    }
    let mut hits: Vec<Candidate> = heap.into_iter().map(|r| r.0).collect();
    hits.sort_by(|a, b| b.cmp(a));
    hits.into_iter().map(|c| (c.id, c.score)).collect()
}

/// Exact top-`k` neighbours of an indexed post, excluding the post itself.
pub fn top_k(index: &LatentIndex, query_id: PostId, k: usize, tag_filter: Option<&TagFilter>) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let query = index.vector(query_id).ok_or_else(|| Error::NotFound(format!("query post {query_id} not in index")))?;
    Ok(RankedList { query_id: Some(query_id), hits: select_top(index, query, Some(query_id), k, tag_filter) })
}

/// Embeds and projects free text, then ranks the whole index against it.
pub fn top_k_text<F: Scalar>(
    index: &LatentIndex,
    head: &ProjectionHead<F>,
    provider: &dyn EmbeddingProvider,
    text: &str,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let tag = provider.provider_tag();
    if tag != index.provider_tag() {
        return Err(Error::Config(format!("provider {tag} does not match index provenance {}", index.provider_tag())));
    }
    if head.out_dim() != index.dim() {
        return Err(Error::Config(format!("head out_dim {} does not match index dim {}", head.out_dim(), index.dim())));
    }
    if text.trim().is_empty() {
        return Err(Error::Argument("query text is empty".into()));
    }
    let raw = provider.embed_one(text)?;
    if raw.len() != head.in_dim() {
        return Err(Error::Config(format!("provider dim {} does not match head in_dim {}", raw.len(), head.in_dim())));
    }
    let unit = unit_f32(&head.forward_f32(&raw)).ok_or_else(|| Error::Domain("query projects to the zero vector".into()))?;
    Ok(RankedList { query_id: None, hits: select_top(index, &unit, None, k, None) })
}
