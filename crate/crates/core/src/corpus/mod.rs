//! Posts, duplicate annotations and the operations that prepare them for
//! embedding and training.

mod census;
mod clean;
mod ingest;
mod split;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use census::{census, write_census_csv, CensusReport, TopicStats};
pub use clean::{strip_annotations, strip_bulky_artifacts, AnnotationRules, DEFAULT_MAX_RUN};
pub use ingest::{ingest, ingest_files, IngestReport, RecordError};
pub use split::{filter_by_tag, split, SplitSpec};

pub type PostId = u64;

/// A single forum question after cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: PostId,
    pub title: String,
    pub body: String,
    pub tags: Vec<String>,
    pub created: DateTime<Utc>,
}

impl Post {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn shares_tag(&self, other: &Post) -> bool {
        self.tags.iter().any(|t| other.has_tag(t))
    }

    /// True when neither title nor body carries any text after cleaning.
    pub fn is_empty_text(&self) -> bool {
        self.title.trim().is_empty() && self.body.trim().is_empty()
    }
}

/// Lowercases and de-duplicates a tag list while keeping first-seen order.
pub fn normalize_tags<I, S>(tags: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out: Vec<String> = Vec::new();
    for tag in tags {
        let tag = tag.as_ref().trim().to_lowercase();
        if !tag.is_empty() && !out.contains(&tag) {
            out.push(tag);
        }
    }
    out
}

/// Directed duplicate annotation: `dup_id` was closed as a duplicate of `orig_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub dup_id: PostId,
    pub orig_id: PostId,
}

impl DuplicatePair {
    pub fn new(dup_id: PostId, orig_id: PostId) -> Self {
        Self { dup_id, orig_id }
    }
}

/// Immutable collection of posts and the duplicate pairs linking them.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "CorpusFile", into = "CorpusFile")]
pub struct Corpus {
    posts: BTreeMap<PostId, Post>,
    pairs: Vec<DuplicatePair>,
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    posts: Vec<Post>,
    pairs: Vec<DuplicatePair>,
}

impl TryFrom<CorpusFile> for Corpus {
    type Error = Error;

    fn try_from(file: CorpusFile) -> Result<Self> {
        Corpus::new(file.posts, file.pairs)
    }
}

impl From<Corpus> for CorpusFile {
    fn from(c: Corpus) -> Self {
        CorpusFile { posts: c.posts.into_values().collect(), pairs: c.pairs }
    }
}

impl Corpus {
    /// Builds a corpus, rejecting any violation of its invariants.
    pub fn new(posts: Vec<Post>, pairs: Vec<DuplicatePair>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for post in posts {
            let id = post.id;
            if map.insert(id, post).is_some() {
                return Err(Error::Argument(format!("duplicate post id {id}")));
            }
        }
        let mut seen = HashSet::new();
        for pair in &pairs {
            if pair.dup_id == pair.orig_id {
                return Err(Error::Argument(format!("self-referencing pair {}", pair.dup_id)));
            }
            for id in [pair.dup_id, pair.orig_id] {
                if !map.contains_key(&id) {
                    return Err(Error::Argument(format!("pair references unknown post {id}")));
                }
            }
            if !seen.insert(*pair) {
                return Err(Error::Argument(format!(
                    "repeated pair ({}, {})",
                    pair.dup_id, pair.orig_id
                )));
            }
        }
        Ok(Self { posts: map, pairs })
    }

    pub fn posts(&self) -> impl ExactSizeIterator<Item = &Post> {
        self.posts.values()
    }

    pub fn post(&self, id: PostId) -> Option<&Post> {
        self.posts.get(&id)
    }

    pub fn contains(&self, id: PostId) -> bool {
        self.posts.contains_key(&id)
    }

    pub fn pairs(&self) -> &[DuplicatePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Number of posts whose cleaned text is empty; these are kept in the
    /// corpus but never embedded.
    pub fn empty_text_count(&self) -> usize {
        self.posts.values().filter(|p| p.is_empty_text()).count()
    }

    /// Undirected adjacency of the annotation graph.
    pub fn linked(&self) -> HashMap<PostId, HashSet<PostId>> {
        let mut out: HashMap<PostId, HashSet<PostId>> = HashMap::new();
        for p in &self.pairs {
            out.entry(p.dup_id).or_default().insert(p.orig_id);
            out.entry(p.orig_id).or_default().insert(p.dup_id);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("corpus serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn post(id: PostId, title: &str, tags: &[&str]) -> Post {
        Post {
            id,
            title: title.to_string(),
            body: format!("body of {title}"),
            tags: normalize_tags(tags),
            created: DateTime::from_timestamp(1_600_000_000 + id as i64, 0).unwrap(),
        }
    }
}
