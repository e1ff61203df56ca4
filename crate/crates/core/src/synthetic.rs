//! Seeded synthetic corpora of clustered vectors for experiments and tests.
//!
//! Each cluster has a random centre in a low-dimensional "topic" subspace.
//! Posts add heavy isotropic noise in the remaining "nuisance" coordinates,
//! so raw cosine similarity is dominated by noise while a linear map that
//! suppresses the nuisance coordinates recovers the clusters.

use chrono::DateTime;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, DuplicatePair, Post, PostId};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::util;

pub const SYNTHETIC_PROVIDER: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub clusters: usize,
    pub dim: usize,
    /// Leading coordinates carrying the cluster signal.
    pub signal_dims: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Std-dev of per-post jitter around the centre in the signal coordinates.
    pub signal_noise: f64,
    /// Std-dev of the nuisance coordinates.
    pub nuisance_noise: f64,
    /// Tag populations; cluster `c` gets `topics[c % topics.len()]`.
    pub topics: Vec<String>,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            clusters: 200,
            dim: 64,
            signal_dims: 16,
            min_size: 2,
            max_size: 3,
            signal_noise: 0.35,
            nuisance_noise: 0.9,
            topics: vec!["general".into()],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub store: EmbeddingStore,
}

/// Generates `spec.clusters` clusters. Within a cluster the first post is
/// the original and every later post is annotated as its duplicate.
pub fn clustered(spec: &ClusterSpec) -> Result<SyntheticData> {
    if spec.signal_dims == 0 || spec.signal_dims > spec.dim || spec.min_size < 2 || spec.max_size < spec.min_size {
        return Err(Error::Argument(format!("invalid cluster spec {spec:?}")));
    }
    if spec.topics.is_empty() {
        return Err(Error::Argument("at least one topic is required".into()));
    }
    let mut rng = util::rng(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let centre_scale = 1.0 / (spec.signal_dims as f64).sqrt();

    let mut posts = Vec::new();
    let mut pairs = Vec::new();
    let mut store = EmbeddingStore::new(spec.dim, SYNTHETIC_PROVIDER);
    let mut next_id: PostId = 1;
    for c in 0..spec.clusters {
        let centre: Vec<f64> = (0..spec.signal_dims).map(|_| unit.sample(&mut rng) * centre_scale).collect();
        let size = rng.random_range(spec.min_size..=spec.max_size);
        let topic = &spec.topics[c % spec.topics.len()];
        let original = next_id;
        for member in 0..size {
            let id = next_id;
            next_id += 1;
            let mut v: Vec<f64> = Vec::with_capacity(spec.dim);
            for &m in &centre {
                v.push(m + unit.sample(&mut rng) * spec.signal_noise * centre_scale);
            }
            let nuisance_scale = spec.nuisance_noise / ((spec.dim - spec.signal_dims).max(1) as f64).sqrt();
            for _ in spec.signal_dims..spec.dim {
                v.push(unit.sample(&mut rng) * nuisance_scale * 2.0);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v32: Vec<f32> = v.iter().map(|x| (x / norm) as f32).collect();
            store.insert(id, &v32)?;
            posts.push(Post {
                id,
                title: format!("cluster {c} post {member}"),
                body: format!("synthetic {topic} question"),
                tags: vec![topic.clone()],
                created: DateTime::from_timestamp(1_650_000_000 + id as i64 * 60, 0).unwrap(),
            });
            if member > 0 {
                pairs.push(DuplicatePair::new(id, original));
            }
        }
    }
    Ok(SyntheticData { corpus: Corpus::new(posts, pairs)?, store })
}
