//! Deterministic feature-hashing embeddings, used in place of a remote
//! model for tests and offline runs.

use super::{EmbedOutcome, EmbeddingProvider, EmbeddingStore, ProviderConfig};
use crate::corpus::PostId;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, token: &str) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing: every lowercase alphanumeric token adds ±1 to one
/// of `dim` buckets; the resulting count vector is L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfflineHashProvider {
    dim: usize,
    seed: u64,
}

impl OfflineHashProvider {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("offline provider dim must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    pub fn from_config(cfg: &ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(cfg.dim, cfg.seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f32>> {
        let lowered = text.to_lowercase();
        let mut counts = vec![0.0f64; self.dim];
        let mut tokens = 0usize;
        for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(self.seed, token);
            let bucket = (h % self.dim as u64) as usize;
            counts[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
            tokens += 1;
        }
        if tokens == 0 {
            return Err(Error::Domain("text has no alphanumeric tokens".into()));
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Domain("hashed features cancel to the zero vector".into()));
        }
        Ok(counts.iter().map(|c| (c / norm) as f32).collect())
    }
}

impl EmbeddingProvider for OfflineHashProvider {
    fn provider_tag(&self) -> String {
        ProviderConfig::offline(self.dim, self.seed).provider_tag()
    }

    fn embed(&self, items: &[(PostId, String)]) -> Result<EmbedOutcome> {
        let mut store = EmbeddingStore::new(self.dim, self.provider_tag());
        let mut failures = Vec::new();
        for (id, text) in items {
            match self.embed_text(text) {
                Ok(v) => store.insert(*id, &v)?,
                Err(e) => failures.push((*id, e.to_string())),
            }
        }
        Ok(EmbedOutcome { store, failures })
    }
}
