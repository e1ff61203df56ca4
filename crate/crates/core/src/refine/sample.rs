use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DuplicatePair, PostId, SplitSpec};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::util;

const REJECTION_TRIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSample {
    pub anchor: PostId,
    pub positive: PostId,
    pub negative: PostId,
}

/// `N` annotated pairs; for anchor `i` the positives `j ≠ i` act as negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairBatch {
    pub anchors: Vec<PostId>,
    pub positives: Vec<PostId>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// One triplet per training pair, in shuffled pair order. The anchor is the
/// closed duplicate, the positive its original, and the negative is drawn
/// uniformly from embedded posts not annotated as linked to the anchor.
pub fn sample_triplets(corpus: &Corpus, split: &SplitSpec, store: &EmbeddingStore, seed: u64) -> Result<Vec<TripletSample>> {
    if corpus.len() < 3 {
        return Err(Error::Argument(format!("triplet sampling needs at least 3 posts, corpus has {}", corpus.len())));
    }
    if split.train_pairs.is_empty() {
        return Err(Error::Argument("no training pairs".into()));
    }
    let candidates: Vec<PostId> = corpus.posts().map(|p| p.id).filter(|&id| store.contains(id)).collect();
    let linked = corpus.linked();
    let no_links = HashSet::new();

    let mut rng = util::rng(seed);
    let mut pairs = split.train_pairs.clone();
    pairs.shuffle(&mut rng);

    let mut out = Vec::with_capacity(pairs.len());
    for DuplicatePair { dup_id, orig_id } in pairs {
        for id in [dup_id, orig_id] {
            if !store.contains(id) {
                return Err(Error::NotFound(format!("no embedding for post {id}")));
            }
        }
        let excluded = linked.get(&dup_id).unwrap_or(&no_links);
        let allowed = |c: PostId| c != dup_id && c != orig_id && !excluded.contains(&c);
        let mut negative = None;
        for _ in 0..REJECTION_TRIES {
            let c = candidates[rng.random_range(0..candidates.len())];
            if allowed(c) {
                negative = Some(c);
                break;
            }
        }
        let negative = match negative {
            Some(n) => n,
            None => {
                let pool: Vec<PostId> = candidates.iter().copied().filter(|&c| allowed(c)).collect();
                if pool.is_empty() {
                    return Err(Error::Domain(format!("no negative available for anchor {dup_id}")));
                }
                pool[rng.random_range(0..pool.len())]
            }
        };
        out.push(TripletSample { anchor: dup_id, positive: orig_id, negative });
    }
    Ok(out)
}

/// Shuffles the training pairs under `seed` and cuts consecutive windows of
/// `batch_size`; a final short window is dropped.
pub fn sample_pair_batches(train_pairs: &[DuplicatePair], batch_size: usize, seed: u64) -> Result<Vec<PairBatch>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    if batch_size > train_pairs.len() {
        return Err(Error::Argument(format!(
            "batch size {batch_size} exceeds the {} training pairs",
            train_pairs.len()
        )));
    }
    let mut pairs = train_pairs.to_vec();
    pairs.shuffle(&mut util::rng(seed));
    Ok(pairs
        .chunks_exact(batch_size)
        .map(|w| PairBatch {
            anchors: w.iter().map(|p| p.dup_id).collect(),
            positives: w.iter().map(|p| p.orig_id).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::post;

    fn store_for(ids: impl IntoIterator<Item = PostId>) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2, "t");
        for id in ids {
            s.insert(id, &[1.0, id as f32]).unwrap();
        }
        s
    }

    fn pairs_split(pairs: Vec<DuplicatePair>) -> SplitSpec {
        SplitSpec { train_pairs: pairs, test_pairs: vec![], seed: 0 }
    }

    #[test]
    fn three_posts_force_the_triplet() {
        let c = Corpus::new((1..=3).map(|i| post(i, "t", &[])).collect(), vec![DuplicatePair::new(2, 1)]).unwrap();
        let t = sample_triplets(&c, &pairs_split(c.pairs().to_vec()), &store_for(1..=3), 5).unwrap();
        assert_eq!(t, vec![TripletSample { anchor: 2, positive: 1, negative: 3 }]);
    }

    #[test]
    fn too_small_corpus() {
        let c = Corpus::new((1..=2).map(|i| post(i, "t", &[])).collect(), vec![DuplicatePair::new(2, 1)]).unwrap();
        assert!(sample_triplets(&c, &pairs_split(c.pairs().to_vec()), &store_for(1..=2), 0).is_err());
    }

    #[test]
    fn negatives_avoid_linked_posts() {
        // 2 is a duplicate of both 1 and 3; 5 is a duplicate of 4.
        let pairs = vec![DuplicatePair::new(2, 1), DuplicatePair::new(2, 3), DuplicatePair::new(5, 4)];
        let c = Corpus::new((1..=8).map(|i| post(i, "t", &[])).collect(), pairs.clone()).unwrap();
        let store = store_for(1..=8);
        let mut draws = 0;
        for seed in 0..3400 {
            for t in sample_triplets(&c, &pairs_split(pairs.clone()), &store, seed).unwrap() {
                assert!(t.negative != t.anchor && t.negative != t.positive);
                if t.anchor == 2 {
                    assert!(t.negative != 1 && t.negative != 3);
                }
                draws += 1;
            }
        }
        assert!(draws >= 10_000);
    }

    #[test]
    fn batches_drop_short_tail() {
        let pairs: Vec<_> = (1..=10).map(|i| DuplicatePair::new(i + 100, i)).collect();
        let b = sample_pair_batches(&pairs, 5, 1).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b, sample_pair_batches(&pairs, 5, 1).unwrap());
        assert_eq!(sample_pair_batches(&pairs, 3, 1).unwrap().len(), 3);
        assert!(sample_pair_batches(&pairs, 11, 1).is_err());
        assert!(sample_pair_batches(&pairs, 0, 1).is_err());
    }
}
