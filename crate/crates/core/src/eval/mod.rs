//! Measurement protocol: Top-N accuracy over ranked candidates and
//! Mann–Whitney AUC over pair similarities.

mod compare;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DuplicatePair, PostId};
use crate::error::{Error, Result};
use crate::rank::{top_k, LatentIndex};
use crate::util;

pub use compare::{batch_size_sweep, compare_settings, ComparisonRow, ComparisonTable, EvalOptions, Setting, TrainingSummary};

/// Cut-offs reported by default.
pub const DEFAULT_NS: [usize; 5] = [1, 3, 5, 10, 30];

/// Non-duplicate pairs sampled per duplicate pair for AUC.
pub const DEFAULT_NEG_RATIO: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNAccuracy {
    pub accuracy: BTreeMap<usize, f64>,
    pub query_count: usize,
    /// Queries left out because none of their originals is in the pool.
    pub excluded_queries: usize,
}

/// Top-N accuracy. Queries are the distinct `dup_id`s of `test_pairs`; a
/// query hits at `N` when any of its annotated originals is among its `N`
/// nearest candidates (every other indexed post).
pub fn top_n_accuracy(index: &LatentIndex, test_pairs: &[DuplicatePair], ns: &[usize]) -> Result<TopNAccuracy> {
    if test_pairs.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Argument("cut-offs must be positive".into()));
    }
    let mut originals: BTreeMap<PostId, HashSet<PostId>> = BTreeMap::new();
    for p in test_pairs {
        originals.entry(p.dup_id).or_default().insert(p.orig_id);
    }
    let max_n = *ns.iter().max().unwrap();
    let mut hits = vec![0usize; ns.len()];
    let mut query_count = 0;
    let mut excluded = 0;
    for (&query, origs) in &originals {
        if !index.contains(query) || !origs.iter().any(|&o| index.contains(o)) {
            excluded += 1;
            continue;
        }
        query_count += 1;
        let ranked = top_k(index, query, max_n, None)?;
        let first_hit = ranked.hits.iter().position(|(id, _)| origs.contains(id));
        if let Some(rank) = first_hit {
            for (h, &n) in hits.iter_mut().zip(ns) {
                if rank < n {
                    *h += 1;
                }
            }
        }
    }
    if query_count == 0 {
        return Err(Error::Argument(format!("all {excluded} test queries lack an indexed original")));
    }
    if excluded > 0 {
        log::warn!("{excluded} test queries excluded: duplicates missing from the pool");
    }
    let accuracy = ns.iter().zip(&hits).map(|(&n, &h)| (n, h as f64 / query_count as f64)).collect();
    Ok(TopNAccuracy { accuracy, query_count, excluded_queries: excluded })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half; computed from average ranks in O((P+Q) log(P+Q)).
pub fn auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::Argument("auc needs at least one positive and one negative score".into()));
    }
    if scores_pos.iter().chain(scores_neg).any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> =
        scores_pos.iter().map(|&s| (s, true)).chain(scores_neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of 1-based ranks of the positives, ties sharing their mean rank.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (p, q) = (scores_pos.len() as f64, scores_neg.len() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAuc {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// AUC of duplicate-pair similarities against `neg_ratio` times as many
/// uniformly sampled non-duplicate pairs. `annotated` lists every known
/// duplicate pair; none of them, in either direction, is drawn as a negative.
pub fn pairwise_auc_eval(
    index: &LatentIndex,
    test_pairs: &[DuplicatePair],
    annotated: &[DuplicatePair],
    neg_ratio: usize,
    seed: u64,
) -> Result<PairwiseAuc> {
    if neg_ratio < 1 {
        return Err(Error::Argument("neg_ratio must be at least 1".into()));
    }
    let pos: Vec<f64> = test_pairs
        .iter()
        .filter(|p| index.contains(p.dup_id) && index.contains(p.orig_id))
        .map(|p| index.similarity(p.dup_id, p.orig_id))
        .collect::<Result<_>>()?;
    if pos.is_empty() {
        return Err(Error::Argument("no test pair has both posts indexed".into()));
    }
    let linked: HashSet<(PostId, PostId)> =
        annotated.iter().chain(test_pairs).flat_map(|p| [(p.dup_id, p.orig_id), (p.orig_id, p.dup_id)]).collect();
    let n = index.len();
    let mut ids = index.ids().to_vec();
    ids.sort_unstable();
    let linked_in_pool = linked.iter().filter(|(a, b)| a < b && index.contains(*a) && index.contains(*b)).count();
    let possible = (n * n.saturating_sub(1) / 2).saturating_sub(linked_in_pool);
    if possible == 0 {
        return Err(Error::Argument(format!("only {n} posts indexed; no non-duplicate pair exists")));
    }

    let want = pos.len() * neg_ratio;
    let mut rng = util::rng(seed);
    let mut neg = Vec::with_capacity(want);
    while neg.len() < want {
        let a = ids[rng.random_range(0..n)];
        let b = ids[rng.random_range(0..n)];
        if a == b || linked.contains(&(a, b)) {
            continue;
        }
        neg.push(index.similarity(a, b)?);
    }
    Ok(PairwiseAuc { auc: auc(&pos, &neg)?, positives: pos.len(), negatives: neg.len() })
}

/// Top-N and AUC results for one evaluated setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub top_n: BTreeMap<usize, f64>,
    pub auc: f64,
    pub query_count: usize,
    pub excluded_queries: usize,
    pub pool_size: usize,
    pub config_echo: String,
}

impl MetricsReport {
    pub fn top(&self, n: usize) -> f64 {
        self.top_n.get(&n).copied().unwrap_or(f64::NAN)
    }

    /// Top-N accuracies are non-decreasing in `N` and within `[0, 1]`.
    pub fn is_consistent(&self) -> bool {
        let v: Vec<f64> = self.top_n.values().copied().collect();
        v.iter().all(|a| (0.0..=1.0).contains(a)) && v.windows(2).all(|w| w[0] <= w[1]) && (0.0..=1.0).contains(&self.auc)
    }
}

/// Evaluates an index on a test split.
pub fn evaluate_index(
    index: &LatentIndex,
    test_pairs: &[DuplicatePair],
    annotated: &[DuplicatePair],
    opts: &EvalOptions,
    config_echo: impl Into<String>,
) -> Result<MetricsReport> {
    let top = top_n_accuracy(index, test_pairs, &opts.ns)?;
    let auc = pairwise_auc_eval(index, test_pairs, annotated, opts.neg_ratio, opts.seed)?;
    Ok(MetricsReport {
        top_n: top.accuracy,
        auc: auc.auc,
        query_count: top.query_count,
        excluded_queries: top.excluded_queries,
        pool_size: index.len(),
        config_echo: config_echo.into(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::embedding::EmbeddingStore;

    fn index(rows: &[(PostId, Vec<f32>)]) -> LatentIndex {
        let mut s = EmbeddingStore::new(rows[0].1.len(), "t");
        for (id, v) in rows {
            s.insert(*id, v).unwrap();
        }
        LatentIndex::from_store(&s).index
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
        assert!(auc(&[], &[0.1]).is_err());
        assert!(auc(&[f64::NAN], &[0.1]).is_err());
    }

    #[test]
    fn perfect_top1() {
        let idx = index(&[(1, vec![1.0, 0.0]), (2, vec![1.0, 0.01]), (3, vec![0.0, 1.0]), (4, vec![0.01, 1.0])]);
        let r = top_n_accuracy(&idx, &[DuplicatePair::new(1, 2), DuplicatePair::new(4, 3)], &DEFAULT_NS).unwrap();
        assert!(r.accuracy.values().all(|&a| a == 1.0));
        assert!(top_n_accuracy(&idx, &[], &DEFAULT_NS).is_err());
    }

    #[test]
    fn originals_at_ranks_two_and_seven() {
        // Candidates for query 100 at decreasing angles; originals 2 and 7.
        let mut rows = vec![(100, vec![1.0f32, 0.0])];
        for k in 1..=12u64 {
            let a = (k as f32 * 5.0).to_radians();
            rows.push((k, vec![a.cos(), a.sin()]));
        }
        let idx = index(&rows);
        let pairs = [DuplicatePair::new(100, 2), DuplicatePair::new(100, 7)];
        let r = top_n_accuracy(&idx, &pairs, &DEFAULT_NS).unwrap();
        assert_eq!(r.query_count, 1);
        assert_eq!(r.accuracy[&1], 0.0);
        for n in [3, 5, 10, 30] {
            assert_eq!(r.accuracy[&n], 1.0);
        }
    }

    #[test]
    fn missing_originals_excluded() {
        let idx = index(&[(1, vec![1.0, 0.0]), (2, vec![1.0, 0.0])]);
        let r = top_n_accuracy(&idx, &[DuplicatePair::new(1, 2), DuplicatePair::new(2, 9)], &[1]).unwrap();
        assert_eq!((r.query_count, r.excluded_queries), (1, 1));
    }

    #[test]
    fn pairwise_auc_geometry() {
        // Duplicates coincide; everything else is orthogonal.
        let mut rows = Vec::new();
        for c in 0..4u64 {
            let mut v = vec![0.0f32; 4];
            v[c as usize] = 1.0;
            rows.push((2 * c + 1, v.clone()));
            rows.push((2 * c + 2, v));
        }
        let pairs: Vec<_> = (0..4).map(|c| DuplicatePair::new(2 * c + 2, 2 * c + 1)).collect();
        let r = pairwise_auc_eval(&index(&rows), &pairs, &pairs, 9, 3).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.negatives, 36);
        assert_eq!(r, pairwise_auc_eval(&index(&rows), &pairs, &pairs, 9, 3).unwrap());

        let flat: Vec<_> = (1..=6).map(|i| (i, vec![1.0f32, 1.0])).collect();
        let p = [DuplicatePair::new(2, 1)];
        assert_eq!(pairwise_auc_eval(&index(&flat), &p, &p, 9, 0).unwrap().auc, 0.5);

        let two = index(&[(1, vec![1.0, 0.0]), (2, vec![0.0, 1.0])]);
        assert!(pairwise_auc_eval(&two, &[DuplicatePair::new(1, 2)], &[], 1, 0).is_err());
        assert!(pairwise_auc_eval(&two, &[DuplicatePair::new(1, 2)], &[], 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn auc_is_antisymmetric(pos in prop::collection::hash_set(-1000i32..1000, 1..30), neg in prop::collection::hash_set(1000i32..3000, 1..30), shift in -2500i32..0) {
            let pos: Vec<f64> = pos.into_iter().map(|x| x as f64 / 7.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|x| (x + shift) as f64 / 7.0 + 1e-3).collect();
            let sum = auc(&pos, &neg).unwrap() + auc(&neg, &pos).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
