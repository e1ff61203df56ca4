use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Corpus, DuplicatePair};
use crate::error::{Error, Result};
use crate::util;

/// Train/test partition of a corpus' duplicate pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_pairs: Vec<DuplicatePair>,
    pub test_pairs: Vec<DuplicatePair>,
    pub seed: u64,
}

/// Shuffles the pairs under `seed` and cuts the first `round(ratio * n)`
/// into the training set.
pub fn split(corpus: &Corpus, ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut pairs = corpus.pairs().to_vec();
    pairs.shuffle(&mut util::rng(seed));
    let n_train = (ratio * pairs.len() as f64).round() as usize;
    let test_pairs = pairs.split_off(n_train);
    Ok(SplitSpec { train_pairs: pairs, test_pairs, seed })
}

/// Keeps posts tagged `tag` and the pairs whose endpoints both survive.
pub fn filter_by_tag(corpus: &Corpus, tag: &str) -> Result<Corpus> {
    let tag = tag.trim().to_lowercase();
    if tag.is_empty() {
        return Err(Error::Argument("tag filter must be non-empty".into()));
    }
    let posts: Vec<_> = corpus.posts().filter(|p| p.has_tag(&tag)).cloned().collect();
    let keep = |id| corpus.post(id).is_some_and(|p| p.has_tag(&tag));
    let pairs = corpus.pairs().iter().filter(|p| keep(p.dup_id) && keep(p.orig_id)).copied().collect();
    Corpus::new(posts, pairs)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::super::fixtures::post;
    use super::*;

    fn chain(n: u64) -> Corpus {
        let posts = (1..=n + 1).map(|i| post(i, "t", &["a"])).collect();
        let pairs = (1..=n).map(|i| DuplicatePair::new(i + 1, i)).collect();
        Corpus::new(posts, pairs).unwrap()
    }

    #[test]
    fn eighty_twenty() {
        let s = split(&chain(10), 0.8, 1).unwrap();
        assert_eq!((s.train_pairs.len(), s.test_pairs.len()), (8, 2));
        assert_eq!(s, split(&chain(10), 0.8, 1).unwrap());
    }

    #[test]
    fn golden_partition() {
        let s = split(&chain(8), 0.5, 42).unwrap();
        let dups = |v: &[DuplicatePair]| v.iter().map(|p| p.dup_id).collect::<Vec<_>>();
        assert_eq!(dups(&s.train_pairs).len(), 4);
        // Frozen after the first verified run; guards against RNG drift.
        assert_eq!((dups(&s.train_pairs), dups(&s.test_pairs)), golden_42());
    }

    fn golden_42() -> (Vec<u64>, Vec<u64>) {
        (vec![9, 3, 7, 6], vec![8, 2, 5, 4])
    }

    #[test]
    fn rejects_bad_ratio() {
        for r in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(split(&chain(3), r, 0).is_err());
        }
    }

    #[test]
    fn tag_filter() {
        let posts = vec![
            post(1, "a", &["x"]),
            post(2, "b", &["x", "y"]),
            post(3, "c", &["y"]),
            post(4, "d", &["x"]),
        ];
        let pairs = vec![DuplicatePair::new(2, 1), DuplicatePair::new(3, 2), DuplicatePair::new(4, 3)];
        let c = Corpus::new(posts, pairs).unwrap();
        let x = filter_by_tag(&c, "X").unwrap();
        assert_eq!(x.posts().map(|p| p.id).collect::<Vec<_>>(), [1, 2, 4]);
        assert_eq!(x.pairs(), &[DuplicatePair::new(2, 1)]);
        let y = filter_by_tag(&c, "y").unwrap();
        assert_eq!(y.pairs(), &[DuplicatePair::new(3, 2)]);
        assert!(filter_by_tag(&c, "zzz").unwrap().is_empty());
        assert!(filter_by_tag(&c, " ").is_err());
        assert_eq!(filter_by_tag(&chain(4), "a").unwrap(), chain(4));
    }

    #[test]
    fn tag_on_no_pair_endpoint() {
        let c = Corpus::new(
            vec![post(1, "a", &["x"]), post(2, "b", &["y"]), post(3, "c", &["z"])],
            vec![DuplicatePair::new(2, 3)],
        )
        .unwrap();
        let f = filter_by_tag(&c, "x").unwrap();
        assert_eq!((f.len(), f.pairs().len()), (1, 0));
    }

    proptest! {
        #[test]
        fn split_partitions(n in 1u64..60, ratio in 0.01f64..0.99, seed: u64) {
            let c = chain(n);
            let s = split(&c, ratio, seed).unwrap();
            let train: HashSet<_> = s.train_pairs.iter().collect();
            let test: HashSet<_> = s.test_pairs.iter().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), c.pairs().len());
            let frac = s.train_pairs.len() as f64 - ratio * n as f64;
            prop_assert!(frac.abs() <= 1.0);
        }

        #[test]
        fn filtered_pairs_are_subset(seed: u64) {
            let c = chain(12);
            let tagged = Corpus::new(
                c.posts().map(|p| { let mut p = p.clone(); if (p.id ^ seed) % 3 == 0 { p.tags = vec!["b".into()]; } p }).collect(),
                c.pairs().to_vec(),
            ).unwrap();
            let all: HashSet<_> = tagged.pairs().iter().collect();
            let f = filter_by_tag(&tagged, "a").unwrap();
            prop_assert!(f.pairs().iter().all(|p| all.contains(p)));
        }
    }
}
