use chrono::{TimeZone, Utc};
use dupdetect::corpus::{split, PostId};
use dupdetect::embedding::{build_input, embed_corpus, OfflineHashProvider};
use dupdetect::refine::{sample_pair_batches, sample_triplets};
use dupdetect::{Corpus, DuplicatePair, Post, ProjectionHead64, SplitSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn post(id: PostId, title: &str, body: &str) -> Post {
    Post {
        id,
        title: title.into(),
        body: body.into(),
        tags: vec!["python".into()],
        created: Utc.timestamp_opt(1_600_000_000 + id as i64, 0).unwrap(),
    }
}

fn fixture() -> Corpus {
    let titles = [
        "sort a list", "sorting lists in place", "order a list", "read a file", "open file for reading",
        "parse json", "json decoding", "load json string", "http request", "regex groups",
    ];
    let posts = titles.iter().enumerate().map(|(i, t)| post(i as PostId + 1, t, &format!("how do I {t}"))).collect();
    let pairs = [(2, 1), (3, 1), (5, 4), (7, 6), (8, 6)].map(|(d, o)| DuplicatePair::new(d, o)).to_vec();
    Corpus::new(posts, pairs).unwrap()
}

#[test]
fn triplets_under_seed_seven() {
    let corpus = fixture();
    let store = embed_corpus(&corpus, &OfflineHashProvider::new(32, 0).unwrap(), 8191).unwrap().outcome.store;
    let spec = SplitSpec { train_pairs: corpus.pairs().to_vec(), test_pairs: vec![], seed: 0 };
    let triplets = sample_triplets(&corpus, &spec, &store, 7).unwrap();
    let linked = corpus.linked();
    for t in &triplets {
        assert!(corpus.pairs().contains(&DuplicatePair::new(t.anchor, t.positive)));
        assert!(t.negative != t.anchor && t.negative != t.positive);
        assert!(!linked[&t.anchor].contains(&t.negative));
    }
    let got: Vec<(PostId, PostId, PostId)> = triplets.iter().map(|t| (t.anchor, t.positive, t.negative)).collect();
    assert_eq!(got, vec![(2, 1, 3), (7, 6, 8), (3, 1, 8), (5, 4, 1), (8, 6, 7)]);
    assert_eq!(triplets, sample_triplets(&corpus, &spec, &store, 7).unwrap());
}

#[test]
fn pair_batches_eight_pairs_batch_four_seed_three() {
    let pairs: Vec<DuplicatePair> = (1..=8).map(|i| DuplicatePair::new(10 + i, i)).collect();
    let batches = sample_pair_batches(&pairs, 4, 3).unwrap();

    let mut oracle = pairs.clone();
    oracle.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let anchors: Vec<Vec<PostId>> = batches.iter().map(|b| b.anchors.clone()).collect();
    assert_eq!(anchors, oracle.chunks(4).map(|c| c.iter().map(|p| p.dup_id).collect::<Vec<_>>()).collect::<Vec<_>>());
    for b in &batches {
        assert!(b.anchors.iter().zip(&b.positives).all(|(a, p)| *a == p + 10));
    }
    assert_eq!(anchors, vec![vec![13, 18, 11, 15], vec![17, 16, 14, 12]]);
}

#[test]
fn provider_input_string() {
    let p = post(1, "Sort a map by value", "I have a map.\n\nHow do I sort it?");
    assert_eq!(build_input(&p, 8191).unwrap(), "Sort a map by value\nI have a map.\n\nHow do I sort it?");
    assert_eq!(build_input(&p, 3).unwrap(), "Sort a map b");
}

#[test]
fn head_init_golden() {
    let head = ProjectionHead64::init(4, 2, 0).unwrap();
    let bound = 0.5;
    assert!(head.weights().iter().all(|w| w.abs() <= bound));
    assert_eq!(head.bias(), &[0.0, 0.0]);
    let want = [
        0.20907541542656172, -0.03407827771038985, 0.1991432426747317, -0.4398288343658283,
        0.3791107179586186, 0.04953126878944647, 0.3289844760239993, 0.435426502913129,
    ];
    assert_eq!(head.weights(), &want);
}

#[test]
fn split_under_seed_zero() {
    let s = split(&fixture(), 0.8, 0).unwrap();
    let ids = |ps: &[DuplicatePair]| ps.iter().map(|p| (p.dup_id, p.orig_id)).collect::<Vec<_>>();
    assert_eq!(ids(&s.train_pairs), vec![(5, 4), (2, 1), (8, 6), (3, 1)]);
    assert_eq!(ids(&s.test_pairs), vec![(7, 6)]);
}
