use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::Serialize;

use super::{Corpus, PostId};
use crate::error::Result;

/// Duplicate statistics for one topic (tag).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TopicStats {
    /// Posts with the tag that take part in any duplicate pair.
    pub dup_posts: usize,
    /// Pairs with at least one endpoint carrying the tag.
    pub dup_pairs: usize,
    pub total_posts: usize,
    /// `dup_posts / total_posts`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CensusReport {
    pub per_topic: BTreeMap<String, TopicStats>,
    pub pair_count: usize,
    pub common_tag_pairs: usize,
    pub common_tag_rate: f64,
    /// Posts appearing in at least one pair, either side.
    pub annotated_posts: usize,
    pub mean_dups_per_post: f64,
    pub single_dup_fraction: f64,
    /// Fraction of annotated posts not directly linked to every member of
    /// their connected component, i.e. links missing under transitivity.
    pub incomplete_closure_fraction: f64,
    pub empty_text_posts: usize,
    /// Set when there are no pairs and the per-post statistics are reported as 0.
    pub degenerate: bool,
}

pub fn census(corpus: &Corpus) -> CensusReport {
    let mut report = CensusReport {
        pair_count: corpus.pairs().len(),
        empty_text_posts: corpus.empty_text_count(),
        degenerate: corpus.pairs().is_empty(),
        ..Default::default()
    };

    let linked = corpus.linked();
    for post in corpus.posts() {
        for tag in &post.tags {
            let entry = report.per_topic.entry(tag.clone()).or_default();
            entry.total_posts += 1;
            if linked.contains_key(&post.id) {
                entry.dup_posts += 1;
            }
        }
    }

    for pair in corpus.pairs() {
        let (dup, orig) = (corpus.post(pair.dup_id).unwrap(), corpus.post(pair.orig_id).unwrap());
        if dup.shares_tag(orig) {
            report.common_tag_pairs += 1;
        }
        let tags: HashSet<&String> = dup.tags.iter().chain(&orig.tags).collect();
        for tag in tags {
            report.per_topic.get_mut(tag.as_str()).expect("tag counted above").dup_pairs += 1;
        }
    }
    for stats in report.per_topic.values_mut() {
        stats.ratio = fraction(stats.dup_posts, stats.total_posts);
    }

    report.common_tag_rate = fraction(report.common_tag_pairs, report.pair_count);
    report.annotated_posts = linked.len();
    if !linked.is_empty() {
        let total: usize = linked.values().map(HashSet::len).sum();
        let single = linked.values().filter(|s| s.len() == 1).count();
        report.mean_dups_per_post = total as f64 / linked.len() as f64;
        report.single_dup_fraction = fraction(single, linked.len());

        let sizes = component_sizes(&linked);
        let incomplete = linked.iter().filter(|(id, direct)| direct.len() + 1 < sizes[*id]).count();
        report.incomplete_closure_fraction = fraction(incomplete, linked.len());
    }
    report
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Size of the connected component containing each node.
fn component_sizes(adj: &HashMap<PostId, HashSet<PostId>>) -> HashMap<PostId, usize> {
    let mut out = HashMap::with_capacity(adj.len());
    let mut ids: Vec<PostId> = adj.keys().copied().collect();
    ids.sort_unstable();
    for start in ids {
        if out.contains_key(&start) {
            continue;
        }
        let mut members = vec![start];
        let mut seen: HashSet<PostId> = HashSet::from([start]);
        let mut i = 0;
        while i < members.len() {
            for &next in &adj[&members[i]] {
                if seen.insert(next) {
                    members.push(next);
                }
            }
            i += 1;
        }
        for m in &members {
            out.insert(*m, members.len());
        }
    }
    out
}

/// Writes the per-topic table as CSV, ordered by `dup_posts` descending
/// (ties by topic name), followed by a `Sum` row.
pub fn write_census_csv<W: Write>(report: &CensusReport, out: W) -> Result<()> {
    let mut rows: Vec<(&String, &TopicStats)> = report.per_topic.iter().collect();
    rows.sort_by(|a, b| b.1.dup_posts.cmp(&a.1.dup_posts).then_with(|| a.0.cmp(b.0)));

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["topic", "dup_posts", "dup_pairs", "total_posts", "ratio"]).map_err(csv_err)?;
    let mut sum = TopicStats::default();
    for (topic, s) in rows {
        sum.dup_posts += s.dup_posts;
        sum.dup_pairs += s.dup_pairs;
        sum.total_posts += s.total_posts;
        w.write_record([
            topic.clone(),
            s.dup_posts.to_string(),
            s.dup_pairs.to_string(),
            s.total_posts.to_string(),
            format!("{:.6}", s.ratio),
        ])
        .map_err(csv_err)?;
    }
    w.write_record([
        "Sum".to_string(),
        sum.dup_posts.to_string(),
        sum.dup_pairs.to_string(),
        sum.total_posts.to_string(),
        format!("{:.6}", fraction(sum.dup_posts, sum.total_posts)),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Stream(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::post;
    use super::super::DuplicatePair;
    use super::*;

    /// Ten posts with a hand-counted tag distribution.
    fn fixture() -> Corpus {
        let posts = vec![
            post(1, "p1", &["java", "string"]),
            post(2, "p2", &["java"]),
            post(3, "p3", &["java", "arrays"]),
            post(4, "p4", &["python"]),
            post(5, "p5", &["python", "string"]),
            post(6, "p6", &["python"]),
            post(7, "p7", &["arrays"]),
            post(8, "p8", &["c"]),
            post(9, "p9", &["c", "arrays"]),
            post(10, "p10", &["string"]),
        ];
        let pairs = vec![
            DuplicatePair::new(2, 1),  // shares java
            DuplicatePair::new(3, 1),  // shares java
            DuplicatePair::new(5, 4),  // shares python
            DuplicatePair::new(7, 9),  // shares arrays
            DuplicatePair::new(10, 6), // nothing shared
        ];
        Corpus::new(posts, pairs).unwrap()
    }

    #[test]
    fn hand_counted_table() {
        let r = census(&fixture());
        let get = |t: &str| r.per_topic[t];
        // java: posts 1,2,3 all linked; pairs (2,1),(3,1)
        assert_eq!(get("java"), TopicStats { dup_posts: 3, dup_pairs: 2, total_posts: 3, ratio: 1.0 });
        // python: 4,5,6 linked; pairs (5,4),(10,6)
        assert_eq!(get("python"), TopicStats { dup_posts: 3, dup_pairs: 2, total_posts: 3, ratio: 1.0 });
        // string: 1,5,10 linked; pairs (2,1),(3,1),(5,4),(10,6)
        assert_eq!(get("string"), TopicStats { dup_posts: 3, dup_pairs: 4, total_posts: 3, ratio: 1.0 });
        // arrays: 3,7,9 linked; pairs (3,1),(7,9)
        assert_eq!(get("arrays").dup_pairs, 2);
        // c: 8 unlinked, 9 linked
        assert_eq!(get("c"), TopicStats { dup_posts: 1, dup_pairs: 1, total_posts: 2, ratio: 0.5 });
        assert_eq!(r.common_tag_pairs, 4);
        assert_eq!(r.common_tag_rate, 0.8);
        // linked posts: 1(2),2,3,4,5,6,7,9,10 → 9 posts, 10 link ends
        assert_eq!(r.annotated_posts, 9);
        assert!((r.mean_dups_per_post - 10.0 / 9.0).abs() < 1e-12);
        assert!((r.single_dup_fraction - 8.0 / 9.0).abs() < 1e-12);
        // component {1,2,3}: 2 and 3 are not linked to each other
        assert!((r.incomplete_closure_fraction - 2.0 / 9.0).abs() < 1e-12);
        assert!(!r.degenerate);
    }

    #[test]
    fn all_pairs_share_a_tag() {
        let c = Corpus::new(vec![post(1, "a", &["x"]), post(2, "b", &["x", "y"])], vec![DuplicatePair::new(1, 2)]).unwrap();
        assert_eq!(census(&c).common_tag_rate, 1.0);
    }

    #[test]
    fn zero_pairs_is_degenerate() {
        let c = Corpus::new(vec![post(1, "a", &["x"])], vec![]).unwrap();
        let r = census(&c);
        assert!(r.degenerate);
        assert_eq!(r.mean_dups_per_post, 0.0);
        assert_eq!(r.per_topic["x"].ratio, 0.0);
    }

    #[test]
    fn empty_corpus_csv_is_zero_filled() {
        let mut buf = Vec::new();
        write_census_csv(&census(&Corpus::default()), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "topic,dup_posts,dup_pairs,total_posts,ratio\nSum,0,0,0,0.000000\n");
    }

    #[test]
    fn csv_rows_are_sorted() {
        let mut buf = Vec::new();
        write_census_csv(&census(&fixture()), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let topics: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(topics, ["arrays", "java", "python", "string", "c", "Sum"]);
    }
}
