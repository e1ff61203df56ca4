use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::clean::AnnotationRules;
use super::{normalize_tags, Corpus, DuplicatePair, Post, PostId};
use crate::error::{Error, Result};

/// Fraction of malformed records above which ingestion aborts.
const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Deserialize)]
struct RawPost {
    id: u64,
    title: String,
    body: String,
    #[serde(default)]
    tags: Vec<String>,
    created: DateTime<Utc>,
}

/// A record that could not be parsed. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub source: &'static str,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub post_lines: usize,
    pub link_lines: usize,
    pub errors: Vec<RecordError>,
    /// Pairs dropped because an endpoint is missing from the posts source.
    pub dropped_missing: usize,
    pub dropped_self: usize,
    pub dropped_repeated: usize,
    /// Posts kept in the corpus whose cleaned text is empty.
    pub empty_text: usize,
}

/// Reads JSON-lines posts and a `dup_id,orig_id` CSV into a validated corpus.
pub fn ingest<P: BufRead, L: Read>(posts_source: P, links_source: L, rules: &AnnotationRules) -> Result<(Corpus, IngestReport)> {
    let mut report = IngestReport::default();
    let mut posts: BTreeMap<PostId, Post> = BTreeMap::new();
    let mut post_errors = 0usize;

    for (idx, line) in posts_source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.post_lines += 1;
        let lineno = idx + 1;
        let parsed = serde_json::from_str::<RawPost>(&line)
            .map_err(|e| e.to_string())
            .and_then(|raw| {
                if raw.id == 0 {
                    Err("post id must be positive".to_string())
                } else if posts.contains_key(&raw.id) {
                    Err(format!("repeated post id {}", raw.id))
                } else {
                    Ok(raw)
                }
            });
        match parsed {
            Ok(raw) => {
                let (title, body) = rules.clean_post(&raw.title, &raw.body);
                let post = Post { id: raw.id, title, body, tags: normalize_tags(&raw.tags), created: raw.created };
                posts.insert(post.id, post);
            }
            Err(message) => {
                post_errors += 1;
                log::warn!("posts line {lineno}: {message}");
                report.errors.push(RecordError { source: "posts", line: lineno, message });
            }
        }
    }
    check_malformed("posts", post_errors, report.post_lines)?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(links_source);
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if headers.len() != 2 || &headers[0] != "dup_id" || &headers[1] != "orig_id" {
        return Err(Error::Parse { line: 1, message: "expected header \"dup_id,orig_id\"".into() });
    }
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut link_errors = 0usize;
    for record in reader.records() {
        report.link_lines += 1;
        let parsed = record.map_err(|e| e.to_string()).and_then(|r| {
            let line = r.position().map_or(0, |p| p.line() as usize);
            match (r.get(0).map(str::parse::<u64>), r.get(1).map(str::parse::<u64>), r.len()) {
                (Some(Ok(d)), Some(Ok(o)), 2) => Ok(DuplicatePair::new(d, o)),
                _ => Err(format!("line {line}: expected two unsigned ids")),
            }
        });
        let pair = match parsed {
            Ok(p) => p,
            Err(message) => {
                link_errors += 1;
                log::warn!("links record {}: {message}", report.link_lines);
                report.errors.push(RecordError { source: "links", line: report.link_lines + 1, message });
                continue;
            }
        };
        if pair.dup_id == pair.orig_id {
            report.dropped_self += 1;
        } else if !posts.contains_key(&pair.dup_id) || !posts.contains_key(&pair.orig_id) {
            report.dropped_missing += 1;
        } else if !seen.insert(pair) {
            report.dropped_repeated += 1;
        } else {
            pairs.push(pair);
        }
    }
    check_malformed("links", link_errors, report.link_lines)?;
    if report.dropped_missing > 0 {
        log::warn!("dropped {} pairs referencing missing posts", report.dropped_missing);
    }

    let corpus = Corpus::new(posts.into_values().collect(), pairs)?;
    report.empty_text = corpus.empty_text_count();
    Ok((corpus, report))
}

fn check_malformed(source: &str, bad: usize, total: usize) -> Result<()> {
    if total > 0 && bad as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::Parse {
            line: 0,
            message: format!("{bad} of {total} {source} records malformed (limit 10%)"),
        });
    }
    Ok(())
}

/// [`ingest`] over files on disk.
pub fn ingest_files(posts: impl AsRef<Path>, links: impl AsRef<Path>, rules: &AnnotationRules) -> Result<(Corpus, IngestReport)> {
    let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
    let posts_file = BufReader::new(open(posts.as_ref())?);
    let links_file = open(links.as_ref())?;
    ingest(posts_file, links_file, rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: u64, title: &str) -> String {
        format!(r#"{{"id":{id},"title":"{title}","body":"<p>b{id}</p>","tags":["Go"],"created":"2021-01-01T00:00:00Z"}}"#)
    }

    fn run(posts: &str, links: &str) -> Result<(Corpus, IngestReport)> {
        ingest(posts.as_bytes(), links.as_bytes(), &AnnotationRules::default())
    }

    #[test]
    fn minimal_input() {
        let posts = [line(1, "a [duplicate]"), line(2, "b"), line(3, "c")].join("\n");
        let (c, r) = run(&posts, "dup_id,orig_id\n1,2\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.pairs(), &[DuplicatePair::new(1, 2)]);
        assert_eq!(c.post(1).unwrap().title, "a");
        assert_eq!(c.post(1).unwrap().body, "b1");
        assert_eq!(c.post(1).unwrap().tags, vec!["go"]);
        assert_eq!(r.dropped_missing, 0);
    }

    #[test]
    fn missing_reference_dropped() {
        let posts = [line(1, "a"), line(2, "b")].join("\n");
        let (c, r) = run(&posts, "dup_id,orig_id\n1,2\n1,9\n2,2\n1,2\n").unwrap();
        assert_eq!(c.pairs().len(), 1);
        assert_eq!(r.dropped_missing, 1);
        assert_eq!(r.dropped_self, 1);
        assert_eq!(r.dropped_repeated, 1);
    }

    #[test]
    fn malformed_line_is_recorded() {
        let mut lines: Vec<String> = (1..=10).map(|i| line(i, "t")).collect();
        lines.insert(4, "{not json".into());
        let (c, r) = run(&lines.join("\n"), "dup_id,orig_id\n").unwrap();
        assert_eq!(c.len(), 10);
        assert_eq!(r.errors.len(), 1);
        assert_eq!(r.errors[0].line, 5);
    }

    #[test]
    fn too_many_malformed_is_fatal() {
        let lines = [line(1, "a"), "garbage".into(), line(2, "b")].join("\n");
        assert!(matches!(run(&lines, "dup_id,orig_id\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(run(&line(1, "a"), "a,b\n1,2\n").is_err());
    }
}
