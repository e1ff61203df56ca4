//! Removal of duplicate-closure annotations, markup and bulky artifacts.
//!
//! Closed duplicates carry text that leaks the label: a `[duplicate]` title
//! suffix, a "Possible Duplicate:" notice block and free-form trailers
//! added by editors. All of it is stripped before embedding.

use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};

/// Tokens longer than this many characters are dropped by default.
pub const DEFAULT_MAX_RUN: usize = 200;

const FIXPOINT_ROUNDS: usize = 8;

static CODE_PRE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<pre\b[^>]*>.*?</pre\s*>").unwrap());
static CODE_FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```.*?```").unwrap());
static BLOCKQUOTE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<blockquote\b[^>]*>(.*?)</blockquote\s*>").unwrap());
static BLOCK_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)</?(?:p|br|div|li|ul|ol|h[1-6]|blockquote|tr|table|hr)\b[^>]*>").unwrap()
});
static ANY_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)</?[a-zA-Z!][^>]*>").unwrap());
static HSPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t\u{a0}\r]+").unwrap());
static MANY_NEWLINES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n{3,}").unwrap());
static DATA_URI: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)data:[a-z0-9.+/-]+(?:;[a-z0-9=.-]+)*;base64,[A-Za-z0-9+/=_-]*").unwrap()
});
static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\S+").unwrap());

/// Ordered regex lists describing duplicate annotations.
///
/// `title` patterns are removed from the title, `notice_blocks` decide
/// whether a `<blockquote>` is a duplicate notice (matched against its inner
/// HTML) and `trailers` are removed from the tag-free body text line by line.
#[derive(Debug, Clone)]
pub struct AnnotationRules {
    pub title: Vec<Regex>,
    pub notice_blocks: Vec<Regex>,
    pub trailers: Vec<Regex>,
}

impl Default for AnnotationRules {
    fn default() -> Self {
        let compile = |ps: &[&str]| ps.iter().map(|p| Regex::new(p).unwrap()).collect();
        Self {
            title: compile(&[r"(?i)\s*\[\s*(?:possible |exact )?duplicate\s*\]\s*$"]),
            notice_blocks: compile(&[
                r"(?i)possible duplicates?\s*:",
                r"(?i)this question already has (?:an )?answers? here",
                r"(?i)\bduplicate of\b",
            ]),
            trailers: compile(&[
                r"(?im)^[ \t]*(?:possible|exact|probable) duplicates?\s*(?:of\b|:).*$",
                r"(?im)^[ \t]*[*_]*(?:edit|update|note)\b[^\n]{0,24}?\bduplicate\b.*$",
                r"(?im)^[ \t]*(?:this|the) (?:question |post )?(?:is|was|has been) (?:marked (?:as )?)?(?:a |an )?(?:possible |exact )?duplicate\b.*$",
                r"(?im)^[ \t]*(?:this question already has answers? here|marked as duplicate by)\b.*$",
                r"(?im)^[ \t]*duplicate(?: of)?\s*:.*$",
            ]),
        }
    }
}

impl AnnotationRules {
    /// Appends a trailer pattern after the defaults.
    pub fn push_trailer(&mut self, pattern: &str) -> Result<()> {
        let re = Regex::new(pattern).map_err(|e| Error::Argument(format!("bad pattern: {e}")))?;
        self.trailers.push(re);
        Ok(())
    }

    pub fn clean_title(&self, raw: &str) -> String {
        fixpoint(raw, |s| {
            let mut s = html_escape::decode_html_entities(s).into_owned();
            for re in &self.title {
                s = re.replace(&s, "").into_owned();
            }
            HSPACE.replace_all(&s.replace('\n', " "), " ").trim().to_string()
        })
    }

    pub fn clean_body(&self, raw: &str) -> String {
        fixpoint(raw, |s| {
            let s = CODE_PRE.replace_all(s, "\n");
            let s = CODE_FENCE.replace_all(&s, "\n");
            let s = BLOCKQUOTE.replace_all(&s, |caps: &regex::Captures| {
                let inner = &caps[1];
                if self.notice_blocks.iter().any(|re| re.is_match(inner)) {
                    "\n".to_string()
                } else {
                    caps[0].to_string()
                }
            });
            let s = BLOCK_TAG.replace_all(&s, "\n");
            let s = ANY_TAG.replace_all(&s, "");
            let mut s = html_escape::decode_html_entities(&s).into_owned();
            for re in &self.trailers {
                s = re.replace_all(&s, "").into_owned();
            }
            normalize_whitespace(&s)
        })
    }

    /// Full cleaning applied at ingest: annotations, markup, then bulky runs.
    pub fn clean_post(&self, raw_title: &str, raw_body: &str) -> (String, String) {
        let body = strip_bulky_artifacts(&self.clean_body(raw_body), DEFAULT_MAX_RUN);
        (self.clean_title(raw_title), body)
    }
}

fn fixpoint(input: &str, step: impl Fn(&str) -> String) -> String {
    let mut current = step(input);
    for _ in 0..FIXPOINT_ROUNDS {
        let next = step(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_whitespace(s: &str) -> String {
    let s = HSPACE.replace_all(s, " ");
    let lines: Vec<&str> = s.split('\n').map(str::trim).collect();
    MANY_NEWLINES.replace_all(&lines.join("\n"), "\n\n").trim().to_string()
}

/// Strips duplicate annotations, markup and code blocks using the default rules.
pub fn strip_annotations(raw_title: &str, raw_body: &str) -> (String, String) {
    static RULES: LazyLock<AnnotationRules> = LazyLock::new(AnnotationRules::default);
    (RULES.clean_title(raw_title), RULES.clean_body(raw_body))
}

/// Removes data URIs and any whitespace-delimited token longer than
/// `max_run` characters. A token of exactly `max_run` characters is kept.
pub fn strip_bulky_artifacts(body: &str, max_run: usize) -> String {
    let s = DATA_URI.replace_all(body, "");
    let s = TOKEN.replace_all(&s, |caps: &regex::Captures| {
        let tok = &caps[0];
        if tok.chars().count() > max_run {
            String::new()
        } else {
            tok.to_string()
        }
    });
    normalize_whitespace(&s)
}
