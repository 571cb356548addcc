//! Text cleaning. The five steps run in a fixed order:
//!
//! 1. remove user mentions and links, lowercase Latin letters
//! 2. collapse whitespace runs to one space
//! 3. drop a trailing "via ..." attribution
//! 4. trim, and drop tweets with three or fewer words
//! 5. NFKC normalization
//!
//! A handful of compatibility characters only become mentions, links, upper
//! case Latin or whitespace after step 5 (fullwidth `＠`, `Ⓐ`, `¨`, ...). For
//! those inputs the pipeline repeats the five steps until the text stops
//! changing, so its output is always a fixed point.

use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::{is_nfkc, UnicodeNormalization};

use crate::ingest::RawTweet;

pub const MIN_WORDS: usize = 4;
const MAX_PASSES: usize = 8;

static MENTION_OR_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S*|@\w+").unwrap());

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTweet {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub word_count: usize,
}

/// True for letters of the Latin script (including fullwidth forms).
fn is_latin(c: char) -> bool {
    matches!(c,
        'A'..='Z' | 'a'..='z'
        | '\u{00C0}'..='\u{00D6}' | '\u{00D8}'..='\u{00F6}' | '\u{00F8}'..='\u{024F}'
        | '\u{1E00}'..='\u{1EFF}'
        | '\u{2C60}'..='\u{2C7F}'
        | '\u{A720}'..='\u{A7FF}'
        | '\u{FF21}'..='\u{FF3A}' | '\u{FF41}'..='\u{FF5A}')
}

pub fn lowercase_latin(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_latin(c) {
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

pub fn strip_mentions_links_lowercase(text: &str) -> String {
    let stripped = MENTION_OR_LINK.replace_all(text, "");
    lowercase_latin(&stripped)
}

pub fn collapse_spaces(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out
}

/// Cuts the text at the first whitespace-delimited token equal to "via"
/// (ASCII case-insensitive). Text before the token, including its
/// separating space, is kept.
pub fn strip_via_attribution(text: &str) -> String {
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if is_via(&text[start..i]) {
                return text[..start].to_string();
            }
            start = i + c.len_utf8();
        }
    }
    if is_via(&text[start..]) {
        return text[..start].to_string();
    }
    text.to_string()
}

fn is_via(token: &str) -> bool {
    token.eq_ignore_ascii_case("via")
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn trim_and_length_gate(text: &str) -> Option<String> {
    let trimmed = text.trim();
    (word_count(trimmed) >= MIN_WORDS).then(|| trimmed.to_string())
}

pub fn nfkc_normalize(text: &str) -> String {
    text.nfkc().collect()
}

/// Which of the five steps modified the text during the first pass, and
/// whether the length gate dropped it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepTrace {
    pub changed: [bool; 5],
    pub dropped: bool,
    pub passes: usize,
}

/// One literal pass of steps 1 through 5.
pub fn single_pass(text: &str) -> (Option<String>, [bool; 5]) {
    let mut changed = [false; 5];
    let s1 = strip_mentions_links_lowercase(text);
    changed[0] = s1 != text;
    let s2 = collapse_spaces(&s1);
    changed[1] = s2 != s1;
    let s3 = strip_via_attribution(&s2);
    changed[2] = s3 != s2;
    let Some(s4) = trim_and_length_gate(&s3) else {
        return (None, changed);
    };
    changed[3] = s4 != s3;
    let s5 = nfkc_normalize(&s4);
    changed[4] = s5 != s4;
    (Some(s5), changed)
}

pub fn clean_text_traced(text: &str) -> (Option<String>, StepTrace) {
    let mut trace = StepTrace::default();
    let (mut current, changed) = single_pass(text);
    trace.changed = changed;
    trace.passes = 1;
    while let Some(cur) = current.as_deref() {
        if trace.passes >= MAX_PASSES {
            break;
        }
        let (next, _) = single_pass(cur);
        if next.as_deref() == Some(cur) {
            break;
        }
        trace.passes += 1;
        current = next;
    }
    trace.dropped = current.is_none();
    (current, trace)
}

pub fn clean_text(text: &str) -> Option<String> {
    clean_text_traced(text).0
}

pub fn preprocess_pipeline(tweet: &RawTweet) -> Option<CleanTweet> {
    let text = clean_text(&tweet.text)?;
    Some(CleanTweet {
        id: tweet.id.clone(),
        created_at: tweet.created_at,
        word_count: word_count(&text),
        text,
    })
}

/// Per-step counters over a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DropReport {
    pub input: usize,
    pub kept: usize,
    pub changed: [usize; 5],
    pub dropped_by_length: usize,
    pub extra_passes: usize,
}

impl DropReport {
    pub fn record(&mut self, trace: &StepTrace) {
        self.input += 1;
        for (count, changed) in self.changed.iter_mut().zip(trace.changed) {
            *count += changed as usize;
        }
        if trace.dropped {
            self.dropped_by_length += 1;
        } else {
            self.kept += 1;
        }
        self.extra_passes += trace.passes.saturating_sub(1);
    }

    pub const STEP_NAMES: [&'static str; 5] = [
        "strip_mentions_links_lowercase",
        "collapse_spaces",
        "strip_via_attribution",
        "trim_and_length_gate",
        "nfkc_normalize",
    ];

    /// CSV with one row per step: `step,name,changed,dropped`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,name,changed,dropped\n");
        for (i, name) in Self::STEP_NAMES.iter().enumerate() {
            let dropped = if i == 3 { self.dropped_by_length } else { 0 };
            out.push_str(&format!("{},{},{},{}\n", i + 1, name, self.changed[i], dropped));
        }
        out
    }
}

/// Runs the pipeline over a batch, returning survivors and the drop report.
pub fn preprocess_all<'a, I>(tweets: I) -> (Vec<CleanTweet>, DropReport)
where
    I: IntoIterator<Item = &'a RawTweet>,
{
    let mut report = DropReport::default();
    let mut kept = Vec::new();
    for tweet in tweets {
        let (text, trace) = clean_text_traced(&tweet.text);
        report.record(&trace);
        if let Some(text) = text {
            kept.push(CleanTweet {
                id: tweet.id.clone(),
                created_at: tweet.created_at,
                word_count: word_count(&text),
                text,
            });
        }
    }
    (kept, report)
}

/// Checks the output invariants of a cleaned text.
pub fn is_clean(text: &str) -> bool {
    text == text.trim()
        && !text.contains("  ")
        && !text.chars().any(|c| c.is_whitespace() && c != ' ')
        && !MENTION_OR_LINK.is_match(text)
        && word_count(text) >= MIN_WORDS
        && is_nfkc(text)
}
