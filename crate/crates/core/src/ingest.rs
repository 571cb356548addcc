//! Loading raw tweet records and the keyword/language gate applied at collection time.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::topics::{Topic, TopicLabels};

pub const DEFAULT_LANG: &str = "ne";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTweet {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source_name: String,
    /// Labels carried along from an earlier annotation export, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<Topic>>,
}

impl RawTweet {
    pub fn labels(&self) -> Option<TopicLabels> {
        self.topics
            .as_ref()
            .map(|t| TopicLabels::from_topics(t.iter().copied()))
    }

    fn validate(mut self) -> std::result::Result<Self, String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.is_empty() {
            return Err("empty text".into());
        }
        self.created_at = self.created_at.trunc_subsecs(0);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Streams [`RawTweet`]s from a JSONL source. Malformed lines are skipped and
/// remembered in [`JsonlReader::skipped`].
pub struct JsonlReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    source_name: String,
    skipped: Vec<SkippedLine>,
    path: PathBuf,
}

impl JsonlReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let source_name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(BufReader::new(file), source_name, path))
    }
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(reader: R, source_name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        JsonlReader {
            lines: reader.lines(),
            line_no: 0,
            source_name: source_name.into(),
            skipped: Vec::new(),
            path: path.into(),
        }
    }

    pub fn skipped(&self) -> &[SkippedLine] {
        &self.skipped
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<RawTweet>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<RawTweet>(&line)
                .map_err(|e| e.to_string())
                .and_then(RawTweet::validate);
            match parsed {
                Ok(mut tweet) => {
                    if tweet.source_name.is_empty() {
                        tweet.source_name.clone_from(&self.source_name);
                    }
                    return Some(Ok(tweet));
                }
                Err(reason) => {
                    log::warn!(
                        "{}:{}: skipping malformed record: {}",
                        self.path.display(),
                        self.line_no,
                        reason
                    );
                    self.skipped.push(SkippedLine {
                        line: self.line_no,
                        reason,
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedTweets {
    pub tweets: Vec<RawTweet>,
    pub skipped: Vec<SkippedLine>,
}

impl LoadedTweets {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<LoadedTweets> {
    let mut reader = JsonlReader::open(path)?;
    let tweets = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok(LoadedTweets {
        tweets,
        skipped: reader.skipped.clone(),
    })
}

/// A source of tweets that can be polled for records newer than a timestamp.
pub trait TweetSource {
    fn fetch(&self, since: DateTime<Utc>) -> Result<Vec<RawTweet>>;
}

/// File-backed source; re-reads the JSONL file on every fetch.
#[derive(Debug, Clone)]
pub struct FileSource {
    pub path: PathBuf,
}

impl FileSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileSource { path: path.into() }
    }
}

impl TweetSource for FileSource {
    fn fetch(&self, since: DateTime<Utc>) -> Result<Vec<RawTweet>> {
        let loaded = load_jsonl(&self.path)?;
        Ok(loaded
            .tweets
            .into_iter()
            .filter(|t| t.created_at >= since)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    keywords: Vec<String>,
    pub version: String,
}

fn is_devanagari(c: char) -> bool {
    matches!(c, '\u{0900}'..='\u{097F}' | '\u{A8E0}'..='\u{A8FF}')
}

impl KeywordSet {
    /// Keywords are NFKC-normalized on construction. Duplicates after
    /// normalization and keywords without any Devanagari letter are rejected.
    pub fn new<I, S>(keywords: I, version: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for raw in keywords {
            let kw: String = raw.as_ref().trim().nfkc().collect();
            if kw.is_empty() {
                return Err(Error::Config("empty keyword".into()));
            }
            if !kw.chars().any(is_devanagari) {
                return Err(Error::Config(format!(
                    "keyword '{kw}' contains no Devanagari characters"
                )));
            }
            if !seen.insert(kw.clone()) {
                return Err(Error::Config(format!(
                    "duplicate keyword after NFKC normalization: '{kw}'"
                )));
            }
            out.push(kw);
        }
        Ok(KeywordSet {
            keywords: out,
            version: version.into(),
        })
    }

    /// Parses the keyword file format: one keyword per line, `#` starts a
    /// comment line, and an optional `# version: <v>` line names the list.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut keywords = Vec::new();
        for line in contents.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            keywords.push(line);
        }
        Self::new(keywords, version)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&contents)
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// Plain substring containment after NFKC.
    pub fn matches_text(&self, text: &str) -> bool {
        let normalized: String = text.nfkc().collect();
        self.keywords.iter().any(|kw| normalized.contains(kw.as_str()))
    }
}

/// True when the tweet carries the configured language tag and contains at
/// least one keyword.
pub fn keyword_filter(tweet: &RawTweet, keywords: &KeywordSet, lang: &str) -> bool {
    tweet.lang.eq_ignore_ascii_case(lang) && keywords.matches_text(&tweet.text)
}

/// Keeps the first record for every id.
pub fn dedupe<I: IntoIterator<Item = RawTweet>>(tweets: I) -> (Vec<RawTweet>, usize) {
    let mut seen = HashSet::new();
    let mut dropped = 0;
    let kept = tweets
        .into_iter()
        .filter(|t| {
            let fresh = seen.insert(t.id.clone());
            if !fresh {
                dropped += 1;
            }
            fresh
        })
        .collect();
    (kept, dropped)
}
