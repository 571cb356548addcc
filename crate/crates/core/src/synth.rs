//! Synthetic tweet corpus with planted topic keywords.
//!
//! Every generated tweet carries one keyword per assigned topic, buried in
//! filler words that carry no topic signal, so labels are recoverable from the
//! text by construction. Used by tests, fixtures and benchmarks.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetRow, LabeledExample};
use crate::error::Result;
use crate::features::FeatureExtractor;
use crate::ingest::RawTweet;
use crate::preprocess::preprocess_pipeline;
use crate::topics::{Topic, TopicLabels, NUM_TOPICS};

/// Word present in every on-topic tweet so the ingest keyword filter keeps it.
pub const COVID_MARKER: &str = "कोरोना";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Seed for the keyword and filler vocabularies, kept apart from `seed`
    /// so corpora of different sizes share one vocabulary.
    pub vocab_seed: u64,
    pub keywords_per_topic: usize,
    pub filler_vocab: usize,
    pub filler_words: (usize, usize),
    pub extra_topic_prob: f64,
    /// Fraction of tweets whose labels are replaced by a random topic set.
    pub label_noise: f64,
    pub start: DateTime<Utc>,
    pub days: i64,
    /// Fraction of extra tweets that fail the ingest filter (wrong language
    /// or no COVID keyword); they carry no labels.
    pub distractor_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            seed: 0,
            vocab_seed: 0x5EED,
            keywords_per_topic: 6,
            filler_vocab: 300,
            filler_words: (4, 9),
            extra_topic_prob: 0.3,
            label_noise: 0.0,
            start: Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap(),
            days: 180,
            distractor_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub tweets: Vec<RawTweet>,
    pub keywords: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

const CONSONANTS: std::ops::RangeInclusive<u32> = 0x0915..=0x0939;
const VOWEL_SIGNS: [char; 8] = ['\u{093E}', '\u{093F}', '\u{0940}', '\u{0941}', '\u{0942}', '\u{0947}', '\u{0948}', '\u{094B}'];

fn pseudo_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(char::from_u32(rng.random_range(CONSONANTS)).expect("Devanagari consonant"));
        if rng.random_bool(0.6) {
            w.push(*VOWEL_SIGNS.choose(rng).expect("nonempty"));
        }
    }
    w
}

fn vocabulary(cfg: &SynthConfig) -> (Vec<Vec<String>>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.vocab_seed);
    let mut used = std::collections::HashSet::new();
    used.insert(COVID_MARKER.to_string());
    let mut fresh = |rng: &mut ChaCha8Rng, syl: usize| loop {
        let w = pseudo_word(rng, syl);
        if used.insert(w.clone()) {
            return w;
        }
    };
    let keywords = (0..NUM_TOPICS)
        .map(|_| (0..cfg.keywords_per_topic).map(|_| fresh(&mut rng, 3)).collect())
        .collect();
    let filler = (0..cfg.filler_vocab).map(|_| fresh(&mut rng, 2)).collect();
    (keywords, filler)
}

fn sample_topics<R: Rng>(rng: &mut R, extra_prob: f64) -> TopicLabels {
    let mut labels = TopicLabels::empty();
    labels.0[rng.random_range(0..NUM_TOPICS)] = true;
    while rng.random_bool(extra_prob) && labels.count() < 3 {
        labels.0[rng.random_range(0..NUM_TOPICS)] = true;
    }
    labels
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let (keywords, filler) = vocabulary(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = Duration::days(cfg.days.max(1)).num_seconds();
    let n_distractors = (cfg.n as f64 * cfg.distractor_rate).round() as usize;
    let mut tweets = Vec::with_capacity(cfg.n + n_distractors);

    for i in 0..cfg.n + n_distractors {
        let distractor = i >= cfg.n;
        let planted = sample_topics(&mut rng, cfg.extra_topic_prob);
        let n_fill = rng.random_range(cfg.filler_words.0..=cfg.filler_words.1);
        let mut words: Vec<String> = (0..n_fill)
            .map(|_| filler.choose(&mut rng).expect("filler vocabulary").clone())
            .collect();
        let mut lang = "ne";
        if distractor {
            if rng.random_bool(0.5) {
                lang = "hi";
                words.push(COVID_MARKER.into());
            }
        } else {
            words.push(COVID_MARKER.into());
            for t in planted.topics() {
                words.push(keywords[t.index()].choose(&mut rng).expect("keywords").clone());
            }
        }
        words.shuffle(&mut rng);
        let mut text = words.join(" ");
        if rng.random_bool(0.1) {
            text = format!("@user{} {text}", rng.random_range(0..100));
        }
        if rng.random_bool(0.1) {
            text.push_str(&format!(" https://t.co/x{}", rng.random_range(0..1000)));
        }
        let labels = if !distractor && rng.random_bool(cfg.label_noise.clamp(0.0, 1.0)) {
            sample_topics(&mut rng, cfg.extra_topic_prob)
        } else {
            planted
        };
        let created_at = cfg.start + Duration::seconds(rng.random_range(0..span));
        tweets.push(RawTweet {
            id: format!("{}{:06}", if distractor { "x" } else { "s" }, i),
            created_at,
            text,
            lang: lang.into(),
            source_name: "synthetic".into(),
            topics: (!distractor).then(|| labels.topics().collect()),
        });
    }
    SynthCorpus { tweets, keywords, filler }
}

impl SynthCorpus {
    /// Keyword file contents accepted by [`crate::ingest::KeywordSet::parse`].
    pub fn keyword_file(&self) -> String {
        format!("# version: synthetic-1\n{COVID_MARKER}\n")
    }

    /// Labeled tweets after preprocessing, as dataset rows.
    pub fn dataset_rows(&self) -> Vec<DatasetRow> {
        self.tweets
            .iter()
            .filter_map(|t| {
                let labels = t.labels()?;
                let clean = preprocess_pipeline(t)?;
                Some(DatasetRow {
                    tweet_id: clean.id,
                    created_at: clean.created_at,
                    text: clean.text,
                    labels,
                    status: None,
                })
            })
            .collect()
    }

    pub fn examples(&self, extractor: &dyn FeatureExtractor) -> Result<Vec<LabeledExample>> {
        crate::dataset::to_examples(&self.dataset_rows(), extractor)
    }
}

/// Topics whose planted keywords appear in `text`.
pub fn planted_topics(corpus: &SynthCorpus, text: &str) -> TopicLabels {
    let words: std::collections::HashSet<&str> = text.split_whitespace().collect();
    let mut labels = TopicLabels::empty();
    for t in Topic::ALL {
        labels.set(t, corpus.keywords[t.index()].iter().any(|k| words.contains(k.as_str())));
    }
    labels
}
