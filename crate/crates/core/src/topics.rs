//! The eight-topic label schema.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

pub const NUM_TOPICS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topic {
    CovidStats,
    Vaccination,
    CovidPolitics,
    Humor,
    Lockdown,
    CivicViews,
    LifeDuringPandemic,
    WavesAndVariants,
}

impl Topic {
    /// Canonical order. Every positional array in the crate follows it.
    pub const ALL: [Topic; NUM_TOPICS] = [
        Topic::CovidStats,
        Topic::Vaccination,
        Topic::CovidPolitics,
        Topic::Humor,
        Topic::Lockdown,
        Topic::CivicViews,
        Topic::LifeDuringPandemic,
        Topic::WavesAndVariants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::CovidStats => "COVID Stats",
            Topic::Vaccination => "Vaccination",
            Topic::CovidPolitics => "COVID Politics",
            Topic::Humor => "Humor",
            Topic::Lockdown => "Lockdown",
            Topic::CivicViews => "Civic Views",
            Topic::LifeDuringPandemic => "Life During Pandemic",
            Topic::WavesAndVariants => "Waves and Variants",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Topic> {
        Topic::ALL.get(index).copied()
    }

    pub fn names() -> Vec<&'static str> {
        Topic::ALL.iter().map(|t| t.name()).collect()
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown topic '{0}'")]
pub struct UnknownTopic(pub String);

impl FromStr for Topic {
    type Err = UnknownTopic;

    /// Case-insensitive on the display name. "Humour" is accepted as an alias.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        if needle.eq_ignore_ascii_case("humour") {
            return Ok(Topic::Humor);
        }
        Topic::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownTopic(s.to_string()))
    }
}

impl Serialize for Topic {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Topic {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One boolean per topic, in canonical order.
///
/// Serialized as an object keyed by topic name so that files never depend on
/// position alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Deserialize)]
#[serde(try_from = "BTreeMap<String, bool>")]
pub struct TopicLabels(pub [bool; NUM_TOPICS]);

impl TopicLabels {
    pub fn empty() -> Self {
        TopicLabels([false; NUM_TOPICS])
    }

    pub fn from_topics<I: IntoIterator<Item = Topic>>(topics: I) -> Self {
        let mut labels = Self::empty();
        for t in topics {
            labels.0[t.index()] = true;
        }
        labels
    }

    pub fn get(&self, topic: Topic) -> bool {
        self.0[topic.index()]
    }

    pub fn set(&mut self, topic: Topic, value: bool) {
        self.0[topic.index()] = value;
    }

    pub fn topics(&self) -> impl Iterator<Item = Topic> + '_ {
        Topic::ALL.iter().copied().filter(|t| self.get(*t))
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|v| **v).count()
    }

    pub fn as_f64(&self) -> [f64; NUM_TOPICS] {
        self.0.map(|v| if v { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelsError {
    #[error("missing topic(s): {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("unknown topic '{0}'; allowed: {allowed}", allowed = Topic::names().join(", "))]
    Unknown(String),
}

impl TryFrom<BTreeMap<String, bool>> for TopicLabels {
    type Error = LabelsError;

    fn try_from(map: BTreeMap<String, bool>) -> Result<Self, Self::Error> {
        let mut labels = TopicLabels::empty();
        let mut seen = [false; NUM_TOPICS];
        for (name, value) in map {
            let topic: Topic = name.parse().map_err(|_| LabelsError::Unknown(name.clone()))?;
            labels.set(topic, value);
            seen[topic.index()] = true;
        }
        let missing: Vec<String> = Topic::ALL
            .iter()
            .filter(|t| !seen[t.index()])
            .map(|t| t.name().to_string())
            .collect();
        if missing.is_empty() {
            Ok(labels)
        } else {
            Err(LabelsError::Missing(missing))
        }
    }
}

impl Serialize for TopicLabels {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(NUM_TOPICS))?;
        for t in Topic::ALL {
            map.serialize_entry(t.name(), &self.get(t))?;
        }
        map.end()
    }
}
