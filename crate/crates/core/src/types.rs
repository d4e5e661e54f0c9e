//! Shared vocabulary: polarities, label spaces, domains, samples and predictions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Sentiment polarity of a review.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    /// Lowercase English word for the polarity.
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

/// Canonical lowercase label word, the same form models are asked to answer with.
pub fn canonical_label_string(p: Polarity) -> &'static str {
    p.as_str()
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Closed set of classes a dataset is labelled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSpace {
    /// positive, negative
    Binary,
    /// positive, negative, neutral
    Ternary,
}

impl LabelSpace {
    /// Members in the fixed order used for confusion-matrix indexing.
    pub fn members(self) -> &'static [Polarity] {
        match self {
            LabelSpace::Binary => &Polarity::ALL[..2],
            LabelSpace::Ternary => &Polarity::ALL[..],
        }
    }

    pub fn contains(self, p: Polarity) -> bool {
        self.members().contains(&p)
    }

    /// Position of `p` in [`members`](Self::members).
    pub fn index_of(self, p: Polarity) -> Option<usize> {
        self.members().iter().position(|m| *m == p)
    }

    pub fn len(self) -> usize {
        self.members().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Comma-separated label words, e.g. `positive, negative`.
    pub fn label_list(self) -> String {
        self.members()
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub fn label_space_contains(s: LabelSpace, p: Polarity) -> bool {
    s.contains(p)
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSpace::Binary => "binary",
            LabelSpace::Ternary => "ternary",
        })
    }
}

/// Review domain. The three built-in domains plus free-form custom names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainTag {
    Movie,
    Finance,
    Shopping,
    Custom(String),
}

impl DomainTag {
    pub fn new(name: &str) -> Result<Self, Error> {
        let name = name.trim();
        match name {
            "" => Err(Error::InvalidDomain),
            "movie" => Ok(DomainTag::Movie),
            "finance" => Ok(DomainTag::Finance),
            "shopping" => Ok(DomainTag::Shopping),
            other => Ok(DomainTag::Custom(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            DomainTag::Movie => "movie",
            DomainTag::Finance => "finance",
            DomainTag::Shopping => "shopping",
            DomainTag::Custom(s) => s,
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainTag::new(s)
    }
}

impl Serialize for DomainTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DomainTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        DomainTag::new(&s).map_err(serde::de::Error::custom)
    }
}

/// One labelled review. Only constructible through [`Sample::new`], which
/// enforces the invariants, so downstream code never re-validates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sample {
    id: String,
    text: String,
    gold: Polarity,
    domain: DomainTag,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold: Polarity,
        domain: DomainTag,
        space: LabelSpace,
    ) -> Result<Self, Error> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if !space.contains(gold) {
            return Err(Error::LabelOutsideSpace { label: gold, space });
        }
        Ok(Sample {
            id: id.into(),
            text,
            gold,
            domain,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn gold(&self) -> Polarity {
        self.gold
    }

    pub fn domain(&self) -> &DomainTag {
        &self.domain
    }
}

/// Result of parsing a model answer: a label, or the explicit unparseable marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Label(Polarity),
    Unparseable,
}

impl Outcome {
    pub fn label(self) -> Option<Polarity> {
        match self {
            Outcome::Label(p) => Some(p),
            Outcome::Unparseable => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Label(p) => f.write_str(p.as_str()),
            Outcome::Unparseable => f.write_str("unparseable"),
        }
    }
}

// Serialized as a bare word: one of the label words or "unparseable".
impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "unparseable" {
            return Ok(Outcome::Unparseable);
        }
        s.parse()
            .map(Outcome::Label)
            .map_err(serde::de::Error::custom)
    }
}

impl From<Option<Polarity>> for Outcome {
    fn from(p: Option<Polarity>) -> Self {
        p.map_or(Outcome::Unparseable, Outcome::Label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub outcome: Outcome,
    pub raw_final_text: String,
    pub transcript_id: String,
}
