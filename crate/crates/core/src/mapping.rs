//! The bridge from text emotions to face expression domains.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{EmotionLabel, NUM_EMOTIONS};
use crate::gan::ExpressionDomain;

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("InvalidMapping: no entry for {0}")]
    Missing(EmotionLabel),
    #[error("InvalidMapping: unknown emotion {0:?}")]
    UnknownEmotion(String),
    #[error("InvalidMapping: unknown expression {value:?} for {emotion}")]
    UnknownDomain { emotion: String, value: String },
    #[error("InvalidMapping: {0}")]
    Syntax(String),
}

impl MappingError {
    pub fn kind(&self) -> &'static str {
        "InvalidMapping"
    }
}

/// A total table from [`EmotionLabel`] to [`ExpressionDomain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MappingTable {
    entries: [ExpressionDomain; NUM_EMOTIONS],
}

impl Default for MappingTable {
    /// Name-identical pairs, with shame sent to sadness.
    fn default() -> Self {
        use ExpressionDomain as D;
        MappingTable { entries: [D::Happiness, D::Sadness, D::Anger, D::Fear, D::Sadness, D::Disgust, D::Surprise] }
    }
}

impl MappingTable {
    pub fn map(&self, e: EmotionLabel) -> ExpressionDomain {
        self.entries[e.code()]
    }

    pub fn entries(&self) -> impl Iterator<Item = (EmotionLabel, ExpressionDomain)> + '_ {
        EmotionLabel::ALL.into_iter().map(|e| (e, self.map(e)))
    }

    /// Builds a table from name pairs. Every emotion must appear exactly once.
    pub fn from_names<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, MappingError> {
        let mut slots: [Option<ExpressionDomain>; NUM_EMOTIONS] = [None; NUM_EMOTIONS];
        for (k, v) in pairs {
            let e: EmotionLabel = k.parse().map_err(|_| MappingError::UnknownEmotion(k.to_string()))?;
            let d: ExpressionDomain =
                v.parse().map_err(|_| MappingError::UnknownDomain { emotion: k.to_string(), value: v.to_string() })?;
            if slots[e.code()].replace(d).is_some() {
                return Err(MappingError::Syntax(format!("duplicate entry for {e}")));
            }
        }
        let mut entries = [ExpressionDomain::Neutral; NUM_EMOTIONS];
        for e in EmotionLabel::ALL {
            entries[e.code()] = slots[e.code()].ok_or(MappingError::Missing(e))?;
        }
        Ok(MappingTable { entries })
    }

    /// Reads the `[emotion_map]` table of a TOML document; the default
    /// table when the section is absent.
    pub fn from_toml(doc: &str) -> Result<Self, MappingError> {
        let value: toml::Table = doc.parse().map_err(|e: toml::de::Error| MappingError::Syntax(e.message().to_string()))?;
        match value.get("emotion_map") {
            None => Ok(MappingTable::default()),
            Some(section) => MappingTable::from_value(section),
        }
    }

    /// Validates an already parsed `[emotion_map]` section.
    pub fn from_value(section: &toml::Value) -> Result<Self, MappingError> {
        let table = section.as_table().ok_or_else(|| MappingError::Syntax("emotion_map must be a table".into()))?;
        let mut pairs = Vec::with_capacity(table.len());
        for (k, v) in table {
            let v = v
                .as_str()
                .ok_or_else(|| MappingError::UnknownDomain { emotion: k.clone(), value: v.to_string() })?;
            pairs.push((k.as_str(), v));
        }
        MappingTable::from_names(pairs)
    }
}

impl fmt::Display for MappingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[emotion_map]")?;
        for (e, d) in self.entries() {
            writeln!(f, "{e} = \"{d}\"")?;
        }
        Ok(())
    }
}

impl Serialize for MappingTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<&str, &str> = self.entries().map(|(e, d)| (e.name(), d.name())).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MappingTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = BTreeMap::<String, String>::deserialize(d)?;
        MappingTable::from_names(m.iter().map(|(k, v)| (k.as_str(), v.as_str()))).map_err(serde::de::Error::custom)
    }
}

/// [`MappingTable::default`] lookup.
pub fn map_emotion(e: EmotionLabel) -> ExpressionDomain {
    MappingTable::default().map(e)
}
