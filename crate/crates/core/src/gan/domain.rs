use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Face-side expression domains, with stable codes 0..6 in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionDomain {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Neutral,
    Sadness,
    Surprise,
}

pub const NUM_DOMAINS: usize = 7;

impl ExpressionDomain {
    pub const ALL: [ExpressionDomain; NUM_DOMAINS] = [
        ExpressionDomain::Anger,
        ExpressionDomain::Disgust,
        ExpressionDomain::Fear,
        ExpressionDomain::Happiness,
        ExpressionDomain::Neutral,
        ExpressionDomain::Sadness,
        ExpressionDomain::Surprise,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ExpressionDomain::Anger => "anger",
            ExpressionDomain::Disgust => "disgust",
            ExpressionDomain::Fear => "fear",
            ExpressionDomain::Happiness => "happiness",
            ExpressionDomain::Neutral => "neutral",
            ExpressionDomain::Sadness => "sadness",
            ExpressionDomain::Surprise => "surprise",
        }
    }
}

impl fmt::Display for ExpressionDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown expression domain {0:?}")]
pub struct ParseDomainError(pub String);

impl FromStr for ExpressionDomain {
    type Err = ParseDomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| ParseDomainError(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        for (i, d) in ExpressionDomain::ALL.iter().enumerate() {
            assert_eq!(d.code(), i);
            assert_eq!(d.name().parse::<ExpressionDomain>().unwrap(), *d);
        }
        assert_eq!(ExpressionDomain::Surprise.code(), 6);
        assert!("contempt".parse::<ExpressionDomain>().is_err());
    }
}
