use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Three-way tweet sentiment. The discriminant doubles as the class index,
/// and lower indices win argmax ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

pub const NUM_CLASSES: usize = 3;

impl SentimentClass {
    pub const ALL: [SentimentClass; NUM_CLASSES] = [
        SentimentClass::Negative,
        SentimentClass::Neutral,
        SentimentClass::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SentimentClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(SentimentClass::Negative),
            "neutral" => Ok(SentimentClass::Neutral),
            "positive" => Ok(SentimentClass::Positive),
            other => Err(format!("unknown sentiment class {other:?}")),
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn parses_case_insensitively() {
        assert_eq!("Positive".parse::<SentimentClass>(), Ok(SentimentClass::Positive));
        assert!("happy".parse::<SentimentClass>().is_err());
    }
}
