//! Baseline tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::BaselineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    NoContext,
    Random,
    FrozenSimilarity,
    FeatureAveraged,
    Blank,
    Duplicate,
    Noisy,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::NoContext,
        BaselineKind::Random,
        BaselineKind::FrozenSimilarity,
        BaselineKind::FeatureAveraged,
        BaselineKind::Blank,
        BaselineKind::Duplicate,
        BaselineKind::Noisy,
    ];

    /// Short tag used on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::NoContext => "no_context",
            BaselineKind::Random => "random",
            BaselineKind::FrozenSimilarity => "frozen_sim",
            BaselineKind::FeatureAveraged => "feat_avg",
            BaselineKind::Blank => "blank",
            BaselineKind::Duplicate => "duplicate",
            BaselineKind::Noisy => "noisy",
        }
    }

    /// Whether evaluation picks a pool candidate.
    pub fn retrieves(self) -> bool {
        matches!(self, BaselineKind::Random | BaselineKind::FrozenSimilarity | BaselineKind::FeatureAveraged)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "no_context" => BaselineKind::NoContext,
            "random" => BaselineKind::Random,
            "frozen_sim" | "frozen_similarity" => BaselineKind::FrozenSimilarity,
            "feat_avg" | "feature_averaged" => BaselineKind::FeatureAveraged,
            "blank" => BaselineKind::Blank,
            "duplicate" => BaselineKind::Duplicate,
            "noisy" => BaselineKind::Noisy,
            other => return Err(BaselineError::UnknownKind(other.to_string())),
        })
    }
}

/// Synthetic context controls that use no retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Blank,
    Duplicate,
    Noisy,
}
