//! Explanation-quality categories and their aggregation into a single grade.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fine-grained explanation label.
///
/// `S-*` codes are strong rationales (situational relevance, prior knowledge,
/// compared alternatives), `W-*` their superficial counterparts, `E` no
/// rationale at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryCode {
    #[serde(rename = "S-SR")]
    StrongSituation,
    #[serde(rename = "S-PK")]
    StrongKnowledge,
    #[serde(rename = "S-CA")]
    StrongAlternatives,
    #[serde(rename = "W-SR")]
    WeakSituation,
    #[serde(rename = "W-PK")]
    WeakKnowledge,
    #[serde(rename = "W-CA")]
    WeakAlternatives,
    #[serde(rename = "E")]
    Empty,
}

impl CategoryCode {
    pub const ALL: [CategoryCode; 7] = [
        CategoryCode::StrongSituation,
        CategoryCode::StrongKnowledge,
        CategoryCode::StrongAlternatives,
        CategoryCode::WeakSituation,
        CategoryCode::WeakKnowledge,
        CategoryCode::WeakAlternatives,
        CategoryCode::Empty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryCode::StrongSituation => "S-SR",
            CategoryCode::StrongKnowledge => "S-PK",
            CategoryCode::StrongAlternatives => "S-CA",
            CategoryCode::WeakSituation => "W-SR",
            CategoryCode::WeakKnowledge => "W-PK",
            CategoryCode::WeakAlternatives => "W-CA",
            CategoryCode::Empty => "E",
        }
    }

    pub fn is_strong(self) -> bool {
        matches!(
            self,
            CategoryCode::StrongSituation
                | CategoryCode::StrongKnowledge
                | CategoryCode::StrongAlternatives
        )
    }

    pub fn is_weak(self) -> bool {
        matches!(
            self,
            CategoryCode::WeakSituation | CategoryCode::WeakKnowledge | CategoryCode::WeakAlternatives
        )
    }
}

impl fmt::Display for CategoryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category code `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for CategoryCode {
    type Err = UnknownCategory;

    /// Accepts the canonical codes, ignoring case and surrounding whitespace.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        CategoryCode::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownCategory(String::from(t)))
    }
}

/// Overall explanation grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Overall {
    Strong,
    Weak,
    Empty,
}

impl Overall {
    pub const ALL: [Overall; 3] = [Overall::Strong, Overall::Weak, Overall::Empty];

    pub fn as_str(self) -> &'static str {
        match self {
            Overall::Strong => "Strong",
            Overall::Weak => "Weak",
            Overall::Empty => "Empty",
        }
    }
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Overall {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Overall::ALL
            .iter()
            .copied()
            .find(|o| o.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownCategory(String::from(t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AssessmentError {
    #[error("category set is empty")]
    EmptyCategorySet,
}

/// Grade a category set: any strong code wins, then any weak code, else empty.
pub fn aggregate_assessment(categories: &[CategoryCode]) -> Result<Overall, AssessmentError> {
    if categories.is_empty() {
        return Err(AssessmentError::EmptyCategorySet);
    }
    if categories.iter().any(|c| c.is_strong()) {
        Ok(Overall::Strong)
    } else if categories.iter().any(|c| c.is_weak()) {
        Ok(Overall::Weak)
    } else {
        Ok(Overall::Empty)
    }
}

/// Categories assigned to one explanation, with the derived grade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationAssessment {
    pub categories: Vec<CategoryCode>,
    pub overall: Overall,
    pub reason: String,
}

impl ExplanationAssessment {
    /// Sorts and deduplicates `categories`, then derives `overall`.
    pub fn new(
        mut categories: Vec<CategoryCode>,
        reason: impl Into<String>,
    ) -> Result<Self, AssessmentError> {
        categories.sort();
        categories.dedup();
        let overall = aggregate_assessment(&categories)?;
        Ok(ExplanationAssessment { categories, overall, reason: reason.into() })
    }
}
