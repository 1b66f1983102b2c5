//! Pipeline configurations compared in the ablation harness.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grouping::GroupingVariant;

/// `grouping: None` is the transcript-only baseline; the two toggles are
/// meaningless for it and kept at `false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationCondition {
    pub grouping: Option<GroupingVariant>,
    pub sentence_linking: bool,
    pub sentence_assigning: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown condition label `{0}`")]
pub struct UnknownCondition(pub String);

impl AblationCondition {
    pub const BASELINE: AblationCondition =
        AblationCondition { grouping: None, sentence_linking: false, sentence_assigning: false };

    pub const fn full(variant: GroupingVariant) -> Self {
        AblationCondition { grouping: Some(variant), sentence_linking: true, sentence_assigning: true }
    }

    /// The six conditions of the reference ablation, in table order.
    pub const STANDARD: [AblationCondition; 6] = [
        AblationCondition::full(GroupingVariant::V1),
        AblationCondition::full(GroupingVariant::V2),
        AblationCondition::full(GroupingVariant::V3),
        AblationCondition {
            grouping: Some(GroupingVariant::V3),
            sentence_linking: false,
            sentence_assigning: true,
        },
        AblationCondition {
            grouping: Some(GroupingVariant::V3),
            sentence_linking: true,
            sentence_assigning: false,
        },
        AblationCondition::BASELINE,
    ];

    pub fn is_baseline(&self) -> bool {
        self.grouping.is_none()
    }

    pub fn label(&self) -> String {
        match self.grouping {
            None => String::from("BASELINE"),
            Some(v) => format!(
                "GAv{}_{}_{}",
                v.number(),
                if self.sentence_linking { "GS" } else { "IS" },
                if self.sentence_assigning { "SA" } else { "SI" },
            ),
        }
    }
}

impl Default for AblationCondition {
    fn default() -> Self {
        AblationCondition::full(GroupingVariant::default())
    }
}

impl fmt::Display for AblationCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for AblationCondition {
    type Err = UnknownCondition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || UnknownCondition(String::from(t));
        if t.eq_ignore_ascii_case("BASELINE") {
            return Ok(AblationCondition::BASELINE);
        }
        let mut parts = t.split('_');
        let (Some(ga), Some(gs), Some(sa), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let n: u8 = ga.strip_prefix("GAv").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        let grouping = GroupingVariant::from_number(n).ok_or_else(bad)?;
        let sentence_linking = match gs {
            "GS" => true,
            "IS" => false,
            _ => return Err(bad()),
        };
        let sentence_assigning = match sa {
            "SA" => true,
            "SI" => false,
            _ => return Err(bad()),
        };
        Ok(AblationCondition { grouping: Some(grouping), sentence_linking, sentence_assigning })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn labels_round_trip() {
        let labels: Vec<String> = AblationCondition::STANDARD.iter().map(|c| c.label()).collect();
        assert_eq!(
            labels,
            ["GAv1_GS_SA", "GAv2_GS_SA", "GAv3_GS_SA", "GAv3_IS_SA", "GAv3_GS_SI", "BASELINE"]
        );
        for c in AblationCondition::STANDARD {
            assert_eq!(c.label().parse::<AblationCondition>(), Ok(c));
        }
    }

    #[test]
    fn rejects_unknown() {
        for bad in ["GAv4_GS_SA", "GAv3_GS", "GAv3_XX_SA", "foo", "GAv3_GS_SA_x"] {
            assert!(bad.parse::<AblationCondition>().is_err(), "{bad}");
        }
    }
}
