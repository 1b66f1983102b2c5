//! Model-free pieces of rationale handling.

use alloc::string::String;
use alloc::vec::Vec;

use crate::event::Action;
use crate::step::{Anchor, CognitiveDecisionStep, DecisionStepSummary};

/// Most recent summaries offered to rationale inference.
pub const INFERENCE_BASIS_CAP: usize = 50;

/// Anchor for a step's question: the latest of its actions that carries a
/// bounding box. `actions` is the session-wide action list.
pub fn anchor_question(step: &CognitiveDecisionStep, actions: &[Action]) -> Option<Anchor> {
    let mut refs: Vec<usize> = step.action_refs().collect();
    refs.sort_unstable();
    refs.iter().rev().filter_map(|&r| actions.get(r)).find_map(|a| {
        a.bbox.map(|bbox| Anchor { element_id: a.element_id.clone(), bbox })
    })
}

/// The tail of `summaries` used as inference basis.
pub fn inference_basis(summaries: &[DecisionStepSummary]) -> &[DecisionStepSummary] {
    &summaries[summaries.len().saturating_sub(INFERENCE_BASIS_CAP)..]
}

/// Collapse text onto one line: non-empty trimmed lines joined with `"; "`.
pub fn single_line(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !out.is_empty() {
            out.push_str("; ");
        }
        out.push_str(line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{ActionType, BBox};
    use crate::step::{ActionGroup, GroupingBasis};
    use alloc::string::ToString;
    use alloc::vec;

    fn action(el: &str, bbox: Option<BBox>) -> Action {
        Action {
            ts: 0.0,
            element_id: el.to_string(),
            element_name: el.to_string(),
            action_type: ActionType::Move,
            property: None,
            old_value: None,
            new_value: None,
            bbox,
            snapshot_ref: None,
        }
    }

    fn step(refs: &[usize]) -> CognitiveDecisionStep {
        let mut s = CognitiveDecisionStep::new("s0");
        if !refs.is_empty() {
            s.action_groups.push(ActionGroup {
                group_id: 0,
                action_refs: refs.to_vec(),
                grouping_basis: GroupingBasis::SingleElementRun,
            });
        }
        s
    }

    #[test]
    fn last_action_wins() {
        let acts = vec![
            action("A", Some(BBox::new(0.0, 0.0, 10.0, 10.0))),
            action("B", Some(BBox::new(5.0, 5.0, 10.0, 10.0))),
        ];
        let a = anchor_question(&step(&[0, 1]), &acts).unwrap();
        assert_eq!(a.element_id, "B");
        assert_eq!(a.bbox, BBox::new(5.0, 5.0, 10.0, 10.0));
    }

    #[test]
    fn falls_back_to_earlier_bbox() {
        let acts = vec![action("A", Some(BBox::new(0.0, 0.0, 1.0, 1.0))), action("B", None)];
        assert_eq!(anchor_question(&step(&[0, 1]), &acts).unwrap().element_id, "A");
        assert!(anchor_question(&step(&[]), &acts).is_none());
        assert!(anchor_question(&step(&[1]), &acts).is_none());
    }

    #[test]
    fn basis_is_capped_tail() {
        let sums: Vec<DecisionStepSummary> = (0..60)
            .map(|i| DecisionStepSummary {
                step_id: alloc::format!("s{i}"),
                decision_and_actions: "d".to_string(),
                rationale: "r".to_string(),
                progression: "p".to_string(),
                snapshot_refs: vec![],
            })
            .collect();
        let b = inference_basis(&sums);
        assert_eq!(b.len(), 50);
        assert_eq!(b[0].step_id, "s10");
        assert_eq!(inference_basis(&sums[..3]).len(), 3);
    }

    #[test]
    fn single_line_joins() {
        assert_eq!(single_line("a\n\n  b \r\nc"), "a; b; c");
        assert_eq!(single_line("one"), "one");
    }
}
