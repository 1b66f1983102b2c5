//! Deterministic action linking.
//!
//! Two passes over a time-ordered action stream:
//!
//! 1. Multi-element: a maximal run of consecutive events that share
//!    `(action_type, property)`, all within the simultaneity window of the
//!    run's first event and touching at least two distinct elements, becomes
//!    one group (e.g. a fill applied to a multi-selection).
//! 2. Single-element: over the events pass 1 left, maximal runs on the same
//!    element are grouped. How homogeneous a run must be depends on the
//!    [`GroupingVariant`].

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::event::Action;
use crate::step::{ActionGroup, GroupingBasis};

/// Seconds within which edits on several elements count as simultaneous.
pub const DEFAULT_SIMULTANEITY_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum GroupingVariant {
    /// Same element, any action type.
    V1,
    /// Same element, all layout-related or all style-related.
    V2,
    /// Same element, identical action type and property.
    #[default]
    V3,
}

impl GroupingVariant {
    pub fn number(self) -> u8 {
        match self {
            GroupingVariant::V1 => 1,
            GroupingVariant::V2 => 2,
            GroupingVariant::V3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(GroupingVariant::V1),
            2 => Some(GroupingVariant::V2),
            3 => Some(GroupingVariant::V3),
            _ => None,
        }
    }

    /// Whether `b` may continue a single-element run that `a` is part of.
    pub fn same_run(self, a: &Action, b: &Action) -> bool {
        if a.element_id != b.element_id {
            return false;
        }
        match self {
            GroupingVariant::V1 => true,
            GroupingVariant::V2 => a.action_type.is_layout() == b.action_type.is_layout(),
            GroupingVariant::V3 => a.action_key() == b.action_key(),
        }
    }
}

/// Indices (into `actions`) that pass 1 groups as multi-element runs.
pub fn multi_element_runs(actions: &[Action], window: f64) -> Vec<core::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < actions.len() {
        let key = actions[i].action_key();
        let mut j = i + 1;
        while j < actions.len()
            && actions[j].action_key() == key
            && actions[j].ts - actions[i].ts <= window
        {
            j += 1;
        }
        let distinct: BTreeSet<&str> =
            actions[i..j].iter().map(|a| a.element_id.as_str()).collect();
        if distinct.len() >= 2 {
            runs.push(i..j);
            i = j;
        } else {
            i += 1;
        }
    }
    runs
}

/// Group a time-ordered action stream. `first_ref` is the session-wide
/// ordinal of `actions[0]`; group refs are offset by it.
///
/// Every action lands in exactly one group. Groups are ordered by their first
/// action and numbered from zero.
pub fn link_actions(
    actions: &[Action],
    variant: GroupingVariant,
    window: f64,
    first_ref: usize,
) -> Vec<ActionGroup> {
    let mut taken = alloc::vec![false; actions.len()];
    let mut groups: Vec<(Vec<usize>, GroupingBasis)> = Vec::new();

    for run in multi_element_runs(actions, window) {
        for t in &mut taken[run.clone()] {
            *t = true;
        }
        groups.push((run.collect(), GroupingBasis::MultiElementSameAction));
    }

    let mut current: Vec<usize> = Vec::new();
    for i in (0..actions.len()).filter(|&i| !taken[i]) {
        if let Some(&last) = current.last() {
            if !variant.same_run(&actions[last], &actions[i]) {
                groups.push((core::mem::take(&mut current), GroupingBasis::SingleElementRun));
            }
        }
        current.push(i);
    }
    if !current.is_empty() {
        groups.push((current, GroupingBasis::SingleElementRun));
    }

    groups.sort_by_key(|(members, _)| members[0]);
    groups
        .into_iter()
        .enumerate()
        .map(|(group_id, (members, grouping_basis))| ActionGroup {
            group_id,
            action_refs: members.into_iter().map(|i| i + first_ref).collect(),
            grouping_basis,
        })
        .collect()
}
