//! Assembly of sentence groups and action groups into decision steps.
//!
//! Groups become nodes of a bipartite graph; an edge joins a sentence group
//! and an action group when the link set ties the group to one of the
//! action group's timestamps. Each connected component is one step. With an
//! empty link set, edges come from overlapping time spans instead.
//!
//! Sentence-only components are orphans. They are offered, left to right, to
//! an [`OrphanAssigner`] which attaches each to the preceding step, the
//! following step, or neither.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::event::{Action, Sentence};
use crate::links::{LinkSet, TimeKey};
use crate::sentences::join_texts;
use crate::step::{ActionGroup, CognitiveDecisionStep, SentenceGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    Left,
    Right,
    Unrelated,
}

impl Assignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Assignment::Left => "left",
            Assignment::Right => "right",
            Assignment::Unrelated => "unrelated",
        }
    }

    /// Lenient parse of a model label: trims whitespace, quotes and trailing
    /// punctuation, ignores case.
    pub fn parse_label(s: &str) -> Option<Self> {
        let t = s.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '`');
        [Assignment::Left, Assignment::Right, Assignment::Unrelated]
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(t.trim()))
    }
}

/// Decides where an orphan sentence group belongs.
///
/// `left` and `right` are the explanation texts of the neighbouring steps,
/// empty when a neighbour is missing or has no sentences. Assembly never
/// calls the assigner when both are empty.
pub trait OrphanAssigner {
    type Error;

    fn assign(
        &mut self,
        orphan: &SentenceGroup,
        left: &str,
        right: &str,
    ) -> Result<Assignment, Self::Error>;
}

/// Assigner that never attaches anything; orphans stay standalone steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverAssign;

impl OrphanAssigner for NeverAssign {
    type Error = core::convert::Infallible;

    fn assign(&mut self, _: &SentenceGroup, _: &str, _: &str) -> Result<Assignment, Self::Error> {
        Ok(Assignment::Unrelated)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyInput<'a> {
    /// Session sentences; group members are looked up by `idx`.
    pub sentences: &'a [Sentence],
    /// Session-wide action list; `action_refs` index into it.
    pub actions: &'a [Action],
    pub sentence_groups: &'a [SentenceGroup],
    pub action_groups: &'a [ActionGroup],
    pub links: &'a LinkSet,
    /// When false, orphans become their own steps without consulting the
    /// assigner.
    pub assign_orphans: bool,
    /// Number of the first emitted step (`s{n}`).
    pub first_step: usize,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Default)]
struct Slot {
    sentence_groups: Vec<usize>,
    action_groups: Vec<usize>,
}

fn sentence_span(sentences: &[Sentence], g: &SentenceGroup) -> Option<(f64, f64)> {
    let mut span: Option<(f64, f64)> = None;
    for &idx in &g.sentence_idxs {
        if let Ok(p) = sentences.binary_search_by_key(&idx, |s| s.idx) {
            let s = &sentences[p];
            span = Some(match span {
                None => (s.t_start, s.t_end),
                Some((a, b)) => (a.min(s.t_start), b.max(s.t_end)),
            });
        }
    }
    span
}

fn action_span(actions: &[Action], g: &ActionGroup) -> Option<(f64, f64)> {
    let mut ts = g.action_refs.iter().filter_map(|&r| actions.get(r)).map(|a| a.ts);
    let first = ts.next()?;
    Some(ts.fold((first, first), |(a, b), t| (a.min(t), b.max(t))))
}

/// Merge several sentence groups into one, recording what happened.
fn merge_groups(groups: &[&SentenceGroup], notes: &mut Vec<String>) -> SentenceGroup {
    let mut sorted: Vec<&SentenceGroup> = groups.to_vec();
    sorted.sort_by_key(|g| g.first_idx());
    let mut idxs: Vec<usize> = sorted.iter().flat_map(|g| g.sentence_idxs.iter().copied()).collect();
    idxs.sort_unstable();
    let merged = SentenceGroup {
        group_id: sorted.iter().map(|g| g.group_id).min().unwrap_or(0),
        combined_text: join_texts(sorted.iter().map(|g| g.combined_text.as_str())),
        sentence_idxs: idxs,
    };
    if sorted.len() > 1 {
        let ids: Vec<usize> = sorted.iter().map(|g| g.group_id).collect();
        notes.push(format!("merged sentence groups {ids:?}"));
        if !merged.is_consecutive() {
            notes.push(String::from("merged sentence groups are not adjacent"));
        }
    }
    merged
}

fn build_step(
    input: &AssemblyInput<'_>,
    sentence_groups: &[&SentenceGroup],
    action_groups: &[usize],
    mut notes: Vec<String>,
) -> CognitiveDecisionStep {
    let mut step = CognitiveDecisionStep::new(String::new());
    if !sentence_groups.is_empty() {
        step.sentence_group = Some(merge_groups(sentence_groups, &mut notes));
    }
    let mut ags: Vec<ActionGroup> =
        action_groups.iter().map(|&j| input.action_groups[j].clone()).collect();
    ags.sort_by_key(|g| g.action_refs.first().copied());
    let mut refs: Vec<usize> = ags.iter().flat_map(|g| g.action_refs.iter().copied()).collect();
    refs.sort_unstable();
    for r in refs {
        if let Some(s) = input.actions.get(r).and_then(|a| a.snapshot_ref.as_ref()) {
            if !step.snapshot_refs.contains(s) {
                step.snapshot_refs.push(s.clone());
            }
        }
    }
    step.action_groups = ags;
    step.notes = notes;
    step
}

/// Assemble decision steps. Steps come out ordered by earliest time, then
/// first sentence ordinal, then first action ref, and are numbered from
/// `input.first_step`.
pub fn assemble_steps<A: OrphanAssigner>(
    input: &AssemblyInput<'_>,
    assigner: &mut A,
) -> Result<Vec<CognitiveDecisionStep>, A::Error> {
    let ns = input.sentence_groups.len();
    let na = input.action_groups.len();
    let mut uf = UnionFind::new(ns + na);

    if input.links.is_empty() {
        let s_spans: Vec<_> =
            input.sentence_groups.iter().map(|g| sentence_span(input.sentences, g)).collect();
        for (j, ag) in input.action_groups.iter().enumerate() {
            let Some((a0, a1)) = action_span(input.actions, ag) else { continue };
            for (i, span) in s_spans.iter().enumerate() {
                if let Some((s0, s1)) = *span {
                    if s0 <= a1 && a0 <= s1 {
                        uf.union(i, ns + j);
                    }
                }
            }
        }
    } else {
        let by_id: BTreeMap<usize, usize> =
            input.sentence_groups.iter().enumerate().map(|(i, g)| (g.group_id, i)).collect();
        for (j, ag) in input.action_groups.iter().enumerate() {
            for &r in &ag.action_refs {
                let Some(a) = input.actions.get(r) else { continue };
                for gid in input.links.links.get(&TimeKey(a.ts)).into_iter().flatten() {
                    if let Some(&i) = by_id.get(gid) {
                        uf.union(i, ns + j);
                    }
                }
            }
        }
    }

    let mut comps: BTreeMap<usize, Slot> = BTreeMap::new();
    for i in 0..ns {
        comps.entry(uf.find(i)).or_default().sentence_groups.push(i);
    }
    for j in 0..na {
        comps.entry(uf.find(ns + j)).or_default().action_groups.push(j);
    }

    let key = |slot: &Slot| {
        let mut t = f64::INFINITY;
        let mut first_sentence = usize::MAX;
        let mut first_ref = usize::MAX;
        for &i in &slot.sentence_groups {
            let g = &input.sentence_groups[i];
            if let Some((s0, _)) = sentence_span(input.sentences, g) {
                t = t.min(s0);
            }
            first_sentence = first_sentence.min(g.first_idx().unwrap_or(usize::MAX));
        }
        for &j in &slot.action_groups {
            let g = &input.action_groups[j];
            if let Some((a0, _)) = action_span(input.actions, g) {
                t = t.min(a0);
            }
            first_ref = first_ref.min(g.action_refs.first().copied().unwrap_or(usize::MAX));
        }
        (TimeKey(t), first_sentence, first_ref)
    };
    let mut slots: Vec<Slot> = comps.into_values().collect();
    slots.sort_by_cached_key(key);

    let slot_text = |slot: &Slot| {
        let mut gs: Vec<&SentenceGroup> =
            slot.sentence_groups.iter().map(|&i| &input.sentence_groups[i]).collect();
        gs.sort_by_key(|g| g.first_idx());
        join_texts(gs.iter().map(|g| g.combined_text.as_str()))
    };

    let mut out: Vec<CognitiveDecisionStep> = Vec::new();
    // Orphans already sent right, waiting for the step they join.
    let mut pending_right: Vec<&SentenceGroup> = Vec::new();
    let mut pending_notes: Vec<String> = Vec::new();

    for (pos, slot) in slots.iter().enumerate() {
        if !slot.action_groups.is_empty() {
            let mut groups: Vec<&SentenceGroup> = core::mem::take(&mut pending_right);
            groups.extend(slot.sentence_groups.iter().map(|&i| &input.sentence_groups[i]));
            out.push(build_step(
                input,
                &groups,
                &slot.action_groups,
                core::mem::take(&mut pending_notes),
            ));
            continue;
        }

        let orphan = merge_groups(
            &slot.sentence_groups.iter().map(|&i| &input.sentence_groups[i]).collect::<Vec<_>>(),
            &mut Vec::new(),
        );
        let right_slot = slots[pos + 1..].iter().find(|s| !s.action_groups.is_empty());

        let decision = if !input.assign_orphans {
            Assignment::Unrelated
        } else if !pending_right.is_empty() {
            // An earlier orphan in this gap already went right; following it
            // keeps the right step's sentences contiguous.
            Assignment::Right
        } else {
            let left = out.last().map(|s| String::from(s.text())).unwrap_or_default();
            let right = right_slot.map(&slot_text).unwrap_or_default();
            if left.trim().is_empty() && right.trim().is_empty() {
                Assignment::Unrelated
            } else {
                match assigner.assign(&orphan, &left, &right)? {
                    Assignment::Left if out.is_empty() => Assignment::Unrelated,
                    Assignment::Right if right_slot.is_none() => Assignment::Unrelated,
                    a => a,
                }
            }
        };

        match decision {
            Assignment::Left => {
                let step = out.last_mut().expect("left assignment requires a left step");
                let mut groups: Vec<&SentenceGroup> = Vec::new();
                let previous = step.sentence_group.take();
                groups.extend(previous.as_ref());
                groups.push(&orphan);
                let mut notes = core::mem::take(&mut step.notes);
                notes.push(format!("orphan sentence group {} assigned left", orphan.group_id));
                step.sentence_group = Some(merge_groups(&groups, &mut notes));
                step.notes = notes;
            }
            Assignment::Right => {
                pending_notes
                    .push(format!("orphan sentence group {} assigned right", orphan.group_id));
                pending_right.extend(slot.sentence_groups.iter().map(|&i| &input.sentence_groups[i]));
            }
            Assignment::Unrelated => {
                let groups: Vec<&SentenceGroup> =
                    slot.sentence_groups.iter().map(|&i| &input.sentence_groups[i]).collect();
                out.push(build_step(input, &groups, &[], Vec::new()));
            }
        }
    }

    for (k, step) in out.iter_mut().enumerate() {
        step.step_id = format!("s{}", input.first_step + k);
    }
    Ok(out)
}
