//! Repair of proposed sentence groupings.
//!
//! Model output is untrusted: groups may skip sentences, overlap, reference
//! unknown ordinals or leave sentences uncovered. [`repair_groups`] turns any
//! proposal into a gap-free, disjoint, ordered partition.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::event::Sentence;
use crate::step::SentenceGroup;

/// Normalize proposed groups of sentence ordinals against the known ordinals.
///
/// Unknown ordinals are dropped, an ordinal claimed twice stays with the
/// earlier group, groups with gaps are split into consecutive runs, and every
/// uncovered ordinal becomes a singleton. The result is sorted by first
/// ordinal.
pub fn repair_groups(known: &[usize], proposed: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let known_set: BTreeSet<usize> = known.iter().copied().collect();
    let mut claimed = BTreeSet::new();
    let mut out: Vec<Vec<usize>> = Vec::new();

    for group in proposed {
        let members: BTreeSet<usize> = group
            .iter()
            .copied()
            .filter(|i| known_set.contains(i) && !claimed.contains(i))
            .collect();
        let mut run: Vec<usize> = Vec::new();
        for i in members {
            claimed.insert(i);
            if run.last().is_some_and(|&last| last + 1 != i) {
                out.push(core::mem::take(&mut run));
            }
            run.push(i);
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    for &i in &known_set {
        if !claimed.contains(&i) {
            out.push(alloc::vec![i]);
        }
    }
    out.sort_by_key(|g| g[0]);
    out
}

/// Join sentence texts with single spaces.
pub fn join_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    let mut s = String::new();
    for t in texts {
        let t = t.trim();
        if t.is_empty() {
            continue;
        }
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(t);
    }
    s
}

/// Build [`SentenceGroup`]s from a proposal over `sentences` (which must be
/// ordered and dense), repairing it first.
pub fn build_groups(sentences: &[Sentence], proposed: &[Vec<usize>]) -> Vec<SentenceGroup> {
    let known: Vec<usize> = sentences.iter().map(|s| s.idx).collect();
    let base = known.first().copied().unwrap_or(0);
    repair_groups(&known, proposed)
        .into_iter()
        .enumerate()
        .map(|(group_id, idxs)| SentenceGroup {
            group_id,
            combined_text: join_texts(idxs.iter().map(|&i| sentences[i - base].text.as_str())),
            sentence_idxs: idxs,
        })
        .collect()
}

/// One group per sentence.
pub fn singleton_groups(sentences: &[Sentence]) -> Vec<SentenceGroup> {
    let proposed: Vec<Vec<usize>> = sentences.iter().map(|s| alloc::vec![s.idx]).collect();
    build_groups(sentences, &proposed)
}
