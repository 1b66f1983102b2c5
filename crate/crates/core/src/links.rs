//! Links between sentence groups and action timestamps.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Ordering;

/// Action timestamp usable as an ordered map key.
#[derive(Debug, Clone, Copy)]
pub struct TimeKey(pub f64);

impl PartialEq for TimeKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for TimeKey {}
impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Tolerance when matching a model-echoed timestamp to a logged one.
pub const TIMESTAMP_TOLERANCE: f64 = 1e-6;

/// `links` maps a timestamp to sentence-group ids, `reversed_links` the
/// transpose. Constructed values are always exact transposes of each other.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkSet {
    pub links: BTreeMap<TimeKey, Vec<usize>>,
    pub reversed_links: BTreeMap<usize, Vec<TimeKey>>,
}

impl LinkSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merge both directions of a proposal, dropping timestamps not in
    /// `known_ts` (matched within [`TIMESTAMP_TOLERANCE`]) and group ids not in
    /// `known_groups`, then rebuild both maps from the union.
    pub fn symmetrized(
        forward: impl IntoIterator<Item = (f64, usize)>,
        backward: impl IntoIterator<Item = (usize, f64)>,
        known_ts: &[f64],
        known_groups: &[usize],
    ) -> Self {
        let groups: BTreeSet<usize> = known_groups.iter().copied().collect();
        let snap = |t: f64| {
            known_ts
                .iter()
                .copied()
                .find(|k| (k - t).abs() <= TIMESTAMP_TOLERANCE)
        };
        let mut pairs: BTreeSet<(usize, TimeKey)> = BTreeSet::new();
        let all = forward.into_iter().map(|(t, g)| (g, t)).chain(backward);
        for (g, t) in all {
            if let (true, Some(k)) = (groups.contains(&g), snap(t)) {
                pairs.insert((g, TimeKey(k)));
            }
        }
        Self::from_pairs(pairs)
    }

    fn from_pairs(pairs: BTreeSet<(usize, TimeKey)>) -> Self {
        let mut ls = LinkSet::new();
        for (g, t) in pairs {
            ls.reversed_links.entry(g).or_default().push(t);
            ls.links.entry(t).or_default().push(g);
        }
        for v in ls.links.values_mut() {
            v.sort_unstable();
        }
        ls
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// True when `links` and `reversed_links` contain the same pairs.
    pub fn is_transpose(&self) -> bool {
        let a: BTreeSet<(usize, TimeKey)> = self
            .links
            .iter()
            .flat_map(|(t, gs)| gs.iter().map(move |g| (*g, *t)))
            .collect();
        let b: BTreeSet<(usize, TimeKey)> = self
            .reversed_links
            .iter()
            .flat_map(|(g, ts)| ts.iter().map(move |t| (*g, *t)))
            .collect();
        a == b
    }

    pub fn timestamps_for(&self, group: usize) -> &[TimeKey] {
        self.reversed_links.get(&group).map_or(&[], |v| v.as_slice())
    }
}
