//! Segmentation and rationale-accuracy metrics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::Overall;
use crate::step::CognitiveDecisionStep;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("unit counts differ: reference {reference}, hypothesis {hypothesis}")]
    UnitCountMismatch { reference: usize, hypothesis: usize },
    #[error("window {k} leaves no positions over {n_units} units")]
    DegenerateLength { n_units: usize, k: usize },
    #[error("boundary {position} outside 1..{n_units}")]
    BoundaryOutOfRange { position: usize, n_units: usize },
    #[error("gold and predicted step ids differ")]
    IdMismatch,
}

/// `boundaries` holds positions `p` in `1..n_units` meaning "break before
/// unit p".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    n_units: usize,
    boundaries: BTreeSet<usize>,
}

impl Segmentation {
    pub fn new(
        n_units: usize,
        boundaries: impl IntoIterator<Item = usize>,
    ) -> Result<Self, MetricError> {
        let boundaries: BTreeSet<usize> = boundaries.into_iter().collect();
        if let Some(&p) = boundaries.iter().find(|&&p| p == 0 || p >= n_units) {
            return Err(MetricError::BoundaryOutOfRange { position: p, n_units });
        }
        Ok(Segmentation { n_units, boundaries })
    }

    /// One boundary before each step's first sentence. Steps without
    /// sentences contribute nothing.
    pub fn from_steps(n_units: usize, steps: &[CognitiveDecisionStep]) -> Self {
        let boundaries = steps
            .iter()
            .filter_map(|s| s.sentence_idxs().iter().min().copied())
            .filter(|&p| p > 0 && p < n_units)
            .collect();
        Segmentation { n_units, boundaries }
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn boundaries(&self) -> &BTreeSet<usize> {
        &self.boundaries
    }

    /// Boundaries `p` with `i < p <= j`.
    fn count_between(&self, i: usize, j: usize) -> usize {
        self.boundaries.range(i + 1..=j).count()
    }
}

fn same_units(r: &Segmentation, h: &Segmentation) -> Result<(), MetricError> {
    if r.n_units != h.n_units {
        return Err(MetricError::UnitCountMismatch {
            reference: r.n_units,
            hypothesis: h.n_units,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(hits: usize, denom: usize, other_empty: bool) -> f64 {
    if denom == 0 {
        if other_empty {
            1.0
        } else {
            0.0
        }
    } else {
        hits as f64 / denom as f64
    }
}

/// Exact-position boundary precision, recall and F1.
///
/// An empty hypothesis has precision 1 only when the reference is empty too;
/// recall is symmetric.
pub fn precision_recall_f1(
    reference: &Segmentation,
    hypothesis: &Segmentation,
) -> Result<PrecisionRecall, MetricError> {
    same_units(reference, hypothesis)?;
    let hits = reference.boundaries.intersection(&hypothesis.boundaries).count();
    let precision =
        ratio(hits, hypothesis.boundaries.len(), reference.boundaries.is_empty());
    let recall = ratio(hits, reference.boundaries.len(), hypothesis.boundaries.is_empty());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrecisionRecall { precision, recall, f1 })
}

/// `max(2, round(N / (2 * (|ref| + 1))))`, rounding halves up.
pub fn default_window(reference: &Segmentation) -> usize {
    let d = 2 * (reference.boundaries.len() + 1);
    ((2 * reference.n_units + d) / (2 * d)).max(2)
}

/// WindowDiff with window `k` (default [`default_window`]).
pub fn window_diff(
    reference: &Segmentation,
    hypothesis: &Segmentation,
    k: Option<usize>,
) -> Result<f64, MetricError> {
    same_units(reference, hypothesis)?;
    let n = reference.n_units;
    let k = k.unwrap_or_else(|| default_window(reference));
    if n <= k {
        return Err(MetricError::DegenerateLength { n_units: n, k });
    }
    let misses = (0..n - k)
        .filter(|&i| reference.count_between(i, i + k) != hypothesis.count_between(i, i + k))
        .count();
    Ok(misses as f64 / (n - k) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleAccuracy {
    pub total: usize,
    pub correct: usize,
    pub overall: f64,
    /// Accuracy over gold members of each class; `None` when the class is
    /// absent from gold.
    pub per_class: BTreeMap<Overall, Option<f64>>,
}

/// Compare predicted grades to gold by step id. Id sets must match exactly
/// and contain no duplicates.
pub fn score_rationale_accuracy(
    gold: &[(String, Overall)],
    predicted: &[(String, Overall)],
) -> Result<RationaleAccuracy, MetricError> {
    let g: BTreeMap<&str, Overall> = gold.iter().map(|(id, o)| (id.as_str(), *o)).collect();
    let p: BTreeMap<&str, Overall> = predicted.iter().map(|(id, o)| (id.as_str(), *o)).collect();
    if g.len() != gold.len() || p.len() != predicted.len() || !g.keys().eq(p.keys()) {
        return Err(MetricError::IdMismatch);
    }
    let mut tally: BTreeMap<Overall, (usize, usize)> = BTreeMap::new();
    for (id, want) in &g {
        let e = tally.entry(*want).or_default();
        e.0 += 1;
        if p[id] == *want {
            e.1 += 1;
        }
    }
    let total = g.len();
    let correct: usize = tally.values().map(|t| t.1).sum();
    let per_class = Overall::ALL
        .iter()
        .map(|o| (*o, tally.get(o).map(|&(n, c)| c as f64 / n as f64)))
        .collect();
    Ok(RationaleAccuracy {
        total,
        correct,
        overall: if total == 0 { 1.0 } else { correct as f64 / total as f64 },
        per_class,
    })
}

/// Mean of a sequence, `None` when empty.
pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn seg(n: usize, b: &[usize]) -> Segmentation {
        Segmentation::new(n, b.iter().copied()).unwrap()
    }

    #[test]
    fn pr_examples() {
        let r = seg(10, &[3, 7]);
        let pr = precision_recall_f1(&r, &seg(10, &[3, 7])).unwrap();
        assert_eq!((pr.precision, pr.recall, pr.f1), (1.0, 1.0, 1.0));
        let pr = precision_recall_f1(&r, &seg(10, &[3, 5, 7])).unwrap();
        assert_eq!(pr.precision, 2.0 / 3.0);
        assert_eq!(pr.recall, 1.0);
        assert!((pr.f1 - 0.8).abs() < 1e-12);
        let pr = precision_recall_f1(&r, &seg(10, &[])).unwrap();
        assert_eq!((pr.precision, pr.recall, pr.f1), (0.0, 0.0, 0.0));
        let pr = precision_recall_f1(&seg(10, &[]), &seg(10, &[])).unwrap();
        assert_eq!((pr.precision, pr.recall, pr.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unit_mismatch() {
        assert!(matches!(
            precision_recall_f1(&seg(5, &[]), &seg(6, &[])),
            Err(MetricError::UnitCountMismatch { .. })
        ));
        assert!(window_diff(&seg(5, &[]), &seg(6, &[]), None).is_err());
    }

    #[test]
    fn out_of_range_boundary() {
        assert!(Segmentation::new(5, [0]).is_err());
        assert!(Segmentation::new(5, [5]).is_err());
        assert!(Segmentation::new(5, [4]).is_ok());
    }

    #[test]
    fn default_window_values() {
        // 12 / (2 * 3) = 2
        assert_eq!(default_window(&seg(12, &[4, 8])), 2);
        // 20 / 4 = 5
        assert_eq!(default_window(&seg(20, &[10])), 5);
        // 10 / 4 = 2.5 rounds up to 3
        assert_eq!(default_window(&seg(10, &[5])), 3);
        // floor of two
        assert_eq!(default_window(&seg(4, &[1, 2, 3])), 2);
    }

    #[test]
    fn wd_hand_computed() {
        // N=6, k=2, ref={3}: windows (0,2],(1,3],(2,4],(3,5] -> ref counts 0,1,1,0
        // hyp empty counts all 0 -> 2 of 4 differ.
        assert_eq!(window_diff(&seg(6, &[3]), &seg(6, &[]), Some(2)).unwrap(), 0.5);
        let all = seg(8, &[1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(window_diff(&all, &seg(8, &[]), Some(2)).unwrap(), 1.0);
        assert_eq!(window_diff(&all, &all, None).unwrap(), 0.0);
    }

    #[test]
    fn wd_degenerate() {
        assert_eq!(
            window_diff(&seg(2, &[1]), &seg(2, &[]), Some(2)),
            Err(MetricError::DegenerateLength { n_units: 2, k: 2 })
        );
    }

    #[test]
    fn accuracy_examples() {
        let g = vec![
            ("a".to_string(), Overall::Strong),
            ("b".to_string(), Overall::Strong),
            ("c".to_string(), Overall::Weak),
        ];
        let mut p = g.clone();
        let r = score_rationale_accuracy(&g, &p).unwrap();
        assert_eq!(r.overall, 1.0);
        p[2].1 = Overall::Strong;
        let r = score_rationale_accuracy(&g, &p).unwrap();
        assert_eq!(r.overall, 2.0 / 3.0);
        assert_eq!(r.per_class[&Overall::Strong], Some(1.0));
        assert_eq!(r.per_class[&Overall::Weak], Some(0.0));
        assert_eq!(r.per_class[&Overall::Empty], None);
        let other = vec![("z".to_string(), Overall::Weak)];
        assert_eq!(score_rationale_accuracy(&g, &other), Err(MetricError::IdMismatch));
    }

    #[test]
    fn from_steps_uses_first_sentence() {
        use crate::step::SentenceGroup;
        let mk = |idxs: &[usize]| {
            let mut s = CognitiveDecisionStep::new("x");
            s.sentence_group = Some(SentenceGroup {
                group_id: 0,
                sentence_idxs: idxs.to_vec(),
                combined_text: String::new(),
            });
            s
        };
        let steps = vec![mk(&[0, 1]), CognitiveDecisionStep::new("y"), mk(&[2, 3, 4]), mk(&[5])];
        assert_eq!(Segmentation::from_steps(6, &steps), seg(6, &[2, 5]));
    }
}
