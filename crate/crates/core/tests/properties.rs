use std::collections::BTreeSet;

use proptest::prelude::*;
use stepwise_core::assemble::NeverAssign;
use stepwise_core::event::validate_events;
use stepwise_core::grouping::multi_element_runs;
use stepwise_core::metrics::PrecisionRecall;
use stepwise_core::sentences::repair_groups;
use stepwise_core::*;

/// Window enumeration written out longhand: a boolean boundary array and an
/// explicit inner loop per window.
fn wd_oracle(n: usize, r: &[usize], h: &[usize], k: usize) -> f64 {
    let mut rb = vec![false; n];
    let mut hb = vec![false; n];
    for &p in r {
        rb[p] = true;
    }
    for &p in h {
        hb[p] = true;
    }
    let mut bad = 0;
    let mut total = 0;
    for i in 0..n {
        if i + k >= n {
            break;
        }
        let mut cr = 0;
        let mut ch = 0;
        for p in (i + 1)..=(i + k) {
            cr += rb[p] as usize;
            ch += hb[p] as usize;
        }
        total += 1;
        if cr != ch {
            bad += 1;
        }
    }
    bad as f64 / total as f64
}

fn seg_strategy() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (3usize..=12).prop_flat_map(|n| {
        let b = proptest::collection::btree_set(1..n, 0..n);
        (Just(n), b.clone(), b).prop_map(|(n, r, h)| (n, r.into_iter().collect(), h.into_iter().collect()))
    })
}

fn action(ts: f64, el: u8, ty: ActionType, prop: u8) -> Action {
    let property = match ty {
        ActionType::PropertyChange => Some(["fill", "stroke", "font"][prop as usize % 3].to_string()),
        _ => None,
    };
    Action {
        ts,
        element_id: format!("e{el}"),
        element_name: format!("Element {el}"),
        action_type: ty,
        property,
        old_value: None,
        new_value: None,
        bbox: None,
        snapshot_ref: None,
    }
}

fn type_strategy() -> impl Strategy<Value = ActionType> {
    proptest::sample::select(ActionType::ALL.to_vec())
}

/// Actions spaced one second apart, so pass 1 never matches.
fn spaced_stream() -> impl Strategy<Value = Vec<Action>> {
    proptest::collection::vec((0u8..3, type_strategy(), 0u8..3), 0..40).prop_map(|v| {
        v.into_iter().enumerate().map(|(i, (el, ty, p))| action(i as f64, el, ty, p)).collect()
    })
}

/// Actions with bursty timing so multi-element runs occur.
fn bursty_stream() -> impl Strategy<Value = Vec<Action>> {
    proptest::collection::vec((0u8..4, type_strategy(), 0u8..2, 0u8..4), 0..40).prop_map(|v| {
        let mut t = 0.0;
        v.into_iter()
            .map(|(el, ty, p, gap)| {
                t += [0.1, 0.2, 0.4, 1.0][gap as usize];
                action(t, el, ty, p)
            })
            .collect()
    })
}

fn is_partition(groups: &[ActionGroup], n: usize) -> bool {
    let mut seen = vec![0usize; n];
    for g in groups {
        for &r in &g.action_refs {
            if r >= n {
                return false;
            }
            seen[r] += 1;
        }
    }
    seen.iter().all(|&c| c == 1)
}

fn subset_of_some(small: &[ActionGroup], big: &[ActionGroup]) -> bool {
    small.iter().all(|g| {
        let s: BTreeSet<usize> = g.action_refs.iter().copied().collect();
        big.iter().any(|b| s.is_subset(&b.action_refs.iter().copied().collect()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn window_diff_matches_oracle((n, r, h) in seg_strategy(), k in proptest::option::of(1usize..6)) {
        let rs = Segmentation::new(n, r.iter().copied()).unwrap();
        let hs = Segmentation::new(n, h.iter().copied()).unwrap();
        let kk = k.unwrap_or_else(|| stepwise_core::metrics::default_window(&rs));
        match window_diff(&rs, &hs, k) {
            Ok(v) => {
                prop_assert!(n > kk);
                prop_assert!((v - wd_oracle(n, &r, &h, kk)).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&v));
            }
            Err(_) => prop_assert!(n <= kk),
        }
    }

    #[test]
    fn metric_identities((n, r, h) in seg_strategy()) {
        let rs = Segmentation::new(n, r).unwrap();
        let hs = Segmentation::new(n, h).unwrap();
        if let Ok(v) = window_diff(&rs, &rs, None) {
            prop_assert_eq!(v, 0.0);
        }
        let same = precision_recall_f1(&rs, &rs).unwrap();
        prop_assert_eq!(same, PrecisionRecall { precision: 1.0, recall: 1.0, f1: 1.0 });
        let a = precision_recall_f1(&rs, &hs).unwrap();
        let b = precision_recall_f1(&hs, &rs).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
    }

    #[test]
    fn grouping_coarsens_and_partitions(actions in spaced_stream()) {
        prop_assert!(multi_element_runs(&actions, DEFAULT_SIMULTANEITY_WINDOW).is_empty());
        let w = DEFAULT_SIMULTANEITY_WINDOW;
        let v1 = link_actions(&actions, GroupingVariant::V1, w, 0);
        let v2 = link_actions(&actions, GroupingVariant::V2, w, 0);
        let v3 = link_actions(&actions, GroupingVariant::V3, w, 0);
        for g in [&v1, &v2, &v3] {
            prop_assert!(is_partition(g, actions.len()));
        }
        prop_assert!(subset_of_some(&v3, &v2));
        prop_assert!(subset_of_some(&v2, &v1));
        prop_assert_eq!(&v3, &link_actions(&actions, GroupingVariant::V3, w, 0));
    }

    #[test]
    fn single_element_runs_match_boundary_oracle(actions in spaced_stream()) {
        // Without multi-element matches a run breaks exactly where the
        // variant's equivalence fails between neighbours.
        for variant in [GroupingVariant::V1, GroupingVariant::V2, GroupingVariant::V3] {
            let mut expected: Vec<Vec<usize>> = Vec::new();
            for i in 0..actions.len() {
                let a = &actions[i];
                let joins = i > 0 && {
                    let b = &actions[i - 1];
                    a.element_id == b.element_id
                        && match variant {
                            GroupingVariant::V1 => true,
                            GroupingVariant::V2 => a.action_type.is_layout() == b.action_type.is_layout(),
                            GroupingVariant::V3 => a.action_type == b.action_type && a.property == b.property,
                        }
                };
                if joins {
                    expected.last_mut().unwrap().push(i);
                } else {
                    expected.push(vec![i]);
                }
            }
            let got: Vec<Vec<usize>> = link_actions(&actions, variant, 0.5, 0)
                .into_iter()
                .map(|g| g.action_refs)
                .collect();
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn multi_element_groups_are_valid_and_maximal(actions in bursty_stream()) {
        let w = DEFAULT_SIMULTANEITY_WINDOW;
        let groups = link_actions(&actions, GroupingVariant::V3, w, 0);
        prop_assert!(is_partition(&groups, actions.len()));
        for g in groups.iter().filter(|g| g.grouping_basis == GroupingBasis::MultiElementSameAction) {
            let first = &actions[g.action_refs[0]];
            let els: BTreeSet<&str> = g.action_refs.iter().map(|&r| actions[r].element_id.as_str()).collect();
            prop_assert!(els.len() >= 2);
            prop_assert!(g.action_refs.windows(2).all(|w| w[1] == w[0] + 1));
            for &r in &g.action_refs {
                prop_assert_eq!(actions[r].action_key(), first.action_key());
                prop_assert!(actions[r].ts - first.ts <= w);
            }
            let next = g.action_refs.last().unwrap() + 1;
            if let Some(n) = actions.get(next) {
                prop_assert!(n.action_key() != first.action_key() || n.ts - first.ts > w);
            }
        }
        for g in groups.iter().filter(|g| g.grouping_basis == GroupingBasis::SingleElementRun) {
            let el = &actions[g.action_refs[0]].element_id;
            prop_assert!(g.action_refs.iter().all(|&r| &actions[r].element_id == el));
        }
    }

    #[test]
    fn repair_is_total(
        n in 1usize..15,
        proposed in proptest::collection::vec(proptest::collection::vec(0usize..20, 0..6), 0..6),
    ) {
        let known: Vec<usize> = (0..n).collect();
        let out = repair_groups(&known, &proposed);
        let flat: Vec<usize> = out.iter().flatten().copied().collect();
        prop_assert_eq!(flat, known);
        for g in &out {
            prop_assert!(!g.is_empty());
            prop_assert!(g.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn link_sets_are_transposes(
        fwd in proptest::collection::vec((0usize..6, 0usize..5), 0..10),
        bwd in proptest::collection::vec((0usize..5, 0usize..6), 0..10),
    ) {
        let ts: Vec<f64> = (0..4).map(|i| i as f64 * 1.5).collect();
        let f = fwd.into_iter().map(|(t, g)| (t as f64 * 1.5, g));
        let b = bwd.into_iter().map(|(g, t)| (g, t as f64 * 1.5));
        let ls = LinkSet::symmetrized(f, b, &ts, &[0, 1, 2]);
        prop_assert!(ls.is_transpose());
        prop_assert!(ls.reversed_links.keys().all(|g| *g < 3));
        prop_assert!(ls.links.keys().all(|t| ts.contains(&t.0)));
    }

    #[test]
    fn trigger_matches_rule(a in 0usize..30, s in 0usize..30, secs in 0.0f64..6.0, rec: bool, flush: bool) {
        let st = BufferState { pending_sentences: s, pending_actions: a, seconds_since_last_action: secs, recording: rec, flush };
        let expect = (a + s > 0) && (a > 20 || s > 20 || (rec && secs > 3.0) || flush);
        prop_assert_eq!(should_trigger(&st), expect);
        prop_assert_eq!(should_trigger(&st), should_trigger(&st));
    }

    #[test]
    fn assembly_partitions_input(
        actions in bursty_stream(),
        n_sent in 1usize..10,
        cuts in proptest::collection::btree_set(1usize..10, 0..5),
        link_pairs in proptest::collection::vec((0usize..10, 0usize..40), 0..12),
        assign in proptest::sample::select(vec![Assignment::Left, Assignment::Right, Assignment::Unrelated]),
    ) {
        let end = actions.last().map_or(10.0, |a| a.ts + 1.0);
        let sentences: Vec<Sentence> = (0..n_sent)
            .map(|i| {
                let t = end * i as f64 / n_sent as f64;
                Sentence { idx: i, t_start: t, t_end: t + end / n_sent as f64, text: format!("s{i}") }
            })
            .collect();
        let cuts: Vec<usize> = cuts.into_iter().filter(|&c| c < n_sent).collect();
        let mut proposed = vec![];
        let mut start = 0;
        for c in cuts.iter().copied().chain([n_sent]) {
            proposed.push((start..c).collect::<Vec<_>>());
            start = c;
        }
        let groups = stepwise_core::sentences::build_groups(&sentences, &proposed);
        let ags = link_actions(&actions, GroupingVariant::V3, 0.5, 0);
        let ts: Vec<f64> = actions.iter().map(|a| a.ts).collect();
        let gids: Vec<usize> = groups.iter().map(|g| g.group_id).collect();
        let links = LinkSet::symmetrized(
            [],
            link_pairs.into_iter().filter_map(|(g, a)| ts.get(a).map(|t| (g, *t))),
            &ts,
            &gids,
        );
        struct Always(Assignment);
        impl OrphanAssigner for Always {
            type Error = ();
            fn assign(&mut self, _: &SentenceGroup, _: &str, _: &str) -> Result<Assignment, ()> {
                Ok(self.0)
            }
        }
        let input = AssemblyInput {
            sentences: &sentences,
            actions: &actions,
            sentence_groups: &groups,
            action_groups: &ags,
            links: &links,
            assign_orphans: true,
            first_step: 0,
        };
        let steps = assemble_steps(&input, &mut Always(assign)).unwrap();
        let mut sidx: Vec<usize> = steps.iter().flat_map(|s| s.sentence_idxs().to_vec()).collect();
        sidx.sort_unstable();
        prop_assert_eq!(sidx, (0..n_sent).collect::<Vec<_>>());
        let mut arefs: Vec<usize> = steps.iter().flat_map(|s| s.action_refs()).collect();
        arefs.sort_unstable();
        prop_assert_eq!(arefs, (0..actions.len()).collect::<Vec<_>>());
        for s in &steps {
            prop_assert!(s.sentence_group.is_some() || !s.action_groups.is_empty());
        }
        let ids: BTreeSet<&str> = steps.iter().map(|s| s.step_id.as_str()).collect();
        prop_assert_eq!(ids.len(), steps.len());
        let again = assemble_steps(&input, &mut Always(assign)).unwrap();
        prop_assert_eq!(&steps, &again);
        let unassigned = assemble_steps(&AssemblyInput { assign_orphans: false, ..input }, &mut NeverAssign).unwrap();
        prop_assert!(unassigned.len() >= steps.len());
    }

    #[test]
    fn event_json_round_trip(actions in bursty_stream(), texts in proptest::collection::vec("[a-z ]{0,12}", 0..5)) {
        let mut events: Vec<SessionEvent> = texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| SessionEvent::Sentence(Sentence { idx: i, t_start: i as f64, t_end: i as f64 + 0.5, text }))
            .collect();
        events.extend(actions.into_iter().map(SessionEvent::Action));
        prop_assert!(validate_events(&events).is_ok());
        let lines: Vec<String> = events.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        let back: Vec<SessionEvent> = lines.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
        prop_assert_eq!(back, events);
    }
}

#[test]
fn aggregation_truth_table() {
    for mask in 1u32..128 {
        let set: Vec<CategoryCode> = CategoryCode::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| *c)
            .collect();
        let names: Vec<&str> = set.iter().map(|c| c.as_str()).collect();
        let expected = if names.iter().any(|n| n.starts_with("S-")) {
            Overall::Strong
        } else if names.iter().any(|n| n.starts_with("W-")) {
            Overall::Weak
        } else {
            Overall::Empty
        };
        assert_eq!(aggregate_assessment(&set), Ok(expected), "{names:?}");
    }
}
