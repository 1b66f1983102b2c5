//! Builders for each template's variables.

use serde_json::{json, Value};
use stepwise_core::sentences::join_texts;
use stepwise_core::{Action, ActionGroup, CognitiveDecisionStep, DecisionStepSummary, Overall, Scalar, Sentence, SentenceGroup};

use super::template::{Variables, FEW_SHOTS};

fn vars<const N: usize>(pairs: [(&str, String); N]) -> Variables {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Plain transcript text.
pub fn transcript_text(sentences: &[Sentence]) -> String {
    join_texts(sentences.iter().map(|s| s.text.as_str()))
}

/// `[{"index": n, "sentence": "..."}]`
pub fn indexed_transcript(sentences: &[Sentence]) -> String {
    let items: Vec<Value> =
        sentences.iter().map(|s| json!({"index": s.idx, "sentence": s.text})).collect();
    Value::Array(items).to_string()
}

pub fn sentence_link(sentences: &[Sentence], few_shots: &str) -> Variables {
    vars([
        (FEW_SHOTS, few_shots.to_string()),
        ("transcript in sentence level", indexed_transcript(sentences)),
    ])
}

pub fn baseline_segment(sentences: &[Sentence]) -> Variables {
    vars([("transcript", indexed_transcript(sentences))])
}

fn scalar(v: &Scalar) -> Value {
    match v {
        Scalar::Number(n) => json!(n),
        Scalar::Text(s) => json!(s),
    }
}

pub fn action_json(a: &Action) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("timestamp".into(), json!(a.ts));
    m.insert("element_id".into(), json!(a.element_id));
    m.insert("element_name".into(), json!(a.element_name));
    m.insert("action_type".into(), json!(a.action_type.as_str()));
    if let Some(p) = &a.property {
        m.insert("property".into(), json!(p));
    }
    if let Some(v) = &a.old_value {
        m.insert("old_value".into(), scalar(v));
    }
    if let Some(v) = &a.new_value {
        m.insert("new_value".into(), scalar(v));
    }
    if let Some(s) = &a.snapshot_ref {
        m.insert("screenshot".into(), json!(s));
    }
    Value::Object(m)
}

/// `segmented_transcripts` is `{group_id: text}`; the action sets list each
/// group's actions with their timestamps and screenshot refs.
pub fn sa_link(groups: &[SentenceGroup], action_groups: &[ActionGroup], actions: &[Action]) -> Variables {
    let segmented: serde_json::Map<String, Value> =
        groups.iter().map(|g| (g.group_id.to_string(), json!(g.combined_text))).collect();
    let sets: Vec<Value> = action_groups
        .iter()
        .map(|g| {
            let acts: Vec<Value> =
                g.action_refs.iter().filter_map(|&r| actions.get(r)).map(action_json).collect();
            json!({"set": g.group_id, "actions": acts})
        })
        .collect();
    vars([
        ("segmented_transcripts", Value::Object(segmented).to_string()),
        ("sets_of_design_action_and_screenshot", Value::Array(sets).to_string()),
    ])
}

pub fn sentence_assign(transcript: &str, orphan: &str, left: &str, right: &str) -> Variables {
    vars([
        ("transcript", transcript.to_string()),
        ("unassigned_grouped_sentence", orphan.to_string()),
        ("left_grouped_sentence", left.to_string()),
        ("right_grouped_sentence", right.to_string()),
    ])
}

/// `{"explanation": ..., "actions": [...]}` for the templates that see the
/// whole step rather than only its explanation.
pub fn decision_step(step: &CognitiveDecisionStep, actions: &[Action]) -> String {
    let acts: Vec<Value> = step.action_refs().filter_map(|r| actions.get(r)).map(action_json).collect();
    json!({"explanation": step.text(), "actions": acts}).to_string()
}

pub fn rationale_eval(step_text: &str, few_shots: &str) -> Variables {
    vars([(FEW_SHOTS, few_shots.to_string()), ("decision_step", step_text.to_string())])
}

/// The question template has no slot for the grade, so it leads the reason.
pub fn insufficiency(overall: Overall, reason: &str) -> String {
    format!("{overall}: {reason}")
}

pub fn question_gen(explanation: &str, step_text: &str, overall: Overall, reason: &str) -> Variables {
    vars([
        ("explanation", explanation.to_string()),
        ("decision_step", step_text.to_string()),
        ("reason_for_insufficient_rationale", insufficiency(overall, reason)),
    ])
}

pub fn summaries_json(summaries: &[DecisionStepSummary]) -> String {
    let items: Vec<Value> = summaries
        .iter()
        .map(|s| {
            json!({
                "id": s.step_id,
                "decision_and_actions": s.decision_and_actions,
                "rationale": s.rationale,
                "progression": s.progression,
            })
        })
        .collect();
    Value::Array(items).to_string()
}

pub fn rationale_infer(
    explanation: &str,
    step_text: &str,
    overall: Overall,
    reason: &str,
    summaries: &[DecisionStepSummary],
) -> Variables {
    vars([
        ("explanation", explanation.to_string()),
        ("decision_step", step_text.to_string()),
        ("reason_for_insufficient_rationale", insufficiency(overall, reason)),
        ("previous_decision_step_summaries", summaries_json(summaries)),
    ])
}

pub fn summary(transcript: &str, step_text: &str, snapshot_refs: &[String]) -> Variables {
    vars([
        ("transcript", transcript.to_string()),
        ("decision_step", step_text.to_string()),
        ("related_screenshots", json!(snapshot_refs).to_string()),
    ])
}

pub fn summary_with_answer(
    transcript: &str,
    step_text: &str,
    snapshot_refs: &[String],
    question: &str,
    answer: &str,
) -> Variables {
    let mut v = summary(transcript, step_text, snapshot_refs);
    v.insert("clarification_question".into(), question.to_string());
    v.insert("answer".into(), answer.to_string());
    v
}

#[cfg(test)]
mod tests {
    use super::super::template::{render_prompt, TemplateId};
    use super::*;
    use stepwise_core::{ActionType, GroupingBasis};

    #[test]
    fn builders_bind_every_placeholder() {
        let s = vec![Sentence { idx: 0, t_start: 0.0, t_end: 1.0, text: "Hi.".into() }];
        let g = vec![SentenceGroup { group_id: 0, sentence_idxs: vec![0], combined_text: "Hi.".into() }];
        let a = vec![Action {
            ts: 0.5,
            element_id: "e".into(),
            element_name: "Logo".into(),
            action_type: ActionType::Move,
            property: None,
            old_value: Some(Scalar::Number(1.0)),
            new_value: None,
            bbox: None,
            snapshot_ref: Some("abc".into()),
        }];
        let ag = vec![ActionGroup { group_id: 0, action_refs: vec![0], grouping_basis: GroupingBasis::SingleElementRun }];
        let cases = [
            (TemplateId::SentenceLink, sentence_link(&s, "")),
            (TemplateId::BaselineSegment, baseline_segment(&s)),
            (TemplateId::SaLink, sa_link(&g, &ag, &a)),
            (TemplateId::SentenceAssign, sentence_assign("t", "o", "l", "")),
            (TemplateId::RationaleEval, rationale_eval("x", "")),
            (TemplateId::QuestionGen, question_gen("t", "x", Overall::Weak, "r")),
            (TemplateId::RationaleInfer, rationale_infer("t", "x", Overall::Empty, "r", &[])),
            (TemplateId::Summary, summary("t", "x", &[])),
            (TemplateId::SummaryWithAnswer, summary_with_answer("t", "x", &[], "q", "a")),
        ];
        for (t, v) in cases {
            render_prompt(t, &v).unwrap_or_else(|e| panic!("{t}: {e}"));
        }
        let v = sa_link(&g, &ag, &a);
        assert_eq!(
            v["sets_of_design_action_and_screenshot"],
            r#"[{"actions":[{"action_type":"MOVE","element_id":"e","element_name":"Logo","old_value":1.0,"screenshot":"abc","timestamp":0.5}],"set":0}]"#
        );
        assert_eq!(question_gen("t", "x", Overall::Weak, "thin")["reason_for_insufficient_rationale"], "Weak: thin");
    }
}
