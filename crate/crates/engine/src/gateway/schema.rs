//! Parsers from raw model output to typed records, one per template.
//!
//! Each returns `Err(message)` when the output does not fit the template's
//! schema; the gateway turns that into a repair retry.

use serde_json::{Map, Value};
use stepwise_core::rationale::single_line;
use stepwise_core::{Assignment, CategoryCode, ExplanationAssessment, InferredRationale, Sentence};

/// Summary fields without the step id, as the model returns them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryFields {
    pub decision_and_actions: String,
    pub rationale: String,
    pub progression: String,
}

/// The JSON object in `raw`, tolerating code fences and surrounding prose.
pub fn extract_object(raw: &str) -> Result<Map<String, Value>, String> {
    let start = raw.find('{').ok_or("no JSON object in output")?;
    let end = raw.rfind('}').ok_or("unterminated JSON object")?;
    if end < start {
        return Err("unterminated JSON object".into());
    }
    match serde_json::from_str::<Value>(&raw[start..=end]) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err("output is not a JSON object".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

fn get_str<'a>(m: &'a Map<String, Value>, key: &str) -> Result<&'a str, String> {
    match m.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("`{key}` is not a string")),
        None => Err(format!("missing `{key}`")),
    }
}

fn as_index(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_time(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Groups of sentence ordinals from a `{"0": ..., "1": ...}` object.
///
/// Values may be index arrays or the combined sentence text. Text is aligned
/// back to `sentences` in order: each group consumes the run of upcoming
/// sentences it contains. The result is unrepaired.
pub fn sentence_groups(raw: &str, sentences: &[Sentence]) -> Result<Vec<Vec<usize>>, String> {
    let obj = extract_object(raw)?;
    let mut entries: Vec<(u64, &Value)> = Vec::new();
    for (k, v) in &obj {
        if k.trim_matches('.').is_empty() {
            continue;
        }
        let key: u64 = k.trim().parse().map_err(|_| format!("group key `{k}` is not a number"))?;
        entries.push((key, v));
    }
    if entries.is_empty() {
        return Err("no groups in output".into());
    }
    entries.sort_by_key(|(k, _)| *k);

    let norm: Vec<String> = sentences.iter().map(|s| normalize(&s.text)).collect();
    let mut cursor = 0;
    let mut groups = Vec::with_capacity(entries.len());
    for (key, value) in entries {
        let members = match value {
            Value::Array(items) => items
                .iter()
                .map(|v| as_index(v).ok_or_else(|| format!("group {key} has a non-index member")))
                .collect::<Result<Vec<_>, _>>()?,
            Value::String(text) => {
                let g = normalize(text);
                let mut members = Vec::new();
                let mut pos = 0;
                while cursor < sentences.len() {
                    let t = &norm[cursor];
                    match g[pos..].find(t.as_str()) {
                        Some(f) => {
                            pos += f + t.len();
                            members.push(sentences[cursor].idx);
                            cursor += 1;
                        }
                        None => break,
                    }
                }
                if members.is_empty() {
                    members = (cursor..sentences.len())
                        .filter(|&j| !norm[j].is_empty() && g.contains(norm[j].as_str()))
                        .map(|j| sentences[j].idx)
                        .collect();
                }
                members
            }
            _ => return Err(format!("group {key} is neither text nor an index list")),
        };
        groups.push(members);
    }
    Ok(groups)
}

/// Entries of a map that may arrive as an object or a list of single-key
/// objects. Non-object list items (ellipses) are skipped.
fn entries(v: &Value) -> Vec<(&String, &Value)> {
    match v {
        Value::Object(m) => m.iter().collect(),
        Value::Array(items) => items.iter().filter_map(Value::as_object).flat_map(|m| m.iter()).collect(),
        _ => Vec::new(),
    }
}

/// Forward `(timestamp, group)` and reversed `(group, timestamp)` pairs.
/// Unparseable keys or members are skipped; validation against the log
/// happens when the link set is built.
pub type LinkPairs = (Vec<(f64, usize)>, Vec<(usize, f64)>);

pub fn links(raw: &str) -> Result<LinkPairs, String> {
    let obj = extract_object(raw)?;
    if !obj.contains_key("links") && !obj.contains_key("reversed_links") {
        return Err("missing `links` and `reversed_links`".into());
    }
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    if let Some(v) = obj.get("links") {
        for (k, members) in entries(v) {
            let Ok(ts) = k.trim().parse::<f64>() else { continue };
            for g in members.as_array().into_iter().flatten().filter_map(as_index) {
                fwd.push((ts, g));
            }
        }
    }
    if let Some(v) = obj.get("reversed_links") {
        for (k, members) in entries(v) {
            let Ok(g) = k.trim().parse::<usize>() else { continue };
            for ts in members.as_array().into_iter().flatten().filter_map(as_time) {
                bwd.push((g, ts));
            }
        }
    }
    Ok((fwd, bwd))
}

/// A bare `left` / `right` / `unrelated` label, possibly quoted, wrapped in
/// a JSON object, or embedded in a short sentence naming exactly one label.
pub fn assignment(raw: &str) -> Result<Assignment, String> {
    if let Some(a) = Assignment::parse_label(raw) {
        return Ok(a);
    }
    if let Ok(obj) = extract_object(raw) {
        if let Some(a) = obj.values().filter_map(Value::as_str).find_map(Assignment::parse_label) {
            return Ok(a);
        }
    }
    let words: Vec<String> = raw
        .split(|c: char| !c.is_ascii_alphabetic())
        .map(str::to_ascii_lowercase)
        .collect();
    let found: Vec<Assignment> = [Assignment::Left, Assignment::Right, Assignment::Unrelated]
        .into_iter()
        .filter(|a| words.iter().any(|w| w == a.as_str()))
        .collect();
    match found.as_slice() {
        [one] => Ok(*one),
        _ => Err("expected exactly one of left, right, unrelated".into()),
    }
}

fn category(s: &str) -> Result<CategoryCode, String> {
    s.parse::<CategoryCode>()
        .or_else(|_| {
            s.split(|c: char| c.is_whitespace() || c == '(' || c == ':' || c == ',')
                .find(|t| !t.is_empty())
                .unwrap_or("")
                .parse::<CategoryCode>()
        })
        .map_err(|e| e.to_string())
}

pub fn evaluation(raw: &str) -> Result<ExplanationAssessment, String> {
    let obj = extract_object(raw)?;
    let reason = get_str(&obj, "reason")?;
    let cats = match obj.get("categories") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err("`categories` is not a list".into()),
        None => return Err("missing `categories`".into()),
    };
    let codes = cats
        .iter()
        .map(|v| v.as_str().ok_or_else(|| "category is not a string".to_string()).and_then(category))
        .collect::<Result<Vec<_>, _>>()?;
    ExplanationAssessment::new(codes, single_line(reason)).map_err(|e| e.to_string())
}

pub fn question(raw: &str) -> Result<String, String> {
    let obj = extract_object(raw)?;
    let q = single_line(get_str(&obj, "question")?);
    if q.is_empty() {
        return Err("empty question".into());
    }
    Ok(q)
}

fn is_none_marker(s: &str) -> bool {
    let t = s.trim().trim_matches(|c: char| c == '"' || c == '.' || c == '<' || c == '>');
    t.is_empty() || t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("null")
}

/// `None` when the model declined to infer.
pub fn inference(raw: &str) -> Result<Option<InferredRationale>, String> {
    let obj = extract_object(raw)?;
    let text = match obj.get("inferred_rationale") {
        Some(Value::String(s)) => s.as_str(),
        Some(Value::Null) => "",
        Some(_) => return Err("`inferred_rationale` is not a string".into()),
        None => return Err("missing `inferred_rationale`".into()),
    };
    let reasoning = match obj.get("reasoning") {
        Some(Value::String(s)) => s.as_str(),
        Some(Value::Null) | None => "",
        Some(_) => return Err("`reasoning` is not a string".into()),
    };
    if is_none_marker(text) {
        return Ok(None);
    }
    Ok(Some(InferredRationale { text: single_line(text), reasoning: single_line(reasoning) }))
}

pub fn summary(raw: &str) -> Result<SummaryFields, String> {
    let obj = extract_object(raw)?;
    let field = |k: &str| -> Result<String, String> {
        let v = single_line(get_str(&obj, k)?);
        if v.is_empty() {
            Err(format!("`{k}` is empty"))
        } else {
            Ok(v)
        }
    };
    Ok(SummaryFields {
        decision_and_actions: field("decision_and_actions")?,
        rationale: field("rationale")?,
        progression: field("progression")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepwise_core::Overall;

    fn sents(texts: &[&str]) -> Vec<Sentence> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Sentence { idx: i, t_start: i as f64, t_end: i as f64 + 1.0, text: t.to_string() })
            .collect()
    }

    #[test]
    fn groups_from_text_alignment() {
        let s = sents(&["The button is blue.", "It needs contrast.", "Okay.", "Now the header."]);
        let raw = r#"```json
{"0": "The button is blue. It needs contrast.", "1": "Okay.", "2": "Now the header."}
```"#;
        assert_eq!(sentence_groups(raw, &s).unwrap(), vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn groups_numeric_key_order_and_index_lists() {
        let s = sents(&["a", "b", "c"]);
        let raw = r#"{"10": [2], "2": ["0", 1]}"#;
        assert_eq!(sentence_groups(raw, &s).unwrap(), vec![vec![0, 1], vec![2]]);
        assert!(sentence_groups(r#"{"x": "a"}"#, &s).is_err());
        assert!(sentence_groups("no json", &s).is_err());
    }

    #[test]
    fn repeated_short_sentence_goes_to_its_own_group() {
        let s = sents(&["Okay.", "Make it red.", "Okay."]);
        let raw = r#"{"0": "Okay. Make it red.", "1": "Okay."}"#;
        assert_eq!(sentence_groups(raw, &s).unwrap(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn link_lists_and_maps() {
        let raw = r#"{"links": [{"1.5": ["0", 1]}, "…"], "reversed_links": {"0": ["1.5", 2.0]}}"#;
        let (f, b) = links(raw).unwrap();
        assert_eq!(f, vec![(1.5, 0), (1.5, 1)]);
        assert_eq!(b, vec![(0, 1.5), (0, 2.0)]);
        assert!(links(r#"{"other": 1}"#).is_err());
    }

    #[test]
    fn assignment_labels() {
        assert_eq!(assignment("left"), Ok(Assignment::Left));
        assert_eq!(assignment("'right'"), Ok(Assignment::Right));
        assert_eq!(assignment(r#"{"answer": "unrelated"}"#), Ok(Assignment::Unrelated));
        assert_eq!(assignment("The answer is right."), Ok(Assignment::Right));
        assert!(assignment("left or right").is_err());
    }

    #[test]
    fn evaluation_parse() {
        let a = evaluation(r#"{"reason": "names a goal", "categories": ["S-SR", "w-ca"]}"#).unwrap();
        assert_eq!(a.overall, Overall::Strong);
        assert_eq!(evaluation(r#"{"reason": "r", "categories": ["E (no reason)"]}"#).unwrap().overall, Overall::Empty);
        assert!(evaluation(r#"{"reason": "r"}"#).is_err());
        assert!(evaluation(r#"{"reason": "r", "categories": []}"#).is_err());
        assert!(evaluation(r#"{"reason": "r", "categories": ["Q-XX"]}"#).is_err());
    }

    #[test]
    fn inference_none_marker() {
        assert_eq!(inference(r#"{"inferred_rationale": "None", "reasoning": "None"}"#), Ok(None));
        assert_eq!(inference(r#"{"inferred_rationale": null}"#), Ok(None));
        let r = inference(r#"{"inferred_rationale": "Keeps spacing consistent.", "reasoning": "Earlier step."}"#)
            .unwrap()
            .unwrap();
        assert_eq!(r.text, "Keeps spacing consistent.");
    }

    #[test]
    fn summary_single_line() {
        let s = summary(
            r#"{"decision_and_actions": "Moved logo\nand resized it", "rationale": "r", "progression": "p"}"#,
        )
        .unwrap();
        assert_eq!(s.decision_and_actions, "Moved logo; and resized it");
        assert!(summary(r#"{"decision_and_actions": "", "rationale": "r", "progression": "p"}"#).is_err());
    }

    #[test]
    fn question_parse() {
        assert_eq!(question(r#"{"question": "Why left?"}"#), Ok("Why left?".into()));
        assert!(question(r#"{"question": "  "}"#).is_err());
    }
}
