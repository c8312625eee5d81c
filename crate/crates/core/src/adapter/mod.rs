//! Frozen, rule-based conversion from raw agent logs to [`StepView`]s.
//!
//! An [`AdapterSpec`] is induced once from training traces by picking, for
//! every content field, the record path with the best extraction coverage.
//! After induction the spec is frozen: its content hash is recorded and any
//! later load that recomputes a different hash is rejected.

mod path;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hash::{canonical_hash, canonical_json};
use crate::trace::{Outcome, Status, StepField, StepView, Trajectory};

pub use path::PathExpr;

pub const ADAPTER_SPEC_VERSION: &str = "adapter-spec/1";

/// Minimum fraction of training steps for which a mandatory field must
/// extract non-empty text.
pub const MANDATORY_COVERAGE: f64 = 0.95;

pub const MANDATORY_FIELDS: [StepField; 2] = [StepField::Action, StepField::Status];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Lowercase,
    Truncate { n: usize },
    Join { sep: String },
}

impl Transform {
    fn apply_text(&self, text: String) -> String {
        match self {
            Transform::Lowercase => text.to_lowercase(),
            Transform::Truncate { n } => text.chars().take(*n).collect(),
            Transform::Identity | Transform::Join { .. } => text,
        }
    }

    fn render(&self, value: &Value) -> String {
        let text = match (self, value) {
            (Transform::Join { sep }, Value::Array(items)) => items
                .iter()
                .map(scalar_text)
                .collect::<Vec<_>>()
                .join(sep),
            _ => scalar_text(value),
        };
        self.apply_text(text)
    }
}

fn scalar_text(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRule {
    /// `None` means the source logs carry nothing for this field; it always
    /// extracts empty.
    pub path: Option<PathExpr>,
    pub transform: Transform,
}

impl FieldRule {
    pub fn at(path: &str) -> Result<Self> {
        Ok(FieldRule {
            path: Some(PathExpr::parse(path)?),
            transform: Transform::Identity,
        })
    }

    pub fn absent() -> Self {
        FieldRule {
            path: None,
            transform: Transform::Identity,
        }
    }

    fn extract<'a>(&self, record: &'a Value) -> Option<&'a Value> {
        self.path.as_ref()?.resolve(record).filter(|v| !v.is_null())
    }

    fn extract_text(&self, record: &Value) -> String {
        self.extract(record)
            .map(|v| self.transform.render(v))
            .unwrap_or_default()
    }

    fn extract_metadata(&self, record: &Value) -> BTreeMap<String, String> {
        match self.extract(record) {
            None => BTreeMap::new(),
            Some(Value::Object(map)) => map
                .iter()
                .map(|(k, v)| (k.clone(), self.transform.render(v)))
                .collect(),
            Some(other) => BTreeMap::from([("value".to_string(), self.transform.render(other))]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub environment_tag: String,
    pub version: String,
    pub field_rules: BTreeMap<StepField, FieldRule>,
    pub content_hash: String,
}

#[derive(Serialize)]
struct HashedView<'a> {
    environment_tag: &'a str,
    version: &'a str,
    field_rules: &'a BTreeMap<StepField, FieldRule>,
}

impl AdapterSpec {
    fn new(environment_tag: String, field_rules: BTreeMap<StepField, FieldRule>) -> Result<Self> {
        let mut spec = AdapterSpec {
            environment_tag,
            version: ADAPTER_SPEC_VERSION.to_string(),
            field_rules,
            content_hash: String::new(),
        };
        spec.check_rules()?;
        spec.content_hash = spec.compute_hash()?;
        Ok(spec)
    }

    pub fn compute_hash(&self) -> Result<String> {
        canonical_hash(&HashedView {
            environment_tag: &self.environment_tag,
            version: &self.version,
            field_rules: &self.field_rules,
        })
    }

    fn check_rules(&self) -> Result<()> {
        for field in StepField::ALL {
            if !self.field_rules.contains_key(&field) {
                return Err(Error::Validation(format!("adapter spec has no rule for `{field}`")));
            }
        }
        Ok(())
    }

    /// Confirms the spec is complete and its stored hash matches its content.
    pub fn verify(&self) -> Result<()> {
        self.check_rules()?;
        let actual = self.compute_hash()?;
        if actual != self.content_hash {
            return Err(Error::Hygiene(format!(
                "adapter spec hash {actual} does not match recorded {}",
                self.content_hash
            )));
        }
        Ok(())
    }

    pub fn to_canonical_text(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let spec: AdapterSpec =
            serde_json::from_str(text).map_err(|e| Error::json("adapter spec", e))?;
        spec.verify()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AdapterSpec::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_text()?).map_err(|e| Error::io(path, e))
    }
}

/// A raw log as produced by some agent framework: opaque tree-structured
/// records plus the verifier outcome carried as a sidecar header field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub trajectory_id: String,
    pub environment_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    pub records: Vec<Value>,
}

impl RawTrace {
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Validation(format!(
                "raw trace `{}` has no records",
                self.trajectory_id
            )));
        }
        Ok(())
    }
}

/// Key names that identify a candidate path for each field. Matching is on
/// the final path segment, case-insensitively.
fn field_keys(field: StepField) -> &'static [&'static str] {
    match field {
        StepField::Metadata => &["metadata", "meta", "info", "context"],
        StepField::Observation => &["observation", "obs", "state", "page", "input", "prompt"],
        StepField::Action => &["action", "act", "command", "cmd", "operation", "op"],
        StepField::Tool => &["tool", "tool_name", "function", "func"],
        StepField::Arguments => &["arguments", "args", "params", "parameters", "tool_input"],
        StepField::Result => &["result", "output", "response", "tool_output", "return", "ret"],
        StepField::Status => &["status", "ok", "success", "exit_status"],
    }
}

fn collect_paths(value: &Value, prefix: &mut Vec<String>, out: &mut BTreeSet<PathExpr>) {
    if let Value::Object(map) = value {
        for (key, child) in map {
            prefix.push(key.clone());
            if PathExpr::parse(key).is_ok() {
                out.insert(PathExpr::from_segments(prefix));
                collect_paths(child, prefix, out);
            }
            prefix.pop();
        }
    }
}

fn coverage(rule: &FieldRule, records: &[&Value]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| !rule.extract_text(r).is_empty())
        .count();
    hits as f64 / records.len() as f64
}

/// Induces a frozen spec from training traces only.
///
/// For each field, every record path whose last segment is a known key for
/// that field is scored by the fraction of training steps it fills; the best
/// wins, ties going to the lexicographically smaller path. `rule_hints`
/// override the search for the fields they name.
pub fn induce_adapter(
    training_traces: &[RawTrace],
    rule_hints: &BTreeMap<StepField, FieldRule>,
) -> Result<AdapterSpec> {
    let first = training_traces.first().ok_or_else(|| Error::Induction {
        field: "*".into(),
        reason: "no training traces".into(),
    })?;
    let tag = first.environment_tag.clone();
    for trace in training_traces {
        trace.validate()?;
        if trace.environment_tag != tag {
            return Err(Error::Validation(format!(
                "training traces mix environment tags `{tag}` and `{}`",
                trace.environment_tag
            )));
        }
    }
    let records: Vec<&Value> = training_traces.iter().flat_map(|t| &t.records).collect();
    let mut paths = BTreeSet::new();
    for record in &records {
        collect_paths(record, &mut Vec::new(), &mut paths);
    }

    let mut rules = BTreeMap::new();
    for field in StepField::ALL {
        let chosen = if let Some(hint) = rule_hints.get(&field) {
            Some((hint.clone(), coverage(hint, &records)))
        } else {
            let keys = field_keys(field);
            let mut best: Option<(FieldRule, f64)> = None;
            // BTreeSet iteration is lexicographic, so a strict improvement
            // test keeps the smaller path on ties.
            for path in paths
                .iter()
                .filter(|p| keys.contains(&p.last_segment().to_ascii_lowercase().as_str()))
            {
                let rule = FieldRule {
                    path: Some(path.clone()),
                    transform: pick_transform(path, &records),
                };
                let cov = coverage(&rule, &records);
                if best.as_ref().is_none_or(|(_, b)| cov > *b) {
                    best = Some((rule, cov));
                }
            }
            best
        };
        if MANDATORY_FIELDS.contains(&field) {
            match &chosen {
                None => {
                    return Err(Error::Induction {
                        field: field.name().into(),
                        reason: "no candidate path in training records".into(),
                    })
                }
                Some((_, cov)) if *cov < MANDATORY_COVERAGE => {
                    return Err(Error::Induction {
                        field: field.name().into(),
                        reason: format!(
                            "best path covers {:.1}% of steps, below {:.0}%",
                            cov * 100.0,
                            MANDATORY_COVERAGE * 100.0
                        ),
                    })
                }
                _ => {}
            }
        }
        let rule = chosen.map(|(r, _)| r).unwrap_or_else(FieldRule::absent);
        rules.insert(field, rule);
    }
    AdapterSpec::new(tag, rules)
}

fn pick_transform(path: &PathExpr, records: &[&Value]) -> Transform {
    let (arrays, present) = records
        .iter()
        .filter_map(|r| path.resolve(r))
        .fold((0usize, 0usize), |(a, p), v| (a + v.is_array() as usize, p + 1));
    if present > 0 && arrays * 2 >= present {
        Transform::Join { sep: " ".into() }
    } else {
        Transform::Identity
    }
}

pub fn parse_status(text: &str) -> Status {
    match text.trim().to_ascii_lowercase().as_str() {
        "ok" | "success" | "succeeded" | "true" | "0" | "done" | "pass" | "passed" => Status::Ok,
        "error" | "err" | "fail" | "failed" | "failure" | "false" | "exception" | "timeout" => {
            Status::Error
        }
        _ => Status::Unknown,
    }
}

/// Converts one raw trace, one [`StepView`] per record in order.
pub fn apply_adapter(raw: &RawTrace, spec: &AdapterSpec) -> Result<Vec<StepView>> {
    if raw.environment_tag != spec.environment_tag {
        return Err(Error::Validation(format!(
            "raw trace tag `{}` does not match adapter tag `{}`",
            raw.environment_tag, spec.environment_tag
        )));
    }
    raw.validate()?;
    let rule = |f: StepField| &spec.field_rules[&f];
    Ok(raw
        .records
        .iter()
        .enumerate()
        .map(|(step_index, record)| StepView {
            step_index,
            metadata: rule(StepField::Metadata).extract_metadata(record),
            observation: rule(StepField::Observation).extract_text(record),
            action: rule(StepField::Action).extract_text(record),
            tool: rule(StepField::Tool).extract_text(record),
            arguments: rule(StepField::Arguments).extract_text(record),
            result: rule(StepField::Result).extract_text(record),
            status: parse_status(&rule(StepField::Status).extract_text(record)),
        })
        .collect())
}

/// Converts a raw trace into a labeled-ready trajectory. The outcome must
/// travel with the raw header.
pub fn to_trajectory(raw: &RawTrace, spec: &AdapterSpec) -> Result<Trajectory> {
    let outcome = raw.outcome.ok_or_else(|| {
        Error::Validation(format!("raw trace `{}` carries no outcome", raw.trajectory_id))
    })?;
    let steps = apply_adapter(raw, spec)?;
    Trajectory::new(raw.trajectory_id.clone(), raw.environment_tag.clone(), steps, outcome)
}

/// Raw files hold one JSON [`RawTrace`] per line.
pub fn read_raw_traces(path: &Path) -> Result<Vec<RawTrace>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: RawTrace = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?;
        out.push(trace);
    }
    Ok(out)
}

pub fn write_raw_traces(path: &Path, traces: &[RawTrace]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for t in traces {
        serde_json::to_writer(&mut out, t).map_err(|e| Error::json("raw trace", e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256_hex;
    use serde_json::json;

    fn raw(records: Vec<Value>) -> RawTrace {
        RawTrace {
            trajectory_id: "r0".into(),
            environment_tag: "web".into(),
            outcome: Some(Outcome::Failure),
            records,
        }
    }

    fn fixture() -> RawTrace {
        raw(vec![
            json!({"act": "click #buy", "status": "ok", "obs": "cart page"}),
            json!({"act": "type hello", "status": "ok", "obs": "search", "result": "3 hits"}),
            json!({"act": "goto home", "status": "error", "obs": "home"}),
        ])
    }

    #[test]
    fn induction_selects_act_for_action() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let action = &spec.field_rules[&StepField::Action];
        assert_eq!(action.path.as_ref().unwrap().as_str(), "act");
        assert_eq!(
            spec.field_rules[&StepField::Observation].path.as_ref().unwrap().as_str(),
            "obs"
        );
        assert!(spec.field_rules[&StepField::Tool].path.is_none());
        spec.verify().unwrap();
    }

    #[test]
    fn empty_training_set_fails() {
        let err = induce_adapter(&[], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Induction { .. }));
    }

    #[test]
    fn missing_mandatory_field_names_it() {
        let t = raw(vec![json!({"act": "x"}), json!({"act": "y"})]);
        match induce_adapter(&[t], &BTreeMap::new()) {
            Err(Error::Induction { field, .. }) => assert_eq!(field, "status"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn low_coverage_rejected() {
        let mut records: Vec<Value> = (0..19).map(|_| json!({"action": "a", "status": "ok"})).collect();
        records.push(json!({"action": "a"}));
        records.push(json!({"action": "a"}));
        let err = induce_adapter(&[raw(records)], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Induction { ref field, .. } if field == "status"));
    }

    #[test]
    fn status_tie_breaks_lexicographically() {
        let t = raw(vec![
            json!({"action": "a", "status": "ok", "meta": {"status": "ok"}}),
            json!({"action": "b", "status": "error", "meta": {"status": "error"}}),
        ]);
        let spec = induce_adapter(&[t], &BTreeMap::new()).unwrap();
        // "meta.status" < "status"
        assert_eq!(
            spec.field_rules[&StepField::Status].path.as_ref().unwrap().as_str(),
            "meta.status"
        );
    }

    #[test]
    fn hints_override_search() {
        let mut hints = BTreeMap::new();
        hints.insert(StepField::Observation, FieldRule::at("act").unwrap());
        let spec = induce_adapter(&[fixture()], &hints).unwrap();
        assert_eq!(
            spec.field_rules[&StepField::Observation].path.as_ref().unwrap().as_str(),
            "act"
        );
    }

    #[test]
    fn missing_result_is_empty_and_bad_status_unknown() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let t = raw(vec![json!({"act": "x", "status": "weird"}), json!({"act": "y"})]);
        let steps = apply_adapter(&t, &spec).unwrap();
        assert_eq!(steps[0].result, "");
        assert_eq!(steps[0].status, Status::Unknown);
        assert_eq!(steps[1].status, Status::Unknown);
    }

    #[test]
    fn ten_records_ten_steps_in_order() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let records = (0..10).map(|i| json!({"act": format!("a{i}"), "status": "ok"})).collect();
        let steps = apply_adapter(&raw(records), &spec).unwrap();
        assert_eq!(steps.len(), 10);
        for (i, s) in steps.iter().enumerate() {
            assert_eq!(s.step_index, i);
            assert_eq!(s.action, format!("a{i}"));
        }
    }

    #[test]
    fn double_apply_is_byte_identical() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let run = || {
            let steps = apply_adapter(&fixture(), &spec).unwrap();
            sha256_hex(serde_json::to_string(&steps).unwrap().as_bytes())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tag_mismatch_rejected() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let mut t = fixture();
        t.environment_tag = "other".into();
        assert!(apply_adapter(&t, &spec).is_err());
    }

    #[test]
    fn tampered_spec_fails_verification() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let text = spec.to_canonical_text().unwrap();
        assert_eq!(AdapterSpec::from_text(&text).unwrap(), spec);
        let tampered = text.replace("\"obs\"", "\"act\"");
        assert!(matches!(AdapterSpec::from_text(&tampered), Err(Error::Hygiene(_))));
    }

    #[test]
    fn malformed_path_rejected_at_load() {
        let spec = induce_adapter(&[fixture()], &BTreeMap::new()).unwrap();
        let text = spec.to_canonical_text().unwrap().replace("\"obs\"", "\"o..bs\"");
        assert!(AdapterSpec::from_text(&text).is_err());
    }

    #[test]
    fn transforms() {
        let v = json!(["a", "b", 3]);
        assert_eq!(Transform::Join { sep: "-".into() }.render(&v), "a-b-3");
        assert_eq!(Transform::Lowercase.render(&json!("AbC")), "abc");
        assert_eq!(Transform::Truncate { n: 2 }.render(&json!("hello")), "he");
        assert_eq!(Transform::Identity.render(&json!(null)), "");
    }

    #[test]
    fn metadata_object_flattened() {
        let mut hints = BTreeMap::new();
        hints.insert(StepField::Metadata, FieldRule::at("m").unwrap());
        let spec = induce_adapter(&[fixture()], &hints).unwrap();
        let t = raw(vec![json!({"act": "x", "status": "ok", "m": {"k": 1, "j": "v"}})]);
        let steps = apply_adapter(&t, &spec).unwrap();
        assert_eq!(steps[0].metadata.get("k").unwrap(), "1");
        assert_eq!(steps[0].metadata.get("j").unwrap(), "v");
    }
}
