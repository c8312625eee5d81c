//! Step serialization, training-only TF-IDF encoding and the learned event
//! alphabet.

mod projection;
mod vocab;

use crate::trace::StepView;

pub use projection::{EventDistribution, ProjectionModel, DEFAULT_ALPHABET_SIZE, DEFAULT_TEMPERATURE};
pub use vocab::{Vocabulary, DEFAULT_MAX_TERMS, TRAIN_SPLIT};

/// Renders a step as `field:value` pairs joined by ` | `, always in the order
/// metadata, observation, action, tool, arguments, result, status. Metadata
/// entries are written as `key=value`, sorted by key, separated by `; `.
pub fn serialize_step(step: &StepView) -> String {
    let metadata = step
        .metadata
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("; ");
    format!(
        "metadata:{} | observation:{} | action:{} | tool:{} | arguments:{} | result:{} | status:{}",
        metadata, step.observation, step.action, step.tool, step.arguments, step.result, step.status
    )
}

/// Lowercases, splits on runs of non-alphanumeric characters and drops
/// single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() > 1)
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Status;

    #[test]
    fn empty_step_serialization() {
        assert_eq!(
            serialize_step(&StepView::default()),
            "metadata: | observation: | action: | tool: | arguments: | result: | status:unknown"
        );
    }

    #[test]
    fn metadata_insertion_order_irrelevant() {
        let mut a = StepView::default();
        a.metadata.insert("zeta".into(), "1".into());
        a.metadata.insert("alpha".into(), "2".into());
        let mut b = StepView::default();
        b.metadata.insert("alpha".into(), "2".into());
        b.metadata.insert("zeta".into(), "1".into());
        assert_eq!(serialize_step(&a), serialize_step(&b));
        assert!(serialize_step(&a).starts_with("metadata:alpha=2; zeta=1 |"));
    }

    #[test]
    fn tool_difference_is_visible() {
        let a = StepView {
            tool: "browser".into(),
            status: Status::Ok,
            ..Default::default()
        };
        let b = StepView {
            tool: "search".into(),
            ..a.clone()
        };
        assert_ne!(serialize_step(&a), serialize_step(&b));
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Click #Buy-Now a | x:Y42"),
            vec!["click", "buy", "now", "y42"]
        );
        assert!(tokenize("a b c").is_empty());
    }
}
