use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{serialize_step, tokenize};
use crate::error::{Error, Result};
use crate::hash::float_hash;
use crate::tensor::SparseVec;
use crate::trace::StepView;

pub const TRAIN_SPLIT: &str = "train";
pub const DEFAULT_MAX_TERMS: usize = 512;
pub const VOCABULARY_FORMAT: &str = "vocabulary/1";

/// TF-IDF vocabulary fitted on training steps only.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1` where `N` is the number of
/// training steps and `df(t)` the number of steps containing `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub format: String,
    pub built_from: String,
    pub document_count: usize,
    pub term_to_index: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

impl Vocabulary {
    /// Keeps the `max_terms` terms with the highest document frequency,
    /// breaking ties lexicographically. Indices follow lexicographic term order.
    pub fn build<'a>(
        training_steps: impl IntoIterator<Item = &'a StepView>,
        max_terms: usize,
    ) -> Result<Self> {
        if max_terms == 0 {
            return Err(Error::Config("max_terms must be positive".into()));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for step in training_steps {
            n += 1;
            let mut terms = tokenize(&serialize_step(step));
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        if n == 0 {
            return Err(Error::Validation("vocabulary needs at least one training step".into()));
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_terms);
        ranked.sort_by(|a, b| a.0.cmp(&b.0));

        let mut term_to_index = BTreeMap::new();
        let mut idf = Vec::with_capacity(ranked.len());
        for (i, (term, count)) in ranked.into_iter().enumerate() {
            idf.push(((1.0 + n as f64) / (1.0 + count as f64)).ln() + 1.0);
            term_to_index.insert(term, i);
        }
        Ok(Vocabulary {
            format: VOCABULARY_FORMAT.into(),
            built_from: TRAIN_SPLIT.into(),
            document_count: n,
            term_to_index,
            idf,
        })
    }

    pub fn size(&self) -> usize {
        self.idf.len()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.term_to_index.get(term).map(|&i| self.idf[i])
    }

    /// L2-normalized tf·idf vector; out-of-vocabulary terms are ignored and
    /// a step with no known terms encodes to the zero vector.
    pub fn encode(&self, step: &StepView) -> SparseVec {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for term in tokenize(&serialize_step(step)) {
            if let Some(&i) = self.term_to_index.get(&term) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> =
            tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVec {
            dim: self.size(),
            entries,
        }
    }

    pub fn content_hash(&self) -> String {
        let mut terms = String::new();
        for (t, i) in &self.term_to_index {
            terms.push_str(&format!("{t}\t{i}\n"));
        }
        let header = format!("{}|{}|{}", self.format, self.built_from, self.document_count);
        crate::hash::sha256_hex(
            format!("{header}\n{terms}{}", float_hash([self.idf.as_slice()])).as_bytes(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.built_from != TRAIN_SPLIT {
            return Err(Error::Hygiene(format!(
                "vocabulary built from split `{}`, expected `{TRAIN_SPLIT}`",
                self.built_from
            )));
        }
        if self.term_to_index.len() != self.idf.len() {
            return Err(Error::Validation("vocabulary index and idf table disagree".into()));
        }
        if self.idf.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("vocabulary idf must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Status;

    fn step(action: &str) -> StepView {
        StepView {
            action: action.into(),
            status: Status::Ok,
            ..Default::default()
        }
    }

    #[test]
    fn identical_docs_have_unit_idf() {
        let steps = [step("click buy"), step("click buy")];
        let v = Vocabulary::build(&steps, 100).unwrap();
        for idf in &v.idf {
            assert!((idf - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(Vocabulary::build(&[], 10).is_err());
    }

    #[test]
    fn max_terms_one_keeps_most_frequent_smallest() {
        // every doc carries the field names; among them `action` is
        // lexicographically first
        let steps = [step("zebra"), step("zebra apple")];
        let v = Vocabulary::build(&steps, 1).unwrap();
        assert_eq!(v.term_to_index.keys().collect::<Vec<_>>(), vec!["action"]);
    }

    #[test]
    fn unseen_term_ignored() {
        let steps = [step("click"), step("scroll")];
        let v = Vocabulary::build(&steps, 100).unwrap();
        assert!(v.idf_of("purchase").is_none());
        let a = v.encode(&step("click purchase"));
        let b = v.encode(&step("click"));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_vector_when_no_known_terms() {
        let steps = [step("click")];
        let v = Vocabulary::build(&steps, 1).unwrap();
        // only `action` survives; a step with none of the vocabulary yields zero
        let mut v2 = v.clone();
        v2.term_to_index.clear();
        v2.term_to_index.insert("zzz".into(), 0);
        let enc = v2.encode(&step("click"));
        assert!(enc.entries.is_empty());
        assert_eq!(enc.norm(), 0.0);
    }

    #[test]
    fn single_term_normalizes_to_one_hot() {
        let steps = [step("click"), step("scroll")];
        let mut v = Vocabulary::build(&steps, 100).unwrap();
        let i = v.term_to_index["click"];
        v.term_to_index.retain(|t, _| t == "click");
        let enc = v.encode(&step("click"));
        assert_eq!(enc.entries, vec![(i, 1.0)]);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = Vocabulary::build(&[step("click")], 100).unwrap();
        let b = Vocabulary::build(&[step("click"), step("scroll")], 100).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }
}
