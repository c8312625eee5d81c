use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight socio-technical responsibility dimensions.
pub const STANDARD_DIMENSIONS: [&str; 8] = [
    "Law",
    "Morality",
    "Standards",
    "Ethics",
    "Values",
    "Practice",
    "Professionalism",
    "Regulation",
];

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One piece of dimension-specific evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub party: String,
    pub harm: String,
    pub dimension: String,
    pub value: f64,
}

/// `R[p, ω, d]` with the dimension weights of the responsibility envelope
/// they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsibilityTensor {
    pub envelope_id: String,
    pub dimensions: Vec<String>,
    pub weights: Vec<f64>,
    /// party → harm → one value per dimension, in `dimensions` order.
    pub entries: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

fn check_weights(dimensions: &[String], weights: &[f64]) -> Result<()> {
    if dimensions.is_empty() {
        return Err(Error::Config("tensor needs at least one dimension".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(d) = dimensions.iter().find(|d| !seen.insert(d.as_str())) {
        return Err(Error::Config(format!("dimension `{d}` listed twice")));
    }
    if weights.len() != dimensions.len() {
        return Err(Error::Dimension {
            expected: dimensions.len(),
            actual: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Config(format!("dimension weights must be positive, got {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::Config(format!("dimension weights sum to {sum}, not 1")));
    }
    Ok(())
}

pub fn build_tensor(
    envelope_id: &str,
    dimensions: &[String],
    weights: &[f64],
    evidence: &[TensorEntry],
) -> Result<ResponsibilityTensor> {
    check_weights(dimensions, weights)?;
    let mut tensor = ResponsibilityTensor {
        envelope_id: envelope_id.into(),
        dimensions: dimensions.to_vec(),
        weights: weights.to_vec(),
        entries: BTreeMap::new(),
    };
    let mut filled = std::collections::BTreeSet::new();
    for e in evidence {
        let k = tensor
            .dimensions
            .iter()
            .position(|d| *d == e.dimension)
            .ok_or_else(|| Error::Validation(format!("unknown dimension `{}`", e.dimension)))?;
        if !(0.0..=1.0).contains(&e.value) {
            return Err(Error::Validation(format!(
                "entry for `{}` on `{}` is {}, outside [0, 1]",
                e.party, e.dimension, e.value
            )));
        }
        if !filled.insert((e.party.clone(), e.harm.clone(), k)) {
            return Err(Error::Validation(format!(
                "duplicate entry for `{}`, `{}`, `{}`",
                e.party, e.harm, e.dimension
            )));
        }
        let n = tensor.dimensions.len();
        tensor
            .entries
            .entry(e.party.clone())
            .or_default()
            .entry(e.harm.clone())
            .or_insert_with(|| vec![0.0; n])[k] = e.value;
    }
    Ok(tensor)
}

impl ResponsibilityTensor {
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.dimensions, &self.weights)?;
        for (party, harms) in &self.entries {
            for (harm, row) in harms {
                if row.len() != self.dimensions.len() {
                    return Err(Error::Dimension {
                        expected: self.dimensions.len(),
                        actual: row.len(),
                    });
                }
                if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Validation(format!(
                        "entry for `{party}` on `{harm}` outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, party: &str, harm: &str, dimension: &str) -> Option<f64> {
        let k = self.dimensions.iter().position(|d| d == dimension)?;
        Some(self.row(party, harm).map_or(0.0, |r| r[k]))
    }

    fn row(&self, party: &str, harm: &str) -> Option<&[f64]> {
        self.entries.get(party)?.get(harm).map(Vec::as_slice)
    }

    /// `Σ_k w_k · R[p, ω, d_k]`, summed in dimension order.
    pub fn scalar(&self, party: &str, harm: &str) -> f64 {
        match self.row(party, harm) {
            None => 0.0,
            Some(row) => self.weights.iter().zip(row).map(|(w, r)| w * r).sum(),
        }
    }

    pub fn scalars(&self, harm: &str) -> BTreeMap<String, f64> {
        self.entries
            .keys()
            .map(|p| (p.clone(), self.scalar(p, harm)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn entry(party: &str, dimension: &str, value: f64) -> TensorEntry {
        TensorEntry {
            party: party.into(),
            harm: "w".into(),
            dimension: dimension.into(),
            value,
        }
    }

    #[test]
    fn weighted_row() {
        let t = build_tensor(
            "env",
            &dims(&["a", "b", "c"]),
            &[0.5, 0.3, 0.2],
            &[entry("p", "a", 0.2), entry("p", "b", 0.4), entry("p", "c", 0.1)],
        )
        .unwrap();
        assert!((t.scalar("p", "w") - 0.24).abs() < 1e-15);
    }

    #[test]
    fn empty_evidence_is_zero() {
        let d = dims(&STANDARD_DIMENSIONS);
        let t = build_tensor("env", &d, &[0.125; 8], &[]).unwrap();
        assert_eq!(t.scalar("anyone", "w"), 0.0);
    }

    #[test]
    fn bad_weights_and_labels_rejected() {
        let d = dims(&["a", "b"]);
        assert!(build_tensor("e", &d, &[0.5, 0.6], &[]).is_err());
        assert!(build_tensor("e", &d, &[1.0, 0.0], &[]).is_err());
        assert!(build_tensor("e", &d, &[0.5, 0.5], &[entry("p", "z", 0.1)]).is_err());
        assert!(build_tensor("e", &d, &[0.5, 0.5], &[entry("p", "a", 1.5)]).is_err());
    }

    #[test]
    fn deployment_example_ordering() {
        let d = dims(&STANDARD_DIMENSIONS);
        let evidence = [
            entry("skill developer", "Standards", 1.0),
            entry("skill developer", "Practice", 1.0),
            entry("platform operator", "Regulation", 1.0),
            entry("platform operator", "Professionalism", 1.0),
            entry("agent developer", "Standards", 1.0),
        ];
        let t = build_tensor("example", &d, &[0.125; 8], &evidence).unwrap();
        let s = |p: &str| t.scalar(p, "w");
        assert_eq!(s("skill developer"), s("platform operator"));
        assert!(s("platform operator") > s("agent developer"));
        assert!(s("agent developer") > s("end user"));
        assert_eq!(s("end user"), 0.0);
    }

    proptest! {
        #[test]
        fn recovery_is_bit_exact(
            raw in prop::collection::vec(0.01f64..1.0, 8),
            row in prop::collection::vec(0.0f64..=1.0, 8),
        ) {
            let total: f64 = raw.iter().sum();
            let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let drift: f64 = 1.0 - weights.iter().sum::<f64>();
            weights[0] += drift;
            let d = dims(&STANDARD_DIMENSIONS);
            let evidence: Vec<TensorEntry> = d.iter().zip(&row).map(|(k, v)| entry("p", k, *v)).collect();
            let t = build_tensor("e", &d, &weights, &evidence).unwrap();
            let mut direct = 0.0;
            for k in 0..8 {
                direct += weights[k] * row[k];
            }
            prop_assert_eq!(t.scalar("p", "w").to_bits(), direct.to_bits());
        }
    }
}
