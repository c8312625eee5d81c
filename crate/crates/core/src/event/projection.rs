use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_in_place, Tape, Var};
use crate::error::{Error, Result};
use crate::hash::float_hash;
use crate::tensor::{Matrix, SparseVec};

pub const DEFAULT_ALPHABET_SIZE: usize = 32;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Soft assignment of one step to the event alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDistribution {
    pub probabilities: Vec<f64>,
    pub hard_symbol: usize,
}

impl EventDistribution {
    /// Argmax with ties going to the lowest index.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let mut hard_symbol = 0;
        for (i, p) in probabilities.iter().enumerate() {
            if *p > probabilities[hard_symbol] {
                hard_symbol = i;
            }
        }
        EventDistribution {
            probabilities,
            hard_symbol,
        }
    }
}

/// Linear map from an encoded step to `K` event logits, followed by a
/// tempered softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub weights: Matrix,
    pub bias: Matrix,
    pub temperature: f64,
}

impl ProjectionModel {
    pub fn new(weights: Matrix, bias: Matrix, temperature: f64) -> Result<Self> {
        let model = ProjectionModel {
            weights,
            bias,
            temperature,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn init<R: Rng + ?Sized>(
        alphabet_size: usize,
        vocab_size: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Self> {
        ProjectionModel::new(
            Matrix::uniform(alphabet_size, vocab_size, 1.0, rng),
            Matrix::zeros(alphabet_size, 1),
            temperature,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.rows < 2 {
            return Err(Error::Config("event alphabet needs at least 2 symbols".into()));
        }
        if self.bias.len() != self.weights.rows {
            return Err(Error::Dimension {
                expected: self.weights.rows,
                actual: self.bias.len(),
            });
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("projection temperature must be positive".into()));
        }
        if !self.weights.is_finite() || !self.bias.is_finite() {
            return Err(Error::Validation("projection parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        self.weights.rows
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn logits(&self, vector: &SparseVec) -> Result<Vec<f64>> {
        if vector.dim != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: vector.dim,
            });
        }
        Ok((0..self.alphabet_size())
            .map(|k| vector.dot_dense(self.weights.row(k)) + self.bias.data[k])
            .collect())
    }

    /// `softmax((W·x + b) / temperature)`.
    pub fn project(&self, vector: &SparseVec) -> Result<EventDistribution> {
        let mut z = self.logits(vector)?;
        for v in &mut z {
            *v /= self.temperature;
        }
        softmax_in_place(&mut z);
        Ok(EventDistribution::from_probabilities(z))
    }

    /// Records the projection of `vector` on `tape` given leaf nodes for the
    /// weights and bias.
    pub(crate) fn forward(&self, tape: &mut Tape, weights: Var, bias: Var, vector: &SparseVec) -> Var {
        let z = tape.sparse_matvec(weights, vector);
        let z = tape.add(z, bias);
        let z = tape.scale(z, 1.0 / self.temperature);
        tape.softmax(z)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weights, &mut self.bias]
    }

    pub fn content_hash(&self) -> String {
        float_hash([
            self.weights.data.as_slice(),
            self.bias.data.as_slice(),
            std::slice::from_ref(&self.temperature),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(weights: Vec<f64>, k: usize, v: usize) -> ProjectionModel {
        ProjectionModel::new(
            Matrix::from_vec(k, v, weights).unwrap(),
            Matrix::zeros(k, 1),
            1.0,
        )
        .unwrap()
    }

    /// Scalar softmax written independently of the library routine.
    fn reference_softmax(z: &[f64]) -> Vec<f64> {
        let m = z.iter().fold(f64::MIN, |a, &b| if b > a { b } else { a });
        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = model(vec![0.0; 8], 4, 2);
        let d = m
            .project(&SparseVec {
                dim: 2,
                entries: vec![(0, 0.6), (1, 0.8)],
            })
            .unwrap();
        for p in &d.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(d.hard_symbol, 0);
    }

    #[test]
    fn dominant_logit_takes_all_mass() {
        let mut m = model(vec![0.0; 6], 3, 2);
        m.bias.data[2] = 50.0;
        let d = m.project(&SparseVec::zeros(2)).unwrap();
        assert!(d.probabilities[2] >= 1.0 - 1e-15);
        assert!(d.probabilities[0] < 1e-20 && d.probabilities[1] < 1e-20);
        assert_eq!(d.hard_symbol, 2);
    }

    #[test]
    fn matches_reference_softmax() {
        let m = ProjectionModel::new(
            Matrix::from_vec(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]).unwrap(),
            Matrix::column(vec![0.1, -0.2, 0.3]),
            0.5,
        )
        .unwrap();
        let x = SparseVec {
            dim: 2,
            entries: vec![(0, 0.6), (1, 0.8)],
        };
        let z: Vec<f64> = (0..3)
            .map(|k| (m.weights.get(k, 0) * 0.6 + m.weights.get(k, 1) * 0.8 + m.bias.data[k]) / 0.5)
            .collect();
        let expected = reference_softmax(&z);
        let got = m.project(&x).unwrap();
        for (a, b) in got.probabilities.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = model(vec![0.0; 6], 3, 2);
        assert!(matches!(m.project(&SparseVec::zeros(5)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn alphabet_of_one_rejected() {
        assert!(ProjectionModel::new(Matrix::zeros(1, 3), Matrix::zeros(1, 1), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn hard_symbol_invariant_under_scaling(
            logits in prop::collection::vec(-10.0f64..10.0, 2..16),
            c in 0.01f64..100.0,
        ) {
            let a = EventDistribution::from_probabilities(reference_softmax(&logits));
            let scaled: Vec<f64> = logits.iter().map(|x| x * c).collect();
            let b = EventDistribution::from_probabilities(reference_softmax(&scaled));
            prop_assert_eq!(a.hard_symbol, b.hard_symbol);
        }
    }
}
