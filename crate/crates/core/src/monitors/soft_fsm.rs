use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SequenceNet;
use crate::autodiff::{softmax_in_place, Tape, Var};
use crate::tensor::Matrix;

/// Soft finite-state monitor. The belief over `S` latent states starts at
/// `softmax(initial_logits)` and is advanced by the event-weighted mixture of
/// per-symbol transition matrices; risk is the belief-weighted mean of the
/// per-state risks `σ(risk_logits)`.
///
/// `transition_logits` is `(S·K) × S`; row `s·K + k` holds the logits of the
/// transition out of state `s` on symbol `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftFsmMonitor {
    pub state_count: usize,
    pub alphabet_size: usize,
    pub transition_logits: Matrix,
    pub initial_logits: Matrix,
    pub risk_logits: Matrix,
}

impl SoftFsmMonitor {
    pub fn init<R: Rng + ?Sized>(state_count: usize, alphabet_size: usize, rng: &mut R) -> Self {
        SoftFsmMonitor {
            state_count,
            alphabet_size,
            transition_logits: Matrix::uniform(state_count * alphabet_size, state_count, 1.0, rng),
            initial_logits: Matrix::uniform(state_count, 1, 0.1, rng),
            risk_logits: Matrix::uniform(state_count, 1, 0.5, rng),
        }
    }

    /// Row-stochastic transition tensor, laid out like `transition_logits`.
    pub fn transition_tensor(&self) -> Matrix {
        let mut t = self.transition_logits.clone();
        for row in t.data.chunks_exact_mut(self.state_count) {
            softmax_in_place(row);
        }
        t
    }

    pub fn initial_belief(&self) -> Vec<f64> {
        let mut b = self.initial_logits.data.clone();
        softmax_in_place(&mut b);
        b
    }

    pub fn state_risks(&self) -> Vec<f64> {
        self.risk_logits
            .data
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect()
    }

    /// Beliefs after each event, computed without a tape.
    pub fn beliefs(&self, events: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let t = self.transition_tensor();
        let (sc, kc) = (self.state_count, self.alphabet_size);
        let mut b = self.initial_belief();
        let mut out = Vec::with_capacity(events.len());
        for p in events {
            let mut next = vec![0.0; sc];
            for (s, bs) in b.iter().enumerate() {
                for (k, pk) in p.iter().enumerate().take(kc) {
                    let c = bs * pk;
                    for (j, n) in next.iter_mut().enumerate() {
                        *n += c * t.data[(s * kc + k) * sc + j];
                    }
                }
            }
            b = next;
            out.push(b.clone());
        }
        out
    }

    /// Risk of the empty prefix, read from the initial belief.
    pub fn initial_risk(&self) -> f64 {
        self.initial_belief()
            .iter()
            .zip(self.state_risks())
            .map(|(b, r)| b * r)
            .sum()
    }
}

impl SequenceNet for SoftFsmMonitor {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.transition_logits, &self.initial_logits, &self.risk_logits]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.transition_logits,
            &mut self.initial_logits,
            &mut self.risk_logits,
        ]
    }

    fn input_size(&self) -> usize {
        self.alphabet_size
    }

    fn forward(&self, tape: &mut Tape, p: &[Var], events: &[Var]) -> Vec<Var> {
        let [trans, init, risk] = p else {
            unreachable!("soft FSM has 3 parameter tensors")
        };
        let trans = tape.row_softmax(*trans, self.state_count);
        let mut belief = tape.softmax(*init);
        let risks = tape.sigmoid(*risk);
        events
            .iter()
            .map(|&e| {
                belief = tape.fsm_step(belief, e, trans);
                tape.dot(belief, risks)
            })
            .collect()
    }
}
