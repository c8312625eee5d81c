use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SequenceNet;
use crate::autodiff::{Tape, Var};
use crate::tensor::Matrix;

/// GRU prefix scorer over soft event inputs:
///
/// ```text
/// z = σ(W_z x + U_z h + b_z)
/// r = σ(W_r x + U_r h + b_r)
/// c = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ c
/// risk = σ(w · h' + b)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentMonitor {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_update: Matrix,
    pub u_update: Matrix,
    pub b_update: Matrix,
    pub w_reset: Matrix,
    pub u_reset: Matrix,
    pub b_reset: Matrix,
    pub w_candidate: Matrix,
    pub u_candidate: Matrix,
    pub b_candidate: Matrix,
    pub readout_w: Matrix,
    pub readout_b: Matrix,
}

impl RecurrentMonitor {
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let s = 1.0 / (hidden_size as f64).sqrt();
        let mut m = |r, c| Matrix::uniform(r, c, s, rng);
        RecurrentMonitor {
            input_size,
            hidden_size,
            w_update: m(hidden_size, input_size),
            u_update: m(hidden_size, hidden_size),
            b_update: m(hidden_size, 1),
            w_reset: m(hidden_size, input_size),
            u_reset: m(hidden_size, hidden_size),
            b_reset: m(hidden_size, 1),
            w_candidate: m(hidden_size, input_size),
            u_candidate: m(hidden_size, hidden_size),
            b_candidate: m(hidden_size, 1),
            readout_w: m(hidden_size, 1),
            readout_b: Matrix::zeros(1, 1),
        }
    }
}

impl SequenceNet for RecurrentMonitor {
    fn params(&self) -> Vec<&Matrix> {
        vec![
            &self.w_update,
            &self.u_update,
            &self.b_update,
            &self.w_reset,
            &self.u_reset,
            &self.b_reset,
            &self.w_candidate,
            &self.u_candidate,
            &self.b_candidate,
            &self.readout_w,
            &self.readout_b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_update,
            &mut self.u_update,
            &mut self.b_update,
            &mut self.w_reset,
            &mut self.u_reset,
            &mut self.b_reset,
            &mut self.w_candidate,
            &mut self.u_candidate,
            &mut self.b_candidate,
            &mut self.readout_w,
            &mut self.readout_b,
        ]
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn forward(&self, tape: &mut Tape, p: &[Var], events: &[Var]) -> Vec<Var> {
        let [wz, uz, bz, wr, ur, br, wh, uh, bh, ro_w, ro_b] = p else {
            unreachable!("recurrent monitor has 11 parameter tensors")
        };
        let mut h = tape.leaf_vec(vec![0.0; self.hidden_size]);
        let mut out = Vec::with_capacity(events.len());
        for &x in events {
            let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, h: Var| {
                let a = tape.matvec(w, x);
                let c = tape.matvec(u, h);
                let s = tape.add(a, c);
                tape.add(s, b)
            };
            let z = gate(tape, *wz, *uz, *bz, h);
            let z = tape.sigmoid(z);
            let r = gate(tape, *wr, *ur, *br, h);
            let r = tape.sigmoid(r);
            let rh = tape.mul(r, h);
            let c = gate(tape, *wh, *uh, *bh, rh);
            let c = tape.tanh(c);
            let keep = tape.one_minus(z);
            let keep = tape.mul(keep, h);
            let write = tape.mul(z, c);
            h = tape.add(keep, write);
            let logit = tape.dot(*ro_w, h);
            let logit = tape.add(logit, *ro_b);
            out.push(tape.sigmoid(logit));
        }
        out
    }
}
