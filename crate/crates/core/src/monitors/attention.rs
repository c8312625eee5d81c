use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SequenceNet;
use crate::autodiff::{Tape, Var};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionalEncoding {
    Sinusoidal,
}

impl PositionalEncoding {
    pub fn encode(self, position: usize, dim: usize) -> Vec<f64> {
        match self {
            PositionalEncoding::Sinusoidal => (0..dim)
                .map(|i| {
                    let rate = 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
                    let angle = position as f64 / rate;
                    if i % 2 == 0 {
                        angle.sin()
                    } else {
                        angle.cos()
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionLayer {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub output: Matrix,
    pub ff_in: Matrix,
    pub ff_in_b: Matrix,
    pub ff_out: Matrix,
    pub ff_out_b: Matrix,
}

const LAYER_TENSORS: usize = 8;

impl AttentionLayer {
    fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let ff = 2 * dim;
        AttentionLayer {
            query: Matrix::uniform(dim, dim, s, rng),
            key: Matrix::uniform(dim, dim, s, rng),
            value: Matrix::uniform(dim, dim, s, rng),
            output: Matrix::uniform(dim, dim, s, rng),
            ff_in: Matrix::uniform(ff, dim, s, rng),
            ff_in_b: Matrix::zeros(ff, 1),
            ff_out: Matrix::uniform(dim, ff, 1.0 / (ff as f64).sqrt(), rng),
            ff_out_b: Matrix::zeros(dim, 1),
        }
    }
}

/// Causally masked transformer encoder over the event stream. The score at
/// step `t` only attends to positions `0..=t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMonitor {
    pub alphabet_size: usize,
    pub model_dim: usize,
    pub head_count: usize,
    pub positional: PositionalEncoding,
    pub embed: Matrix,
    pub layers: Vec<AttentionLayer>,
    pub readout_w: Matrix,
    pub readout_b: Matrix,
}

impl AttentionMonitor {
    pub fn init<R: Rng + ?Sized>(
        alphabet_size: usize,
        model_dim: usize,
        head_count: usize,
        layer_count: usize,
        rng: &mut R,
    ) -> Self {
        assert!(head_count > 0 && model_dim.is_multiple_of(head_count), "heads must divide model_dim");
        let embed = Matrix::uniform(model_dim, alphabet_size, 1.0, rng);
        let layers = (0..layer_count).map(|_| AttentionLayer::init(model_dim, rng)).collect();
        AttentionMonitor {
            alphabet_size,
            model_dim,
            head_count,
            positional: PositionalEncoding::Sinusoidal,
            embed,
            layers,
            readout_w: Matrix::uniform(model_dim, 1, 1.0 / (model_dim as f64).sqrt(), rng),
            readout_b: Matrix::zeros(1, 1),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}

impl SequenceNet for AttentionMonitor {
    fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.embed];
        for l in &self.layers {
            out.extend([
                &l.query, &l.key, &l.value, &l.output, &l.ff_in, &l.ff_in_b, &l.ff_out, &l.ff_out_b,
            ]);
        }
        out.extend([&self.readout_w, &self.readout_b]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embed];
        for l in &mut self.layers {
            out.extend([
                &mut l.query,
                &mut l.key,
                &mut l.value,
                &mut l.output,
                &mut l.ff_in,
                &mut l.ff_in_b,
                &mut l.ff_out,
                &mut l.ff_out_b,
            ]);
        }
        out.extend([&mut self.readout_w, &mut self.readout_b]);
        out
    }

    fn input_size(&self) -> usize {
        self.alphabet_size
    }

    fn forward(&self, tape: &mut Tape, p: &[Var], events: &[Var]) -> Vec<Var> {
        let dim = self.model_dim;
        let head_dim = dim / self.head_count;
        let inv_sqrt = 1.0 / (head_dim as f64).sqrt();
        let embed = p[0];
        let (ro_w, ro_b) = (p[p.len() - 2], p[p.len() - 1]);

        let mut xs: Vec<Var> = events
            .iter()
            .enumerate()
            .map(|(t, &e)| {
                let x = tape.matvec(embed, e);
                tape.add_const(x, &self.positional.encode(t, dim))
            })
            .collect();

        for layer in p[1..p.len() - 2].chunks_exact(LAYER_TENSORS) {
            let [wq, wk, wv, wo, f1, f1b, f2, f2b] = layer else {
                unreachable!()
            };
            let qs: Vec<Var> = xs.iter().map(|&x| tape.matvec(*wq, x)).collect();
            let ks: Vec<Var> = xs.iter().map(|&x| tape.matvec(*wk, x)).collect();
            let vs: Vec<Var> = xs.iter().map(|&x| tape.matvec(*wv, x)).collect();
            let mut next = Vec::with_capacity(xs.len());
            for t in 0..xs.len() {
                let mut heads = Vec::with_capacity(self.head_count);
                for h in 0..self.head_count {
                    let q = tape.slice(qs[t], h * head_dim, head_dim);
                    let mut scores = Vec::with_capacity(t + 1);
                    let mut values = Vec::with_capacity(t + 1);
                    for j in 0..=t {
                        let k = tape.slice(ks[j], h * head_dim, head_dim);
                        let s = tape.dot(q, k);
                        scores.push(tape.scale(s, inv_sqrt));
                        values.push(tape.slice(vs[j], h * head_dim, head_dim));
                    }
                    let s = tape.stack(&scores);
                    let a = tape.softmax(s);
                    heads.push(tape.weighted_sum(a, &values));
                }
                let cat = tape.concat(&heads);
                let attn = tape.matvec(*wo, cat);
                let x = tape.add(xs[t], attn);
                let hidden = tape.matvec(*f1, x);
                let hidden = tape.add(hidden, *f1b);
                let hidden = tape.relu(hidden);
                let ff = tape.matvec(*f2, hidden);
                let ff = tape.add(ff, *f2b);
                next.push(tape.add(x, ff));
            }
            xs = next;
        }

        xs.into_iter()
            .map(|x| {
                let logit = tape.dot(ro_w, x);
                let logit = tape.add(logit, ro_b);
                tape.sigmoid(logit)
            })
            .collect()
    }
}
