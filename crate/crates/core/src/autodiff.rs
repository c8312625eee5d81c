//! Minimal reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records values in topological order; [`Tape::backward`] walks it
//! in reverse and returns one gradient buffer per node. Only the operations
//! the monitors need are provided, several of them fused (for example
//! [`Tape::fsm_step`]) so a step costs a handful of nodes.

use crate::tensor::{Matrix, SparseVec};

const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec { w: usize, x: usize },
    SparseMatVec { w: usize, x: SparseVec },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    OneMinus(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    RowSoftmax { x: usize, width: usize },
    Dot(usize, usize),
    Stack(Vec<usize>),
    Concat(Vec<usize>),
    Slice { x: usize, start: usize },
    WeightedSum { weights: usize, items: Vec<usize> },
    FsmStep { belief: usize, probs: usize, trans: usize },
    Bce { p: usize, target: f64, weight: f64 },
    Sum(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; empty when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn vector(&mut self, value: Vec<f64>, op: Op) -> Var {
        let n = value.len();
        self.push(value, n, 1, op)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn leaf(&mut self, m: &Matrix) -> Var {
        self.push(m.data.clone(), m.rows, m.cols, Op::Leaf)
    }

    pub fn leaf_vec(&mut self, v: Vec<f64>) -> Var {
        self.vector(v, Op::Leaf)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (wn, xn) = (&self.nodes[w.0], &self.nodes[x.0]);
        assert_eq!(wn.cols, xn.value.len(), "matvec shape");
        let out: Vec<f64> = wn
            .value
            .chunks_exact(wn.cols)
            .map(|row| row.iter().zip(&xn.value).map(|(a, b)| a * b).sum())
            .collect();
        self.vector(out, Op::MatVec { w: w.0, x: x.0 })
    }

    pub fn sparse_matvec(&mut self, w: Var, x: &SparseVec) -> Var {
        let wn = &self.nodes[w.0];
        assert_eq!(wn.cols, x.dim, "sparse matvec shape");
        let out: Vec<f64> = wn.value.chunks_exact(wn.cols).map(|row| x.dot_dense(row)).collect();
        self.vector(
            out,
            Op::SparseMatVec {
                w: w.0,
                x: x.clone(),
            },
        )
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise shape");
        let out = av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect();
        self.vector(out, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| f(*x)).collect();
        self.vector(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a.0, c))
    }

    pub fn add_const(&mut self, a: Var, c: &[f64]) -> Var {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.len(), c.len(), "add_const shape");
        let out = av.iter().zip(c).map(|(x, y)| x + y).collect();
        self.vector(out, Op::AddConst(a.0))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        softmax_in_place(&mut out);
        self.vector(out, Op::Softmax(a.0))
    }

    /// Softmax over consecutive runs of `width` entries.
    pub fn row_softmax(&mut self, a: Var, width: usize) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        assert_eq!(out.len() % width, 0, "row_softmax width");
        for row in out.chunks_exact_mut(width) {
            softmax_in_place(row);
        }
        let rows = out.len() / width;
        self.push(out, rows, width, Op::RowSoftmax { x: a.0, width })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "dot shape");
        let d = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        self.vector(vec![d], Op::Dot(a.0, b.0))
    }

    /// Collects scalar nodes into one vector.
    pub fn stack(&mut self, items: &[Var]) -> Var {
        let out = items.iter().map(|v| self.nodes[v.0].value[0]).collect();
        self.vector(out, Op::Stack(items.iter().map(|v| v.0).collect()))
    }

    pub fn concat(&mut self, items: &[Var]) -> Var {
        let out = items
            .iter()
            .flat_map(|v| self.nodes[v.0].value.iter().copied())
            .collect();
        self.vector(out, Op::Concat(items.iter().map(|v| v.0).collect()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.nodes[a.0].value[start..start + len].to_vec();
        self.vector(out, Op::Slice { x: a.0, start })
    }

    /// `Σ_i weights[i] · items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = &self.nodes[weights.0].value;
        assert_eq!(w.len(), items.len(), "weighted_sum arity");
        let dim = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; dim];
        for (wi, item) in w.iter().zip(items) {
            for (o, x) in out.iter_mut().zip(&self.nodes[item.0].value) {
                *o += wi * x;
            }
        }
        self.vector(
            out,
            Op::WeightedSum {
                weights: weights.0,
                items: items.iter().map(|v| v.0).collect(),
            },
        )
    }

    /// One soft finite-state update:
    /// `next[j] = Σ_k probs[k] Σ_s belief[s] · trans[s, k, j]`, where `trans`
    /// is laid out as `(S·K) × S` with row index `s·K + k`.
    pub fn fsm_step(&mut self, belief: Var, probs: Var, trans: Var) -> Var {
        let b = &self.nodes[belief.0].value;
        let p = &self.nodes[probs.0].value;
        let t = &self.nodes[trans.0];
        let (s_count, k_count) = (b.len(), p.len());
        assert_eq!(t.cols, s_count, "fsm_step state count");
        assert_eq!(t.rows, s_count * k_count, "fsm_step symbol count");
        let mut out = vec![0.0; s_count];
        for (s, bs) in b.iter().enumerate() {
            for (k, pk) in p.iter().enumerate() {
                let c = bs * pk;
                if c == 0.0 {
                    continue;
                }
                let row = &t.value[(s * k_count + k) * s_count..][..s_count];
                for (o, tj) in out.iter_mut().zip(row) {
                    *o += c * tj;
                }
            }
        }
        self.vector(
            out,
            Op::FsmStep {
                belief: belief.0,
                probs: probs.0,
                trans: trans.0,
            },
        )
    }

    /// Weighted binary cross-entropy of a probability node.
    pub fn bce(&mut self, p: Var, target: f64, weight: f64) -> Var {
        let pv = self.nodes[p.0].value[0].clamp(BCE_EPS, 1.0 - BCE_EPS);
        let loss = -weight * (target * pv.ln() + (1.0 - target) * (1.0 - pv).ln());
        self.vector(
            vec![loss],
            Op::Bce {
                p: p.0,
                target,
                weight,
            },
        )
    }

    pub fn sum(&mut self, items: &[Var]) -> Var {
        let s = items.iter().map(|v| self.nodes[v.0].value[0]).sum();
        self.vector(vec![s], Op::Sum(items.iter().map(|v| v.0).collect()))
    }

    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0; self.nodes[loss.0].value.len()];

        fn acc<'a>(grads: &'a mut [Vec<f64>], nodes: &[Node], target: usize) -> &'a mut Vec<f64> {
            if grads[target].is_empty() {
                grads[target] = vec![0.0; nodes[target].value.len()];
            }
            &mut grads[target]
        }

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            let y = &node.value;
            let nodes = &self.nodes;
            match &node.op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let (wn, xv) = (&nodes[*w], &nodes[*x].value);
                    let cols = wn.cols;
                    {
                        let gw = acc(&mut grads, nodes, *w);
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            for (dst, xj) in gw[i * cols..(i + 1) * cols].iter_mut().zip(xv) {
                                *dst += gi * xj;
                            }
                        }
                    }
                    let gx = acc(&mut grads, nodes, *x);
                    for (i, gi) in g.iter().enumerate() {
                        for (dst, wij) in gx.iter_mut().zip(&wn.value[i * cols..(i + 1) * cols]) {
                            *dst += gi * wij;
                        }
                    }
                }
                Op::SparseMatVec { w, x } => {
                    let cols = nodes[*w].cols;
                    let gw = acc(&mut grads, nodes, *w);
                    for (i, gi) in g.iter().enumerate() {
                        for &(j, v) in &x.entries {
                            gw[i * cols + j] += gi * v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, nodes, *a), &g, 1.0);
                    add_into(acc(&mut grads, nodes, *b), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, nodes, *a), &g, 1.0);
                    add_into(acc(&mut grads, nodes, *b), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                    let gb = acc(&mut grads, nodes, *b);
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Scale(a, c) => add_into(acc(&mut grads, nodes, *a), &g, *c),
                Op::AddConst(a) => add_into(acc(&mut grads, nodes, *a), &g, 1.0),
                Op::OneMinus(a) => add_into(acc(&mut grads, nodes, *a), &g, -1.0),
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Relu(a) => {
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..g.len() {
                        if y[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                }
                Op::Softmax(a) => {
                    softmax_backward(acc(&mut grads, nodes, *a), &g, y);
                }
                Op::RowSoftmax { x, width } => {
                    let gx = acc(&mut grads, nodes, *x);
                    for ((gxr, gr), yr) in gx
                        .chunks_exact_mut(*width)
                        .zip(g.chunks_exact(*width))
                        .zip(y.chunks_exact(*width))
                    {
                        softmax_backward(gxr, gr, yr);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    add_into(acc(&mut grads, nodes, *a), bv, g[0]);
                    add_into(acc(&mut grads, nodes, *b), av, g[0]);
                }
                Op::Stack(items) => {
                    for (i, item) in items.iter().enumerate() {
                        acc(&mut grads, nodes, *item)[0] += g[i];
                    }
                }
                Op::Concat(items) => {
                    let mut offset = 0;
                    for item in items {
                        let n = nodes[*item].value.len();
                        add_into(acc(&mut grads, nodes, *item), &g[offset..offset + n], 1.0);
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    let gx = acc(&mut grads, nodes, *x);
                    for (i, gi) in g.iter().enumerate() {
                        gx[start + i] += gi;
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv = &nodes[*weights].value;
                    for (i, item) in items.iter().enumerate() {
                        let iv = &nodes[*item].value;
                        let d: f64 = g.iter().zip(iv).map(|(a, b)| a * b).sum();
                        acc(&mut grads, nodes, *weights)[i] += d;
                        add_into(acc(&mut grads, nodes, *item), &g, wv[i]);
                    }
                }
                Op::FsmStep {
                    belief,
                    probs,
                    trans,
                } => {
                    let bv = &nodes[*belief].value;
                    let pv = &nodes[*probs].value;
                    let tv = &nodes[*trans].value;
                    let (sc, kc) = (bv.len(), pv.len());
                    // m[s,k] = Σ_j trans[s,k,j] g[j]
                    let m: Vec<f64> = tv
                        .chunks_exact(sc)
                        .map(|row| row.iter().zip(&g).map(|(t, gj)| t * gj).sum())
                        .collect();
                    {
                        let gb = acc(&mut grads, nodes, *belief);
                        for s in 0..sc {
                            gb[s] += (0..kc).map(|k| pv[k] * m[s * kc + k]).sum::<f64>();
                        }
                    }
                    {
                        let gp = acc(&mut grads, nodes, *probs);
                        for k in 0..kc {
                            gp[k] += (0..sc).map(|s| bv[s] * m[s * kc + k]).sum::<f64>();
                        }
                    }
                    let gt = acc(&mut grads, nodes, *trans);
                    for s in 0..sc {
                        for k in 0..kc {
                            let c = bv[s] * pv[k];
                            if c == 0.0 {
                                continue;
                            }
                            let row = &mut gt[(s * kc + k) * sc..][..sc];
                            for (dst, gj) in row.iter_mut().zip(&g) {
                                *dst += c * gj;
                            }
                        }
                    }
                }
                Op::Bce { p, target, weight } => {
                    let raw = nodes[*p].value[0];
                    if raw > BCE_EPS && raw < 1.0 - BCE_EPS {
                        let d = weight * (-target / raw + (1.0 - target) / (1.0 - raw));
                        acc(&mut grads, nodes, *p)[0] += g[0] * d;
                    }
                }
                Op::Sum(items) => {
                    for item in items {
                        acc(&mut grads, nodes, *item)[0] += g[0];
                    }
                }
            }
            grads[idx] = g;
        }
        Gradients { grads }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn softmax_backward(gx: &mut [f64], g: &[f64], y: &[f64]) {
    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
    for i in 0..g.len() {
        gx[i] += y[i] * (g[i] - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of `build` with respect to its leaf inputs.
    fn check(leaves: Vec<Matrix>, build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let eval = |ls: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<_> = ls.iter().map(|m| t.leaf(m)).collect();
            let out = build(&mut t, &vars);
            t.scalar(out)
        };
        let mut tape = Tape::new();
        let vars: Vec<_> = leaves.iter().map(|m| tape.leaf(m)).collect();
        let out = build(&mut tape, &vars);
        let grads = tape.backward(out);
        let h = 1e-6;
        for (li, leaf) in leaves.iter().enumerate() {
            let g = grads.get(vars[li]);
            for i in 0..leaf.len() {
                let mut plus = leaves.clone();
                plus[li].data[i] += h;
                let mut minus = leaves.clone();
                minus[li].data[i] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let analytic = if g.is_empty() { 0.0 } else { g[i] };
                let scale = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (numeric - analytic).abs() / scale < 1e-5,
                    "leaf {li}[{i}]: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::uniform(r, c, 1.0, rng)
    }

    #[test]
    fn elementwise_and_matvec_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let leaves = vec![rand_matrix(&mut rng, 3, 4), rand_matrix(&mut rng, 4, 1), rand_matrix(&mut rng, 3, 1)];
        check(leaves, |t, v| {
            let y = t.matvec(v[0], v[1]);
            let s = t.sigmoid(y);
            let th = t.tanh(v[2]);
            let m = t.mul(s, th);
            let om = t.one_minus(m);
            let sc = t.scale(om, 0.7);
            let sm = t.softmax(sc);
            let d = t.dot(sm, v[2]);
            let r = t.sub(d, d);
            let a = t.add(r, d);
            t.sigmoid(a)
        });
    }

    #[test]
    fn attention_style_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let leaves = vec![rand_matrix(&mut rng, 4, 1), rand_matrix(&mut rng, 4, 1), rand_matrix(&mut rng, 4, 1)];
        check(leaves, |t, v| {
            let s0 = t.dot(v[0], v[1]);
            let s1 = t.dot(v[0], v[2]);
            let st = t.stack(&[s0, s1]);
            let w = t.softmax(st);
            let o = t.weighted_sum(w, &[v[1], v[2]]);
            let c = t.concat(&[o, v[0]]);
            let sl = t.slice(c, 2, 4);
            let r = t.relu(sl);
            let k = t.add_const(r, &[0.1, -0.2, 0.3, 0.0]);
            let ones = t.leaf_vec(vec![1.0; 4]);
            let d = t.dot(k, ones);
            let p = t.sigmoid(d);
            t.bce(p, 1.0, 2.0)
        });
    }

    #[test]
    fn fsm_step_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s, k) = (3, 2);
        let leaves = vec![
            rand_matrix(&mut rng, s, 1),
            rand_matrix(&mut rng, k, 1),
            rand_matrix(&mut rng, s * k, s),
            rand_matrix(&mut rng, s, 1),
        ];
        check(leaves, |t, v| {
            let b = t.softmax(v[0]);
            let p = t.softmax(v[1]);
            let tr = t.row_softmax(v[2], 3);
            let b1 = t.fsm_step(b, p, tr);
            let b2 = t.fsm_step(b1, p, tr);
            let r = t.sigmoid(v[3]);
            let risk = t.dot(b2, r);
            let l1 = t.bce(risk, 0.0, 1.0);
            let l2 = t.bce(risk, 1.0, 3.0);
            t.sum(&[l1, l2])
        });
    }

    #[test]
    fn sparse_matvec_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = SparseVec {
            dim: 5,
            entries: vec![(1, 0.5), (3, -0.25)],
        };
        check(vec![rand_matrix(&mut rng, 2, 5)], move |t, v| {
            let y = t.sparse_matvec(v[0], &x);
            let s = t.softmax(y);
            t.slice(s, 0, 1)
        });
    }
}
