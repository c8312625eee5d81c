use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    AttentionMonitor, MonitorKind, NeuralMonitor, RecurrentMonitor, SequenceNet, SoftFsmMonitor,
    TrainedMonitor,
};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::event::{ProjectionModel, Vocabulary};
use crate::tensor::{Matrix, SparseVec};
use crate::trace::{label_prefixes, Trajectory, DEFAULT_HORIZON};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub horizon: usize,
    /// Upper bound on the positive-class weight `neg / pos`.
    pub class_weight_cap: f64,
    pub gradient_clip: f64,
    pub alphabet_size: usize,
    pub temperature: f64,
    pub max_terms: usize,
    pub hidden_size: usize,
    pub model_dim: usize,
    pub head_count: usize,
    pub layer_count: usize,
    pub fsm_states: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            epochs: 30,
            learning_rate: 0.01,
            batch_size: 32,
            horizon: DEFAULT_HORIZON,
            class_weight_cap: 20.0,
            gradient_clip: 5.0,
            alphabet_size: 32,
            temperature: 1.0,
            max_terms: 512,
            hidden_size: 16,
            model_dim: 16,
            head_count: 2,
            layer_count: 1,
            fsm_states: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("horizon", self.horizon),
            ("max_terms", self.max_terms),
            ("hidden_size", self.hidden_size),
            ("model_dim", self.model_dim),
            ("head_count", self.head_count),
            ("layer_count", self.layer_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.alphabet_size < 2 {
            return Err(Error::Config("alphabet_size must be at least 2".into()));
        }
        if self.fsm_states < 1 {
            return Err(Error::Config("fsm_states must be positive".into()));
        }
        if !self.model_dim.is_multiple_of(self.head_count) {
            return Err(Error::Config("model_dim must be divisible by head_count".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("temperature", self.temperature),
            ("class_weight_cap", self.class_weight_cap),
            ("gradient_clip", self.gradient_clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// Encoded steps of one trajectory with the warning label of each prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTrajectory {
    pub trajectory_id: String,
    pub vectors: Vec<SparseVec>,
    pub labels: Vec<bool>,
}

pub fn encode_labeled(
    vocab: &Vocabulary,
    trajectories: &[Trajectory],
    horizon: usize,
) -> Result<Vec<EncodedTrajectory>> {
    trajectories
        .iter()
        .map(|t| {
            let labels = label_prefixes(t, horizon)?;
            Ok(EncodedTrajectory {
                trajectory_id: t.trajectory_id.clone(),
                vectors: t.steps.iter().map(|s| vocab.encode(s)).collect(),
                labels: labels.into_iter().map(|l| l.positive).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub kind: MonitorKind,
    pub positive_weight: f64,
    pub positives: usize,
    pub negatives: usize,
    pub epoch_losses: Vec<f64>,
}

/// Accumulates the weighted cross-entropy of one trajectory into `grads`
/// (projection parameters first, then the network's) and returns the loss.
fn accumulate(
    projection: &ProjectionModel,
    net: &dyn SequenceNet,
    item: &EncodedTrajectory,
    positive_weight: f64,
    scale: f64,
    grads: &mut [Matrix],
) -> f64 {
    let mut tape = Tape::new();
    let w = tape.leaf(&projection.weights);
    let b = tape.leaf(&projection.bias);
    let params: Vec<Var> = net.params().into_iter().map(|m| tape.leaf(m)).collect();
    let events: Vec<Var> = item
        .vectors
        .iter()
        .map(|x| projection.forward(&mut tape, w, b, x))
        .collect();
    let risks = net.forward(&mut tape, &params, &events);
    let losses: Vec<Var> = risks
        .iter()
        .zip(&item.labels)
        .map(|(&r, &y)| {
            let weight = if y { positive_weight } else { 1.0 };
            tape.bce(r, if y { 1.0 } else { 0.0 }, weight * scale)
        })
        .collect();
    let total = tape.sum(&losses);
    let g = tape.backward(total);
    for (acc, var) in grads.iter_mut().zip([w, b].into_iter().chain(params)) {
        for (a, d) in acc.data.iter_mut().zip(g.get(var)) {
            *a += d;
        }
    }
    tape.scalar(total)
}

fn zero_like(projection: &ProjectionModel, net: &dyn SequenceNet) -> Vec<Matrix> {
    projection
        .params()
        .into_iter()
        .chain(net.params())
        .map(|m| Matrix::zeros(m.rows, m.cols))
        .collect()
}

pub(super) fn objective(
    projection: &ProjectionModel,
    net: &dyn SequenceNet,
    data: &[EncodedTrajectory],
    positive_weight: f64,
) -> (f64, Vec<Matrix>) {
    let mut grads = zero_like(projection, net);
    let loss = data
        .iter()
        .map(|item| accumulate(projection, net, item, positive_weight, 1.0, &mut grads))
        .sum();
    (loss, grads)
}

struct Adam {
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(shapes: &[Matrix]) -> Self {
        Adam {
            step: 0,
            m: shapes.iter().map(|g| vec![0.0; g.len()]).collect(),
            v: shapes.iter().map(|g| vec![0.0; g.len()]).collect(),
        }
    }

    fn update(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            for (j, (x, d)) in p.data.iter_mut().zip(&g.data).enumerate() {
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * d;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * d * d;
                *x -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn clip(grads: &mut [Matrix], max_norm: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data.iter())
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|d| *d *= s));
    }
}

/// Trains a monitor and its event projection jointly on labeled prefixes.
/// Identical inputs and configuration give bit-identical parameters.
pub fn train(
    kind: MonitorKind,
    data: &[EncodedTrajectory],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(TrainedMonitor, TrainingLog)> {
    config.validate()?;
    vocab.validate()?;
    let dim = vocab.size();
    for item in data {
        if item.vectors.len() != item.labels.len() {
            return Err(Error::Validation(format!(
                "trajectory {} has {} steps but {} labels",
                item.trajectory_id,
                item.vectors.len(),
                item.labels.len()
            )));
        }
        if let Some(v) = item.vectors.iter().find(|v| v.dim != dim) {
            return Err(Error::Dimension {
                expected: dim,
                actual: v.dim,
            });
        }
    }
    let positives = data.iter().flat_map(|d| &d.labels).filter(|&&y| y).count();
    let negatives = data.iter().map(|d| d.labels.len()).sum::<usize>() - positives;
    if positives == 0 {
        return Err(Error::DegenerateObjective(
            "training split has no positive prefixes".into(),
        ));
    }
    let positive_weight = if negatives == 0 {
        1.0
    } else {
        (negatives as f64 / positives as f64).min(config.class_weight_cap)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.alphabet_size;
    let mut projection = ProjectionModel::init(k, dim, config.temperature, &mut rng)?;
    let mut net = match kind {
        MonitorKind::Recurrent => {
            NeuralMonitor::Recurrent(RecurrentMonitor::init(k, config.hidden_size, &mut rng))
        }
        MonitorKind::Attention => NeuralMonitor::Attention(AttentionMonitor::init(
            k,
            config.model_dim,
            config.head_count,
            config.layer_count,
            &mut rng,
        )),
        MonitorKind::SoftFsm => {
            NeuralMonitor::SoftFsm(SoftFsmMonitor::init(config.fsm_states, k, &mut rng))
        }
        MonitorKind::Dfa => {
            return Err(Error::Config(
                "the DFA monitor is extracted from a trained projection, not trained".into(),
            ))
        }
    };

    let mut adam = Adam::new(&zero_like(&projection, net.net()));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_prefixes = 0usize;
        for batch in order.chunks(config.batch_size) {
            let prefixes: usize = batch.iter().map(|&i| data[i].labels.len()).sum();
            if prefixes == 0 {
                continue;
            }
            let scale = 1.0 / prefixes as f64;
            let mut grads = zero_like(&projection, net.net());
            let mut loss = 0.0;
            for &i in batch {
                loss += accumulate(&projection, net.net(), &data[i], positive_weight, scale, &mut grads);
            }
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient in epoch {epoch} while training {kind}"
                )));
            }
            clip(&mut grads, config.gradient_clip);
            let mut params = projection.params_mut();
            params.extend(net.net_mut().params_mut());
            adam.update(params, &grads, config.learning_rate);
            epoch_loss += loss * prefixes as f64;
            epoch_prefixes += prefixes;
        }
        let mean = epoch_loss / epoch_prefixes.max(1) as f64;
        log::debug!("{kind} epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }

    let monitor = TrainedMonitor::assemble(config.clone(), vocab.content_hash(), projection, net);
    let log = TrainingLog {
        kind,
        positive_weight,
        positives,
        negatives,
        epoch_losses,
    };
    Ok((monitor, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Outcome, Status, StepView};

    fn step(action: &str, status: Status) -> StepView {
        StepView {
            action: action.into(),
            status,
            ..Default::default()
        }
    }

    fn toy() -> Vec<Trajectory> {
        let mut out = Vec::new();
        for i in 0..12 {
            let fail = i % 3 == 0;
            let mut steps: Vec<StepView> = (0..6).map(|_| step("browse page", Status::Ok)).collect();
            if fail {
                steps[2] = step("retry broken form", Status::Error);
                steps[4] = step("retry broken form", Status::Error);
            }
            let outcome = if fail { Outcome::Failure } else { Outcome::Success };
            out.push(Trajectory::new(format!("t{i}"), "toy", steps, outcome).unwrap());
        }
        out
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            alphabet_size: 4,
            hidden_size: 4,
            model_dim: 4,
            fsm_states: 3,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let trajs = toy();
        let vocab = Vocabulary::build(trajs.iter().flat_map(|t| &t.steps), 64).unwrap();
        let data = encode_labeled(&vocab, &trajs, 3).unwrap();
        for kind in MonitorKind::TRAINABLE {
            let (a, _) = train(kind, &data, &vocab, &small_config()).unwrap();
            let (b, _) = train(kind, &data, &vocab, &small_config()).unwrap();
            assert_eq!(a.param_hash, b.param_hash);
            a.validate().unwrap();
        }
    }

    #[test]
    fn single_trajectory_loss_decreases() {
        let trajs = toy()[..1].to_vec();
        assert!(trajs[0].is_failure());
        let vocab = Vocabulary::build(trajs.iter().flat_map(|t| &t.steps), 64).unwrap();
        let data = encode_labeled(&vocab, &trajs, 3).unwrap();
        let config = TrainConfig {
            epochs: 50,
            ..small_config()
        };
        for kind in MonitorKind::TRAINABLE {
            let (_, log) = train(kind, &data, &vocab, &config).unwrap();
            assert_eq!(log.epoch_losses.len(), 50);
            for w in log.epoch_losses[..10].windows(2) {
                assert!(w[1] < w[0], "{kind}: {:?}", &log.epoch_losses[..10]);
            }
        }
    }

    #[test]
    fn no_positives_is_degenerate() {
        let trajs: Vec<Trajectory> = toy()
            .into_iter()
            .filter(|t| !t.is_failure())
            .collect();
        let vocab = Vocabulary::build(trajs.iter().flat_map(|t| &t.steps), 64).unwrap();
        let data = encode_labeled(&vocab, &trajs, 3).unwrap();
        let err = train(MonitorKind::Recurrent, &data, &vocab, &small_config()).unwrap_err();
        assert!(matches!(err, Error::DegenerateObjective(_)));
    }

    #[test]
    fn dfa_is_not_trainable() {
        let trajs = toy();
        let vocab = Vocabulary::build(trajs.iter().flat_map(|t| &t.steps), 64).unwrap();
        let data = encode_labeled(&vocab, &trajs, 3).unwrap();
        assert!(train(MonitorKind::Dfa, &data, &vocab, &small_config()).is_err());
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let trajs = toy();
        let vocab = Vocabulary::build(trajs.iter().flat_map(|t| &t.steps), 64).unwrap();
        let data = encode_labeled(&vocab, &trajs[..4], 3).unwrap();
        for kind in MonitorKind::TRAINABLE {
            let (mut m, _) = train(kind, &data, &vocab, &small_config()).unwrap();
            let (_, grads) = m.objective(&data, 2.0);
            let h = 1e-6;
            for (p, g) in grads.iter().enumerate() {
                for j in [0, g.len() / 2, g.len() - 1] {
                    let orig = m.params()[p].data[j];
                    m.params_mut()[p].data[j] = orig + h;
                    let (up, _) = m.objective(&data, 2.0);
                    m.params_mut()[p].data[j] = orig - h;
                    let (down, _) = m.objective(&data, 2.0);
                    m.params_mut()[p].data[j] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = g.data[j];
                    let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
                    assert!(err < 1e-4, "{kind} param {p}[{j}]: {analytic} vs {numeric}");
                }
            }
        }
    }
}
