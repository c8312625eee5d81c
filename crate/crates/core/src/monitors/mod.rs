//! Online prefix-risk monitors over the learned event stream.
//!
//! Three differentiable monitors ([`RecurrentMonitor`], [`AttentionMonitor`],
//! [`SoftFsmMonitor`]) are trained jointly with their event projection. The
//! [`DfaMonitor`] is extracted afterwards from hard event assignments.

mod attention;
mod dfa;
mod recurrent;
mod report;
mod soft_fsm;
mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::event::{EventDistribution, ProjectionModel, Vocabulary};
use crate::hash::float_hash;
use crate::tensor::Matrix;
use crate::trace::{StepView, Trajectory};

pub use attention::{AttentionLayer, AttentionMonitor, PositionalEncoding};
pub use dfa::{
    extract_dfa, DfaMonitor, DfaParams, DfaState, FixtureState, DEFAULT_MIN_SUPPORT, DEFAULT_SMOOTHING,
};
pub use recurrent::RecurrentMonitor;
pub use report::{dfa_state_report, DfaReport, ReportRow, DEFAULT_WARNING_THRESHOLD};
pub use soft_fsm::SoftFsmMonitor;
pub use train::{encode_labeled, train, EncodedTrajectory, TrainConfig, TrainingLog};

pub const MONITOR_FORMAT: &str = "monitor/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorKind {
    #[serde(rename = "gru")]
    Recurrent,
    Attention,
    SoftFsm,
    Dfa,
}

impl MonitorKind {
    pub const TRAINABLE: [MonitorKind; 3] =
        [MonitorKind::Recurrent, MonitorKind::Attention, MonitorKind::SoftFsm];

    pub fn name(self) -> &'static str {
        match self {
            MonitorKind::Recurrent => "gru",
            MonitorKind::Attention => "attention",
            MonitorKind::SoftFsm => "soft-fsm",
            MonitorKind::Dfa => "dfa",
        }
    }
}

impl fmt::Display for MonitorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MonitorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" | "recurrent" => Ok(MonitorKind::Recurrent),
            "attention" | "transformer" => Ok(MonitorKind::Attention),
            "soft-fsm" | "fsm" => Ok(MonitorKind::SoftFsm),
            "dfa" => Ok(MonitorKind::Dfa),
            other => Err(Error::Config(format!("unknown monitor kind `{other}`"))),
        }
    }
}

/// A differentiable sequence scorer. `forward` receives tape leaves for
/// [`SequenceNet::params`] (same order) and one soft event vector per step,
/// and returns one risk probability node per step.
pub trait SequenceNet {
    fn params(&self) -> Vec<&Matrix>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;
    fn input_size(&self) -> usize;
    fn forward(&self, tape: &mut Tape, params: &[Var], events: &[Var]) -> Vec<Var>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum NeuralMonitor {
    #[serde(rename = "gru")]
    Recurrent(RecurrentMonitor),
    Attention(AttentionMonitor),
    SoftFsm(SoftFsmMonitor),
}

impl NeuralMonitor {
    pub fn kind(&self) -> MonitorKind {
        match self {
            NeuralMonitor::Recurrent(_) => MonitorKind::Recurrent,
            NeuralMonitor::Attention(_) => MonitorKind::Attention,
            NeuralMonitor::SoftFsm(_) => MonitorKind::SoftFsm,
        }
    }

    fn net(&self) -> &dyn SequenceNet {
        match self {
            NeuralMonitor::Recurrent(m) => m,
            NeuralMonitor::Attention(m) => m,
            NeuralMonitor::SoftFsm(m) => m,
        }
    }

    fn net_mut(&mut self) -> &mut dyn SequenceNet {
        match self {
            NeuralMonitor::Recurrent(m) => m,
            NeuralMonitor::Attention(m) => m,
            NeuralMonitor::SoftFsm(m) => m,
        }
    }
}

/// A trained monitor together with the event projection it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMonitor {
    pub format: String,
    pub kind: MonitorKind,
    pub config: TrainConfig,
    pub vocabulary_hash: String,
    pub projection: ProjectionModel,
    pub net: NeuralMonitor,
    pub param_hash: String,
}

impl TrainedMonitor {
    pub(crate) fn assemble(
        config: TrainConfig,
        vocabulary_hash: String,
        projection: ProjectionModel,
        net: NeuralMonitor,
    ) -> Self {
        let mut m = TrainedMonitor {
            format: MONITOR_FORMAT.into(),
            kind: net.kind(),
            config,
            vocabulary_hash,
            projection,
            net,
            param_hash: String::new(),
        };
        m.param_hash = m.compute_param_hash();
        m
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = self.projection.params();
        out.extend(self.net.net().params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.projection.params_mut();
        out.extend(self.net.net_mut().params_mut());
        out
    }

    pub fn compute_param_hash(&self) -> String {
        float_hash(self.params().into_iter().map(|m| m.data.as_slice()))
    }

    /// Risk after each event. Scores at step `t` depend only on events
    /// `0..=t`.
    pub fn score_events(&self, events: &[EventDistribution]) -> Result<Vec<f64>> {
        let net = self.net.net();
        let mut tape = Tape::new();
        let params: Vec<Var> = net.params().into_iter().map(|m| tape.leaf(m)).collect();
        let mut inputs = Vec::with_capacity(events.len());
        for e in events {
            if e.probabilities.len() != net.input_size() {
                return Err(Error::Dimension {
                    expected: net.input_size(),
                    actual: e.probabilities.len(),
                });
            }
            inputs.push(tape.leaf_vec(e.probabilities.clone()));
        }
        let out = net.forward(&mut tape, &params, &inputs);
        Ok(out.into_iter().map(|v| tape.scalar(v)).collect())
    }

    /// Online risk of a prefix. The soft FSM scores an empty prefix from its
    /// initial belief; the recurrent and attention monitors have no defined
    /// output without evidence and reject it.
    pub fn score_prefix(&self, events: &[EventDistribution]) -> Result<f64> {
        if events.is_empty() {
            return match &self.net {
                NeuralMonitor::SoftFsm(fsm) => Ok(fsm.initial_risk()),
                _ => Err(Error::Validation(format!(
                    "{} monitor cannot score an empty prefix",
                    self.kind
                ))),
            };
        }
        Ok(*self.score_events(events)?.last().expect("non-empty"))
    }

    pub fn events(&self, vocab: &Vocabulary, trajectory: &Trajectory) -> Result<Vec<EventDistribution>> {
        trajectory
            .steps
            .iter()
            .map(|s| self.projection.project(&vocab.encode(s)))
            .collect()
    }

    /// Total weighted cross-entropy over `data` and its gradient with respect
    /// to [`TrainedMonitor::params`], in that order.
    pub fn objective(&self, data: &[EncodedTrajectory], positive_weight: f64) -> (f64, Vec<Matrix>) {
        train::objective(&self.projection, self.net.net(), data, positive_weight)
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        if self.net.net().input_size() != self.projection.alphabet_size() {
            return Err(Error::Dimension {
                expected: self.projection.alphabet_size(),
                actual: self.net.net().input_size(),
            });
        }
        if self.kind != self.net.kind() {
            return Err(Error::Validation("monitor kind disagrees with its network".into()));
        }
        if self.params().iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("monitor parameters must be finite".into()));
        }
        let actual = self.compute_param_hash();
        if actual != self.param_hash {
            return Err(Error::Hygiene(format!(
                "{} monitor parameter hash {actual} does not match recorded {}",
                self.kind, self.param_hash
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json("monitor", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: TrainedMonitor =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        m.validate()?;
        Ok(m)
    }
}

/// Anything that can assign an online risk to every prefix of a trajectory.
pub trait PrefixScorer: Sync {
    fn name(&self) -> String;
    fn score_trajectory(&self, vocab: &Vocabulary, trajectory: &Trajectory) -> Result<Vec<f64>>;

    /// Scores with the planned remainder of the run available. Planned steps
    /// are accepted but not used: scores depend on the observed prefix only.
    fn score_with_plan(&self, vocab: &Vocabulary, trajectory: &Trajectory, planned: &[StepView]) -> Result<Vec<f64>> {
        let _ = planned;
        self.score_trajectory(vocab, trajectory)
    }
}

impl PrefixScorer for TrainedMonitor {
    fn name(&self) -> String {
        self.kind.to_string()
    }

    fn score_trajectory(&self, vocab: &Vocabulary, trajectory: &Trajectory) -> Result<Vec<f64>> {
        self.score_events(&self.events(vocab, trajectory)?)
    }
}

/// Stand-in for a zero-shot full-prefix judge: returns the same score for
/// every prefix. Live model judging is not wired in.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantScorer {
    pub label: String,
    pub score: f64,
}

impl ConstantScorer {
    pub fn llm_judge_stub() -> Self {
        ConstantScorer {
            label: "zero-shot-judge".into(),
            score: 0.5,
        }
    }
}

impl PrefixScorer for ConstantScorer {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn score_trajectory(&self, _vocab: &Vocabulary, trajectory: &Trajectory) -> Result<Vec<f64>> {
        Ok(vec![self.score; trajectory.len()])
    }
}
