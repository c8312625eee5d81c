//! Canonical trajectory representation, prefixes and horizon warning labels.

mod file;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{read_trajectories, read_trajectories_from, write_trajectories, write_trajectories_to};

/// Warning horizon used when a run does not configure one.
pub const DEFAULT_HORIZON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
    #[default]
    Unknown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Error => "error",
            Status::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One execution step in canonical form. Every monitor consumes this shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StepView {
    pub step_index: usize,
    pub metadata: BTreeMap<String, String>,
    pub observation: String,
    pub action: String,
    pub tool: String,
    pub arguments: String,
    pub result: String,
    pub status: Status,
}

/// Content fields of a [`StepView`], in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepField {
    Metadata,
    Observation,
    Action,
    Tool,
    Arguments,
    Result,
    Status,
}

impl StepField {
    pub const ALL: [StepField; 7] = [
        StepField::Metadata,
        StepField::Observation,
        StepField::Action,
        StepField::Tool,
        StepField::Arguments,
        StepField::Result,
        StepField::Status,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepField::Metadata => "metadata",
            StepField::Observation => "observation",
            StepField::Action => "action",
            StepField::Tool => "tool",
            StepField::Arguments => "arguments",
            StepField::Result => "result",
            StepField::Status => "status",
        }
    }
}

impl fmt::Display for StepField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub environment_tag: String,
    pub steps: Vec<StepView>,
    pub outcome: Outcome,
}

impl Trajectory {
    /// Builds a trajectory, assigning contiguous step indices.
    pub fn new(
        trajectory_id: impl Into<String>,
        environment_tag: impl Into<String>,
        mut steps: Vec<StepView>,
        outcome: Outcome,
    ) -> Result<Self> {
        for (i, step) in steps.iter_mut().enumerate() {
            step.step_index = i;
        }
        let trajectory = Trajectory {
            trajectory_id: trajectory_id.into(),
            environment_tag: environment_tag.into(),
            steps,
            outcome,
        };
        trajectory.validate()?;
        Ok(trajectory)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_failure(&self) -> bool {
        self.outcome == Outcome::Failure
    }

    /// Checks non-emptiness and contiguous `0..T` step indices. Gaps are
    /// rejected, never repaired.
    pub fn validate(&self) -> Result<()> {
        if self.trajectory_id.is_empty() {
            return Err(Error::Validation("trajectory id is empty".into()));
        }
        if self.steps.is_empty() {
            return Err(Error::Validation(format!(
                "trajectory `{}` has no steps",
                self.trajectory_id
            )));
        }
        for (expected, step) in self.steps.iter().enumerate() {
            if step.step_index != expected {
                return Err(Error::Validation(format!(
                    "trajectory `{}`: step at position {expected} has step_index {}",
                    self.trajectory_id, step.step_index
                )));
            }
        }
        Ok(())
    }
}

/// The observation available to an online monitor after step `end_index`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prefix {
    pub trajectory_id: String,
    pub end_index: usize,
    pub remaining_steps: usize,
}

impl Prefix {
    /// Stable identifier, `<trajectory_id>#<end_index>`.
    pub fn id(&self) -> String {
        format!("{}#{}", self.trajectory_id, self.end_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningLabel {
    pub prefix: Prefix,
    pub horizon: usize,
    pub positive: bool,
}

/// All `T` prefixes of a trajectory, `end_index` ascending.
pub fn enumerate_prefixes(trajectory: &Trajectory) -> Result<Vec<Prefix>> {
    trajectory.validate()?;
    let last = trajectory.len() - 1;
    Ok((0..=last)
        .map(|end_index| Prefix {
            trajectory_id: trajectory.trajectory_id.clone(),
            end_index,
            remaining_steps: last - end_index,
        })
        .collect())
}

/// Labels every prefix: positive iff the trajectory failed and fewer than
/// `horizon` steps remain after the prefix. The terminal prefix
/// (`remaining_steps == 0`) is a warning target.
pub fn label_prefixes(trajectory: &Trajectory, horizon: usize) -> Result<Vec<WarningLabel>> {
    if horizon == 0 {
        return Err(Error::Config("warning horizon must be at least 1".into()));
    }
    let failed = trajectory.is_failure();
    Ok(enumerate_prefixes(trajectory)?
        .into_iter()
        .map(|prefix| {
            let positive = failed && prefix.remaining_steps < horizon;
            WarningLabel {
                prefix,
                horizon,
                positive,
            }
        })
        .collect())
}

/// Labels for a whole set, in trajectory then prefix order.
pub fn label_all(trajectories: &[Trajectory], horizon: usize) -> Result<Vec<WarningLabel>> {
    let mut out = Vec::new();
    for t in trajectories {
        out.extend(label_prefixes(t, horizon)?);
    }
    Ok(out)
}
