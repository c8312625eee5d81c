use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{derived_rng, ScenarioConfig};
use crate::adapter::RawTrace;
use crate::error::{Error, Result};
use crate::trace::{Outcome, Status, StepView, Trajectory};

pub const REFERENCE_SCENARIO: &str = include_str!("reference.toml");

/// The planted-precursor scenario used by the acceptance suite and as the
/// command-line default.
pub fn reference_scenario() -> ScenarioConfig {
    ScenarioConfig::from_toml(REFERENCE_SCENARIO).expect("reference scenario is valid")
}

/// Generated runs in both raw-log and step-view form, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub trajectories: Vec<Trajectory>,
    pub raw: Vec<RawTrace>,
    /// Index of the last precursor step, when one was planted.
    pub motif_end: Vec<Option<usize>>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl GeneratedData {
    /// Seeded train/test partition of run indices.
    pub fn split_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.trajectories.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut derived_rng(self.seed, u64::MAX));
        let n_test = (n as f64 * self.test_fraction).round() as usize;
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        (train, test)
    }

    pub fn split(&self) -> (Vec<Trajectory>, Vec<Trajectory>) {
        let (train, test) = self.split_indices();
        let pick = |ix: &[usize]| ix.iter().map(|&i| self.trajectories[i].clone()).collect();
        (pick(&train), pick(&test))
    }

    pub fn split_raw(&self) -> (Vec<RawTrace>, Vec<RawTrace>) {
        let (train, test) = self.split_indices();
        let pick = |ix: &[usize]| ix.iter().map(|&i| self.raw[i].clone()).collect();
        (pick(&train), pick(&test))
    }
}

struct Texts<'a> {
    config: &'a ScenarioConfig,
    templates: BTreeMap<&'a str, (&'a str, &'a str)>,
}

impl<'a> Texts<'a> {
    fn new(config: &'a ScenarioConfig) -> Self {
        let mut templates = BTreeMap::new();
        for c in &config.components {
            for a in &c.actions {
                let text = a.text.as_deref().unwrap_or(&a.name);
                templates.entry(a.name.as_str()).or_insert((text, c.tool.as_str()));
            }
        }
        Texts { config, templates }
    }

    fn noise<R: Rng>(&self, rng: &mut R) -> &str {
        self.config
            .generation
            .noise_tokens
            .choose(rng)
            .map(String::as_str)
            .unwrap_or("item")
    }

    fn fill<R: Rng>(&self, template: &str, rng: &mut R) -> String {
        let mut out = String::new();
        let mut rest = template;
        while let Some(i) = rest.find("{noise}") {
            out.push_str(&rest[..i]);
            out.push_str(self.noise(rng));
            rest = &rest[i + "{noise}".len()..];
        }
        out.push_str(rest);
        out
    }

    fn step<R: Rng>(&self, component: &str, action: &str, status: Status, rng: &mut R) -> StepView {
        let (template, tool) = self.templates.get(action).copied().unwrap_or((action, ""));
        let tool = if tool.is_empty() {
            self.config.component(component).map(|c| c.tool.as_str()).unwrap_or("")
        } else {
            tool
        };
        let mut observation = format!("{component} view");
        for _ in 0..self.config.generation.noise_per_step {
            observation.push(' ');
            observation.push_str(self.noise(rng));
        }
        let result = match status {
            Status::Error => format!("error: {action} failed"),
            _ => format!("completed {action}"),
        };
        StepView {
            step_index: 0,
            metadata: BTreeMap::from([("component".to_string(), component.to_string())]),
            observation,
            action: self.fill(template, rng),
            tool: tool.to_string(),
            arguments: format!("target={}", self.noise(rng)),
            result,
            status,
        }
    }
}

fn raw_record(step: &StepView) -> serde_json::Value {
    json!({
        "meta": step.metadata,
        "obs": step.observation,
        "act": step.action,
        "tool_name": step.tool,
        "args": step.arguments,
        "output": step.result,
        "status": step.status.as_str(),
    })
}

fn generate_one(config: &ScenarioConfig, texts: &Texts<'_>, index: usize) -> Result<(Trajectory, RawTrace, Option<usize>)> {
    let g = &config.generation;
    let mut rng = derived_rng(config.seed, index as u64);
    let length = rng.random_range(g.min_length..=g.max_length);
    let failure = rng.random_bool(g.failure_rate);
    let plant_prob = if failure { g.motif_prob_failure } else { g.motif_prob_success };
    let planted = rng.random_bool(plant_prob);
    let lead = rng.random_range(g.lead_time[0]..=g.lead_time[1]);

    let mut steps = Vec::with_capacity(length);
    let mut slot = 0usize;
    while steps.len() < length {
        let s = &config.schedule[slot % config.schedule.len()];
        slot += 1;
        if !rng.random_bool(s.activation_prob) {
            continue;
        }
        let comp = config.component(&s.component).expect("validated component");
        let action = &comp
            .actions
            .choose_weighted(&mut rng, |a| a.weight)
            .map_err(|e| Error::Config(format!("component `{}`: {e}", comp.id)))?
            .name;
        let status = if rng.random_bool(g.background_error_rate) { Status::Error } else { Status::Ok };
        steps.push(texts.step(&comp.id, action, status, &mut rng));
    }

    let mut motif_end = None;
    if let (true, Some(id)) = (planted, &g.precursor) {
        let motif = &config.motif(id).expect("validated motif").actions;
        let m = motif.len();
        if m > 0 && length > m {
            let lead = lead.min(length - m - 1);
            let end = length - 1 - lead;
            let start = end + 1 - m;
            for (k, action) in motif.iter().enumerate() {
                let component = steps[start + k].metadata["component"].clone();
                steps[start + k] = texts.step(&component, action, Status::Ok, &mut rng);
            }
            if failure && !g.degraded_actions.is_empty() {
                for step in steps.iter_mut().skip(end + 1) {
                    if rng.random_bool(g.degradation) {
                        let action = g.degraded_actions.choose(&mut rng).expect("non-empty");
                        let component = step.metadata["component"].clone();
                        *step = texts.step(&component, action, Status::Error, &mut rng);
                    }
                }
            }
            motif_end = Some(end);
        }
    }

    let outcome = if failure { Outcome::Failure } else { Outcome::Success };
    let id = format!("{}-{index:06}", config.name);
    let raw = RawTrace {
        trajectory_id: id.clone(),
        environment_tag: config.environment_tag.clone(),
        outcome: Some(outcome),
        records: steps.iter().map(raw_record).collect(),
    };
    let trajectory = Trajectory::new(id, config.environment_tag.clone(), steps, outcome)?;
    Ok((trajectory, raw, motif_end))
}

/// Generates `n` runs. Run `i` depends only on the seed and `i`, so output is
/// identical however the work is scheduled.
pub fn generate(config: &ScenarioConfig, n: usize) -> Result<GeneratedData> {
    config.validate()?;
    if !config.additions.is_empty() {
        return Err(Error::Gate(format!(
            "scenario `{}` lists unverified component additions",
            config.name
        )));
    }
    if config.schedule.iter().all(|s| s.activation_prob == 0.0) {
        return Err(Error::Config("no scheduled component can activate".into()));
    }
    for c in &config.components {
        if !config.schedule.iter().any(|s| s.component == c.id && s.activation_prob > 0.0) {
            log::warn!("component `{}` is never activated", c.id);
        }
        for a in c.actions.iter().filter(|a| a.weight == 0.0) {
            log::warn!("action `{}` of `{}` is unreachable", a.name, c.id);
        }
    }
    let texts = Texts::new(config);
    let runs = (0..n)
        .into_par_iter()
        .map(|i| generate_one(config, &texts, i))
        .collect::<Result<Vec<_>>>()?;
    let mut data = GeneratedData {
        trajectories: Vec::with_capacity(n),
        raw: Vec::with_capacity(n),
        motif_end: Vec::with_capacity(n),
        test_fraction: config.generation.test_fraction,
        seed: config.seed,
    };
    for (t, r, m) in runs {
        data.trajectories.push(t);
        data.raw.push(r);
        data.motif_end.push(m);
    }
    Ok(data)
}
