//! Synthetic multi-party agent environment with an exactly enumerable
//! outcome space.
//!
//! A [`ScenarioConfig`] names parties, the components they own, a cyclic
//! activation schedule and harm predicates over emitted actions. The same
//! configuration drives exact enumeration ([`exact_probability`]), seeded
//! rollouts for Monte Carlo estimation ([`Draws`]) and text trajectory
//! generation for monitor training ([`generate`]).

mod generate;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate, reference_scenario, GeneratedData, REFERENCE_SCENARIO};

pub const DEFAULT_ENUMERATION_BOUND: u64 = 1 << 20;
pub const DEFAULT_NEUTRAL_ACTION: &str = "noop";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: String,
    pub weight: f64,
    /// Step text; `{noise}` placeholders are filled with noise tokens.
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub id: String,
    /// Owning party; components without an owner belong to the environment.
    #[serde(default)]
    pub owner: Option<String>,
    #[serde(default)]
    pub tool: String,
    pub actions: Vec<ActionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub component: String,
    pub activation_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HarmPredicate {
    /// Some step emits the action.
    Contains { action: String },
    /// Every listed action is emitted somewhere.
    ContainsAll { actions: Vec<String> },
    /// The actions are emitted in this order, not necessarily adjacently.
    Sequence { actions: Vec<String> },
    CountAtLeast { action: String, count: usize },
    /// The named motif occurs as a contiguous run of emitted actions.
    Motif { motif: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmSpec {
    pub id: String,
    #[serde(default)]
    pub severity: String,
    pub predicate: HarmPredicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifSpec {
    pub id: String,
    pub actions: Vec<String>,
}

/// How an intervened party's emissions are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Substitution {
    /// The slot still runs but emits the neutral action.
    #[default]
    Neutral,
    /// The slot emits nothing.
    Skip,
}

/// A component introduced next to an existing one: after every slot of
/// `host`, the new component gets a slot with `activation_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentAddition {
    pub component: ComponentSpec,
    pub host: String,
    pub activation_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSpec {
    pub min_length: usize,
    pub max_length: usize,
    pub failure_rate: f64,
    pub horizon: usize,
    /// Motif planted as the failure precursor.
    pub precursor: Option<String>,
    pub motif_prob_failure: f64,
    pub motif_prob_success: f64,
    /// Inclusive range of steps remaining after the motif ends.
    pub lead_time: [usize; 2],
    /// Chance that a step after the motif in a failed run is degraded.
    pub degradation: f64,
    pub degraded_actions: Vec<String>,
    pub background_error_rate: f64,
    pub noise_tokens: Vec<String>,
    pub noise_per_step: usize,
    pub test_fraction: f64,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        GenerationSpec {
            min_length: 10,
            max_length: 18,
            failure_rate: 0.3,
            horizon: crate::trace::DEFAULT_HORIZON,
            precursor: None,
            motif_prob_failure: 0.9,
            motif_prob_success: 0.05,
            lead_time: [3, 6],
            degradation: 0.8,
            degraded_actions: Vec::new(),
            background_error_rate: 0.03,
            noise_tokens: Vec::new(),
            noise_per_step: 2,
            test_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_tag")]
    pub environment_tag: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parties: Vec<String>,
    pub components: Vec<ComponentSpec>,
    pub schedule: Vec<Slot>,
    /// Number of scheduled slots in one rollout; the schedule repeats.
    pub steps: usize,
    #[serde(default = "default_neutral")]
    pub neutral_action: String,
    #[serde(default)]
    pub substitution: Substitution,
    #[serde(default)]
    pub harms: Vec<HarmSpec>,
    #[serde(default)]
    pub motifs: Vec<MotifSpec>,
    #[serde(default = "default_bound")]
    pub enumeration_bound: u64,
    /// Components awaiting compositional verification before they may run.
    #[serde(default)]
    pub additions: Vec<ComponentAddition>,
    #[serde(default)]
    pub generation: GenerationSpec,
}

fn default_tag() -> String {
    "simulated".into()
}

fn default_neutral() -> String {
    DEFAULT_NEUTRAL_ACTION.into()
}

fn default_bound() -> u64 {
    DEFAULT_ENUMERATION_BOUND
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must lie in [0, 1], got {p}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Toml {
            context: "scenario".into(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::Toml {
            context: path.display().to_string(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode scenario: {e}")))
    }

    pub fn component(&self, id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn harm(&self, id: &str) -> Result<&HarmSpec> {
        self.harms
            .iter()
            .find(|h| h.id == id)
            .ok_or_else(|| Error::Config(format!("scenario has no harm `{id}`")))
    }

    pub fn motif(&self, id: &str) -> Option<&MotifSpec> {
        self.motifs.iter().find(|m| m.id == id)
    }

    /// Parties that own at least one component.
    pub fn owning_parties(&self) -> BTreeSet<String> {
        self.components.iter().filter_map(|c| c.owner.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let parties: BTreeSet<&str> = self.parties.iter().map(String::as_str).collect();
        for c in &self.components {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::Config(format!("duplicate component `{}`", c.id)));
            }
            if let Some(owner) = &c.owner {
                if !parties.contains(owner.as_str()) {
                    return Err(Error::Config(format!(
                        "component `{}` is owned by undeclared party `{owner}`",
                        c.id
                    )));
                }
            }
            if c.actions.is_empty() {
                return Err(Error::Config(format!("component `{}` has no actions", c.id)));
            }
            if c.actions.iter().any(|a| !(a.weight.is_finite() && a.weight >= 0.0)) {
                return Err(Error::Config(format!("component `{}` has a negative weight", c.id)));
            }
            if c.actions.iter().map(|a| a.weight).sum::<f64>() <= 0.0 {
                return Err(Error::Config(format!("component `{}` has zero total weight", c.id)));
            }
        }
        if self.schedule.is_empty() {
            return Err(Error::Config("schedule is empty".into()));
        }
        for s in &self.schedule {
            if !ids.contains(s.component.as_str()) {
                return Err(Error::Config(format!("schedule names unknown component `{}`", s.component)));
            }
            check_prob("activation_prob", s.activation_prob)?;
        }
        for a in &self.additions {
            if !ids.contains(a.host.as_str()) {
                return Err(Error::Config(format!("addition hosted by unknown component `{}`", a.host)));
            }
            check_prob("activation_prob", a.activation_prob)?;
        }
        let mut harm_ids = BTreeSet::new();
        for h in &self.harms {
            if !harm_ids.insert(h.id.as_str()) {
                return Err(Error::Config(format!("duplicate harm `{}`", h.id)));
            }
            if let HarmPredicate::Motif { motif } = &h.predicate {
                if self.motif(motif).is_none() {
                    return Err(Error::Config(format!("harm `{}` names unknown motif `{motif}`", h.id)));
                }
            }
        }
        let g = &self.generation;
        if g.min_length == 0 || g.min_length > g.max_length {
            return Err(Error::Config("generation length range is empty".into()));
        }
        if g.lead_time[0] > g.lead_time[1] {
            return Err(Error::Config("lead_time range is empty".into()));
        }
        for (what, p) in [
            ("failure_rate", g.failure_rate),
            ("motif_prob_failure", g.motif_prob_failure),
            ("motif_prob_success", g.motif_prob_success),
            ("degradation", g.degradation),
            ("background_error_rate", g.background_error_rate),
            ("test_fraction", g.test_fraction),
        ] {
            check_prob(what, p)?;
        }
        if let Some(m) = &g.precursor {
            if self.motif(m).is_none() {
                return Err(Error::Config(format!("precursor names unknown motif `{m}`")));
            }
        }
        Ok(())
    }

    /// Applies `additions`, which must be empty unless a composition gate has
    /// approved them. See [`crate::responsibility::CompositionGate::admit`].
    pub(crate) fn merged_with(&self, additions: &[ComponentAddition]) -> Result<ScenarioConfig> {
        let mut out = self.clone();
        out.additions.clear();
        for add in additions {
            if out.component(&add.component.id).is_some() {
                return Err(Error::Config(format!("component `{}` already exists", add.component.id)));
            }
            out.components.push(add.component.clone());
            let mut schedule = Vec::new();
            for s in &out.schedule {
                schedule.push(s.clone());
                if s.component == add.host {
                    schedule.push(Slot {
                        component: add.component.id.clone(),
                        activation_prob: add.activation_prob,
                    });
                }
            }
            let cycle = out.schedule.len();
            let per_cycle = out.schedule.iter().filter(|s| s.component == add.host).count();
            let rest = out.schedule[..out.steps % cycle]
                .iter()
                .filter(|s| s.component == add.host)
                .count();
            out.steps += (out.steps / cycle) * per_cycle + rest;
            out.schedule = schedule;
        }
        out.validate()?;
        Ok(out)
    }
}

/// One scheduled slot of a rollout, resolved against the component table.
#[derive(Debug, Clone)]
struct PlanSlot {
    component: usize,
    activation_prob: f64,
    owner: Option<String>,
    /// Normalised action probabilities, zero-weight actions removed.
    choices: Vec<(usize, f64)>,
}

/// The unrolled schedule of a scenario.
#[derive(Debug, Clone)]
pub struct Plan {
    slots: Vec<PlanSlot>,
    action_names: Vec<Vec<String>>,
    neutral: String,
    substitution: Substitution,
    bound: u64,
}

/// Parties whose components are neutralised.
pub type InterventionMask = BTreeSet<String>;

impl Plan {
    pub fn new(config: &ScenarioConfig) -> Result<Plan> {
        config.validate()?;
        if !config.additions.is_empty() {
            return Err(Error::Gate(format!(
                "scenario `{}` lists {} unverified component addition(s)",
                config.name,
                config.additions.len()
            )));
        }
        let index: BTreeMap<&str, usize> = config
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        let slots = (0..config.steps)
            .map(|i| {
                let s = &config.schedule[i % config.schedule.len()];
                let ci = index[s.component.as_str()];
                let comp = &config.components[ci];
                let total: f64 = comp.actions.iter().map(|a| a.weight).sum();
                PlanSlot {
                    component: ci,
                    activation_prob: s.activation_prob,
                    owner: comp.owner.clone(),
                    choices: comp
                        .actions
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| a.weight > 0.0)
                        .map(|(j, a)| (j, a.weight / total))
                        .collect(),
                }
            })
            .collect();
        Ok(Plan {
            slots,
            action_names: config
                .components
                .iter()
                .map(|c| c.actions.iter().map(|a| a.name.clone()).collect())
                .collect(),
            neutral: config.neutral_action.clone(),
            substitution: config.substitution,
            bound: config.enumeration_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of leaves in the exhaustive outcome tree.
    pub fn branch_count(&self) -> u128 {
        self.slots.iter().fold(1u128, |acc, s| {
            let idle = u128::from(s.activation_prob < 1.0);
            let active = if s.activation_prob > 0.0 { s.choices.len() as u128 } else { 0 };
            acc.saturating_mul(idle + active)
        })
    }

    fn emission(&self, slot: &PlanSlot, choice: usize, mask: &InterventionMask) -> Option<String> {
        match &slot.owner {
            Some(p) if mask.contains(p) => match self.substitution {
                Substitution::Neutral => Some(self.neutral.clone()),
                Substitution::Skip => None,
            },
            _ => Some(self.action_names[slot.component][choice].clone()),
        }
    }

    /// Emitted actions for one set of draws.
    pub fn emissions(&self, draws: &Draws, mask: &InterventionMask) -> Vec<String> {
        self.slots
            .iter()
            .zip(&draws.0)
            .filter_map(|(slot, &(u_active, u_choice))| {
                if u_active >= slot.activation_prob {
                    return None;
                }
                let mut acc = 0.0;
                let mut pick = slot.choices.last().expect("validated non-empty").0;
                for &(j, p) in &slot.choices {
                    acc += p;
                    if u_choice < acc {
                        pick = j;
                        break;
                    }
                }
                self.emission(slot, pick, mask)
            })
            .collect()
    }
}

/// Two uniforms per slot (activation, action choice), drawn whether or not
/// they are used so factual and intervened rollouts stay coupled.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws(pub Vec<(f64, f64)>);

impl Draws {
    pub fn sample<R: Rng + ?Sized>(plan: &Plan, rng: &mut R) -> Draws {
        Draws(
            (0..plan.len())
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect(),
        )
    }
}

/// Independent, reproducible stream for item `index` of a seeded batch.
pub fn derived_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn harm_occurs(config: &ScenarioConfig, harm: &HarmSpec, actions: &[String]) -> bool {
    let has = |a: &str| actions.iter().any(|x| x == a);
    match &harm.predicate {
        HarmPredicate::Contains { action } => has(action),
        HarmPredicate::ContainsAll { actions: wanted } => wanted.iter().all(|a| has(a)),
        HarmPredicate::Sequence { actions: wanted } => {
            let mut it = actions.iter();
            wanted.iter().all(|w| it.any(|a| a == w))
        }
        HarmPredicate::CountAtLeast { action, count } => {
            actions.iter().filter(|a| *a == action).count() >= *count
        }
        HarmPredicate::Motif { motif } => {
            let m = &config.motif(motif).expect("validated motif").actions;
            !m.is_empty() && actions.windows(m.len()).any(|w| w == m.as_slice())
        }
    }
}

/// Probability of `harm` by exhaustive enumeration of every activation and
/// action choice, with the parties in `mask` neutralised.
pub fn exact_probability(config: &ScenarioConfig, harm_id: &str, mask: &InterventionMask) -> Result<f64> {
    let plan = Plan::new(config)?;
    let harm = config.harm(harm_id)?;
    enumerate(&plan, |actions| harm_occurs(config, harm, actions), mask)
}

pub(crate) fn enumerate(
    plan: &Plan,
    predicate: impl Fn(&[String]) -> bool,
    mask: &InterventionMask,
) -> Result<f64> {
    let branches = plan.branch_count();
    if branches > u128::from(plan.bound) {
        return Err(Error::EnumerationBound {
            branches,
            bound: u128::from(plan.bound),
        });
    }
    let mut actions = Vec::with_capacity(plan.len());
    Ok(walk(plan, &predicate, mask, 0, 1.0, &mut actions))
}

fn walk(
    plan: &Plan,
    predicate: &impl Fn(&[String]) -> bool,
    mask: &InterventionMask,
    i: usize,
    prob: f64,
    actions: &mut Vec<String>,
) -> f64 {
    if prob == 0.0 {
        return 0.0;
    }
    let Some(slot) = plan.slots.get(i) else {
        return if predicate(actions) { prob } else { 0.0 };
    };
    let mut total = 0.0;
    if slot.activation_prob < 1.0 {
        total += walk(plan, predicate, mask, i + 1, prob * (1.0 - slot.activation_prob), actions);
    }
    if slot.activation_prob > 0.0 {
        for &(j, p) in &slot.choices {
            let pushed = match plan.emission(slot, j, mask) {
                Some(a) => {
                    actions.push(a);
                    true
                }
                None => false,
            };
            total += walk(plan, predicate, mask, i + 1, prob * slot.activation_prob * p, actions);
            if pushed {
                actions.pop();
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn binary_scenario(gates: &[(f64, &str)], harm: HarmPredicate) -> ScenarioConfig {
        let components = gates
            .iter()
            .enumerate()
            .map(|(i, (_, owner))| ComponentSpec {
                id: format!("c{i}"),
                owner: Some(owner.to_string()),
                tool: String::new(),
                actions: vec![ActionSpec {
                    name: format!("fire{i}"),
                    weight: 1.0,
                    text: None,
                }],
            })
            .collect();
        let parties: BTreeSet<String> = gates.iter().map(|(_, o)| o.to_string()).collect();
        ScenarioConfig {
            name: "gates".into(),
            environment_tag: "sim".into(),
            seed: 1,
            parties: parties.into_iter().collect(),
            components,
            schedule: gates
                .iter()
                .enumerate()
                .map(|(i, (p, _))| Slot {
                    component: format!("c{i}"),
                    activation_prob: *p,
                })
                .collect(),
            steps: gates.len(),
            neutral_action: DEFAULT_NEUTRAL_ACTION.into(),
            substitution: Substitution::Neutral,
            harms: vec![HarmSpec {
                id: "w".into(),
                severity: "high".into(),
                predicate: harm,
            }],
            motifs: vec![],
            enumeration_bound: DEFAULT_ENUMERATION_BOUND,
            additions: vec![],
            generation: GenerationSpec::default(),
        }
    }

    #[test]
    fn deterministic_harm_is_certain() {
        let c = binary_scenario(&[(1.0, "a")], HarmPredicate::Contains { action: "fire0".into() });
        assert_eq!(exact_probability(&c, "w", &InterventionMask::new()).unwrap(), 1.0);
    }

    #[test]
    fn fair_gate_is_half() {
        let c = binary_scenario(&[(0.5, "a")], HarmPredicate::Contains { action: "fire0".into() });
        assert_eq!(exact_probability(&c, "w", &InterventionMask::new()).unwrap(), 0.5);
    }

    #[test]
    fn two_gates_multiply() {
        let c = binary_scenario(
            &[(0.5, "a"), (0.5, "b")],
            HarmPredicate::ContainsAll {
                actions: vec!["fire0".into(), "fire1".into()],
            },
        );
        assert_eq!(exact_probability(&c, "w", &InterventionMask::new()).unwrap(), 0.5 * 0.5);
    }

    #[test]
    fn masking_neutralises_owner() {
        let c = binary_scenario(&[(0.6, "a")], HarmPredicate::Contains { action: "fire0".into() });
        let mask = InterventionMask::from(["a".to_string()]);
        assert_eq!(exact_probability(&c, "w", &mask).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_bound_enforced() {
        let gates: Vec<(f64, &str)> = (0..21).map(|_| (0.5, "a")).collect();
        let c = binary_scenario(&gates, HarmPredicate::Contains { action: "fire0".into() });
        let err = exact_probability(&c, "w", &InterventionMask::new()).unwrap_err();
        assert!(matches!(err, Error::EnumerationBound { branches, .. } if branches == 1 << 21));
    }

    #[test]
    fn law_of_total_probability() {
        // P(fire0) splits over whether fire1 also happens.
        let gates = [(0.3, "a"), (0.7, "b")];
        let any = binary_scenario(&gates, HarmPredicate::Contains { action: "fire0".into() });
        let both = binary_scenario(
            &gates,
            HarmPredicate::ContainsAll {
                actions: vec!["fire0".into(), "fire1".into()],
            },
        );
        let seq = binary_scenario(
            &gates,
            HarmPredicate::Sequence {
                actions: vec!["fire0".into(), "fire1".into()],
            },
        );
        let m = InterventionMask::new();
        let p_any = exact_probability(&any, "w", &m).unwrap();
        let p_both = exact_probability(&both, "w", &m).unwrap();
        assert!((p_any - 0.3).abs() < 1e-15);
        assert!((p_both - 0.21).abs() < 1e-15);
        assert_eq!(exact_probability(&seq, "w", &m).unwrap(), p_both);
    }

    #[test]
    fn sampling_matches_enumeration() {
        let c = binary_scenario(
            &[(0.4, "a"), (0.9, "b"), (0.5, "a")],
            HarmPredicate::CountAtLeast {
                action: "fire0".into(),
                count: 1,
            },
        );
        let plan = Plan::new(&c).unwrap();
        let harm = c.harm("w").unwrap();
        let n = 10_000;
        let hits = (0..n)
            .filter(|&i| {
                let d = Draws::sample(&plan, &mut derived_rng(5, i));
                harm_occurs(&c, harm, &plan.emissions(&d, &InterventionMask::new()))
            })
            .count();
        let p = exact_probability(&c, "w", &InterventionMask::new()).unwrap();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn unverified_additions_rejected() {
        let mut c = binary_scenario(&[(1.0, "a")], HarmPredicate::Contains { action: "fire0".into() });
        c.additions.push(ComponentAddition {
            component: ComponentSpec {
                id: "new".into(),
                owner: Some("a".into()),
                tool: String::new(),
                actions: vec![ActionSpec {
                    name: "x".into(),
                    weight: 1.0,
                    text: None,
                }],
            },
            host: "c0".into(),
            activation_prob: 0.5,
        });
        assert!(matches!(Plan::new(&c), Err(Error::Gate(_))));
        let merged = c.merged_with(&c.additions.clone()).unwrap();
        assert_eq!(merged.steps, 2);
        assert_eq!(merged.schedule.len(), 2);
    }

    #[test]
    fn toml_round_trip() {
        let c = binary_scenario(&[(0.5, "a")], HarmPredicate::Contains { action: "fire0".into() });
        let text = c.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), c);
    }
}
