//! Responsibility calculus over a deployment chain: counterfactual causal
//! contribution, epistemic positions, proportional assignment with an
//! institutional residual, the dimension tensor, compositional verification
//! and deployment readiness.

mod assign;
mod bundle;
mod compose;
mod kappa;
mod readiness;
mod tensor;

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::is_cyclic_directed;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ComponentAddition, ScenarioConfig};

pub use assign::{assign_rho, Normalization, ResponsibilityAssignment};
pub use bundle::{AttributionReport, EvidenceBundle, BUNDLE_FILES, BUNDLE_MANIFEST};
pub use compose::{delta_kappa, CompositionGate, DeltaKappa, VerificationRecord};
pub use kappa::{estimate_kappa, CausalContribution, Estimator, KappaMode};
pub use readiness::{readiness_check, Attestation, Condition, Envelope, Finding, ReadinessInputs, ReadinessReport};
pub use tensor::{build_tensor, ResponsibilityTensor, TensorEntry, STANDARD_DIMENSIONS};

/// Which party owns each component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentChain {
    pub parties: BTreeSet<String>,
    pub component_owner: BTreeMap<String, String>,
}

impl DeploymentChain {
    pub fn from_scenario(config: &ScenarioConfig) -> Self {
        DeploymentChain {
            parties: config.parties.iter().cloned().collect(),
            component_owner: config
                .components
                .iter()
                .filter_map(|c| c.owner.clone().map(|o| (c.id.clone(), o)))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (component, owner) in &self.component_owner {
            if !self.parties.contains(owner) {
                return Err(Error::Validation(format!(
                    "component `{component}` is owned by undeclared party `{owner}`"
                )));
            }
        }
        Ok(())
    }

    /// Checks that every owned component of a scenario is in the chain with
    /// the same owner.
    pub fn covers(&self, config: &ScenarioConfig) -> Result<()> {
        for c in &config.components {
            if let Some(owner) = &c.owner {
                match self.component_owner.get(&c.id) {
                    Some(o) if o == owner => {}
                    Some(o) => {
                        return Err(Error::Validation(format!(
                            "component `{}` is owned by `{o}` in the chain but `{owner}` in the scenario",
                            c.id
                        )))
                    }
                    None => {
                        return Err(Error::Validation(format!(
                            "component `{}` is missing from the deployment chain",
                            c.id
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn components_of<'a>(&'a self, party: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.component_owner
            .iter()
            .filter(move |(_, o)| o.as_str() == party)
            .map(|(c, _)| c.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Party,
    Model,
    Skill,
    Component,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub id: String,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub label: String,
}

/// Multilevel causal-influence graph over parties, models, skills and
/// components.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencyGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl DependencyGraph {
    /// Party → component edges taken from a scenario.
    pub fn from_scenario(config: &ScenarioConfig) -> Self {
        let mut g = DependencyGraph::default();
        for p in &config.parties {
            g.vertices.push(Vertex {
                id: p.clone(),
                level: Level::Party,
            });
        }
        for c in &config.components {
            g.vertices.push(Vertex {
                id: c.id.clone(),
                level: Level::Component,
            });
            if let Some(o) = &c.owner {
                g.edges.push(Edge {
                    from: o.clone(),
                    to: c.id.clone(),
                    label: "owns".into(),
                });
            }
        }
        g
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vertices.iter().any(|v| v.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut index = BTreeMap::new();
        let mut graph = DiGraph::<&str, ()>::new();
        for v in &self.vertices {
            if index.insert(v.id.as_str(), graph.add_node(v.id.as_str())).is_some() {
                return Err(Error::Validation(format!("duplicate graph vertex `{}`", v.id)));
            }
        }
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) else {
                return Err(Error::Validation(format!(
                    "edge {} -> {} names an unknown vertex",
                    e.from, e.to
                )));
            };
            graph.add_edge(a, b, ());
        }
        if is_cyclic_directed(&graph) {
            return Err(Error::Validation("dependency graph has a cycle".into()));
        }
        Ok(())
    }

    /// Every scenario component must appear as a vertex.
    pub fn covers(&self, config: &ScenarioConfig) -> Result<()> {
        for c in &config.components {
            if !self.contains(&c.id) {
                return Err(Error::Validation(format!(
                    "component `{}` is not documented in the dependency graph",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// The graph with a new component attached to its owner and host.
    pub fn with_addition(&self, addition: &ComponentAddition) -> Result<Self> {
        let mut g = self.clone();
        let id = &addition.component.id;
        if g.contains(id) {
            return Err(Error::Validation(format!("component `{id}` already in the graph")));
        }
        g.vertices.push(Vertex {
            id: id.clone(),
            level: Level::Component,
        });
        if let Some(o) = &addition.component.owner {
            g.edges.push(Edge {
                from: o.clone(),
                to: id.clone(),
                label: "owns".into(),
            });
        }
        g.edges.push(Edge {
            from: addition.host.clone(),
            to: id.clone(),
            label: "co-activates".into(),
        });
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmEvent {
    pub id: String,
    #[serde(default)]
    pub severity: String,
    /// Time of the harm; foreseeability must be established strictly before.
    pub time: u64,
    #[serde(default)]
    pub description: String,
}

/// What a party knew (`information`) and could foresee (`foreseeable`) at a
/// point in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpistemicPosition {
    pub party: String,
    pub time: u64,
    #[serde(default)]
    pub information: BTreeSet<String>,
    #[serde(default)]
    pub foreseeable: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpistemicRecord {
    pub harm_universe: BTreeSet<String>,
    pub positions: Vec<EpistemicPosition>,
}

impl EpistemicRecord {
    /// Foreseeable sets stay inside the harm universe, and neither
    /// information nor foreseeability shrinks over time for any party.
    pub fn validate(&self) -> Result<()> {
        let mut by_party: BTreeMap<&str, Vec<&EpistemicPosition>> = BTreeMap::new();
        for p in &self.positions {
            if let Some(h) = p.foreseeable.iter().find(|h| !self.harm_universe.contains(*h)) {
                return Err(Error::Validation(format!(
                    "party `{}` foresees `{h}`, which is outside the harm universe",
                    p.party
                )));
            }
            by_party.entry(p.party.as_str()).or_default().push(p);
        }
        for (party, mut list) in by_party {
            list.sort_by_key(|p| p.time);
            for w in list.windows(2) {
                if w[0].time == w[1].time {
                    return Err(Error::Validation(format!(
                        "party `{party}` has two positions at time {}",
                        w[0].time
                    )));
                }
                if !w[0].information.is_subset(&w[1].information)
                    || !w[0].foreseeable.is_subset(&w[1].foreseeable)
                {
                    return Err(Error::Validation(format!(
                        "position of `{party}` shrinks between times {} and {}",
                        w[0].time, w[1].time
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn has_party(&self, party: &str) -> bool {
        self.positions.iter().any(|p| p.party == party)
    }

    /// Whether `party` could foresee `harm` at some time before `harm_time`.
    /// `None` when the record holds no position for the party.
    pub fn foreseeable_before(&self, party: &str, harm: &str, harm_time: u64) -> Option<bool> {
        let mut found = false;
        let mut any = false;
        for p in self.positions.iter().filter(|p| p.party == party) {
            any = true;
            found |= p.time < harm_time && p.foreseeable.contains(harm);
        }
        any.then_some(found)
    }
}
