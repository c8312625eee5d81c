use serde::{Deserialize, Serialize};

use super::{estimate_kappa, CausalContribution, DependencyGraph, KappaMode};
use crate::error::{Error, Result};
use crate::sim::{ComponentAddition, ScenarioConfig};

/// Shift in one party's causal contribution when a component is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaKappa {
    pub component: String,
    pub host: String,
    pub party: String,
    pub harm: String,
    pub before: CausalContribution,
    pub after: CausalContribution,
    pub delta: f64,
}

/// `κ` under the scenario with `addition` minus `κ` without it, both by the
/// same estimator and seed.
pub fn delta_kappa(
    graph: &DependencyGraph,
    config: &ScenarioConfig,
    addition: &ComponentAddition,
    party: &str,
    harm: &str,
    mode: KappaMode,
) -> Result<DeltaKappa> {
    if addition.component.owner.is_none() {
        return Err(Error::Config(format!(
            "new component `{}` has no owning party",
            addition.component.id
        )));
    }
    graph.validate()?;
    graph.covers(config)?;
    graph.with_addition(addition)?;
    let mut base = config.clone();
    base.additions.clear();
    let extended = base.merged_with(std::slice::from_ref(addition))?;
    let before = estimate_kappa(&base, party, harm, mode)?;
    let after = estimate_kappa(&extended, party, harm, mode)?;
    Ok(DeltaKappa {
        component: addition.component.id.clone(),
        host: addition.host.clone(),
        party: party.into(),
        harm: harm.into(),
        delta: after.kappa - before.kappa,
        before,
        after,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationRecord {
    pub component: String,
    pub host: String,
    pub party: String,
    pub harm: String,
    pub delta: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Permits a component addition only after every declared party's `Δκ` has
/// been measured for every harm and found within `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionGate {
    pub bound: f64,
    pub records: Vec<VerificationRecord>,
}

impl CompositionGate {
    pub fn new(bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::Config(format!("gate bound must be non-negative, got {bound}")));
        }
        Ok(CompositionGate {
            bound,
            records: Vec::new(),
        })
    }

    /// Measures `Δκ` for every party and harm of `config`, records the
    /// results and returns whether the addition is permitted.
    pub fn verify(
        &mut self,
        graph: &DependencyGraph,
        config: &ScenarioConfig,
        addition: &ComponentAddition,
        mode: KappaMode,
    ) -> Result<bool> {
        let mut ok = true;
        for harm in &config.harms {
            for party in &config.parties {
                let d = delta_kappa(graph, config, addition, party, &harm.id, mode)?;
                let within = d.delta.abs() <= self.bound;
                ok &= within;
                self.records.push(VerificationRecord {
                    component: d.component,
                    host: d.host,
                    party: d.party,
                    harm: d.harm,
                    delta: d.delta,
                    bound: self.bound,
                    within_bound: within,
                });
            }
        }
        Ok(ok)
    }

    fn check(&self, config: &ScenarioConfig, addition: &ComponentAddition) -> Result<()> {
        let id = &addition.component.id;
        for harm in &config.harms {
            for party in &config.parties {
                let rec = self.records.iter().find(|r| {
                    r.component == *id && r.host == addition.host && r.party == *party && r.harm == harm.id
                });
                match rec {
                    None => {
                        return Err(Error::Gate(format!(
                            "`{id}` with `{}` was never verified for `{party}` on `{}`",
                            addition.host, harm.id
                        )))
                    }
                    Some(r) if r.delta.abs() > self.bound => {
                        return Err(Error::Gate(format!(
                            "`{id}` with `{}` shifts κ of `{party}` on `{}` by {:.4}, above {}",
                            addition.host, harm.id, r.delta, self.bound
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// The scenario with its pending additions merged, if all are permitted.
    pub fn admit(&self, config: &ScenarioConfig) -> Result<ScenarioConfig> {
        let mut base = config.clone();
        base.additions.clear();
        for a in &config.additions {
            self.check(&base, a)?;
        }
        base.merged_with(&config.additions)
    }
}
