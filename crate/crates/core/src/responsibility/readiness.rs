use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DependencyGraph, DeploymentChain, VerificationRecord};
use crate::error::{Error, Result};
use crate::sim::ScenarioConfig;

/// The five parts of the deployment readiness condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    DependencyDocumentation,
    CompositionalVerification,
    ResponsibilityEnvelopes,
    IncidentPlans,
    Consent,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::DependencyDocumentation,
        Condition::CompositionalVerification,
        Condition::ResponsibilityEnvelopes,
        Condition::IncidentPlans,
        Condition::Consent,
    ];

    pub fn numeral(self) -> &'static str {
        match self {
            Condition::DependencyDocumentation => "i",
            Condition::CompositionalVerification => "ii",
            Condition::ResponsibilityEnvelopes => "iii",
            Condition::IncidentPlans => "iv",
            Condition::Consent => "v",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Condition::DependencyDocumentation => "dependency documentation",
            Condition::CompositionalVerification => "compositional verification",
            Condition::ResponsibilityEnvelopes => "responsibility envelopes",
            Condition::IncidentPlans => "exercised incident plans",
            Condition::Consent => "validated consent",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.numeral(), self.title())
    }
}

/// A signed claim that a condition holds, with references to the documents
/// that back it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attestation {
    pub attested: bool,
    #[serde(default)]
    pub evidence: Vec<String>,
}

/// A party's documented obligations, intervention boundaries and dimension
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub envelope_id: String,
    pub party: String,
    #[serde(default)]
    pub obligations: Vec<String>,
    #[serde(default)]
    pub intervention_boundaries: Vec<String>,
    #[serde(default)]
    pub dimensions: Vec<String>,
    #[serde(default)]
    pub dimension_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct ReadinessInputs {
    pub chain: Option<DeploymentChain>,
    pub graph: Option<DependencyGraph>,
    pub scenario: Option<ScenarioConfig>,
    pub verifications: Vec<VerificationRecord>,
    pub envelopes: Vec<Envelope>,
    pub attestations: BTreeMap<Condition, Attestation>,
    /// Evidence references that resolve to a document.
    pub documents: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub condition: Condition,
    pub satisfied: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadinessReport {
    pub ready: bool,
    pub findings: Vec<Finding>,
}

impl ReadinessReport {
    pub fn unmet(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| !f.satisfied)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("ready: {}\n", self.ready);
        for f in &self.findings {
            let mark = if f.satisfied { "ok  " } else { "FAIL" };
            out.push_str(&format!("{mark} {}: {}\n", f.condition, f.detail));
        }
        out
    }
}

struct Check {
    condition: Condition,
    findings: Vec<Finding>,
}

impl Check {
    fn new(condition: Condition) -> Self {
        Check {
            condition,
            findings: Vec::new(),
        }
    }

    fn fail(&mut self, detail: impl Into<String>) {
        self.findings.push(Finding {
            condition: self.condition,
            satisfied: false,
            detail: detail.into(),
        });
    }

    fn finish(mut self, ok_detail: &str) -> Vec<Finding> {
        if self.findings.is_empty() {
            self.findings.push(Finding {
                condition: self.condition,
                satisfied: true,
                detail: ok_detail.into(),
            });
        }
        self.findings
    }
}

fn attested(check: &mut Check, inputs: &ReadinessInputs) {
    match inputs.attestations.get(&check.condition) {
        None => check.fail("no attestation"),
        Some(a) if !a.attested => check.fail("attestation withheld"),
        Some(a) if a.evidence.is_empty() => check.fail("attestation cites no evidence"),
        Some(_) => {}
    }
}

/// Host/component pairs that the scenario or graph declares as co-activating
/// with non-zero probability.
fn coactivating_pairs(inputs: &ReadinessInputs) -> BTreeSet<(String, String)> {
    let mut pairs = BTreeSet::new();
    if let Some(s) = &inputs.scenario {
        for a in s.additions.iter().filter(|a| a.activation_prob > 0.0) {
            pairs.insert((a.host.clone(), a.component.id.clone()));
        }
    }
    if let Some(g) = &inputs.graph {
        for e in g.edges.iter().filter(|e| e.label == "co-activates") {
            pairs.insert((e.from.clone(), e.to.clone()));
        }
    }
    pairs
}

fn parties(inputs: &ReadinessInputs) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if let Some(c) = &inputs.chain {
        out.extend(c.parties.iter().cloned());
    }
    if let Some(s) = &inputs.scenario {
        out.extend(s.parties.iter().cloned());
    }
    out
}

fn check_weights(env: &Envelope) -> std::result::Result<(), String> {
    let Some(w) = &env.dimension_weights else {
        return Err("dimension weights w_k not specified".into());
    };
    if w.is_empty() {
        return Err("dimension weights w_k are empty".into());
    }
    if !env.dimensions.is_empty() && env.dimensions.len() != w.len() {
        return Err(format!(
            "{} dimension weights for {} dimensions",
            w.len(),
            env.dimensions.len()
        ));
    }
    if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err("dimension weights must be positive".into());
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("dimension weights sum to {sum}, not 1"));
    }
    Ok(())
}

/// Evaluates the five readiness conditions. Composition coverage is checked
/// against the recorded verifications; the other four rest on attested
/// evidence, and envelopes must carry dimension weights. Fails outright when
/// any cited evidence does not resolve.
pub fn readiness_check(inputs: &ReadinessInputs) -> Result<ReadinessReport> {
    for (condition, a) in &inputs.attestations {
        if let Some(r) = a.evidence.iter().find(|r| !inputs.documents.contains(*r)) {
            return Err(Error::DanglingEvidence {
                condition: condition.to_string(),
                reference: r.clone(),
            });
        }
    }
    let parties = parties(inputs);
    let mut findings = Vec::new();

    let mut c = Check::new(Condition::DependencyDocumentation);
    attested(&mut c, inputs);
    match &inputs.graph {
        None => c.fail("no dependency graph"),
        Some(g) => {
            if let Err(e) = g.validate() {
                c.fail(e.to_string());
            }
            if let Some(s) = &inputs.scenario {
                if let Err(e) = g.covers(s) {
                    c.fail(e.to_string());
                }
            }
        }
    }
    if let Some(chain) = &inputs.chain {
        if let Err(e) = chain.validate() {
            c.fail(e.to_string());
        }
        if let Some(s) = &inputs.scenario {
            if let Err(e) = chain.covers(s) {
                c.fail(e.to_string());
            }
        }
    }
    findings.extend(c.finish("dependency graph documented"));

    let mut c = Check::new(Condition::CompositionalVerification);
    let harms: Vec<String> = inputs
        .scenario
        .iter()
        .flat_map(|s| s.harms.iter().map(|h| h.id.clone()))
        .collect();
    for (host, component) in coactivating_pairs(inputs) {
        let records: Vec<&VerificationRecord> = inputs
            .verifications
            .iter()
            .filter(|r| r.host == host && r.component == component)
            .collect();
        if records.is_empty() {
            c.fail(format!("co-activation of `{host}` and `{component}` has no Δκ verification"));
            continue;
        }
        for r in records.iter().filter(|r| !r.within_bound || r.delta.abs() > r.bound) {
            c.fail(format!(
                "co-activation of `{host}` and `{component}` shifts κ of `{}` on `{}` by {:.4}, above {}",
                r.party, r.harm, r.delta, r.bound
            ));
        }
        for party in &parties {
            for harm in &harms {
                if !records.iter().any(|r| &r.party == party && &r.harm == harm) {
                    c.fail(format!(
                        "co-activation of `{host}` and `{component}` not verified for `{party}` on `{harm}`"
                    ));
                }
            }
        }
    }
    findings.extend(c.finish("every co-activating pair verified"));

    let mut c = Check::new(Condition::ResponsibilityEnvelopes);
    attested(&mut c, inputs);
    for party in &parties {
        match inputs.envelopes.iter().find(|e| &e.party == party) {
            None => c.fail(format!("`{party}` has no responsibility envelope")),
            Some(env) => {
                if env.obligations.is_empty() {
                    c.fail(format!("envelope `{}` lists no obligations", env.envelope_id));
                }
                if let Err(why) = check_weights(env) {
                    c.fail(format!("envelope `{}`: {why}", env.envelope_id));
                }
            }
        }
    }
    findings.extend(c.finish("every party has a weighted envelope"));

    let mut c = Check::new(Condition::IncidentPlans);
    attested(&mut c, inputs);
    findings.extend(c.finish("incident plans exercised"));

    let mut c = Check::new(Condition::Consent);
    attested(&mut c, inputs);
    findings.extend(c.finish("consent validated"));

    Ok(ReadinessReport {
        ready: findings.iter().all(|f| f.satisfied),
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{reference_scenario, ComponentAddition};

    fn inputs() -> ReadinessInputs {
        let s = reference_scenario();
        let mut attestations = BTreeMap::new();
        for c in Condition::ALL {
            if c != Condition::CompositionalVerification {
                attestations.insert(
                    c,
                    Attestation {
                        attested: true,
                        evidence: vec![format!("docs/{}.md", c.numeral())],
                    },
                );
            }
        }
        let envelopes = s
            .parties
            .iter()
            .map(|p| Envelope {
                envelope_id: format!("env-{p}"),
                party: p.clone(),
                obligations: vec!["document behaviour".into()],
                intervention_boundaries: vec![],
                dimensions: vec!["Law".into(), "Practice".into()],
                dimension_weights: Some(vec![0.5, 0.5]),
            })
            .collect();
        ReadinessInputs {
            chain: Some(DeploymentChain::from_scenario(&s)),
            graph: Some(DependencyGraph::from_scenario(&s)),
            documents: Condition::ALL.iter().map(|c| format!("docs/{}.md", c.numeral())).collect(),
            scenario: Some(s),
            verifications: vec![],
            envelopes,
            attestations,
        }
    }

    fn pending_addition(inputs: &mut ReadinessInputs) -> ComponentAddition {
        let s = inputs.scenario.as_mut().unwrap();
        let mut component = s.component("planner").unwrap().clone();
        component.id = "memory".into();
        let add = ComponentAddition {
            component,
            host: "planner".into(),
            activation_prob: 0.5,
        };
        s.additions.push(add.clone());
        add
    }

    #[test]
    fn fully_attested_is_ready() {
        let r = readiness_check(&inputs()).unwrap();
        assert!(r.ready, "{}", r.to_table());
        assert_eq!(r.findings.len(), 5);
    }

    #[test]
    fn unverified_pair_is_named() {
        let mut i = inputs();
        pending_addition(&mut i);
        let r = readiness_check(&i).unwrap();
        assert!(!r.ready);
        let unmet: Vec<_> = r.unmet().collect();
        assert!(unmet.iter().all(|f| f.condition == Condition::CompositionalVerification));
        assert!(unmet[0].detail.contains("`planner` and `memory`"));
    }

    #[test]
    fn verified_pair_is_ready() {
        let mut i = inputs();
        let add = pending_addition(&mut i);
        let s = i.scenario.clone().unwrap();
        for harm in &s.harms {
            for party in &s.parties {
                i.verifications.push(VerificationRecord {
                    component: add.component.id.clone(),
                    host: add.host.clone(),
                    party: party.clone(),
                    harm: harm.id.clone(),
                    delta: 0.01,
                    bound: 0.05,
                    within_bound: true,
                });
            }
        }
        assert!(readiness_check(&i).unwrap().ready);
        i.verifications[0].delta = 0.2;
        i.verifications[0].within_bound = false;
        assert!(!readiness_check(&i).unwrap().ready);
    }

    #[test]
    fn missing_weights_fail_envelopes() {
        let mut i = inputs();
        i.envelopes[0].dimension_weights = None;
        let r = readiness_check(&i).unwrap();
        assert!(!r.ready);
        let unmet: Vec<_> = r.unmet().collect();
        assert_eq!(unmet.len(), 1);
        assert_eq!(unmet[0].condition, Condition::ResponsibilityEnvelopes);
        assert!(unmet[0].detail.contains("w_k"));
    }

    #[test]
    fn dangling_reference_names_condition() {
        let mut i = inputs();
        i.attestations.get_mut(&Condition::Consent).unwrap().evidence.push("gone.pdf".into());
        match readiness_check(&i) {
            Err(Error::DanglingEvidence { condition, reference }) => {
                assert!(condition.contains("(v)"));
                assert_eq!(reference, "gone.pdf");
            }
            other => panic!("expected dangling evidence, got {other:?}"),
        }
    }

    #[test]
    fn withheld_attestation_fails() {
        let mut i = inputs();
        i.attestations.get_mut(&Condition::IncidentPlans).unwrap().attested = false;
        let r = readiness_check(&i).unwrap();
        assert_eq!(r.unmet().next().unwrap().condition, Condition::IncidentPlans);
    }
}
