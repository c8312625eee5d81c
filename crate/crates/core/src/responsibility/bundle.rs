use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    assign_rho, estimate_kappa, readiness_check, Attestation, CausalContribution, Condition, DependencyGraph,
    DeploymentChain, Envelope, EpistemicRecord, HarmEvent, KappaMode, ReadinessInputs, ReadinessReport,
    ResponsibilityAssignment, ResponsibilityTensor, VerificationRecord,
};
use crate::error::{Error, Result};
use crate::eval::{read_json, write_json};
use crate::hash::{canonical_hash, sha256_hex};
use crate::sim::ScenarioConfig;

pub const BUNDLE_MANIFEST: &str = "manifest.json";
const BUNDLE_FORMAT: &str = "bundle/1";

/// Documents a bundle may hold; the first five are required.
pub const BUNDLE_FILES: [&str; 10] = [
    "chain.json",
    "graph.json",
    "positions.json",
    "harms.json",
    "envelopes.json",
    "contributions.json",
    "tensor.json",
    "verifications.json",
    "readiness.json",
    "scenario.toml",
];
const REQUIRED: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleManifest {
    format: String,
    /// Relative path → SHA-256 of the file bytes.
    files: BTreeMap<String, String>,
}

/// A sealed directory of responsibility evidence.
#[derive(Debug, Clone)]
pub struct EvidenceBundle {
    pub chain: DeploymentChain,
    pub graph: DependencyGraph,
    pub positions: EpistemicRecord,
    pub harms: Vec<HarmEvent>,
    pub envelopes: Vec<Envelope>,
    pub contributions: Vec<CausalContribution>,
    pub tensor: Option<ResponsibilityTensor>,
    pub verifications: Vec<VerificationRecord>,
    pub attestations: BTreeMap<Condition, Attestation>,
    pub scenario: Option<ScenarioConfig>,
    /// Every sealed file, relative to the bundle root.
    pub documents: BTreeSet<String>,
    pub manifest_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub harm: HarmEvent,
    pub contributions: Vec<CausalContribution>,
    pub assignment: ResponsibilityAssignment,
    pub tensor_envelope: Option<String>,
    /// Dimension-weighted scalar per party, when the bundle has a tensor.
    pub tensor_scalars: BTreeMap<String, f64>,
    pub bundle_hash: String,
}

impl AttributionReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("harm: {} (t = {})\n", self.harm.id, self.harm.time);
        out.push_str(&format!(
            "{:<24} {:>10} {:>10} {:>10} {:>10}\n",
            "party", "kappa", "+/-", "rho", "tensor"
        ));
        for c in &self.contributions {
            let tensor = self
                .tensor_scalars
                .get(&c.party)
                .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "{:<24} {:>10.4} {:>10.4} {:>10.4} {:>10}\n",
                c.party,
                c.kappa,
                c.half_width,
                self.assignment.share(&c.party),
                tensor
            ));
        }
        out.push_str(&format!("{:<24} {:>10} {:>10} {:>10.4}\n", "institutional", "", "", self.assignment.institutional));
        out
    }
}

fn files_of(dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walked path under root");
        let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let rel = rel.join("/");
        if rel != BUNDLE_MANIFEST {
            files.push(rel);
        }
    }
    files.sort();
    Ok(files)
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn optional<T: serde::de::DeserializeOwned + Default>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    if path.exists() {
        read_json(&path)
    } else {
        Ok(T::default())
    }
}

impl EvidenceBundle {
    /// Hashes every file under `dir` into its manifest and returns the
    /// manifest hash.
    pub fn seal(dir: &Path) -> Result<String> {
        let mut files = BTreeMap::new();
        for f in files_of(dir)? {
            files.insert(f.clone(), file_hash(&dir.join(&f))?);
        }
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            files,
        };
        write_json(&dir.join(BUNDLE_MANIFEST), &manifest)?;
        canonical_hash(&manifest)
    }

    /// Writes the structured documents and seals the directory. Evidence
    /// documents cited by attestations must already be in place.
    pub fn write(&self, dir: &Path) -> Result<String> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("chain.json"), &self.chain)?;
        write_json(&dir.join("graph.json"), &self.graph)?;
        write_json(&dir.join("positions.json"), &self.positions)?;
        write_json(&dir.join("harms.json"), &self.harms)?;
        write_json(&dir.join("envelopes.json"), &self.envelopes)?;
        if !self.contributions.is_empty() {
            write_json(&dir.join("contributions.json"), &self.contributions)?;
        }
        if let Some(t) = &self.tensor {
            write_json(&dir.join("tensor.json"), t)?;
        }
        if !self.verifications.is_empty() {
            write_json(&dir.join("verifications.json"), &self.verifications)?;
        }
        if !self.attestations.is_empty() {
            write_json(&dir.join("readiness.json"), &self.attestations)?;
        }
        if let Some(s) = &self.scenario {
            let path = dir.join("scenario.toml");
            std::fs::write(&path, s.to_toml()?).map_err(|e| Error::io(&path, e))?;
        }
        Self::seal(dir)
    }

    /// Loads a sealed bundle. Any file that is unlisted, missing or altered
    /// since sealing is a hygiene failure.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(BUNDLE_MANIFEST);
        if !manifest_path.exists() {
            return Err(Error::Hygiene(format!("{} has no {BUNDLE_MANIFEST}", dir.display())));
        }
        let manifest: BundleManifest = read_json(&manifest_path)?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::Validation(format!("unsupported bundle format `{}`", manifest.format)));
        }
        let present = files_of(dir)?;
        for f in &present {
            match manifest.files.get(f) {
                None => return Err(Error::Hygiene(format!("`{f}` is not in the bundle manifest"))),
                Some(h) if *h != file_hash(&dir.join(f))? => {
                    return Err(Error::Hygiene(format!("`{f}` changed after the bundle was sealed")))
                }
                Some(_) => {}
            }
        }
        if let Some(f) = manifest.files.keys().find(|f| !present.contains(f)) {
            return Err(Error::Hygiene(format!("`{f}` is listed in the manifest but missing")));
        }
        for name in &BUNDLE_FILES[..REQUIRED] {
            if !manifest.files.contains_key(*name) {
                return Err(Error::Validation(format!("bundle is missing `{name}`")));
            }
        }
        let scenario_path = dir.join("scenario.toml");
        let bundle = EvidenceBundle {
            chain: read_json(&dir.join("chain.json"))?,
            graph: read_json(&dir.join("graph.json"))?,
            positions: read_json(&dir.join("positions.json"))?,
            harms: read_json(&dir.join("harms.json"))?,
            envelopes: read_json(&dir.join("envelopes.json"))?,
            contributions: optional(dir, "contributions.json")?,
            tensor: optional(dir, "tensor.json")?,
            verifications: optional(dir, "verifications.json")?,
            attestations: optional(dir, "readiness.json")?,
            scenario: if scenario_path.exists() {
                Some(ScenarioConfig::load(&scenario_path)?)
            } else {
                None
            },
            documents: present.into_iter().collect(),
            manifest_hash: canonical_hash(&manifest)?,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.graph.validate()?;
        self.positions.validate()?;
        if let Some(s) = &self.scenario {
            self.chain.covers(s)?;
            self.graph.covers(s)?;
        }
        let mut ids = BTreeSet::new();
        for h in &self.harms {
            if !ids.insert(h.id.as_str()) {
                return Err(Error::Validation(format!("harm `{}` listed twice", h.id)));
            }
            if !self.positions.harm_universe.contains(&h.id) {
                return Err(Error::Validation(format!("harm `{}` is outside the harm universe", h.id)));
            }
        }
        for e in &self.envelopes {
            if !self.chain.parties.contains(&e.party) {
                return Err(Error::Validation(format!(
                    "envelope `{}` belongs to undeclared party `{}`",
                    e.envelope_id, e.party
                )));
            }
        }
        for c in &self.contributions {
            c.validate()?;
            if !self.chain.parties.contains(&c.party) {
                return Err(Error::Validation(format!("contribution from undeclared party `{}`", c.party)));
            }
        }
        if let Some(t) = &self.tensor {
            t.validate()?;
        }
        Ok(())
    }

    pub fn harm(&self, id: &str) -> Result<&HarmEvent> {
        self.harms
            .iter()
            .find(|h| h.id == id)
            .ok_or_else(|| Error::Config(format!("bundle has no harm `{id}`")))
    }

    /// Recorded contribution of each declared party to `harm`. Parties that
    /// own no component contribute zero; other gaps are estimated from the
    /// bundled scenario with `mode`.
    pub fn contributions_for(&self, harm: &str, mode: KappaMode) -> Result<Vec<CausalContribution>> {
        let mut out = Vec::new();
        for party in &self.chain.parties {
            let recorded: Vec<&CausalContribution> = self
                .contributions
                .iter()
                .filter(|c| c.party == *party && c.harm == harm)
                .collect();
            match recorded.as_slice() {
                [c] => out.push((*c).clone()),
                [] if self.chain.components_of(party).next().is_none() => {
                    out.push(CausalContribution::exact(party, harm, 0.0))
                }
                [] => match &self.scenario {
                    Some(s) => out.push(estimate_kappa(s, party, harm, mode)?),
                    None => {
                        return Err(Error::Validation(format!(
                            "no contribution of `{party}` to `{harm}` and no scenario to estimate it"
                        )))
                    }
                },
                _ => {
                    return Err(Error::Validation(format!(
                        "party `{party}` has more than one contribution to `{harm}`"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn attribute(&self, harm_id: &str, mode: KappaMode) -> Result<AttributionReport> {
        let harm = self.harm(harm_id)?.clone();
        let contributions = self.contributions_for(harm_id, mode)?;
        let assignment = assign_rho(&contributions, &self.positions, &harm)?;
        let (tensor_envelope, tensor_scalars) = match &self.tensor {
            Some(t) => (
                Some(t.envelope_id.clone()),
                self.chain.parties.iter().map(|p| (p.clone(), t.scalar(p, harm_id))).collect(),
            ),
            None => (None, BTreeMap::new()),
        };
        Ok(AttributionReport {
            harm,
            contributions,
            assignment,
            tensor_envelope,
            tensor_scalars,
            bundle_hash: self.manifest_hash.clone(),
        })
    }

    pub fn readiness_inputs(&self) -> ReadinessInputs {
        ReadinessInputs {
            chain: Some(self.chain.clone()),
            graph: Some(self.graph.clone()),
            scenario: self.scenario.clone(),
            verifications: self.verifications.clone(),
            envelopes: self.envelopes.clone(),
            attestations: self.attestations.clone(),
            documents: self.documents.clone(),
        }
    }

    pub fn readiness(&self) -> Result<ReadinessReport> {
        readiness_check(&self.readiness_inputs())
    }

}
