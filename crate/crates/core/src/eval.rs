//! Prefix-warning evaluation: precision-recall area, the prevalence
//! baseline, and hash-checked comparison of trained monitors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::AdapterSpec;
use crate::error::{Error, Result};
use crate::event::Vocabulary;
use crate::monitors::{ConstantScorer, DfaMonitor, MonitorKind, PrefixScorer, TrainedMonitor};
use crate::trace::{label_prefixes, Trajectory};

pub const METHOD_NOTE: &str = "step-wise precision-recall area over distinct score thresholds, equal scores grouped into one step; \
soft-FSM scores an empty prefix from its initial belief while recurrent and attention monitors reject it";
pub const TRAINING_MANIFEST_FORMAT: &str = "training-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrefix {
    pub prefix_id: String,
    pub score: f64,
    pub label: bool,
}

/// Area under the precision-recall curve, summed as
/// `Σ (R_k − R_{k−1}) · P_k` over distinct thresholds in descending order.
pub fn auprc(scored: &[ScoredPrefix]) -> Result<f64> {
    let mut items: Vec<(f64, bool)> = scored.iter().map(|s| (s.score, s.label)).collect();
    auprc_pairs(&mut items)
}

pub fn auprc_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let mut items: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    auprc_pairs(&mut items)
}

fn auprc_pairs(items: &mut [(f64, bool)]) -> Result<f64> {
    if items.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Validation("scores must not be NaN".into()));
    }
    let positives = items.iter().filter(|(_, y)| *y).count();
    if positives == 0 {
        return Err(Error::Undefined("precision-recall area needs at least one positive".into()));
    }
    if positives == items.len() {
        log::warn!("no negative prefixes; precision-recall area is trivially 1.0");
        return Ok(1.0);
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let p = positives as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        while i < items.len() && items[i].0 == threshold {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Fraction of positive labels, the expected area of an uninformed ranking.
pub fn random_baseline(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Validation("random baseline needs at least one prefix".into()));
    }
    Ok(labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64)
}

/// Scores every prefix of every trajectory, in trajectory order.
pub fn score_prefixes(
    scorer: &dyn PrefixScorer,
    vocab: &Vocabulary,
    trajectories: &[Trajectory],
    horizon: usize,
) -> Result<Vec<ScoredPrefix>> {
    let per_trajectory: Vec<Vec<ScoredPrefix>> = trajectories
        .par_iter()
        .map(|t| {
            let labels = label_prefixes(t, horizon)?;
            let scores = scorer.score_trajectory(vocab, t)?;
            if scores.len() != labels.len() {
                return Err(Error::Dimension {
                    expected: labels.len(),
                    actual: scores.len(),
                });
            }
            Ok(labels
                .into_iter()
                .zip(scores)
                .map(|(l, score)| ScoredPrefix {
                    prefix_id: l.prefix.id(),
                    score,
                    label: l.positive,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_trajectory.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub kind: MonitorKind,
    pub file: String,
    pub param_hash: String,
    pub projection_hash: String,
}

/// Hashes of every frozen artifact, recorded when monitors are trained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub format: String,
    pub seed: u64,
    pub horizon: usize,
    pub adapter_hash: Option<String>,
    pub vocabulary_hash: String,
    pub train_trajectory_ids: Vec<String>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

/// Trained monitors with the vocabulary (and optionally adapter) they share.
#[derive(Debug, Clone)]
pub struct MonitorSet {
    pub vocabulary: Vocabulary,
    pub adapter: Option<AdapterSpec>,
    pub trained: Vec<TrainedMonitor>,
    pub dfa: Option<DfaMonitor>,
}

const VOCABULARY_FILE: &str = "vocabulary.json";
const ADAPTER_FILE: &str = "adapter.json";
const DFA_FILE: &str = "dfa.json";
const DFA_DOT_FILE: &str = "dfa.dot";
pub const TRAINING_MANIFEST_FILE: &str = "training_manifest.json";

fn monitor_file(kind: MonitorKind) -> String {
    format!("{}.json", kind.name())
}

fn hygiene(what: &str, expected: &str, actual: &str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Hygiene(format!(
            "{what} hash {actual} does not match training record {expected}"
        )))
    }
}

impl MonitorSet {
    pub fn manifest(&self, seed: u64, horizon: usize, train: &[Trajectory]) -> Result<TrainingManifest> {
        let mut artifacts = BTreeMap::new();
        for m in &self.trained {
            artifacts.insert(
                m.kind.name().to_string(),
                ArtifactRecord {
                    kind: m.kind,
                    file: monitor_file(m.kind),
                    param_hash: m.param_hash.clone(),
                    projection_hash: m.projection.content_hash(),
                },
            );
        }
        if let Some(d) = &self.dfa {
            artifacts.insert(
                MonitorKind::Dfa.name().to_string(),
                ArtifactRecord {
                    kind: MonitorKind::Dfa,
                    file: DFA_FILE.into(),
                    param_hash: d.content_hash.clone(),
                    projection_hash: d
                        .projection
                        .as_ref()
                        .map(|p| p.content_hash())
                        .unwrap_or_default(),
                },
            );
        }
        Ok(TrainingManifest {
            format: TRAINING_MANIFEST_FORMAT.into(),
            seed,
            horizon,
            adapter_hash: match &self.adapter {
                Some(a) => Some(a.compute_hash()?),
                None => None,
            },
            vocabulary_hash: self.vocabulary.content_hash(),
            train_trajectory_ids: train.iter().map(|t| t.trajectory_id.clone()).collect(),
            artifacts,
        })
    }

    /// Refuses any artifact whose hash differs from the training record.
    pub fn check_against(&self, manifest: &TrainingManifest) -> Result<()> {
        self.vocabulary.validate()?;
        let vocab_hash = self.vocabulary.content_hash();
        hygiene("vocabulary", &manifest.vocabulary_hash, &vocab_hash)?;
        match (&manifest.adapter_hash, &self.adapter) {
            (Some(expected), Some(a)) => {
                a.verify()?;
                hygiene("adapter", expected, &a.compute_hash()?)?;
            }
            (Some(_), None) => {
                return Err(Error::Hygiene("training used an adapter that is not supplied".into()))
            }
            (None, _) => {}
        }
        let record = |name: &str| {
            manifest
                .artifacts
                .get(name)
                .ok_or_else(|| Error::Hygiene(format!("{name} monitor has no training record")))
        };
        for m in &self.trained {
            m.validate()?;
            let r = record(m.kind.name())?;
            hygiene(&format!("{} vocabulary", m.kind), &vocab_hash, &m.vocabulary_hash)?;
            hygiene(&format!("{} parameter", m.kind), &r.param_hash, &m.param_hash)?;
            hygiene(
                &format!("{} projection", m.kind),
                &r.projection_hash,
                &m.projection.content_hash(),
            )?;
        }
        if let Some(d) = &self.dfa {
            d.validate()?;
            let r = record(MonitorKind::Dfa.name())?;
            hygiene("dfa", &r.param_hash, &d.content_hash)?;
            if let Some(v) = &d.vocabulary_hash {
                hygiene("dfa vocabulary", &vocab_hash, v)?;
            }
            let projection_hash = d.projection.as_ref().map(|p| p.content_hash()).unwrap_or_default();
            hygiene("dfa projection", &r.projection_hash, &projection_hash)?;
        }
        Ok(())
    }

    pub fn scorers(&self) -> Vec<&dyn PrefixScorer> {
        let mut out: Vec<&dyn PrefixScorer> = self.trained.iter().map(|m| m as &dyn PrefixScorer).collect();
        if let Some(d) = &self.dfa {
            out.push(d);
        }
        out
    }

    pub fn save_dir(&self, dir: &Path, manifest: &TrainingManifest) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(VOCABULARY_FILE), &self.vocabulary)?;
        if let Some(a) = &self.adapter {
            a.save(&dir.join(ADAPTER_FILE))?;
        }
        for m in &self.trained {
            m.save(&dir.join(monitor_file(m.kind)))?;
        }
        if let Some(d) = &self.dfa {
            d.save(&dir.join(DFA_FILE))?;
            let dot = dir.join(DFA_DOT_FILE);
            std::fs::write(&dot, d.to_dot()).map_err(|e| Error::io(dot, e))?;
        }
        write_json(&dir.join(TRAINING_MANIFEST_FILE), manifest)
    }

    /// Loads every artifact listed in the directory's training manifest.
    pub fn load_dir(dir: &Path) -> Result<(MonitorSet, TrainingManifest)> {
        let manifest: TrainingManifest = read_json(&dir.join(TRAINING_MANIFEST_FILE))?;
        let vocabulary: Vocabulary = read_json(&dir.join(VOCABULARY_FILE))?;
        let adapter_path = dir.join(ADAPTER_FILE);
        let adapter = if adapter_path.exists() {
            Some(AdapterSpec::load(&adapter_path)?)
        } else {
            None
        };
        let mut trained = Vec::new();
        let mut dfa = None;
        for r in manifest.artifacts.values() {
            let path = dir.join(&r.file);
            if r.kind == MonitorKind::Dfa {
                dfa = Some(DfaMonitor::load(&path)?);
            } else {
                trained.push(TrainedMonitor::load(&path)?);
            }
        }
        Ok((
            MonitorSet {
                vocabulary,
                adapter,
                trained,
                dfa,
            },
            manifest,
        ))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorResult {
    pub monitor: String,
    pub auprc: f64,
    /// Area divided by the random baseline.
    pub lift: f64,
    pub artifact_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub horizon: usize,
    pub seed: u64,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub test_prefixes: usize,
    pub positive_prefixes: usize,
    pub positive_rate: f64,
    pub random_baseline: f64,
    pub adapter_hash: Option<String>,
    pub vocabulary_hash: String,
    pub results: Vec<MonitorResult>,
}

impl EvalReport {
    pub fn result(&self, monitor: &str) -> Option<&MonitorResult> {
        self.results.iter().find(|r| r.monitor == monitor)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Validation(format!("csv encoding: {e}"));
        w.write_record(["monitor", "auprc", "random_baseline", "lift", "horizon", "seed", "test_prefixes"])
            .map_err(err)?;
        let baseline = ("random".to_string(), self.random_baseline, 1.0);
        let rows = std::iter::once(baseline).chain(self.results.iter().map(|r| (r.monitor.clone(), r.auprc, r.lift)));
        for (name, value, lift) in rows {
            w.write_record([
                name,
                format!("{value:.6}"),
                format!("{:.6}", self.random_baseline),
                format!("{lift:.3}"),
                self.horizon.to_string(),
                self.seed.to_string(),
                self.test_prefixes.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Scores every monitor in `set` plus the `extra` baselines on identical
/// held-out prefixes. Aborts with a hygiene error if any frozen artifact
/// differs from its training record or the test split overlaps training.
pub fn compare_monitors(
    set: &MonitorSet,
    manifest: &TrainingManifest,
    extra: &[&dyn PrefixScorer],
    test: &[Trajectory],
    horizon: usize,
) -> Result<EvalReport> {
    set.check_against(manifest)?;
    let train_ids: BTreeSet<&str> = manifest.train_trajectory_ids.iter().map(String::as_str).collect();
    if let Some(t) = test.iter().find(|t| train_ids.contains(t.trajectory_id.as_str())) {
        return Err(Error::Hygiene(format!(
            "test trajectory {} also appears in the training split",
            t.trajectory_id
        )));
    }
    if test.is_empty() {
        return Err(Error::Validation("test split is empty".into()));
    }

    let labels: Vec<bool> = test
        .iter()
        .map(|t| label_prefixes(t, horizon))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .map(|l| l.positive)
        .collect();
    let baseline = random_baseline(&labels)?;

    let mut results = Vec::new();
    let hashes: BTreeMap<String, String> = manifest
        .artifacts
        .iter()
        .map(|(k, r)| (k.clone(), r.param_hash.clone()))
        .collect();
    for scorer in set.scorers().into_iter().chain(extra.iter().copied()) {
        let scored = score_prefixes(scorer, &set.vocabulary, test, horizon)?;
        let value = auprc(&scored)?;
        let name = scorer.name();
        results.push(MonitorResult {
            artifact_hash: hashes.get(&name).cloned(),
            lift: value / baseline,
            auprc: value,
            monitor: name,
        });
    }

    Ok(EvalReport {
        method: METHOD_NOTE.into(),
        horizon,
        seed: manifest.seed,
        train_trajectories: manifest.train_trajectory_ids.len(),
        test_trajectories: test.len(),
        test_prefixes: labels.len(),
        positive_prefixes: labels.iter().filter(|&&y| y).count(),
        positive_rate: baseline,
        random_baseline: baseline,
        adapter_hash: manifest.adapter_hash.clone(),
        vocabulary_hash: manifest.vocabulary_hash.clone(),
        results,
    })
}

/// The placeholder zero-shot judge used as an extra baseline.
pub fn judge_stub() -> ConstantScorer {
    ConstantScorer::llm_judge_stub()
}
