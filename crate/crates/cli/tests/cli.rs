use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use provenance_core::monitors::{DfaMonitor, FixtureState};
use provenance_core::responsibility::{
    Attestation, Condition, DependencyGraph, DeploymentChain, Envelope, EpistemicPosition, EpistemicRecord,
    EvidenceBundle, HarmEvent,
};
use provenance_core::sim::{reference_scenario, ActionSpec, ComponentAddition, ComponentSpec};

fn provenance(out: &Path, dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provenance"))
        .args(args)
        .current_dir(dir)
        .env("PROVENANCE_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, dir: &Path, args: &[&str]) -> String {
    let o = provenance(out, dir, args);
    assert!(
        o.status.success(),
        "{args:?} exited {:?}\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn manifests(out: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(out.join("manifests.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const SMALL: &str = "trajectories = 200\nseed = 3\n[train]\nepochs = 2\n";

/// Runs simulate, ingest and train into `out`; returns the config path.
fn pipeline(dir: &Path, out: &Path) -> PathBuf {
    let config = dir.join("run.toml");
    std::fs::write(&config, SMALL).unwrap();
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    let spec = out.join("adapter.json");
    let s = spec.to_str().unwrap();
    ok(out, dir, &["--config", c, "simulate"]);
    let train_raw = format!("{o}/train.raw.jsonl");
    let test_raw = format!("{o}/test.raw.jsonl");
    ok(out, dir, &["ingest", "--in", &train_raw, "--spec", s, "--induce"]);
    ok(out, dir, &["ingest", "--in", &test_raw, "--spec", s]);
    ok(out, dir, &["--config", c, "train", "--in", &format!("{o}/train.jsonl"), "--adapter", s]);
    config
}

#[test]
fn end_to_end_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = pipeline(dir.path(), &out);
    let c = config.to_str().unwrap();
    let test = out.join("test.jsonl");
    let t = test.to_str().unwrap();
    ok(&out, dir.path(), &["--config", c, "label", "--in", t]);
    let table = ok(&out, dir.path(), &["--config", c, "evaluate", "--in", t]);
    for monitor in ["gru", "attention", "soft-fsm", "dfa"] {
        assert!(table.contains(monitor), "{monitor} missing from\n{table}");
    }
    ok(&out, dir.path(), &["--config", c, "score", "--in", t]);
    for f in ["labels.csv", "evaluation.json", "evaluation.csv", "scores.csv", "models/vocabulary.json"] {
        assert!(out.join(f).exists(), "{f} not written");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("evaluation.json")).unwrap()).unwrap();
    for r in report["results"].as_array().unwrap() {
        let a = r["auprc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&a));
    }

    let log = manifests(&out);
    assert_eq!(log.len(), 7);
    for pair in log.windows(2) {
        assert_eq!(pair[1]["previous"], pair[0]["hash"]);
    }
    assert!(log.iter().all(|m| m["exit_code"] == 0));
    assert_eq!(log[3]["command"], "train");
    assert_eq!(log[3]["seeds"]["train"], 3);
    assert!(!log[3]["outputs"].as_object().unwrap().is_empty());
}

#[test]
fn retraining_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = pipeline(dir.path(), &out);
    let models = out.join("models");
    let snapshot = |d: &Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect()
    };
    let first = snapshot(&models);
    let train = out.join("train.jsonl");
    let adapter = out.join("adapter.json");
    ok(
        &out,
        dir.path(),
        &[
            "--config",
            config.to_str().unwrap(),
            "train",
            "--in",
            train.to_str().unwrap(),
            "--adapter",
            adapter.to_str().unwrap(),
        ],
    );
    assert_eq!(first, snapshot(&models));
}

#[test]
fn tampered_vocabulary_is_hygiene_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = pipeline(dir.path(), &out);
    let vocab = out.join("models/vocabulary.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&vocab).unwrap()).unwrap();
    v["idf"][0] = serde_json::json!(v["idf"][0].as_f64().unwrap() + 1.0);
    std::fs::write(&vocab, serde_json::to_string(&v).unwrap()).unwrap();
    let test = out.join("test.jsonl");
    let o = provenance(
        &out,
        dir.path(),
        &["--config", config.to_str().unwrap(), "evaluate", "--in", test.to_str().unwrap()],
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let last = manifests(&out).pop().unwrap();
    assert_eq!(last["command"], "evaluate");
    assert_eq!(last["exit_code"], 4);
    assert!(last["error"].as_str().unwrap().contains("ocabulary"));
}

#[test]
fn extracting_from_test_runs_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = pipeline(dir.path(), &out);
    let test = out.join("test.jsonl");
    let o = provenance(
        &out,
        dir.path(),
        &["--config", config.to_str().unwrap(), "extract-dfa", "--in", test.to_str().unwrap()],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn report_partitions_fixture_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/web_navigation_states.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture).unwrap()).unwrap();
    let rows: Vec<FixtureState> = serde_json::from_value(v["states"].clone()).unwrap();
    let warning: BTreeSet<String> = serde_json::from_value(v["warning_states"].clone()).unwrap();
    let dfa = dir.path().join("model.dfa");
    DfaMonitor::from_fixture(rows.clone(), 4, 1).unwrap().save(&dfa).unwrap();

    let table = ok(&out, dir.path(), &["report", "--dfa", dfa.to_str().unwrap(), "--threshold", "0.34"]);
    let (top, bottom) = table.split_once("Normal states").expect("normal partition present");
    assert!(top.contains("Warning states (risk >= 0.34)"));
    let names = |part: &str| -> BTreeSet<String> {
        part.lines()
            .filter_map(|l| l.split_whitespace().next())
            .filter(|w| rows.iter().any(|r| r.state == *w))
            .map(String::from)
            .collect()
    };
    assert_eq!(names(top), warning);
    assert_eq!(names(top).len() + names(bottom).len(), rows.len());
    assert!(out.join("dfa_report.csv").exists());
}

#[test]
fn error_categories_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "horizn = 3\n").unwrap();
    let o = provenance(&out, dir.path(), &["--config", bad.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 2);
    let o = provenance(&out, dir.path(), &["label", "--in", "missing.jsonl"]);
    assert_eq!(code(&o), 3);
    let codes: Vec<_> = manifests(&out).iter().map(|m| m["exit_code"].clone()).collect();
    assert_eq!(codes, [2, 3]);
}

fn helper(host: &str, actions: &[&str], p: f64) -> ComponentAddition {
    ComponentAddition {
        component: ComponentSpec {
            id: "helper".into(),
            owner: Some("agent-developer".into()),
            tool: String::new(),
            actions: actions
                .iter()
                .map(|a| ActionSpec {
                    name: (*a).into(),
                    weight: 1.0,
                    text: None,
                })
                .collect(),
        },
        host: host.into(),
        activation_prob: p,
    }
}

#[test]
fn delta_kappa_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let idle = dir.path().join("idle.toml");
    std::fs::write(&idle, toml::to_string(&helper("platform", &["redirect"], 0.0)).unwrap()).unwrap();
    let text = ok(&out, dir.path(), &["delta-kappa", "--addition", idle.to_str().unwrap()]);
    assert!(text.contains("permitted"));
    let records: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("verifications.json")).unwrap()).unwrap();
    let parties = reference_scenario().parties.len();
    assert_eq!(records.len(), parties * reference_scenario().harms.len());
    assert!(records.iter().all(|r| r["delta"] == 0.0));

    // A helper that always redirects opens a new path to the wrong purchase.
    let busy = dir.path().join("busy.toml");
    std::fs::write(&busy, toml::to_string(&helper("platform", &["redirect"], 1.0)).unwrap()).unwrap();
    let o = provenance(&out, dir.path(), &["delta-kappa", "--addition", busy.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("refused"));
    let records: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("verifications.json")).unwrap()).unwrap();
    assert!(records
        .iter()
        .any(|r| r["party"] == "agent-developer" && r["harm"] == "wrong-purchase" && r["delta"].as_f64().unwrap() > 0.05));
    assert_eq!(manifests(&out).last().unwrap()["exit_code"], 1);
}

fn bundle() -> EvidenceBundle {
    let s = reference_scenario();
    let harm = HarmEvent {
        id: s.harms[0].id.clone(),
        severity: "high".into(),
        time: 100,
        description: String::new(),
    };
    EvidenceBundle {
        chain: DeploymentChain::from_scenario(&s),
        graph: DependencyGraph::from_scenario(&s),
        positions: EpistemicRecord {
            harm_universe: s.harms.iter().map(|h| h.id.clone()).collect(),
            positions: s
                .parties
                .iter()
                .map(|p| EpistemicPosition {
                    party: p.clone(),
                    time: 10,
                    information: BTreeSet::new(),
                    foreseeable: [harm.id.clone()].into(),
                })
                .collect(),
        },
        harms: vec![harm],
        envelopes: s
            .parties
            .iter()
            .map(|p| Envelope {
                envelope_id: format!("env-{p}"),
                party: p.clone(),
                obligations: vec!["disclose".into()],
                intervention_boundaries: vec![],
                dimensions: vec![],
                dimension_weights: Some(vec![1.0]),
            })
            .collect(),
        contributions: vec![],
        tensor: None,
        verifications: vec![],
        attestations: Condition::ALL
            .into_iter()
            .filter(|c| *c != Condition::CompositionalVerification)
            .map(|c| {
                (
                    c,
                    Attestation {
                        attested: true,
                        evidence: vec!["evidence/plan.md".into()],
                    },
                )
            })
            .collect(),
        scenario: Some(s),
        documents: BTreeSet::new(),
        manifest_hash: String::new(),
    }
}

#[test]
fn attribute_and_readiness_on_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let root = dir.path().join("bundle");
    std::fs::create_dir_all(root.join("evidence")).unwrap();
    std::fs::write(root.join("evidence/plan.md"), "drill log").unwrap();
    let b = bundle();
    b.write(&root).unwrap();
    let harm = b.harms[0].id.clone();
    let r = root.to_str().unwrap();

    ok(&out, dir.path(), &["attribute", "--bundle", r, "--harm", &harm]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(format!("attribution-{harm}.json"))).unwrap())
            .unwrap();
    let shares = report["assignment"]["shares"].as_object().expect("shares by party");
    let total: f64 = shares.values().map(|v| v.as_f64().unwrap()).sum::<f64>()
        + report["assignment"]["institutional"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-12, "shares sum to {total}");

    let table = ok(&out, dir.path(), &["readiness", "--bundle", r]);
    assert!(table.contains("dependency documentation"));

    std::fs::write(root.join("evidence/plan.md"), "edited").unwrap();
    let o = provenance(&out, dir.path(), &["readiness", "--bundle", r]);
    assert_eq!(code(&o), 4);

    std::fs::write(root.join("evidence/plan.md"), "drill log").unwrap();
    let mut unready = bundle();
    unready.attestations.remove(&Condition::Consent);
    unready.write(&root).unwrap();
    let o = provenance(&out, dir.path(), &["readiness", "--bundle", r]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("consent"));
}
