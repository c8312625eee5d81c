use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::info;

use provenance_core::adapter::{induce_adapter, read_raw_traces, to_trajectory, write_raw_traces, AdapterSpec};
use provenance_core::eval::{compare_monitors, judge_stub, score_prefixes, MonitorSet};
use provenance_core::event::Vocabulary;
use provenance_core::monitors::{dfa_state_report, encode_labeled, extract_dfa, train, DfaMonitor, MonitorKind};
use provenance_core::responsibility::{CompositionGate, DependencyGraph, EvidenceBundle};
use provenance_core::sim::{generate, ComponentAddition};
use provenance_core::trace::{label_all, read_trajectories, write_trajectories};
use provenance_core::{Error, Result, Trajectory};

use crate::config::RunConfig;

/// Files a command read and wrote, plus the seeds it used.
#[derive(Debug, Default)]
pub struct Ran {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    /// Zero unless the command completed with a negative verdict.
    pub verdict: u8,
}

pub const MODELS_DIR: &str = "models";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io(dir))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io(path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    write_text(path, &(text + "\n"))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    toml::from_str(&text).map_err(|e| Error::Toml {
        context: path.display().to_string(),
        source: e,
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Validation(format!("csv encoding: {e}"))
}

pub fn simulate(config: &RunConfig, scenario: Option<&Path>, n: Option<usize>, out: &Path) -> Result<Ran> {
    let scenario_config = config.scenario(scenario)?;
    let n = n.unwrap_or(config.trajectories);
    let data = generate(&scenario_config, n)?;
    let (train_raw, test_raw) = data.split_raw();
    create_dir(out)?;
    let train_path = out.join("train.raw.jsonl");
    let test_path = out.join("test.raw.jsonl");
    let echo = out.join("scenario.toml");
    write_raw_traces(&train_path, &train_raw)?;
    write_raw_traces(&test_path, &test_raw)?;
    write_text(&echo, &scenario_config.to_toml()?)?;
    let failures = data.trajectories.iter().filter(|t| t.is_failure()).count();
    println!(
        "simulated {n} runs of `{}` ({failures} failed): {} train, {} test",
        scenario_config.name,
        train_raw.len(),
        test_raw.len()
    );
    Ok(Ran {
        inputs: scenario.or(config.scenario.as_deref()).map(Path::to_path_buf).into_iter().collect(),
        outputs: vec![train_path, test_path, echo],
        seeds: BTreeMap::from([("scenario".into(), scenario_config.seed)]),
        verdict: 0,
    })
}

fn ingested_name(input: &Path) -> String {
    let name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let base = name
        .strip_suffix(".raw.jsonl")
        .or_else(|| name.strip_suffix(".jsonl"))
        .unwrap_or(&name);
    format!("{base}.jsonl")
}

pub fn ingest(input: &Path, spec: &Path, induce: bool, out: &Path) -> Result<Ran> {
    let raw = read_raw_traces(input)?;
    let mut outputs = Vec::new();
    let adapter = if induce {
        let a = induce_adapter(&raw, &BTreeMap::new())?;
        if let Some(parent) = spec.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        a.save(spec)?;
        outputs.push(spec.to_path_buf());
        a
    } else {
        AdapterSpec::load(spec)?
    };
    let trajectories: Vec<Trajectory> = raw.iter().map(|r| to_trajectory(r, &adapter)).collect::<Result<_>>()?;
    create_dir(out)?;
    let path = out.join(ingested_name(input));
    if path == input {
        return Err(Error::Config(format!(
            "ingesting {} into the same directory would overwrite it",
            input.display()
        )));
    }
    write_trajectories(&path, &trajectories)?;
    println!("ingested {} trajectories with adapter {}", trajectories.len(), &adapter.content_hash[..12]);
    outputs.push(path);
    let mut inputs = vec![input.to_path_buf()];
    if !induce {
        inputs.push(spec.to_path_buf());
    }
    Ok(Ran {
        inputs,
        outputs,
        ..Ran::default()
    })
}

pub fn label(config: &RunConfig, input: &Path, out: &Path) -> Result<Ran> {
    let trajectories = read_trajectories(input)?;
    let labels = label_all(&trajectories, config.horizon)?;
    create_dir(out)?;
    let path = out.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    w.write_record(["trajectory_id", "end_index", "remaining_steps", "horizon", "positive"])
        .map_err(csv_error)?;
    for l in &labels {
        w.write_record([
            l.prefix.trajectory_id.as_str(),
            &l.prefix.end_index.to_string(),
            &l.prefix.remaining_steps.to_string(),
            &l.horizon.to_string(),
            if l.positive { "1" } else { "0" },
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(io(&path))?;
    let positives = labels.iter().filter(|l| l.positive).count();
    println!("{} prefixes, {positives} positive at horizon {}", labels.len(), config.horizon);
    Ok(Ran {
        inputs: vec![input.to_path_buf()],
        outputs: vec![path],
        ..Ran::default()
    })
}

pub fn train_cmd(config: &RunConfig, input: &Path, adapter: Option<&Path>, out: &Path) -> Result<Ran> {
    let trajectories = read_trajectories(input)?;
    let vocabulary = Vocabulary::build(trajectories.iter().flat_map(|t| &t.steps), config.train.max_terms)?;
    let data = encode_labeled(&vocabulary, &trajectories, config.horizon)?;
    let mut trained = Vec::new();
    let mut logs = Vec::new();
    for &kind in &config.monitors {
        info!("training {kind} on {} trajectories", trajectories.len());
        let (m, log) = train(kind, &data, &vocabulary, &config.train)?;
        println!(
            "trained {kind}: final loss {:.4}, hash {}",
            log.epoch_losses.last().copied().unwrap_or(f64::NAN),
            &m.param_hash[..12]
        );
        trained.push(m);
        logs.push(log);
    }
    let dfa = match trained.iter().find(|m| m.kind == MonitorKind::SoftFsm) {
        Some(fsm) if config.extract_dfa => {
            let d = extract_dfa(&fsm.projection, &vocabulary, &trajectories, &config.dfa)?;
            println!("extracted automaton with {} states", d.states.len());
            Some(d)
        }
        _ => None,
    };
    let set = MonitorSet {
        vocabulary,
        adapter: adapter.map(AdapterSpec::load).transpose()?,
        trained,
        dfa,
    };
    let manifest = set.manifest(config.train.seed, config.horizon, &trajectories)?;
    let models = out.join(MODELS_DIR);
    set.save_dir(&models, &manifest)?;
    let log_path = out.join("training_log.json");
    write_json(&log_path, &logs)?;
    let mut inputs = vec![input.to_path_buf()];
    inputs.extend(adapter.map(Path::to_path_buf));
    Ok(Ran {
        inputs,
        outputs: vec![models, log_path],
        seeds: BTreeMap::from([("train".into(), config.train.seed)]),
        verdict: 0,
    })
}

fn load_models(models: &Path, adapter: Option<&Path>) -> Result<(MonitorSet, provenance_core::eval::TrainingManifest)> {
    let (mut set, manifest) = MonitorSet::load_dir(models)?;
    if let Some(a) = adapter {
        set.adapter = Some(AdapterSpec::load(a)?);
    }
    set.check_against(&manifest)?;
    Ok((set, manifest))
}

pub fn score(config: &RunConfig, models: &Path, input: &Path, monitor: Option<&str>, out: &Path) -> Result<Ran> {
    let (set, _) = load_models(models, None)?;
    let trajectories = read_trajectories(input)?;
    let scorers: Vec<_> = set
        .scorers()
        .into_iter()
        .filter(|s| monitor.is_none_or(|m| s.name() == m))
        .collect();
    if scorers.is_empty() {
        return Err(Error::Config(format!("no monitor named `{}`", monitor.unwrap_or(""))));
    }
    create_dir(out)?;
    let path = out.join("scores.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    w.write_record(["monitor", "prefix_id", "score", "label"]).map_err(csv_error)?;
    for s in scorers {
        let name = s.name();
        for p in score_prefixes(s, &set.vocabulary, &trajectories, config.horizon)? {
            w.write_record([
                name.as_str(),
                &p.prefix_id,
                &format!("{:.9}", p.score),
                if p.label { "1" } else { "0" },
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(io(&path))?;
    println!("scored {} trajectories", trajectories.len());
    Ok(Ran {
        inputs: vec![models.to_path_buf(), input.to_path_buf()],
        outputs: vec![path],
        ..Ran::default()
    })
}

pub fn extract(config: &RunConfig, models: &Path, input: &Path, from: MonitorKind, out: &Path) -> Result<Ran> {
    let (set, manifest) = load_models(models, None)?;
    let source = set
        .trained
        .iter()
        .find(|m| m.kind == from)
        .ok_or_else(|| Error::Config(format!("{} has no {from} monitor", models.display())))?;
    let trajectories = read_trajectories(input)?;
    let train_ids: BTreeSet<&str> = manifest.train_trajectory_ids.iter().map(String::as_str).collect();
    if let Some(t) = trajectories.iter().find(|t| !train_ids.contains(t.trajectory_id.as_str())) {
        return Err(Error::Hygiene(format!(
            "automaton extraction must use training runs only; `{}` is not one",
            t.trajectory_id
        )));
    }
    let dfa = extract_dfa(&source.projection, &set.vocabulary, &trajectories, &config.dfa)?;
    create_dir(out)?;
    let path = out.join("dfa.json");
    let dot = out.join("dfa.dot");
    dfa.save(&path)?;
    write_text(&dot, &dfa.to_dot())?;
    println!("extracted automaton with {} states", dfa.states.len());
    Ok(Ran {
        inputs: vec![models.to_path_buf(), input.to_path_buf()],
        outputs: vec![path, dot],
        ..Ran::default()
    })
}

pub fn report(config: &RunConfig, dfa: &Path, out: &Path) -> Result<Ran> {
    let automaton = DfaMonitor::load(dfa)?;
    let report = dfa_state_report(&automaton, config.threshold);
    print!("{}", report.to_table());
    create_dir(out)?;
    let path = out.join("dfa_report.csv");
    write_text(&path, &report.to_csv()?)?;
    Ok(Ran {
        inputs: vec![dfa.to_path_buf()],
        outputs: vec![path],
        ..Ran::default()
    })
}

pub fn evaluate(config: &RunConfig, models: &Path, input: &Path, adapter: Option<&Path>, out: &Path) -> Result<Ran> {
    let (mut set, manifest) = MonitorSet::load_dir(models)?;
    if let Some(a) = adapter {
        set.adapter = Some(AdapterSpec::load(a)?);
    }
    let test = read_trajectories(input)?;
    let judge = judge_stub();
    let report = compare_monitors(&set, &manifest, &[&judge], &test, config.horizon)?;
    println!(
        "{} test prefixes, {} positive (baseline {:.4})",
        report.test_prefixes, report.positive_prefixes, report.random_baseline
    );
    println!("{:<18} {:>8} {:>8}", "monitor", "AUPRC", "lift");
    for r in &report.results {
        println!("{:<18} {:>8.4} {:>7.2}x", r.monitor, r.auprc, r.lift);
    }
    create_dir(out)?;
    let json = out.join("evaluation.json");
    let csv = out.join("evaluation.csv");
    write_json(&json, &report)?;
    write_text(&csv, &report.to_csv()?)?;
    let mut inputs = vec![models.to_path_buf(), input.to_path_buf()];
    inputs.extend(adapter.map(Path::to_path_buf));
    Ok(Ran {
        inputs,
        outputs: vec![json, csv],
        seeds: BTreeMap::from([("train".into(), manifest.seed)]),
        verdict: 0,
    })
}

pub fn attribute(config: &RunConfig, bundle: &Path, harm: &str, out: &Path) -> Result<Ran> {
    let b = EvidenceBundle::load(bundle)?;
    let report = b.attribute(harm, config.kappa)?;
    print!("{}", report.to_table());
    create_dir(out)?;
    let path = out.join(format!("attribution-{harm}.json"));
    write_json(&path, &report)?;
    Ok(Ran {
        inputs: vec![bundle.to_path_buf()],
        outputs: vec![path],
        ..Ran::default()
    })
}

pub fn delta_kappa(
    config: &RunConfig,
    scenario: Option<&Path>,
    addition: &Path,
    bound: Option<f64>,
    out: &Path,
) -> Result<Ran> {
    let scenario_config = config.scenario(scenario)?;
    let add: ComponentAddition = read_toml(addition)?;
    let graph = DependencyGraph::from_scenario(&scenario_config);
    let mut gate = CompositionGate::new(bound.unwrap_or(config.gate_bound))?;
    let permitted = gate.verify(&graph, &scenario_config, &add, config.kappa)?;
    println!("{:<20} {:<18} {:>10}", "party", "harm", "delta");
    for r in &gate.records {
        let mark = if r.within_bound { "" } else { "  over bound" };
        println!("{:<20} {:<18} {:>10.4}{mark}", r.party, r.harm, r.delta);
    }
    println!(
        "co-activation of `{}` with `{}` {}",
        add.component.id,
        add.host,
        if permitted { "permitted" } else { "refused" }
    );
    create_dir(out)?;
    let path = out.join("verifications.json");
    write_json(&path, &gate.records)?;
    let mut inputs = vec![addition.to_path_buf()];
    inputs.extend(scenario.or(config.scenario.as_deref()).map(Path::to_path_buf));
    Ok(Ran {
        inputs,
        outputs: vec![path],
        seeds: BTreeMap::from([("scenario".into(), scenario_config.seed)]),
        verdict: u8::from(!permitted),
    })
}

pub fn readiness(bundle: &Path, out: &Path) -> Result<Ran> {
    let b = EvidenceBundle::load(bundle)?;
    let report = b.readiness()?;
    print!("{}", report.to_table());
    create_dir(out)?;
    let path = out.join("readiness.json");
    write_json(&path, &report)?;
    Ok(Ran {
        inputs: vec![bundle.to_path_buf()],
        outputs: vec![path],
        verdict: u8::from(!report.ready),
        ..Ran::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingested_names() {
        assert_eq!(ingested_name(Path::new("a/train.raw.jsonl")), "train.jsonl");
        assert_eq!(ingested_name(Path::new("logs.jsonl")), "logs.jsonl");
        assert_eq!(ingested_name(Path::new("dump")), "dump.jsonl");
    }
}
