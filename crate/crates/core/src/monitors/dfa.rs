use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PrefixScorer;
use crate::error::{Error, Result};
use crate::event::{ProjectionModel, Vocabulary};
use crate::hash::canonical_hash;
use crate::trace::{label_prefixes, Trajectory};

pub const DFA_FORMAT: &str = "dfa/1";
pub const DEFAULT_SMOOTHING: f64 = 1.0;
pub const DEFAULT_MIN_SUPPORT: u64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfaParams {
    /// Number of most recent hard symbols that identify a history.
    pub history_length: usize,
    /// Histories join a state when their next-symbol distributions are
    /// closer than this in total variation.
    pub merge_tolerance: f64,
    pub smoothing: f64,
    pub min_support: u64,
    pub horizon: usize,
}

impl Default for DfaParams {
    fn default() -> Self {
        DfaParams {
            history_length: 2,
            merge_tolerance: 0.1,
            smoothing: DEFAULT_SMOOTHING,
            min_support: DEFAULT_MIN_SUPPORT,
            horizon: crate::trace::DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaState {
    pub name: String,
    pub phase: String,
    pub risk: f64,
    pub support: u64,
    /// Present for extracted automata; transcribed fixtures carry only risk.
    pub positives: Option<u64>,
    pub mean_timing: f64,
    pub representative_step: String,
    pub trusted: bool,
}

/// A deterministic automaton over hard event symbols whose states carry
/// calibrated risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaMonitor {
    pub format: String,
    pub alphabet_size: usize,
    pub initial_state: usize,
    pub states: Vec<DfaState>,
    /// `transitions[q][a]` is the successor of state `q` on symbol `a`.
    pub transitions: Vec<Vec<usize>>,
    pub smoothing: f64,
    pub min_support: u64,
    pub projection: Option<ProjectionModel>,
    pub vocabulary_hash: Option<String>,
    pub content_hash: String,
}

/// One row of transcribed state statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureState {
    pub state: String,
    pub phase: String,
    pub risk: f64,
    pub support: u64,
    pub mean_timing: f64,
    #[serde(default)]
    pub representative_step: String,
}

fn timing_phase(mean_timing: f64) -> &'static str {
    if mean_timing < 1.0 / 3.0 {
        "early"
    } else if mean_timing < 2.0 / 3.0 {
        "mid"
    } else {
        "late"
    }
}

type History = Vec<Option<usize>>;

fn shift(history: &History, symbol: usize) -> History {
    let mut next = history[1..].to_vec();
    next.push(Some(symbol));
    next
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

struct Routed {
    symbols: Vec<usize>,
    labels: Vec<bool>,
}

/// Builds an automaton from hard event assignments of labeled trajectories.
///
/// Histories of the last `history_length` symbols are grouped greedily in
/// order of decreasing support: each joins the first existing state whose
/// founding history has a next-symbol distribution (including end of trace)
/// within `merge_tolerance`. Each `(state, symbol)` pair moves to the state
/// most often reached in training; unseen pairs fall back to the state of the
/// shifted founding history, then to the best-supported history ending in the
/// symbol, then to the initial state. State statistics come from routing every
/// training prefix through the finished automaton.
pub fn extract_dfa(
    projection: &ProjectionModel,
    vocab: &Vocabulary,
    trajectories: &[Trajectory],
    params: &DfaParams,
) -> Result<DfaMonitor> {
    if params.history_length == 0 {
        return Err(Error::Config("history_length must be positive".into()));
    }
    if !(params.smoothing > 0.0 && params.smoothing.is_finite()) {
        return Err(Error::Config("smoothing must be positive".into()));
    }
    vocab.validate()?;
    projection.validate()?;
    let k = projection.alphabet_size();
    let end = k;

    let mut data = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let labels = label_prefixes(t, params.horizon)?;
        let mut symbols = Vec::with_capacity(t.len());
        for s in &t.steps {
            symbols.push(projection.project(&vocab.encode(s))?.hard_symbol);
        }
        data.push(Routed {
            symbols,
            labels: labels.into_iter().map(|l| l.positive).collect(),
        });
    }
    if data.iter().all(|d| d.symbols.is_empty()) {
        return Err(Error::Validation("no prefixes to route".into()));
    }

    let start: History = vec![None; params.history_length];
    let mut next_counts: BTreeMap<History, Vec<u64>> = BTreeMap::new();
    for d in &data {
        let mut h = start.clone();
        for &a in &d.symbols {
            next_counts.entry(h.clone()).or_insert_with(|| vec![0; k + 1])[a] += 1;
            h = shift(&h, a);
        }
        next_counts.entry(h).or_insert_with(|| vec![0; k + 1])[end] += 1;
    }

    let mut order: Vec<(&History, u64)> = next_counts
        .iter()
        .map(|(h, c)| (h, c.iter().sum::<u64>()))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut leaders: Vec<(History, Vec<f64>)> = Vec::new();
    let mut cluster_of: BTreeMap<History, usize> = BTreeMap::new();
    for &(h, support) in &order {
        let dist: Vec<f64> = next_counts[h]
            .iter()
            .map(|&c| c as f64 / support as f64)
            .collect();
        let found = leaders
            .iter()
            .position(|(_, lead)| total_variation(lead, &dist) < params.merge_tolerance);
        let id = found.unwrap_or_else(|| {
            leaders.push((h.clone(), dist));
            leaders.len() - 1
        });
        cluster_of.insert(h.clone(), id);
    }
    let n_states = leaders.len();
    let initial_state = cluster_of[&start];

    let mut moves: Vec<Vec<BTreeMap<usize, u64>>> = vec![vec![BTreeMap::new(); k]; n_states];
    for d in &data {
        let mut h = start.clone();
        for &a in &d.symbols {
            let next = shift(&h, a);
            *moves[cluster_of[&h]][a].entry(cluster_of[&next]).or_insert(0) += 1;
            h = next;
        }
    }
    let mut transitions = vec![vec![initial_state; k]; n_states];
    for q in 0..n_states {
        for a in 0..k {
            let seen = &moves[q][a];
            transitions[q][a] = if let Some(best) = seen.values().max() {
                *seen.iter().find(|(_, c)| *c == best).expect("max exists").0
            } else if let Some(&c) = cluster_of.get(&shift(&leaders[q].0, a)) {
                c
            } else if let Some(&(h, _)) = order.iter().find(|(h, _)| h.last() == Some(&Some(a))) {
                cluster_of[h]
            } else {
                initial_state
            };
        }
    }

    let mut support = vec![0u64; n_states];
    let mut positives = vec![0u64; n_states];
    let mut timing = vec![0.0f64; n_states];
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_states];
    for (ti, d) in data.iter().enumerate() {
        let len = d.symbols.len();
        let mut q = initial_state;
        for (i, &a) in d.symbols.iter().enumerate() {
            q = transitions[q][a];
            support[q] += 1;
            positives[q] += u64::from(d.labels[i]);
            timing[q] += if len > 1 { i as f64 / (len - 1) as f64 } else { 1.0 };
            members[q].push((ti, i));
        }
    }

    let alpha = params.smoothing;
    let states = (0..n_states)
        .map(|q| {
            let mean_timing = if support[q] > 0 { timing[q] / support[q] as f64 } else { 0.0 };
            DfaState {
                name: format!("q{q}"),
                phase: timing_phase(mean_timing).into(),
                risk: (positives[q] as f64 + alpha) / (support[q] as f64 + 2.0 * alpha),
                support: support[q],
                positives: Some(positives[q]),
                mean_timing,
                representative_step: medoid_action(vocab, trajectories, &members[q]),
                trusted: support[q] >= params.min_support,
            }
        })
        .collect();

    let mut dfa = DfaMonitor {
        format: DFA_FORMAT.into(),
        alphabet_size: k,
        initial_state,
        states,
        transitions,
        smoothing: alpha,
        min_support: params.min_support,
        projection: Some(projection.clone()),
        vocabulary_hash: Some(vocab.content_hash()),
        content_hash: String::new(),
    };
    dfa.content_hash = dfa.compute_hash()?;
    Ok(dfa)
}

/// Action text of the routed step minimising summed cosine distance to the
/// others. Encodings are unit-norm, so this maximises `x_i · Σ_j x_j`.
fn medoid_action(vocab: &Vocabulary, trajectories: &[Trajectory], members: &[(usize, usize)]) -> String {
    if members.is_empty() {
        return String::new();
    }
    let vectors: Vec<_> = members
        .iter()
        .map(|&(t, i)| vocab.encode(&trajectories[t].steps[i]))
        .collect();
    let mut total = vec![0.0; vocab.size()];
    for v in &vectors {
        for &(j, x) in &v.entries {
            total[j] += x;
        }
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, v) in vectors.iter().enumerate() {
        let s = v.dot_dense(&total);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    let (t, i) = members[best];
    trajectories[t].steps[i].action.clone()
}

impl DfaMonitor {
    /// Automaton carrying transcribed statistics. Every state loops on every
    /// symbol and the first row is the initial state.
    pub fn from_fixture(rows: Vec<FixtureState>, alphabet_size: usize, min_support: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("fixture has no states".into()));
        }
        let transitions = (0..rows.len()).map(|q| vec![q; alphabet_size]).collect();
        let states = rows
            .into_iter()
            .map(|r| DfaState {
                trusted: r.support >= min_support,
                name: r.state,
                phase: r.phase,
                risk: r.risk,
                support: r.support,
                positives: None,
                mean_timing: r.mean_timing,
                representative_step: r.representative_step,
            })
            .collect();
        let mut dfa = DfaMonitor {
            format: DFA_FORMAT.into(),
            alphabet_size,
            initial_state: 0,
            states,
            transitions,
            smoothing: DEFAULT_SMOOTHING,
            min_support,
            projection: None,
            vocabulary_hash: None,
            content_hash: String::new(),
        };
        dfa.content_hash = dfa.compute_hash()?;
        dfa.validate()?;
        Ok(dfa)
    }

    pub fn compute_hash(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.content_hash.clear();
        canonical_hash(&copy)
    }

    pub fn state_by_name(&self, name: &str) -> Option<&DfaState> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 || self.initial_state >= n {
            return Err(Error::Validation("automaton has no valid initial state".into()));
        }
        if self.transitions.len() != n {
            return Err(Error::Validation("transition table does not cover every state".into()));
        }
        for (q, row) in self.transitions.iter().enumerate() {
            if row.len() != self.alphabet_size {
                return Err(Error::Validation(format!(
                    "state {} has {} transitions for {} symbols",
                    self.states[q].name,
                    row.len(),
                    self.alphabet_size
                )));
            }
            if row.iter().any(|&t| t >= n) {
                return Err(Error::Validation(format!(
                    "state {} transitions to an unknown state",
                    self.states[q].name
                )));
            }
        }
        for s in &self.states {
            if !(0.0..=1.0).contains(&s.risk) || !(0.0..=1.0).contains(&s.mean_timing) {
                return Err(Error::Validation(format!("state {} statistics out of range", s.name)));
            }
            if s.trusted != (s.support >= self.min_support) {
                return Err(Error::Validation(format!(
                    "state {} trusted flag disagrees with its support",
                    s.name
                )));
            }
        }
        if let Some(p) = &self.projection {
            if p.alphabet_size() != self.alphabet_size {
                return Err(Error::Dimension {
                    expected: self.alphabet_size,
                    actual: p.alphabet_size(),
                });
            }
        }
        let actual = self.compute_hash()?;
        if actual != self.content_hash {
            return Err(Error::Hygiene(format!(
                "automaton hash {actual} does not match recorded {}",
                self.content_hash
            )));
        }
        Ok(())
    }

    pub fn step(&self, state: usize, symbol: usize) -> Result<usize> {
        if symbol >= self.alphabet_size {
            return Err(Error::Dimension {
                expected: self.alphabet_size,
                actual: symbol + 1,
            });
        }
        Ok(self.transitions[state][symbol])
    }

    /// State after each symbol.
    pub fn route(&self, symbols: &[usize]) -> Result<Vec<usize>> {
        let mut q = self.initial_state;
        symbols
            .iter()
            .map(|&a| {
                q = self.step(q, a)?;
                Ok(q)
            })
            .collect()
    }

    pub fn score_symbols(&self, symbols: &[usize]) -> Result<Vec<f64>> {
        Ok(self
            .route(symbols)?
            .into_iter()
            .map(|q| self.states[q].risk)
            .collect())
    }

    /// Risk of the state reached by `symbols`; the empty prefix scores the
    /// initial state.
    pub fn score_prefix(&self, symbols: &[usize]) -> Result<f64> {
        let q = self.route(symbols)?.last().copied().unwrap_or(self.initial_state);
        Ok(self.states[q].risk)
    }

    /// Graphviz rendering: one node per state, one edge per `(source, target)`
    /// pair labeled with its symbols.
    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph dfa {\n  rankdir=LR;\n  start [shape=point];\n");
        let _ = writeln!(out, "  start -> {};", self.states[self.initial_state].name);
        for s in &self.states {
            let _ = writeln!(
                out,
                "  {} [shape={}, label=\"{}\\n{}\\nrisk={:.3} n={} t={:.2}\"];",
                s.name,
                if s.trusted { "doublecircle" } else { "circle" },
                esc(&s.name),
                esc(&s.phase),
                s.risk,
                s.support,
                s.mean_timing
            );
        }
        for (q, row) in self.transitions.iter().enumerate() {
            let mut by_target: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (a, &t) in row.iter().enumerate() {
                by_target.entry(t).or_default().push(a);
            }
            for (t, symbols) in by_target {
                let label: Vec<String> = symbols.iter().map(|a| a.to_string()).collect();
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"{}\"];",
                    self.states[q].name,
                    self.states[t].name,
                    label.join(",")
                );
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json("automaton", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dfa: DfaMonitor =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        dfa.validate()?;
        Ok(dfa)
    }
}

impl PrefixScorer for DfaMonitor {
    fn name(&self) -> String {
        "dfa".into()
    }

    fn score_trajectory(&self, vocab: &Vocabulary, trajectory: &Trajectory) -> Result<Vec<f64>> {
        let projection = self.projection.as_ref().ok_or_else(|| {
            Error::Validation("automaton has no event projection to score raw steps".into())
        })?;
        let symbols = trajectory
            .steps
            .iter()
            .map(|s| Ok(projection.project(&vocab.encode(s))?.hard_symbol))
            .collect::<Result<Vec<_>>>()?;
        self.score_symbols(&symbols)
    }
}
