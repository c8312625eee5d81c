use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use provenance_core::monitors::{DfaParams, MonitorKind, TrainConfig, DEFAULT_WARNING_THRESHOLD};
use provenance_core::responsibility::KappaMode;
use provenance_core::sim::{reference_scenario, ScenarioConfig};
use provenance_core::{Error, Result};

/// Run settings read from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario file, relative to the config file. The built-in reference
    /// scenario when absent.
    pub scenario: Option<PathBuf>,
    pub trajectories: usize,
    pub seed: Option<u64>,
    pub horizon: usize,
    pub threshold: f64,
    pub monitors: Vec<MonitorKind>,
    pub extract_dfa: bool,
    pub gate_bound: f64,
    pub kappa: KappaMode,
    pub train: TrainConfig,
    pub dfa: DfaParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: None,
            trajectories: 2000,
            seed: None,
            horizon: provenance_core::trace::DEFAULT_HORIZON,
            threshold: DEFAULT_WARNING_THRESHOLD,
            monitors: vec![MonitorKind::Recurrent, MonitorKind::Attention, MonitorKind::SoftFsm],
            extract_dfa: true,
            gate_bound: 0.05,
            kappa: KappaMode::Exact,
            train: TrainConfig::default(),
            dfa: DfaParams::default(),
        }
    }
}

/// Flag overrides shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub threshold: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                let mut c: RunConfig = toml::from_str(&text).map_err(|e| Error::Toml {
                    context: p.display().to_string(),
                    source: e,
                })?;
                if let (Some(s), Some(dir)) = (&c.scenario, p.parent()) {
                    c.scenario = Some(dir.join(s));
                }
                c
            }
        };
        if let Some(seed) = flags.seed {
            config.seed = Some(seed);
        }
        if let Some(h) = flags.horizon {
            config.horizon = h;
        }
        if let Some(t) = flags.threshold {
            config.threshold = t;
        }
        if let Some(seed) = config.seed {
            config.train.seed = seed;
            if let KappaMode::MonteCarlo { seed: s, .. } = &mut config.kappa {
                *s = seed;
            }
        }
        config.train.horizon = config.horizon;
        config.dfa.horizon = config.horizon;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.monitors.contains(&MonitorKind::Dfa) {
            return Err(Error::Config(
                "`dfa` is extracted, not trained; set extract_dfa instead".into(),
            ));
        }
        if !(self.gate_bound >= 0.0 && self.gate_bound.is_finite()) {
            return Err(Error::Config("gate_bound must be non-negative".into()));
        }
        self.train.validate()
    }

    /// The configured scenario with the seed override applied.
    pub fn scenario(&self, path: Option<&Path>) -> Result<ScenarioConfig> {
        let mut s = match path.or(self.scenario.as_deref()) {
            Some(p) => ScenarioConfig::load(p)?,
            None => reference_scenario(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "horizon = 5\nseed = 1\n[train]\nepochs = 2\n").unwrap();
        let c = RunConfig::load(
            Some(&path),
            &Overrides {
                seed: Some(9),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.horizon, 5);
        assert_eq!(c.train.horizon, 5);
        assert_eq!(c.dfa.horizon, 5);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.scenario(None).unwrap().seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "horizn = 5\n").unwrap();
        let err = RunConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        assert_eq!(err.category(), provenance_core::ErrorCategory::Config);
    }

    #[test]
    fn dfa_is_not_trainable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "monitors = [\"dfa\"]\n").unwrap();
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());
    }
}
