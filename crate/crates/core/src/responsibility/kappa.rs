use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{derived_rng, exact_probability, harm_occurs, Draws, InterventionMask, Plan, ScenarioConfig};

/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KappaMode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// `κ = P(harm | full system) − P(harm | party neutralised)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalContribution {
    pub party: String,
    pub harm: String,
    pub kappa: f64,
    pub estimator: Estimator,
    #[serde(default)]
    pub samples: u64,
    /// Half-width of the 95% interval; zero for exact estimates.
    #[serde(default)]
    pub half_width: f64,
}

impl CausalContribution {
    pub fn exact(party: &str, harm: &str, kappa: f64) -> Self {
        CausalContribution {
            party: party.into(),
            harm: harm.into(),
            kappa,
            estimator: Estimator::Exact,
            samples: 0,
            half_width: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.kappa) {
            return Err(Error::Validation(format!(
                "contribution of `{}` to `{}` is {}, outside [-1, 1]",
                self.party, self.harm, self.kappa
            )));
        }
        if self.estimator == Estimator::Exact && self.half_width != 0.0 {
            return Err(Error::Validation(format!(
                "exact contribution of `{}` carries a non-zero half-width",
                self.party
            )));
        }
        if self.half_width.is_nan() || self.half_width < 0.0 {
            return Err(Error::Validation("half-width must be non-negative".into()));
        }
        Ok(())
    }
}

/// Estimates the causal contribution of `party` to `harm_id`. The
/// counterfactual replaces every emission of the party's components under the
/// scenario's substitution rule while keeping every slot. Monte Carlo mode
/// evaluates both worlds on the same draws and reports the paired-difference
/// interval.
pub fn estimate_kappa(
    config: &ScenarioConfig,
    party: &str,
    harm_id: &str,
    mode: KappaMode,
) -> Result<CausalContribution> {
    let harm = config.harm(harm_id)?;
    if !config.components.iter().any(|c| c.owner.as_deref() == Some(party)) {
        return Ok(CausalContribution::exact(party, harm_id, 0.0));
    }
    let mask = InterventionMask::from([party.to_string()]);
    match mode {
        KappaMode::Exact => {
            let full = exact_probability(config, harm_id, &InterventionMask::new())?;
            let without = exact_probability(config, harm_id, &mask)?;
            Ok(CausalContribution::exact(party, harm_id, full - without))
        }
        KappaMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::Config("Monte Carlo needs at least two samples".into()));
            }
            let plan = Plan::new(config)?;
            let none = InterventionMask::new();
            let diffs: Vec<i8> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let draws = Draws::sample(&plan, &mut derived_rng(seed, i));
                    let f = harm_occurs(config, harm, &plan.emissions(&draws, &none));
                    let c = harm_occurs(config, harm, &plan.emissions(&draws, &mask));
                    i8::from(f) - i8::from(c)
                })
                .collect();
            let n = samples as f64;
            let mean = diffs.iter().map(|&d| f64::from(d)).sum::<f64>() / n;
            let var = diffs
                .iter()
                .map(|&d| (f64::from(d) - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            Ok(CausalContribution {
                party: party.into(),
                harm: harm_id.into(),
                kappa: mean,
                estimator: Estimator::MonteCarlo,
                samples,
                half_width: Z95 * (var / n).sqrt(),
            })
        }
    }
}
