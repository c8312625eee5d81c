use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CausalContribution, EpistemicRecord, HarmEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "kebab-case")]
pub enum Normalization {
    /// Total individual mass was at most one; the remainder is institutional.
    Residual,
    /// Total individual mass exceeded one and was scaled down by `total`.
    Renormalized { total: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityAssignment {
    pub harm: String,
    /// `max(κ, 0)` times the foreseeability indicator, per party.
    pub base: BTreeMap<String, f64>,
    pub shares: BTreeMap<String, f64>,
    pub institutional: f64,
    pub normalization: Normalization,
}

impl ResponsibilityAssignment {
    pub fn share(&self, party: &str) -> f64 {
        self.shares.get(party).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.shares.values().sum::<f64>() + self.institutional
    }
}

/// Allocates responsibility for `harm` in proportion to positive causal
/// contribution gated by foreseeability before the harm. Individual shares
/// are taken at face value when they sum to at most one, leaving the rest
/// institutional; otherwise they are rescaled to sum to one.
pub fn assign_rho(
    contributions: &[CausalContribution],
    positions: &EpistemicRecord,
    harm: &HarmEvent,
) -> Result<ResponsibilityAssignment> {
    positions.validate()?;
    let mut base = BTreeMap::new();
    for c in contributions {
        c.validate()?;
        if c.harm != harm.id {
            return Err(Error::Validation(format!(
                "contribution of `{}` concerns `{}`, not `{}`",
                c.party, c.harm, harm.id
            )));
        }
        let foreseeable = match positions.foreseeable_before(&c.party, &harm.id, harm.time) {
            Some(f) => f,
            None if c.kappa > 0.0 => return Err(Error::MissingPosition(c.party.clone())),
            None => false,
        };
        let b = if foreseeable { c.kappa.max(0.0) } else { 0.0 };
        if base.insert(c.party.clone(), b).is_some() {
            return Err(Error::Validation(format!(
                "party `{}` has more than one contribution to `{}`",
                c.party, harm.id
            )));
        }
    }
    let total: f64 = base.values().sum();
    let (shares, institutional, normalization) = if total <= 1.0 {
        (base.clone(), 1.0 - total, Normalization::Residual)
    } else {
        let shares = base.iter().map(|(p, b)| (p.clone(), b / total)).collect();
        (shares, 0.0, Normalization::Renormalized { total })
    };
    Ok(ResponsibilityAssignment {
        harm: harm.id.clone(),
        base,
        shares,
        institutional,
        normalization,
    })
}
