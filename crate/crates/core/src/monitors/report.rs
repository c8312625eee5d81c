use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::DfaMonitor;
use crate::error::{Error, Result};

pub const DEFAULT_WARNING_THRESHOLD: f64 = 0.34;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub state: String,
    pub phase: String,
    pub risk: f64,
    pub support: u64,
    pub mean_timing: f64,
    pub representative_step: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaReport {
    pub threshold: f64,
    pub warning: Vec<ReportRow>,
    pub normal: Vec<ReportRow>,
}

/// Splits trusted states into warning (`risk >= threshold`) and normal rows,
/// each sorted by decreasing risk.
pub fn dfa_state_report(dfa: &DfaMonitor, threshold: f64) -> DfaReport {
    let mut warning = Vec::new();
    let mut normal = Vec::new();
    for s in dfa.states.iter().filter(|s| s.trusted) {
        let row = ReportRow {
            state: s.name.clone(),
            phase: s.phase.clone(),
            risk: s.risk,
            support: s.support,
            mean_timing: s.mean_timing,
            representative_step: s.representative_step.clone(),
        };
        if s.risk >= threshold {
            warning.push(row);
        } else {
            normal.push(row);
        }
    }
    let by_risk = |a: &ReportRow, b: &ReportRow| b.risk.total_cmp(&a.risk).then_with(|| a.state.cmp(&b.state));
    warning.sort_by(by_risk);
    normal.sort_by(by_risk);
    DfaReport {
        threshold,
        warning,
        normal,
    }
}

const CSV_HEADER: [&str; 7] = ["partition", "state", "phase", "risk", "eval", "t_over_T", "representative_state"];

impl DfaReport {
    fn rows(&self) -> impl Iterator<Item = (&'static str, &ReportRow)> {
        self.warning
            .iter()
            .map(|r| ("warning", r))
            .chain(self.normal.iter().map(|r| ("normal", r)))
    }

    /// Plain-text table in the layout of a published state summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:<28} {:>6} {:>7} {:>6}  Representative State", "State", "Behavioral Phase", "Risk", "Eval", "t/T");
        let sections = [
            (format!("Warning states (risk >= {})", self.threshold), &self.warning),
            ("Normal states".to_string(), &self.normal),
        ];
        for (title, rows) in sections {
            let _ = writeln!(out, "{title}");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<6} {:<28} {:>6.3} {:>7} {:>6.2}  {}",
                    r.state, r.phase, r.risk, r.support, r.mean_timing, r.representative_step
                );
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Validation(format!("csv encoding: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for (part, r) in self.rows() {
            w.write_record([
                part,
                &r.state,
                &r.phase,
                &format!("{:.3}", r.risk),
                &r.support.to_string(),
                &format!("{:.2}", r.mean_timing),
                &r.representative_step,
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitors::{FixtureState, DEFAULT_MIN_SUPPORT};

    fn fixture() -> DfaMonitor {
        let rows = [
            ("q1", 0.2, 100),
            ("q2", 0.9, 50),
            ("q3", 0.5, 40),
            ("q4", 0.95, 10),
            ("q5", 0.34, 31),
        ]
        .into_iter()
        .map(|(s, risk, support)| FixtureState {
            state: s.into(),
            phase: "p".into(),
            risk,
            support,
            mean_timing: 0.5,
            representative_step: "step, with comma".into(),
        })
        .collect();
        DfaMonitor::from_fixture(rows, 2, DEFAULT_MIN_SUPPORT).unwrap()
    }

    #[test]
    fn partitions_and_orders() {
        let r = dfa_state_report(&fixture(), DEFAULT_WARNING_THRESHOLD);
        let names = |rows: &[ReportRow]| rows.iter().map(|r| r.state.clone()).collect::<Vec<_>>();
        assert_eq!(names(&r.warning), ["q2", "q3", "q5"]);
        assert_eq!(names(&r.normal), ["q1"]);
    }

    #[test]
    fn threshold_one_has_no_warnings() {
        let r = dfa_state_report(&fixture(), 1.0);
        assert!(r.warning.is_empty());
        assert_eq!(r.normal.len(), 4);
    }

    #[test]
    fn csv_quotes_and_rounds() {
        let csv = dfa_state_report(&fixture(), 0.34).to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "warning,q2,p,0.900,50,0.50,\"step, with comma\"");
    }
}
