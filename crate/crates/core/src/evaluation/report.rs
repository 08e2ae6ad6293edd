use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::Scenario;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Open,
    Closed,
    Cross,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(EvalMode::Open),
            "closed" => Ok(EvalMode::Closed),
            "cross" => Ok(EvalMode::Cross),
            other => Err(Error::Argument(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

/// A record-level problem that did not abort the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub context_id: String,
    pub stage: String,
    pub message: String,
}

/// Metric aggregate for one or more evaluation modes. Metrics with no
/// contributing records are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub modes: Vec<EvalMode>,
    pub record_count: usize,
    pub scenario_counts: BTreeMap<Scenario, usize>,
    pub faith: Option<f64>,
    pub filter: Option<f64>,
    pub rr: Option<f64>,
    pub ra_open: Option<f64>,
    pub ra_closed: Option<f64>,
    pub qr: Option<f64>,
    pub fl: Option<f64>,
    pub partial: bool,
    pub failures: Vec<Failure>,
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl EvalReport {
    pub(crate) fn empty(mode: EvalMode, scenario_counts: BTreeMap<Scenario, usize>) -> Self {
        EvalReport {
            modes: vec![mode],
            record_count: scenario_counts.values().sum(),
            scenario_counts,
            faith: None,
            filter: None,
            rr: None,
            ra_open: None,
            ra_closed: None,
            qr: None,
            fl: None,
            partial: false,
            failures: Vec::new(),
        }
    }

    fn columns(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("Faith", self.faith),
            ("Filter", self.filter),
            ("RR", self.rr),
            ("RA-open", self.ra_open),
            ("RA-closed", self.ra_closed),
            ("QR", self.qr),
            ("FL", self.fl),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned plain-text table; absent metrics print as `-`.
    pub fn to_table(&self) -> String {
        let cols = self.columns();
        let cells: Vec<String> = cols
            .iter()
            .map(|(_, v)| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}")))
            .collect();
        let widths: Vec<usize> = cols
            .iter()
            .zip(&cells)
            .map(|((h, _), c)| h.len().max(c.len()))
            .collect();
        let mut out = String::new();
        let row = |items: Vec<&str>| -> String {
            items
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        out.push_str(&row(cols.iter().map(|(h, _)| *h).collect()));
        out.push('\n');
        out.push_str(&row(cells.iter().map(String::as_str).collect()));
        out.push('\n');
        let counts: Vec<String> = self.scenario_counts.iter().map(|(s, n)| format!("{s:?}={n}")).collect();
        let _ = writeln!(out, "records={} {}", self.record_count, counts.join(" "));
        if self.partial {
            let _ = writeln!(out, "partial: {} record-level failures", self.failures.len());
        }
        out
    }

    /// Combines reports of different modes over the same records.
    pub fn merge(reports: &[EvalReport]) -> Result<EvalReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Argument("nothing to merge".into()))?;
        let mut out = first.clone();
        for r in &reports[1..] {
            if r.record_count != out.record_count || r.scenario_counts != out.scenario_counts {
                return Err(Error::Validation("reports cover different record sets".into()));
            }
            for m in &r.modes {
                if out.modes.contains(m) {
                    return Err(Error::Validation(format!("mode {m:?} appears twice")));
                }
                out.modes.push(*m);
            }
            out.faith = out.faith.or(r.faith);
            out.filter = out.filter.or(r.filter);
            out.rr = out.rr.or(r.rr);
            out.ra_open = out.ra_open.or(r.ra_open);
            out.ra_closed = out.ra_closed.or(r.ra_closed);
            out.qr = out.qr.or(r.qr);
            out.fl = out.fl.or(r.fl);
            out.partial |= r.partial;
            out.failures.extend(r.failures.iter().cloned());
        }
        out.modes.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        let counts = Scenario::ALL.iter().zip([2, 2, 1, 1]).map(|(s, n)| (*s, n)).collect();
        let mut r = EvalReport::empty(EvalMode::Open, counts);
        r.faith = Some(0.5);
        r.ra_open = Some(1.0 / 3.0);
        r
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(r.record_count, 6);
        assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert!(r.to_json().unwrap().contains("\"GoldenContext\": 2"));
    }

    #[test]
    fn table_layout() {
        let t = sample().to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], " Faith  Filter  RR  RA-open  RA-closed  QR  FL");
        assert_eq!(lines[1], "0.5000       -   -   0.3333          -   -   -");
        assert_eq!(
            lines[2],
            "records=6 GoldenContext=2 MixedContext=2 IrrelevantContext=1 EmptyContext=1"
        );
    }

    #[test]
    fn merging() {
        let open = sample();
        let mut closed = EvalReport::empty(EvalMode::Closed, open.scenario_counts.clone());
        closed.ra_closed = Some(0.25);
        let m = EvalReport::merge(&[closed, open.clone()]).unwrap();
        assert_eq!(m.modes, [EvalMode::Open, EvalMode::Closed]);
        assert_eq!((m.ra_open, m.ra_closed), (Some(1.0 / 3.0), Some(0.25)));
        assert!(EvalReport::merge(&[open.clone(), open]).is_err());
    }
}
