//! Plain-text `key=value` verification certificates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClauseKind, Counterexample, FalsifyResult};
use crate::error::{Error, Result};
use crate::sim::BoxDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Unsat,
    Sat,
    Budget,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Unsat => "UNSAT",
            Outcome::Sat => "SAT",
            Outcome::Budget => "BUDGET",
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "UNSAT" => Ok(Outcome::Unsat),
            "SAT" => Ok(Outcome::Sat),
            "BUDGET" => Ok(Outcome::Budget),
            _ => Err(Error::Config(format!("unknown outcome `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub outcome: Outcome,
    pub epsilon: f64,
    pub delta: f64,
    pub boxes_processed: usize,
    pub splits: usize,
    pub unresolved: usize,
    pub counterexample: Option<Counterexample>,
    pub suspicious: Option<BoxDomain>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split_floats(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| Error::parse(line, format!("bad number `{t}`: {e}")))).collect()
}

impl Certificate {
    pub fn from_result(result: &FalsifyResult, epsilon: f64, delta: f64) -> Self {
        Certificate {
            outcome: result.outcome,
            epsilon,
            delta,
            boxes_processed: result.boxes_processed,
            splits: result.splits,
            unresolved: result.unresolved,
            counterexample: result.counterexample.clone(),
            suspicious: result.suspicious.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "outcome={}", self.outcome.name());
        let _ = writeln!(s, "epsilon={}", self.epsilon);
        let _ = writeln!(s, "delta={}", self.delta);
        let _ = writeln!(s, "boxes_processed={}", self.boxes_processed);
        let _ = writeln!(s, "splits={}", self.splits);
        let _ = writeln!(s, "unresolved={}", self.unresolved);
        if let Some(c) = &self.counterexample {
            let _ = writeln!(s, "cex_clause={}", c.clause.name());
            let _ = writeln!(s, "cex_margin={}", c.margin);
            let _ = writeln!(s, "cex_x={}", join(&c.x));
            let _ = writeln!(s, "cex_z={}", join(&c.z));
        }
        if let Some(b) = &self.suspicious {
            let _ = writeln!(s, "suspicious_lo={}", join(&b.lo));
            let _ = writeln!(s, "suspicious_hi={}", join(&b.hi));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut outcome = None;
        let (mut epsilon, mut delta) = (None, None);
        let (mut boxes, mut splits, mut unresolved) = (None, None, None);
        let (mut clause, mut margin, mut cx, mut cz) = (None, None, None, None);
        let (mut slo, mut shi) = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw.split_once('=').ok_or_else(|| Error::parse(line, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || value.parse::<f64>().map_err(|e| Error::parse(line, format!("bad number for {key}: {e}")));
            let count = || value.parse::<usize>().map_err(|e| Error::parse(line, format!("bad count for {key}: {e}")));
            match key {
                "outcome" => outcome = Some(value.parse::<Outcome>().map_err(|e| Error::parse(line, e.to_string()))?),
                "epsilon" => epsilon = Some(float()?),
                "delta" => delta = Some(float()?),
                "boxes_processed" => boxes = Some(count()?),
                "splits" => splits = Some(count()?),
                "unresolved" => unresolved = Some(count()?),
                "cex_clause" => {
                    clause = Some(ClauseKind::from_name(value).ok_or_else(|| Error::parse(line, format!("unknown clause `{value}`")))?)
                }
                "cex_margin" => margin = Some(float()?),
                "cex_x" => cx = Some(split_floats(value, line)?),
                "cex_z" => cz = Some(split_floats(value, line)?),
                "suspicious_lo" => slo = Some(split_floats(value, line)?),
                "suspicious_hi" => shi = Some(split_floats(value, line)?),
                _ => return Err(Error::parse(line, format!("unknown key `{key}`"))),
            }
        }
        let missing = |k: &str| Error::parse(0, format!("missing key `{k}`"));
        let outcome = outcome.ok_or_else(|| missing("outcome"))?;
        let counterexample = match (clause, margin, cx, cz) {
            (Some(clause), Some(margin), Some(x), Some(z)) => Some(Counterexample { x, z, clause, margin }),
            (None, None, None, None) => None,
            _ => return Err(Error::parse(0, "incomplete counterexample record")),
        };
        let suspicious = match (slo, shi) {
            (Some(lo), Some(hi)) => Some(BoxDomain::new(lo, hi).map_err(|e| Error::parse(0, e.to_string()))?),
            (None, None) => None,
            _ => return Err(Error::parse(0, "incomplete suspicious box")),
        };
        if (outcome == Outcome::Sat) != counterexample.is_some() {
            return Err(Error::parse(0, "a counterexample is present exactly when the outcome is SAT"));
        }
        Ok(Certificate {
            outcome,
            epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
            delta: delta.ok_or_else(|| missing("delta"))?,
            boxes_processed: boxes.ok_or_else(|| missing("boxes_processed"))?,
            splits: splits.ok_or_else(|| missing("splits"))?,
            unresolved: unresolved.ok_or_else(|| missing("unresolved"))?,
            counterexample,
            suspicious,
        })
    }
}
