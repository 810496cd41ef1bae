//! Operational probability tables: `P(m | M, P')` for a finite set of
//! measurements and (possibly transformed) preparations.
//!
//! Preparation labels are expressions. A bare label such as `P` or `P_q1`
//! names a preparation; `T(P)` names the preparation obtained by applying
//! transformation `T` to `P`. Nesting composes right to left, so
//! `T2(T1(P))` applies `T1` first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels used by the three-outcome bounds.
pub mod roles {
    pub const Q: &str = "Q";
    pub const A: &str = "A";
    pub const T: &str = "T";
    pub const P: &str = "P";
    pub const T_P: &str = "T(P)";
    pub const P_Q1: &str = "P_q1";
    pub const T_P_Q1: &str = "T(P_q1)";
    pub const Q_OUTCOMES: [&str; 3] = ["q1", "q2", "q3"];
    pub const A_OUTCOMES: [&str; 3] = ["a1", "a2", "a3"];

    /// Label of the eigenpreparation for Q-outcome `q`.
    pub fn eigenprep(q: &str) -> String {
        format!("P_{q}")
    }
}

const ROW_SUM_TOL: f64 = 1e-10;
const ENTRY_TOL: f64 = 1e-12;

/// Splits a preparation expression into its base label and the
/// transformations applied to it, in application order.
pub fn parse_preparation(expr: &str) -> Result<(String, Vec<String>)> {
    let mut kernels = Vec::new();
    let mut rest = expr.trim();
    while let Some(open) = rest.find('(') {
        if !rest.ends_with(')') || open == 0 {
            return Err(Error::UnknownLabel {
                kind: "preparation expression",
                label: expr.to_string(),
            });
        }
        kernels.push(rest[..open].trim().to_string());
        rest = rest[open + 1..rest.len() - 1].trim();
    }
    if rest.is_empty() || rest.contains(')') {
        return Err(Error::UnknownLabel {
            kind: "preparation expression",
            label: expr.to_string(),
        });
    }
    kernels.reverse();
    Ok((rest.to_string(), kernels))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PtmFile", into = "PtmFile")]
pub struct PtmTable {
    outcomes: BTreeMap<String, Vec<String>>,
    rows: BTreeMap<(String, String), Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PtmFile {
    measurements: BTreeMap<String, Vec<String>>,
    rows: Vec<PtmRow>,
}

#[derive(Serialize, Deserialize)]
struct PtmRow {
    measurement: String,
    preparation: String,
    probabilities: Vec<f64>,
}

impl TryFrom<PtmFile> for PtmTable {
    type Error = Error;

    fn try_from(file: PtmFile) -> Result<Self> {
        let mut table = PtmTable::new();
        for (m, outcomes) in file.measurements {
            table.add_measurement(&m, outcomes.iter().map(String::as_str));
        }
        for row in file.rows {
            table.insert(&row.measurement, &row.preparation, row.probabilities)?;
        }
        Ok(table)
    }
}

impl From<PtmTable> for PtmFile {
    fn from(table: PtmTable) -> Self {
        PtmFile {
            measurements: table.outcomes,
            rows: table
                .rows
                .into_iter()
                .map(|((measurement, preparation), probabilities)| PtmRow {
                    measurement,
                    preparation,
                    probabilities,
                })
                .collect(),
        }
    }
}

impl PtmTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_measurement<'a>(
        &mut self,
        label: &str,
        outcomes: impl IntoIterator<Item = &'a str>,
    ) {
        self.outcomes.insert(
            label.to_string(),
            outcomes.into_iter().map(str::to_string).collect(),
        );
    }

    /// Inserts an outcome distribution. Rows must sum to one within `1e-10`.
    pub fn insert(&mut self, measurement: &str, preparation: &str, probs: Vec<f64>) -> Result<()> {
        let outcomes = self
            .outcomes
            .get(measurement)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "measurement",
                label: measurement.to_string(),
            })?;
        if probs.len() != outcomes.len() {
            return Err(Error::DimensionMismatch {
                expected: outcomes.len(),
                found: probs.len(),
            });
        }
        let what = format!("{measurement}/{preparation}");
        if let Some(p) = probs
            .iter()
            .find(|p| !(-ENTRY_TOL..=1.0 + ENTRY_TOL).contains(*p))
        {
            return Err(Error::InvalidDistribution {
                what,
                reason: format!("entry {p} outside [0, 1]"),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidDistribution {
                what,
                reason: format!("row sums to {sum}"),
            });
        }
        self.rows
            .insert((measurement.to_string(), preparation.to_string()), probs);
        Ok(())
    }

    pub fn measurements(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.outcomes
            .iter()
            .map(|(m, o)| (m.as_str(), o.as_slice()))
    }

    pub fn outcomes(&self, measurement: &str) -> Option<&[String]> {
        self.outcomes.get(measurement).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &str, &[f64])> {
        self.rows
            .iter()
            .map(|((m, p), probs)| (m.as_str(), p.as_str(), probs.as_slice()))
    }

    /// Preparation expressions that appear in at least one row.
    pub fn preparations(&self) -> Vec<&str> {
        let mut preps: Vec<&str> = self.rows.keys().map(|(_, p)| p.as_str()).collect();
        preps.sort_unstable();
        preps.dedup();
        preps
    }

    pub fn distribution(&self, measurement: &str, preparation: &str) -> Result<&[f64]> {
        self.rows
            .get(&(measurement.to_string(), preparation.to_string()))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingRole {
                measurement: measurement.to_string(),
                preparation: preparation.to_string(),
            })
    }

    pub fn prob(&self, measurement: &str, preparation: &str, outcome: &str) -> Result<f64> {
        let dist = self.distribution(measurement, preparation)?;
        let idx = self.outcomes[measurement]
            .iter()
            .position(|o| o == outcome)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "outcome",
                label: outcome.to_string(),
            })?;
        Ok(dist[idx])
    }

    /// Overwrites a single probability without renormalizing the row. Used to
    /// build noisy or tampered tables; the caller owns row consistency.
    pub fn set_prob(
        &mut self,
        measurement: &str,
        preparation: &str,
        outcome: &str,
        value: f64,
    ) -> Result<()> {
        let idx = self
            .outcomes
            .get(measurement)
            .and_then(|o| o.iter().position(|x| x == outcome))
            .ok_or_else(|| Error::UnknownLabel {
                kind: "outcome",
                label: outcome.to_string(),
            })?;
        let row = self
            .rows
            .get_mut(&(measurement.to_string(), preparation.to_string()))
            .ok_or_else(|| Error::MissingRole {
                measurement: measurement.to_string(),
                preparation: preparation.to_string(),
            })?;
        row[idx] = value;
        Ok(())
    }
}
