//! Finite ontic models over a discrete state space `0..size` with the
//! counting measure as background measure.
//!
//! Densities are probability mass vectors, transformations are
//! row-stochastic matrices, and measurements are response matrices. The
//! macro-observable `Q` is realized by a deterministic assignment of one
//! Q-outcome to every ontic state.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptm::{parse_preparation, roles, PtmTable};

/// Tolerance on normalization of densities, kernel rows and responses.
pub const NORM_TOL: f64 = 1e-10;

fn check_distribution(what: &str, mass: &[f64]) -> std::result::Result<(), String> {
    if mass.is_empty() {
        return Err(format!("{what}: empty"));
    }
    if let Some((i, x)) = mass
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || **x < 0.0)
    {
        return Err(format!("{what}: entry {i} is {x}"));
    }
    let sum: f64 = mass.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(format!("{what}: sums to {sum}"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Density(Vec<f64>);

impl TryFrom<Vec<f64>> for Density {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Density::new(v)
    }
}

impl From<Density> for Vec<f64> {
    fn from(d: Density) -> Self {
        d.0
    }
}

impl Density {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        check_distribution("density", &mass).map_err(|reason| Error::InvalidDistribution {
            what: "density".into(),
            reason,
        })?;
        Ok(Self(mass))
    }

    /// Normalizes a nonnegative vector with positive total mass.
    pub fn normalized(mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if total.is_nan() || total <= 0.0 || mass.iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidDistribution {
                what: "density".into(),
                reason: format!("cannot normalize vector with total mass {total}"),
            });
        }
        Ok(Self(mass.into_iter().map(|x| x / total).collect()))
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        let mut v = vec![0.0; size];
        v[at] = 1.0;
        Self(v)
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    /// Uniform density on `states`.
    pub fn uniform_on(size: usize, states: &[usize]) -> Result<Self> {
        let mut v = vec![0.0; size];
        for &s in states {
            v[s] = 1.0;
        }
        Self::normalized(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mass_on(&self, states: &[usize]) -> f64 {
        states.iter().map(|&i| self.0[i]).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MarkovKernel {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for MarkovKernel {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        MarkovKernel::new(rows)
    }
}

impl From<MarkovKernel> for Vec<Vec<f64>> {
    fn from(k: MarkovKernel) -> Self {
        k.rows
    }
}

impl MarkovKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            check_distribution(&format!("kernel row {i}"), row).map_err(|reason| {
                Error::InvalidDistribution {
                    what: "kernel".into(),
                    reason,
                }
            })?;
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|i| Density::point_mass(n, i).0).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// `gamma(to | from)`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn push_forward(&self, f: &Density) -> Result<Density> {
        push_forward(self, f)
    }
}

/// Image of `f` under the kernel: `f'(j) = sum_i f(i) gamma(j | i)`.
pub fn push_forward(kernel: &MarkovKernel, f: &Density) -> Result<Density> {
    let n = kernel.size();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f.len(),
        });
    }
    let mut out = vec![0.0; n];
    for (fi, row) in f.0.iter().zip(&kernel.rows) {
        if *fi == 0.0 {
            continue;
        }
        for (o, g) in out.iter_mut().zip(row) {
            *o += fi * g;
        }
    }
    Ok(Density(out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunction {
    pub outcomes: Vec<String>,
    /// `rows[state][outcome] = xi(outcome | state)`.
    pub rows: Vec<Vec<f64>>,
}

impl ResponseFunction {
    pub fn new(outcomes: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = Self { outcomes, rows };
        let problems = r.violations("response");
        if problems.is_empty() {
            Ok(r)
        } else {
            Err(Error::InvalidModel(problems))
        }
    }

    fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.outcomes.len() {
                out.push(format!(
                    "{path}.rows[{i}]: has {} entries for {} outcomes",
                    row.len(),
                    self.outcomes.len()
                ));
            } else if let Err(e) = check_distribution(&format!("{path}.rows[{i}]"), row) {
                out.push(e);
            }
        }
        out
    }

    pub fn outcome_index(&self, outcome: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|o| o == outcome)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "outcome",
                label: outcome.to_string(),
            })
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().flatten().all(|&x| x == 0.0 || x == 1.0)
    }

    /// `sum_states xi(outcome | state) f(state)`.
    pub fn probability(&self, outcome: usize, f: &Density) -> f64 {
        self.rows
            .iter()
            .zip(f.as_slice())
            .map(|(row, m)| row[outcome] * m)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnticSpace {
    pub outcomes: Vec<String>,
    /// Q-outcome index of each ontic state.
    pub q_value: Vec<usize>,
}

impl OnticSpace {
    pub fn new(outcomes: Vec<String>, q_value: Vec<usize>) -> Result<Self> {
        if let Some(bad) = q_value.iter().find(|&&q| q >= outcomes.len()) {
            return Err(Error::UnknownLabel {
                kind: "Q-outcome index",
                label: bad.to_string(),
            });
        }
        Ok(Self { outcomes, q_value })
    }

    /// Space with outcomes `q1..qk` from per-state outcome indices.
    pub fn with_labels(k: usize, q_value: Vec<usize>) -> Result<Self> {
        Self::new((1..=k).map(|i| format!("q{i}")).collect(), q_value)
    }

    pub fn size(&self) -> usize {
        self.q_value.len()
    }

    pub fn outcome_index(&self, q: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|o| o == q)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "Q-outcome",
                label: q.to_string(),
            })
    }

    /// `Lambda_q = { lambda : xi_Q(q | lambda) = 1 }`.
    pub fn partition_indicator(&self, q: &str) -> Result<Vec<usize>> {
        let qi = self.outcome_index(q)?;
        Ok(self.cell(qi))
    }

    pub fn cell(&self, qi: usize) -> Vec<usize> {
        (0..self.size())
            .filter(|&s| self.q_value[s] == qi)
            .collect()
    }

    /// The deterministic response function of `Q`.
    pub fn q_response(&self) -> ResponseFunction {
        ResponseFunction {
            outcomes: self.outcomes.clone(),
            rows: self
                .q_value
                .iter()
                .map(|&q| {
                    let mut row = vec![0.0; self.outcomes.len()];
                    row[q] = 1.0;
                    row
                })
                .collect(),
        }
    }
}

pub fn partition_indicator(space: &OnticSpace, q: &str) -> Result<Vec<usize>> {
    space.partition_indicator(q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub outcomes: Vec<String>,
    pub q_value: Vec<String>,
}

/// On-disk form of an ontic model. Every field is validated by
/// [`ModelFile::violations`] before an [`OnticModel`] is built from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub space: SpaceFile,
    pub eigen_densities: BTreeMap<String, Vec<Vec<f64>>>,
    pub prep_densities: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    pub kernels: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    pub responses: BTreeMap<String, ResponseFunction>,
}

impl ModelFile {
    /// Machine-readable list of violated invariants; empty for a valid model.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let size = self.space.q_value.len();
        if size == 0 {
            out.push("space.q_value: empty".to_string());
        }
        let mut q_idx = Vec::with_capacity(size);
        for (i, q) in self.space.q_value.iter().enumerate() {
            match self.space.outcomes.iter().position(|o| o == q) {
                Some(k) => q_idx.push(k),
                None => out.push(format!("space.q_value[{i}]: unknown outcome `{q}`")),
            }
        }
        let check_density = |path: String, d: &[f64], out: &mut Vec<String>| {
            if d.len() != size {
                out.push(format!("{path}: length {} != space size {size}", d.len()));
                false
            } else if let Err(e) = check_distribution(&path, d) {
                out.push(e);
                false
            } else {
                true
            }
        };
        for q in &self.space.outcomes {
            if !self.eigen_densities.contains_key(q) {
                out.push(format!("eigen_densities: missing outcome `{q}`"));
            }
        }
        for (q, ds) in &self.eigen_densities {
            let Some(qi) = self.space.outcomes.iter().position(|o| o == q) else {
                out.push(format!("eigen_densities.{q}: unknown outcome"));
                continue;
            };
            if ds.is_empty() {
                out.push(format!("eigen_densities.{q}: empty generator list"));
            }
            for (j, d) in ds.iter().enumerate() {
                let path = format!("eigen_densities.{q}[{j}]");
                if check_density(path.clone(), d, &mut out) && q_idx.len() == size {
                    let inside: f64 = (0..size).filter(|&s| q_idx[s] == qi).map(|s| d[s]).sum();
                    if (inside - 1.0).abs() > NORM_TOL {
                        out.push(format!("{path}: mass {inside} on its cell"));
                    }
                }
            }
        }
        for (p, ds) in &self.prep_densities {
            if ds.is_empty() {
                out.push(format!("prep_densities.{p}: empty"));
            }
            for (j, d) in ds.iter().enumerate() {
                check_density(format!("prep_densities.{p}[{j}]"), d, &mut out);
            }
        }
        for (t, rows) in &self.kernels {
            if rows.len() != size {
                out.push(format!(
                    "kernels.{t}: {} rows != space size {size}",
                    rows.len()
                ));
            }
            for (i, row) in rows.iter().enumerate() {
                check_density(format!("kernels.{t}[{i}]"), row, &mut out);
            }
        }
        for (m, r) in &self.responses {
            let path = format!("responses.{m}");
            if r.rows.len() != size {
                out.push(format!(
                    "{path}: {} rows != space size {size}",
                    r.rows.len()
                ));
            }
            out.extend(r.violations(&path));
            if m == roles::Q && q_idx.len() == size && r.rows.len() == size {
                let expected = OnticSpace {
                    outcomes: self.space.outcomes.clone(),
                    q_value: q_idx.clone(),
                }
                .q_response();
                if r != &expected {
                    out.push(format!(
                        "{path}: not the indicator induced by space.q_value"
                    ));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnticModel {
    space: OnticSpace,
    eigen_densities: BTreeMap<String, Vec<Density>>,
    prep_densities: BTreeMap<String, Vec<Density>>,
    kernels: BTreeMap<String, MarkovKernel>,
    responses: BTreeMap<String, ResponseFunction>,
}

impl TryFrom<ModelFile> for OnticModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let problems = file.violations();
        if !problems.is_empty() {
            return Err(Error::InvalidModel(problems));
        }
        let q_value = file
            .space
            .q_value
            .iter()
            .map(|q| {
                file.space
                    .outcomes
                    .iter()
                    .position(|o| o == q)
                    .expect("validated")
            })
            .collect();
        let space = OnticSpace::new(file.space.outcomes, q_value)?;
        let dens = |m: BTreeMap<String, Vec<Vec<f64>>>| -> Result<BTreeMap<String, Vec<Density>>> {
            m.into_iter()
                .map(|(k, v)| Ok((k, v.into_iter().map(Density::new).collect::<Result<_>>()?)))
                .collect()
        };
        let kernels = file
            .kernels
            .into_iter()
            .map(|(k, rows)| Ok((k, MarkovKernel::new(rows)?)))
            .collect::<Result<_>>()?;
        OnticModel::new(
            space,
            dens(file.eigen_densities)?,
            dens(file.prep_densities)?,
            kernels,
            file.responses,
        )
    }
}

impl From<&OnticModel> for ModelFile {
    fn from(m: &OnticModel) -> Self {
        let raw = |d: &BTreeMap<String, Vec<Density>>| {
            d.iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|x| x.0.clone()).collect()))
                .collect()
        };
        ModelFile {
            space: SpaceFile {
                outcomes: m.space.outcomes.clone(),
                q_value: m
                    .space
                    .q_value
                    .iter()
                    .map(|&q| m.space.outcomes[q].clone())
                    .collect(),
            },
            eigen_densities: raw(&m.eigen_densities),
            prep_densities: raw(&m.prep_densities),
            kernels: m
                .kernels
                .iter()
                .map(|(k, v)| (k.clone(), v.rows.clone()))
                .collect(),
            responses: m.responses.clone(),
        }
    }
}

/// Result of comparing a model's predictions with a table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReproductionReport {
    pub reproduces: bool,
    pub max_deviation: f64,
    /// `(measurement, preparation, outcome)` of the largest deviation.
    pub worst_entry: Option<(String, String, String)>,
}

impl OnticModel {
    /// Builds a model; the `Q` response is derived from the space and added
    /// to `responses` if absent.
    pub fn new(
        space: OnticSpace,
        eigen_densities: BTreeMap<String, Vec<Density>>,
        prep_densities: BTreeMap<String, Vec<Density>>,
        kernels: BTreeMap<String, MarkovKernel>,
        mut responses: BTreeMap<String, ResponseFunction>,
    ) -> Result<Self> {
        responses
            .entry(roles::Q.to_string())
            .or_insert_with(|| space.q_response());
        let model = Self {
            space,
            eigen_densities,
            prep_densities,
            kernels,
            responses,
        };
        let problems = ModelFile::from(&model).violations();
        if problems.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(problems))
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        Self::try_from(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn space(&self) -> &OnticSpace {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn eigen_densities(&self) -> &BTreeMap<String, Vec<Density>> {
        &self.eigen_densities
    }

    pub fn prep_densities(&self) -> &BTreeMap<String, Vec<Density>> {
        &self.prep_densities
    }

    pub fn kernels(&self) -> &BTreeMap<String, MarkovKernel> {
        &self.kernels
    }

    pub fn responses(&self) -> &BTreeMap<String, ResponseFunction> {
        &self.responses
    }

    pub fn eigen_generators(&self, q: &str) -> Result<&[Density]> {
        self.eigen_densities
            .get(q)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "Q-outcome",
                label: q.to_string(),
            })
    }

    /// Densities of a named preparation. `P_<q>` falls back to the eigen
    /// densities of outcome `q` when no preparation of that name exists.
    pub fn preparation(&self, label: &str) -> Result<&[Density]> {
        if let Some(ds) = self.prep_densities.get(label) {
            return Ok(ds);
        }
        if let Some(ds) = label
            .strip_prefix("P_")
            .and_then(|q| self.eigen_densities.get(q))
        {
            return Ok(ds);
        }
        Err(Error::UnknownLabel {
            kind: "preparation",
            label: label.to_string(),
        })
    }

    pub fn kernel(&self, label: &str) -> Result<&MarkovKernel> {
        self.kernels.get(label).ok_or_else(|| Error::UnknownLabel {
            kind: "transformation",
            label: label.to_string(),
        })
    }

    pub fn response(&self, label: &str) -> Result<&ResponseFunction> {
        self.responses
            .get(label)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "measurement",
                label: label.to_string(),
            })
    }

    /// Densities of `prep` pushed through `kernel_seq` in order.
    pub fn transformed(&self, prep: &str, kernel_seq: &[&str]) -> Result<Vec<Density>> {
        let kernels = kernel_seq
            .iter()
            .map(|k| self.kernel(k))
            .collect::<Result<Vec<_>>>()?;
        self.preparation(prep)?
            .iter()
            .map(|d| {
                kernels
                    .iter()
                    .try_fold(d.clone(), |acc, k| push_forward(k, &acc))
            })
            .collect()
    }

    /// Outcome distribution of `meas` for the preparation expression `expr`
    /// (e.g. `T(P)`); errors if the preparation's densities disagree.
    pub fn distribution(&self, expr: &str, meas: &str) -> Result<Vec<f64>> {
        let (base, seq) = parse_preparation(expr)?;
        let seq: Vec<&str> = seq.iter().map(String::as_str).collect();
        let response = self.response(meas)?;
        let densities = self.transformed(&base, &seq)?;
        let mut out = Vec::with_capacity(response.outcomes.len());
        for (k, outcome) in response.outcomes.iter().enumerate() {
            let values: Vec<f64> = densities
                .iter()
                .map(|d| response.probability(k, d))
                .collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > NORM_TOL {
                return Err(Error::AmbiguousPreparation {
                    prep: expr.to_string(),
                    measurement: meas.to_string(),
                    outcome: outcome.clone(),
                    spread: hi - lo,
                });
            }
            out.push(values[0]);
        }
        Ok(out)
    }

    /// `P(outcome | meas, kernel_seq, prep)`.
    pub fn probability(
        &self,
        prep: &str,
        kernel_seq: &[&str],
        meas: &str,
        outcome: &str,
    ) -> Result<f64> {
        let expr = kernel_seq
            .iter()
            .fold(prep.to_string(), |acc, k| format!("{k}({acc})"));
        let idx = self.response(meas)?.outcome_index(outcome)?;
        Ok(self.distribution(&expr, meas)?[idx])
    }

    /// Table over every measurement of the model for the given preparation
    /// expressions.
    pub fn induced_table(&self, preps: &[&str]) -> Result<PtmTable> {
        let mut table = PtmTable::new();
        for (m, r) in &self.responses {
            table.add_measurement(m, r.outcomes.iter().map(String::as_str));
        }
        for p in preps {
            for m in self.responses.keys() {
                table.insert(m, p, self.distribution(p, m)?)?;
            }
        }
        Ok(table)
    }

    pub fn reproduces_ptm(&self, table: &PtmTable, tol: f64) -> Result<ReproductionReport> {
        reproduces_ptm(self, table, tol)
    }
}

pub fn model_probability(
    model: &OnticModel,
    prep: &str,
    kernel_seq: &[&str],
    meas: &str,
    outcome: &str,
) -> Result<f64> {
    model.probability(prep, kernel_seq, meas, outcome)
}

pub fn reproduces_ptm(
    model: &OnticModel,
    table: &PtmTable,
    tol: f64,
) -> Result<ReproductionReport> {
    let mut report = ReproductionReport {
        reproduces: true,
        max_deviation: 0.0,
        worst_entry: None,
    };
    for (m, p, probs) in table.rows() {
        let response = model.response(m)?;
        let outcomes = table.outcomes(m).expect("row implies measurement");
        if outcomes != response.outcomes.as_slice() {
            return Err(Error::UnknownLabel {
                kind: "outcome set of measurement",
                label: m.to_string(),
            });
        }
        let predicted = model.distribution(p, m)?;
        for ((o, want), got) in outcomes.iter().zip(probs).zip(&predicted) {
            let dev = (want - got).abs();
            if dev > report.max_deviation || report.worst_entry.is_none() {
                report.max_deviation = dev.max(report.max_deviation);
                report.worst_entry = Some((m.to_string(), p.to_string(), o.clone()));
            }
        }
    }
    report.reproduces = report.max_deviation <= tol;
    Ok(report)
}

/// Single-preparation model whose preparation `P` has density
/// `sum_q weights[q] f_q`. Eigen densities and weights are in the order of
/// `space.outcomes`.
pub fn mixing_model(
    space: OnticSpace,
    eigen_densities: Vec<Density>,
    weights: &[f64],
) -> Result<OnticModel> {
    let k = space.outcomes.len();
    if eigen_densities.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: eigen_densities.len(),
        });
    }
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: weights.len(),
        });
    }
    check_distribution("weights", weights).map_err(|reason| Error::InvalidDistribution {
        what: "mixing weights".into(),
        reason,
    })?;
    let n = space.size();
    let mut mix = vec![0.0; n];
    for (w, f) in weights.iter().zip(&eigen_densities) {
        if f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.len(),
            });
        }
        for (m, x) in mix.iter_mut().zip(f.as_slice()) {
            *m += w * x;
        }
    }
    let eigen = space
        .outcomes
        .iter()
        .cloned()
        .zip(eigen_densities.into_iter().map(|d| vec![d]))
        .collect();
    let preps = BTreeMap::from([(roles::P.to_string(), vec![Density::normalized(mix)?])]);
    OnticModel::new(space, eigen, preps, BTreeMap::new(), BTreeMap::new())
}

/// `(1 - eps) f_q + (eps / p) f_P|_{q_support}` with `p` the mass of `f_P`
/// on `q_support`. The result keeps unit mass on `q_support` whenever
/// `f_q` does.
pub fn perturb_eigen_density(
    f_q: &Density,
    f_p: &Density,
    q_support: &[usize],
    epsilon: f64,
) -> Result<Density> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    if f_q.len() != f_p.len() {
        return Err(Error::DimensionMismatch {
            expected: f_q.len(),
            found: f_p.len(),
        });
    }
    let p = f_p.mass_on(q_support);
    if p.is_nan() || p <= 0.0 {
        return Err(Error::PerturbationUndefined);
    }
    let mut out: Vec<f64> = f_q.as_slice().iter().map(|x| (1.0 - epsilon) * x).collect();
    for &s in q_support {
        out[s] += epsilon / p * f_p.0[s];
    }
    Density::new(out)
}

/// `(1 - eps) f_S + eps f_U`.
pub fn perturb_prep_density(f_s: &Density, f_u: &Density, epsilon: f64) -> Result<Density> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    if f_s.len() != f_u.len() {
        return Err(Error::DimensionMismatch {
            expected: f_s.len(),
            found: f_u.len(),
        });
    }
    Density::new(
        f_s.as_slice()
            .iter()
            .zip(f_u.as_slice())
            .map(|(s, u)| (1.0 - epsilon) * s + epsilon * u)
            .collect(),
    )
}

/// Shape of a generated model.
#[derive(Clone, Debug)]
pub struct RandomModelConfig {
    pub space_size: usize,
    /// Number of Q-outcomes, labelled `q1..`.
    pub outcomes: usize,
    pub eigen_count_per_outcome: usize,
    /// Number of preparations, labelled `P`, `P2`, `P3`, ...
    pub prep_count: usize,
    /// Outcomes of the extra measurement `A` (labelled `a1..`); 0 omits it.
    pub a_outcomes: usize,
    /// Whether to include a random transformation `T`.
    pub with_kernel: bool,
    /// Probability that a state is kept in a random support.
    pub support_density: f64,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        Self {
            space_size: 6,
            outcomes: 3,
            eigen_count_per_outcome: 1,
            prep_count: 1,
            a_outcomes: 3,
            with_kernel: true,
            support_density: 0.5,
        }
    }
}

/// Random probability vector supported on a random nonempty subset of
/// `candidates`.
pub fn random_sparse_density<R: Rng>(
    rng: &mut R,
    size: usize,
    candidates: &[usize],
    keep: f64,
) -> Density {
    let mut v = vec![0.0; size];
    for &s in candidates {
        if rng.gen_bool(keep) {
            v[s] = rng.gen_range(0.05..1.0);
        }
    }
    if v.iter().all(|x| *x == 0.0) {
        v[*candidates.choose(rng).expect("nonempty candidates")] = 1.0;
    }
    Density::normalized(v).expect("positive mass")
}

/// Deterministic random model. Every Q-cell is nonempty, so
/// `space_size >= outcomes` is required.
pub fn random_model(seed: u64, cfg: &RandomModelConfig) -> Result<OnticModel> {
    if cfg.space_size == 0
        || cfg.outcomes == 0
        || cfg.eigen_count_per_outcome == 0
        || cfg.prep_count == 0
    {
        return Err(Error::Precondition("all sizes must be at least 1".into()));
    }
    if cfg.space_size < cfg.outcomes {
        return Err(Error::Precondition(format!(
            "space of size {} cannot hold {} nonempty Q-cells",
            cfg.space_size, cfg.outcomes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.space_size;
    let mut q_value: Vec<usize> = (0..cfg.outcomes).collect();
    q_value.extend((cfg.outcomes..n).map(|_| rng.gen_range(0..cfg.outcomes)));
    q_value.shuffle(&mut rng);
    let space = OnticSpace::with_labels(cfg.outcomes, q_value)?;
    let all: Vec<usize> = (0..n).collect();

    let eigen = space
        .outcomes
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let cell = space.cell(qi);
            let gens = (0..cfg.eigen_count_per_outcome)
                .map(|_| random_sparse_density(&mut rng, n, &cell, cfg.support_density))
                .collect();
            (q.clone(), gens)
        })
        .collect();
    let preps = (0..cfg.prep_count)
        .map(|i| {
            let label = if i == 0 {
                roles::P.to_string()
            } else {
                format!("P{}", i + 1)
            };
            (
                label,
                vec![random_sparse_density(
                    &mut rng,
                    n,
                    &all,
                    cfg.support_density,
                )],
            )
        })
        .collect();
    let mut kernels = BTreeMap::new();
    if cfg.with_kernel {
        let rows = (0..n)
            .map(|_| random_sparse_density(&mut rng, n, &all, cfg.support_density).0)
            .collect();
        kernels.insert(roles::T.to_string(), MarkovKernel::new(rows)?);
    }
    let mut responses = BTreeMap::new();
    if cfg.a_outcomes > 0 {
        let outcomes: Vec<String> = (1..=cfg.a_outcomes).map(|i| format!("a{i}")).collect();
        let idx: Vec<usize> = (0..cfg.a_outcomes).collect();
        let rows = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Density::point_mass(cfg.a_outcomes, rng.gen_range(0..cfg.a_outcomes)).0
                } else {
                    random_sparse_density(&mut rng, cfg.a_outcomes, &idx, 0.7).0
                }
            })
            .collect();
        responses.insert(roles::A.to_string(), ResponseFunction::new(outcomes, rows)?);
    }
    OnticModel::new(space, eigen, preps, kernels, responses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::{symmetric_overlap, total_variation};

    fn three_state_space() -> OnticSpace {
        OnticSpace::with_labels(3, vec![0, 1, 2]).unwrap()
    }

    fn point_mixing(weights: &[f64]) -> OnticModel {
        let eig = (0..3).map(|i| Density::point_mass(3, i)).collect();
        mixing_model(three_state_space(), eig, weights).unwrap()
    }

    #[test]
    fn push_forward_examples() {
        let f = Density::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(push_forward(&MarkovKernel::identity(3), &f).unwrap(), f);

        let u = 1.0 / 3.0;
        let k = MarkovKernel::new(vec![vec![u; 3]; 3]).unwrap();
        for x in push_forward(&k, &f).unwrap().as_slice() {
            assert!((x - u).abs() < 1e-15);
        }

        let k = MarkovKernel::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let out = push_forward(&k, &Density::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.0]);

        assert!(push_forward(&k, &f).is_err());
    }

    #[test]
    fn push_forward_preserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.gen_range(1..20);
            let all: Vec<usize> = (0..n).collect();
            let k = MarkovKernel::new(
                (0..n)
                    .map(|_| random_sparse_density(&mut rng, n, &all, 0.6).0)
                    .collect(),
            )
            .unwrap();
            let f = random_sparse_density(&mut rng, n, &all, 0.6);
            let total: f64 = push_forward(&k, &f).unwrap().as_slice().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_primitives_rejected() {
        assert!(Density::new(vec![0.5, 0.6]).is_err());
        assert!(Density::new(vec![1.5, -0.5]).is_err());
        assert!(MarkovKernel::new(vec![vec![1.0, 0.0], vec![0.5, 0.4]]).is_err());
        assert!(MarkovKernel::new(vec![vec![1.0]]).is_ok());
        assert!(ResponseFunction::new(vec!["a".into()], vec![vec![0.5]]).is_err());
    }

    #[test]
    fn model_probability_examples() {
        let m = point_mixing(&[0.2, 0.3, 0.5]);
        assert_eq!(model_probability(&m, "P_q2", &[], "Q", "q2").unwrap(), 1.0);
        assert_eq!(model_probability(&m, "P_q2", &[], "Q", "q1").unwrap(), 0.0);
        assert!((model_probability(&m, "P", &[], "Q", "q2").unwrap() - 0.3).abs() < 1e-15);
        assert!(model_probability(&m, "nope", &[], "Q", "q2").is_err());
        assert!(model_probability(&m, "P", &["T"], "Q", "q2").is_err());
    }

    #[test]
    fn ambiguous_preparation_is_an_error() {
        let space = three_state_space();
        let eig = space
            .outcomes
            .iter()
            .enumerate()
            .map(|(i, q)| (q.clone(), vec![Density::point_mass(3, i)]))
            .collect();
        let preps = BTreeMap::from([(
            "P".to_string(),
            vec![Density::point_mass(3, 0), Density::point_mass(3, 1)],
        )]);
        let m = OnticModel::new(space, eig, preps, BTreeMap::new(), BTreeMap::new()).unwrap();
        let err = model_probability(&m, "P", &[], "Q", "q1").unwrap_err();
        assert!(
            matches!(err, Error::AmbiguousPreparation { spread, .. } if (spread - 1.0).abs() < 1e-15)
        );
    }

    #[test]
    fn reproduction_checks() {
        let m = point_mixing(&[0.2, 0.3, 0.5]);
        let table = m.induced_table(&["P", "P_q1", "P_q2", "P_q3"]).unwrap();
        let r = reproduces_ptm(&m, &table, 1e-12).unwrap();
        assert!(r.reproduces);

        let bumped = Density::normalized(vec![0.3, 0.3, 0.5]).unwrap();
        let eig = (0..3).map(|i| Density::point_mass(3, i)).collect();
        let m2 = mixing_model(three_state_space(), eig, bumped.as_slice()).unwrap();
        let r = reproduces_ptm(&m2, &table, 1e-6).unwrap();
        assert!(!r.reproduces);
        // direct recomputation: |0.3/1.1 - 0.2| = 0.0727...
        assert!(r.max_deviation >= 0.01);
        assert!((r.max_deviation - (0.3 / 1.1 - 0.2)).abs() < 1e-12);
        assert!(reproduces_ptm(&m2, &table, 1.0).unwrap().reproduces);

        let mut other = PtmTable::new();
        other.add_measurement("A", ["a1"]);
        other.insert("A", "P", vec![1.0]).unwrap();
        assert!(reproduces_ptm(&m, &other, 1e-9).is_err());
    }

    #[test]
    fn partition_examples() {
        let space = three_state_space();
        assert_eq!(partition_indicator(&space, "q2").unwrap(), vec![1]);
        assert!(partition_indicator(&space, "q9").is_err());
        let sparse = OnticSpace::with_labels(3, vec![0, 0, 2]).unwrap();
        assert!(partition_indicator(&sparse, "q2").unwrap().is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q_value: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
        let space = OnticSpace::with_labels(4, q_value).unwrap();
        let mut seen = vec![0usize; 100];
        for q in space.outcomes.clone() {
            for s in partition_indicator(&space, &q).unwrap() {
                seen[s] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn mixing_examples() {
        let m = point_mixing(&[0.2, 0.3, 0.5]);
        assert_eq!(m.preparation("P").unwrap()[0].as_slice(), &[0.2, 0.3, 0.5]);
        let m = point_mixing(&[1.0, 0.0, 0.0]);
        assert_eq!(m.preparation("P").unwrap()[0], Density::point_mass(3, 0));
        let eig: Vec<Density> = (0..3).map(|i| Density::point_mass(3, i)).collect();
        assert!(mixing_model(three_state_space(), eig.clone(), &[0.5, 0.6, 0.0]).is_err());
        assert!(mixing_model(three_state_space(), eig, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mixing_overlap_equals_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..200 {
            let cfg = RandomModelConfig {
                space_size: 8,
                ..Default::default()
            };
            let base = random_model(seed, &cfg).unwrap();
            let eig: Vec<Density> = base
                .space()
                .outcomes
                .iter()
                .map(|q| base.eigen_generators(q).unwrap()[0].clone())
                .collect();
            let w = random_sparse_density(&mut rng, 3, &[0, 1, 2], 0.8);
            let m = mixing_model(base.space().clone(), eig.clone(), w.as_slice()).unwrap();
            let f_p = &m.preparation("P").unwrap()[0];
            for (qi, f_q) in eig.iter().enumerate() {
                let scaled: Vec<f64> = f_q
                    .as_slice()
                    .iter()
                    .map(|x| w.as_slice()[qi] * x)
                    .collect();
                let omega = symmetric_overlap(f_p.as_slice(), &scaled).unwrap();
                assert!((omega - w.as_slice()[qi]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perturb_eigen_examples() {
        let f_q = Density::new(vec![1.0, 0.0, 0.0]).unwrap();
        let f_p = Density::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(
            perturb_eigen_density(&f_q, &f_p, &[0, 1], 0.0).unwrap(),
            f_q
        );
        let out = perturb_eigen_density(&f_q, &f_p, &[0, 1], 0.1).unwrap();
        assert!((out.as_slice()[0] - 0.95).abs() < 1e-15);
        assert!((out.as_slice()[1] - 0.05).abs() < 1e-15);
        assert_eq!(out.as_slice()[2], 0.0);
        let full = perturb_eigen_density(&f_q, &f_p, &[0, 1], 1.0).unwrap();
        assert_eq!(full.as_slice(), &[0.5, 0.5, 0.0]);
        let f_p = Density::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            perturb_eigen_density(&f_q, &f_p, &[0, 1], 0.1),
            Err(Error::PerturbationUndefined)
        ));
    }

    #[test]
    fn perturb_eigen_tv_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let m = random_model(rng.gen(), &RandomModelConfig::default()).unwrap();
            let cell = m.space().cell(0);
            let f_p = &m.preparation("P").unwrap()[0];
            let p = f_p.mass_on(&cell);
            if p == 0.0 {
                continue;
            }
            let f_q = &m.eigen_generators("q1").unwrap()[0];
            let eps = rng.gen_range(0.0..1.0);
            let out = perturb_eigen_density(f_q, f_p, &cell, eps).unwrap();
            assert!((out.mass_on(&cell) - 1.0).abs() < 1e-12);
            let tv = total_variation(out.as_slice(), f_q.as_slice()).unwrap();
            assert!(tv <= 2.0 * eps / p + 1e-12);
        }
    }

    #[test]
    fn perturb_prep_examples() {
        let s = Density::new(vec![1.0, 0.0]).unwrap();
        let u = Density::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(perturb_prep_density(&s, &u, 0.0).unwrap(), s);
        assert_eq!(perturb_prep_density(&s, &u, 1.0).unwrap(), u);
        assert_eq!(
            perturb_prep_density(&s, &u, 0.5).unwrap().as_slice(),
            &[0.5, 0.5]
        );

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let all: Vec<usize> = (0..7).collect();
        for _ in 0..200 {
            let s = random_sparse_density(&mut rng, 7, &all, 0.5);
            let u = random_sparse_density(&mut rng, 7, &all, 0.5);
            let eps = rng.gen_range(0.0..=1.0);
            let out = perturb_prep_density(&s, &u, eps).unwrap();
            let lhs = total_variation(out.as_slice(), s.as_slice()).unwrap();
            let rhs = eps * total_variation(s.as_slice(), u.as_slice()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn random_models_are_valid_and_deterministic() {
        let cfg = RandomModelConfig {
            eigen_count_per_outcome: 2,
            prep_count: 2,
            ..Default::default()
        };
        assert_eq!(
            random_model(42, &cfg).unwrap(),
            random_model(42, &cfg).unwrap()
        );
        for seed in 0..1000 {
            let m = random_model(seed, &cfg).unwrap();
            assert!(ModelFile::from(&m).violations().is_empty());
            for (q, gens) in m.eigen_densities() {
                let cell = m.space().partition_indicator(q).unwrap();
                for g in gens {
                    assert!((g.mass_on(&cell) - 1.0).abs() < 1e-10);
                }
            }
        }
        let tiny = RandomModelConfig {
            space_size: 1,
            outcomes: 1,
            a_outcomes: 0,
            ..Default::default()
        };
        let m = random_model(0, &tiny).unwrap();
        assert_eq!(m.preparation("P").unwrap()[0].as_slice(), &[1.0]);
        assert_eq!(m.eigen_generators("q1").unwrap()[0].as_slice(), &[1.0]);
        assert!(random_model(
            0,
            &RandomModelConfig {
                space_size: 2,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn model_json_validation() {
        let m = random_model(1, &RandomModelConfig::default()).unwrap();
        let back = OnticModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);

        let mut file = ModelFile::from(&m);
        file.prep_densities.get_mut("P").unwrap()[0][0] += 0.5;
        file.space.q_value[0] = "q7".into();
        file.kernels.get_mut("T").unwrap().pop();
        let problems = file.violations();
        assert!(problems
            .iter()
            .any(|p| p.starts_with("prep_densities.P[0]")));
        assert!(problems.iter().any(|p| p.starts_with("space.q_value[0]")));
        assert!(problems.iter().any(|p| p.starts_with("kernels.T")));
        assert!(matches!(
            OnticModel::try_from(file),
            Err(Error::InvalidModel(_))
        ));
    }
}
