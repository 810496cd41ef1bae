//! Macrorealism inequalities on prepare-transform-measure tables, exclusion
//! lines built from experimental frequencies, and the noise threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::ontic::OnticModel;
use crate::overlap::{fmt_f64, SupportCurve};
use crate::ptm::{roles, PtmTable};
use crate::support::beta_min;

/// Default premise tolerance in theory mode.
pub const PREMISE_TOL: f64 = 1e-12;
/// Margin for the strict curve-above-line comparison.
pub const CROSSING_MARGIN: f64 = 1e-12;
/// Residual below which a mixture is accepted.
pub const MIXTURE_TOL: f64 = 1e-9;

/// The three probabilities that must vanish for the noiseless bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Premises {
    /// `P(a2 | A, P_q1)`
    pub a2_pq1: f64,
    /// `P(a3 | A, T, P_q1)`
    pub a3_tpq1: f64,
    /// `P(q3 | Q, T, P_q1)`
    pub q3_tpq1: f64,
}

impl Premises {
    pub fn from_table(table: &PtmTable) -> Result<Self> {
        Ok(Self {
            a2_pq1: table.prob(roles::A, roles::P_Q1, "a2")?,
            a3_tpq1: table.prob(roles::A, roles::T_P_Q1, "a3")?,
            q3_tpq1: table.prob(roles::Q, roles::T_P_Q1, "q3")?,
        })
    }

    pub fn sum(&self) -> f64 {
        self.a2_pq1 + self.a3_tpq1 + self.q3_tpq1
    }

    pub fn max(&self) -> f64 {
        self.a2_pq1.max(self.a3_tpq1).max(self.q3_tpq1)
    }
}

pub fn theorem1_premises_hold(table: &PtmTable, tol: f64) -> Result<bool> {
    Ok(Premises::from_table(table)?.max() <= tol)
}

/// `P(q1|Q,P) - P(q2|Q,T,P) - P(a1|A,T,P)`.
pub fn gap(table: &PtmTable) -> Result<f64> {
    Ok(table.prob(roles::Q, roles::P, "q1")?
        - table.prob(roles::Q, roles::T_P, "q2")?
        - table.prob(roles::A, roles::T_P, "a1")?)
}

fn check_ab(alpha: f64, beta: f64) -> Result<()> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::NegativeAlpha(alpha));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Precondition(format!("beta {beta} outside [0, 1]")));
    }
    Ok(())
}

/// `alpha (P(a2|A,P_q1) + P(a3|A,T,P_q1) + P(q3|Q,T,P_q1)) + beta`.
pub fn theorem2_rhs(table: &PtmTable, alpha: f64, beta: f64) -> Result<f64> {
    check_ab(alpha, beta)?;
    Ok(alpha * Premises::from_table(table)?.sum() + beta)
}

/// Variant of [`theorem2_rhs`] whose first premise is measured after the
/// transformation, `P(a2|A,T,P_q1)`. This is the form that survives for
/// arbitrary kernels; the two coincide whenever `T` leaves the A-statistics
/// of `P_q1` unchanged.
pub fn theorem2_rhs_transformed(table: &PtmTable, alpha: f64, beta: f64) -> Result<f64> {
    check_ab(alpha, beta)?;
    let p = Premises::from_table(table)?;
    let a2_t = table.prob(roles::A, roles::T_P_Q1, "a2")?;
    Ok(alpha * (a2_t + p.a3_tpq1 + p.q3_tpq1) + beta)
}

/// True when the table rules out every ontic model in which `P` is
/// (alpha, beta)-supported on `Lambda_q1`.
pub fn theorem2_violated(table: &PtmTable, alpha: f64, beta: f64) -> Result<bool> {
    Ok(gap(table)? > theorem2_rhs(table, alpha, beta)?)
}

/// The table rows needed by the bounds in this module.
pub const BOUND_PREPARATIONS: [&str; 4] = [roles::P, roles::T_P, roles::P_Q1, roles::T_P_Q1];

/// Evaluation of both right-hand sides on a model, with `beta` set to the
/// smallest value for which `P` is (alpha, beta)-supported on `Lambda_q1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem2Evaluation {
    pub alpha: f64,
    pub beta: f64,
    pub gap: f64,
    pub rhs: f64,
    pub rhs_transformed: f64,
}

impl Theorem2Evaluation {
    pub fn holds(&self, tol: f64) -> bool {
        self.gap <= self.rhs + tol
    }

    pub fn transformed_holds(&self, tol: f64) -> bool {
        self.gap <= self.rhs_transformed + tol
    }
}

pub fn evaluate_theorem2(model: &OnticModel, alpha: f64) -> Result<Theorem2Evaluation> {
    let table = model.induced_table(&BOUND_PREPARATIONS)?;
    let beta = beta_min(model, roles::P, "q1", alpha)?;
    Ok(Theorem2Evaluation {
        alpha,
        beta,
        gap: gap(&table)?,
        rhs: theorem2_rhs(&table, alpha, beta)?,
        rhs_transformed: theorem2_rhs_transformed(&table, alpha, beta)?,
    })
}

/// Relative frequencies of the six outcomes entering the bound.
#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFrequencies {
    pub fQ1_P: f64,
    pub fQ2_TP: f64,
    pub fA1_TP: f64,
    pub fA2_Pq1: f64,
    pub fA3_TPq1: f64,
    pub fQ3_TPq1: f64,
}

impl ExperimentFrequencies {
    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("fQ1_P", self.fQ1_P),
            ("fQ2_TP", self.fQ2_TP),
            ("fA1_TP", self.fA1_TP),
            ("fA2_Pq1", self.fA2_Pq1),
            ("fA3_TPq1", self.fA3_TPq1),
            ("fQ3_TPq1", self.fQ3_TPq1),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidDistribution {
                    what: name.to_string(),
                    reason: format!("frequency {v} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }

    /// Exact probabilities read off a table.
    pub fn from_table(table: &PtmTable) -> Result<Self> {
        Ok(Self {
            fQ1_P: table.prob(roles::Q, roles::P, "q1")?,
            fQ2_TP: table.prob(roles::Q, roles::T_P, "q2")?,
            fA1_TP: table.prob(roles::A, roles::T_P, "a1")?,
            fA2_Pq1: table.prob(roles::A, roles::P_Q1, "a2")?,
            fA3_TPq1: table.prob(roles::A, roles::T_P_Q1, "a3")?,
            fQ3_TPq1: table.prob(roles::Q, roles::T_P_Q1, "q3")?,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    /// Worst-case estimates at noise level `eps`: `fQ1_P` lowered, every
    /// other frequency raised.
    pub fn adversarial(&self, eps: f64) -> Result<Self> {
        let f = Self {
            fQ1_P: self.fQ1_P - eps,
            fQ2_TP: self.fQ2_TP + eps,
            fA1_TP: self.fA1_TP + eps,
            fA2_Pq1: self.fA2_Pq1 + eps,
            fA3_TPq1: self.fA3_TPq1 + eps,
            fQ3_TPq1: self.fQ3_TPq1 + eps,
        };
        f.validate()?;
        Ok(f)
    }
}

/// `E(alpha) = intercept + slope * alpha`, compared against `target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExclusionLine {
    pub intercept: f64,
    pub slope: f64,
    pub target: f64,
}

impl ExclusionLine {
    pub fn eval(&self, alpha: f64) -> f64 {
        self.intercept + self.slope * alpha
    }
}

pub fn exclusion_line(f: &ExperimentFrequencies) -> ExclusionLine {
    ExclusionLine {
        intercept: f.fQ2_TP + f.fA1_TP,
        slope: f.fA2_Pq1 + f.fA3_TPq1 + f.fQ3_TPq1,
        target: f.fQ1_P,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RuledOutVerdict {
    pub ruled_out: bool,
    pub witness_alpha: Option<f64>,
}

/// Whether a support curve rises strictly above the line somewhere.
///
/// The curve is concave and the line affine with nonnegative slope, so the
/// difference is maximized at a breakpoint; the check is exact.
pub fn ruled_out(curve: &SupportCurve, line: &ExclusionLine) -> RuledOutVerdict {
    let samples: Vec<(f64, f64)> = curve
        .breakpoints()
        .iter()
        .map(|b| (b.alpha, b.value))
        .collect();
    ruled_out_samples(&samples, line)
}

/// Same test on sampled `(alpha, value)` pairs, e.g. a model curve on a grid.
pub fn ruled_out_samples(samples: &[(f64, f64)], line: &ExclusionLine) -> RuledOutVerdict {
    let witness_alpha = samples
        .iter()
        .filter(|(a, v)| *v > line.eval(*a) + CROSSING_MARGIN)
        .map(|(a, _)| *a)
        .min_by(f64::total_cmp);
    RuledOutVerdict {
        ruled_out: witness_alpha.is_some(),
        witness_alpha,
    }
}

/// Region of the (alpha, beta) plane excluded by the data: every pair with
/// `beta < beta_bound(alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExcludedRegion {
    pub line: ExclusionLine,
}

impl ExcludedRegion {
    pub fn beta_bound(&self, alpha: f64) -> f64 {
        (self.line.target - self.line.eval(alpha)).max(0.0)
    }

    /// Alpha at which the bound reaches zero; `None` if it never does.
    pub fn zero_crossing(&self) -> Option<f64> {
        let excess = self.line.target - self.line.intercept;
        if excess <= 0.0 {
            Some(0.0)
        } else if self.line.slope > 0.0 {
            Some(excess / self.line.slope)
        } else {
            None
        }
    }

    /// Default sampling range: twice the zero crossing, or `[0, 10]`.
    pub fn default_grid(&self, points: usize) -> Vec<f64> {
        let hi = match self.zero_crossing() {
            Some(a) if a > 0.0 => 2.0 * a,
            _ => 10.0,
        };
        let n = points.max(2);
        (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
    }

    pub fn to_csv(&self, alphas: &[f64]) -> String {
        let mut out = String::from("alpha,beta_bound\n");
        for &a in alphas {
            let _ = writeln!(out, "{},{}", fmt_f64(a), fmt_f64(self.beta_bound(a)));
        }
        out
    }
}

pub fn excluded_region(f: &ExperimentFrequencies) -> ExcludedRegion {
    ExcludedRegion {
        line: exclusion_line(f),
    }
}

/// Mixing-model exclusion, with the line evaluated at `alpha = fQ1_P`.
pub fn em_ruled_out(f: &ExperimentFrequencies) -> bool {
    let line = exclusion_line(f);
    line.intercept + line.target * line.slope < line.target
}

/// Quadratic `a e^2 + b e + c` whose positivity is the worst-case condition
/// at noise level `e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub coefficients: EpsilonCoefficients,
    /// Left minus right side of the worst-case inequality at `epsilon`.
    pub residual: f64,
}

/// `intercept + 2e + (target - e)(slope + 3e) - (target - e)`: negative
/// exactly when the adversarially perturbed data still excludes mixing
/// models.
pub fn worst_case_margin(f: &ExperimentFrequencies, eps: f64) -> f64 {
    let line = exclusion_line(f);
    line.intercept + 2.0 * eps + (line.target - eps) * (line.slope + 3.0 * eps)
        - (line.target - eps)
}

/// Largest noise level below which the worst-case data still excludes
/// mixing models; zero if even noiseless data does not.
pub fn worst_case_epsilon_frequencies(f: &ExperimentFrequencies) -> Result<EpsilonReport> {
    let line = exclusion_line(f);
    let p1 = line.target;
    let s = line.slope;
    let coefficients = EpsilonCoefficients {
        a: 3.0,
        b: -(3.0 + 3.0 * p1 - s),
        c: p1 - line.intercept - p1 * s,
    };
    let EpsilonCoefficients { a, b, c } = coefficients;
    if c <= 0.0 {
        return Ok(EpsilonReport {
            epsilon: 0.0,
            coefficients,
            residual: worst_case_margin(f, 0.0),
        });
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(Error::Precondition(
            "worst-case condition has no threshold".into(),
        ));
    }
    // smaller root, in the cancellation-free form
    let q = -0.5 * (b - disc.sqrt());
    let epsilon = c / q;
    Ok(EpsilonReport {
        epsilon,
        coefficients,
        residual: worst_case_margin(f, epsilon),
    })
}

pub fn worst_case_epsilon(table: &PtmTable) -> Result<f64> {
    Ok(worst_case_epsilon_frequencies(&ExperimentFrequencies::from_table(table)?)?.epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureVerdict {
    pub feasible: bool,
    pub weights: Option<Vec<f64>>,
    /// Smallest achievable L1 distance between the row and a mixture.
    pub residual: f64,
}

/// Whether the rows of `prep` are a convex combination of the rows of
/// `eigenpreps`, over every measurement in which `prep` appears.
pub fn mixture_feasible(
    table: &PtmTable,
    prep: &str,
    eigenpreps: &[&str],
) -> Result<MixtureVerdict> {
    if eigenpreps.is_empty() {
        return Err(Error::EmptyGenerators);
    }
    let mut targets = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); eigenpreps.len()];
    let measurements: Vec<String> = table.measurements().map(|(m, _)| m.to_string()).collect();
    for m in &measurements {
        let Ok(row) = table.distribution(m, prep) else {
            continue;
        };
        targets.extend_from_slice(row);
        for (col, e) in columns.iter_mut().zip(eigenpreps) {
            col.extend_from_slice(table.distribution(m, e)?);
        }
    }
    if targets.is_empty() {
        return Err(Error::UnknownLabel {
            kind: "preparation",
            label: prep.to_string(),
        });
    }
    let k = eigenpreps.len();
    let r = targets.len();
    // variables: weights, then positive and negative residual per entry
    let width = k + 2 * r;
    let mut objective = vec![0.0; width];
    objective[k..].fill(1.0);
    let mut lp = LinearProgram::minimize(objective);
    for (i, &t) in targets.iter().enumerate() {
        let mut row = vec![0.0; width];
        for j in 0..k {
            row[j] = columns[j][i];
        }
        row[k + i] = 1.0;
        row[k + r + i] = -1.0;
        lp.constrain(row, Relation::Eq, t);
    }
    let mut simplex = vec![0.0; width];
    simplex[..k].fill(1.0);
    lp.constrain(simplex, Relation::Eq, 1.0);
    let sol = lp.solve()?.optimal()?;
    let residual = (-sol.value).max(0.0);
    let feasible = residual <= MIXTURE_TOL;
    Ok(MixtureVerdict {
        feasible,
        weights: feasible.then(|| sol.x[..k].to_vec()),
        residual,
    })
}

/// Checks `sum_{Lambda_q} g f_P <= alpha max_i sum_{Lambda_q} g f_i + beta`
/// for every density of `prep`, given that `prep` is (alpha, beta)-supported
/// on `Lambda_q`.
pub fn lemma1_check(
    model: &OnticModel,
    prep: &str,
    q: &str,
    g: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<bool> {
    check_ab(alpha, beta)?;
    if g.len() != model.size() {
        return Err(Error::DimensionMismatch {
            expected: model.size(),
            found: g.len(),
        });
    }
    if g.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Precondition("g must take values in [0, 1]".into()));
    }
    let needed = beta_min(model, prep, q, alpha)?;
    if needed > beta {
        return Err(Error::Precondition(format!(
            "{prep} is not ({alpha}, {beta})-supported on {q}: needs beta >= {needed}"
        )));
    }
    let cell = model.space().partition_indicator(q)?;
    let weigh = |d: &[f64]| -> f64 { cell.iter().map(|&s| g[s] * d[s]).sum() };
    // linear objective over the hull: the optimum sits at a generator
    let best = model
        .eigen_generators(q)?
        .iter()
        .map(|f| weigh(f.as_slice()))
        .fold(0.0, f64::max);
    let rhs = alpha * best + beta;
    Ok(model
        .preparation(prep)?
        .iter()
        .all(|f_p| weigh(f_p.as_slice()) <= rhs + 1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::{fragment_t1, fragment_t2, fragment_to_ptm};
    use crate::ontic::{
        mixing_model, random_model, random_sparse_density, Density, MarkovKernel, OnticSpace,
        RandomModelConfig,
    };
    use crate::overlap::support_curve;
    use crate::ptm::PtmTable;
    use crate::support::is_eigenpreparation_supported;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn t2_gap() -> f64 {
        (10.0 * 3f64.sqrt() - 7.0) / 48.0
    }

    fn t2_freqs() -> ExperimentFrequencies {
        ExperimentFrequencies::from_table(&fragment_to_ptm(&fragment_t2()).unwrap()).unwrap()
    }

    fn freqs(v: [f64; 6]) -> ExperimentFrequencies {
        ExperimentFrequencies {
            fQ1_P: v[0],
            fQ2_TP: v[1],
            fA1_TP: v[2],
            fA2_Pq1: v[3],
            fA3_TPq1: v[4],
            fQ3_TPq1: v[5],
        }
    }

    /// Q and A rows for P, T(P), P_q1 and T(P_q1) from explicit vectors.
    fn table_from(rows: [(&str, [f64; 3], [f64; 3]); 4]) -> PtmTable {
        let mut t = PtmTable::new();
        t.add_measurement("Q", ["q1", "q2", "q3"]);
        t.add_measurement("A", ["a1", "a2", "a3"]);
        for (p, q, a) in rows {
            t.insert("Q", p, q.to_vec()).unwrap();
            t.insert("A", p, a.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn premise_examples() {
        let t1 = fragment_to_ptm(&fragment_t1()).unwrap();
        let t2 = fragment_to_ptm(&fragment_t2()).unwrap();
        assert!(theorem1_premises_hold(&t1, 1e-12).unwrap());
        assert!(theorem1_premises_hold(&t2, 1e-12).unwrap());
        let mut noisy = t2.clone();
        noisy.set_prob("A", "P_q1", "a2", 0.01).unwrap();
        assert!(!theorem1_premises_hold(&noisy, 1e-6).unwrap());
        let empty = PtmTable::new();
        assert!(matches!(
            theorem1_premises_hold(&empty, 1e-12),
            Err(Error::MissingRole { .. })
        ));
    }

    #[test]
    fn gap_examples() {
        let t1 = fragment_to_ptm(&fragment_t1()).unwrap();
        assert!((gap(&t1).unwrap() - 0.1).abs() < 1e-12);
        let t2 = fragment_to_ptm(&fragment_t2()).unwrap();
        assert!((gap(&t2).unwrap() - t2_gap()).abs() < 1e-12);
        // P is the q2 eigenpreparation and T does nothing
        let e2 = ([0.0, 1.0, 0.0], [0.3, 0.3, 0.4]);
        let e1 = ([1.0, 0.0, 0.0], [0.5, 0.0, 0.5]);
        let t = table_from([
            ("P", e2.0, e2.1),
            ("T(P)", e2.0, e2.1),
            ("P_q1", e1.0, e1.1),
            ("T(P_q1)", e1.0, e1.1),
        ]);
        assert!(gap(&t).unwrap() <= 0.0);
    }

    #[test]
    fn rhs_examples() {
        let t2 = fragment_to_ptm(&fragment_t2()).unwrap();
        for alpha in [0.0, 1.0, 7.5, 1e6] {
            assert!(theorem2_rhs(&t2, alpha, 0.0).unwrap().abs() < 1e-12 * alpha.max(1.0));
        }
        assert_eq!(theorem2_rhs(&t2, 0.0, 0.3).unwrap(), 0.3);
        let t = table_from([
            ("P", [0.5, 0.3, 0.2], [0.2, 0.3, 0.5]),
            ("T(P)", [0.1, 0.4, 0.5], [0.1, 0.4, 0.5]),
            ("P_q1", [1.0, 0.0, 0.0], [0.995, 0.005, 0.0]),
            ("T(P_q1)", [0.998, 0.0, 0.002], [0.997, 0.0, 0.003]),
        ]);
        assert!((theorem2_rhs(&t, 2.0, 0.1).unwrap() - 0.12).abs() < 1e-15);
        assert!(theorem2_rhs(&t, -1.0, 0.1).is_err());
        assert!(theorem2_rhs(&t, 1.0, 1.1).is_err());
    }

    #[test]
    fn violation_examples() {
        let t1 = fragment_to_ptm(&fragment_t1()).unwrap();
        let t2 = fragment_to_ptm(&fragment_t2()).unwrap();
        for alpha in [0.0, 1.0, 100.0] {
            assert!(theorem2_violated(&t2, alpha, 0.2).unwrap());
            assert!(!theorem2_violated(&t2, alpha, 0.22).unwrap());
            assert!(!theorem2_violated(&t1, alpha, 1.0).unwrap());
        }
        assert!(theorem2_violated(&t1, 5.0, 0.0).unwrap());
    }

    #[test]
    fn line_examples() {
        let l = exclusion_line(&t2_freqs());
        let s3 = 3f64.sqrt();
        assert!((l.intercept - (0.125 + (13.0 - 4.0 * s3) / 48.0)).abs() < 1e-12);
        assert!(l.slope.abs() < 1e-12);
        assert!((l.target - (2.0 + s3) / 8.0).abs() < 1e-12);
        let z = exclusion_line(&freqs([0.0; 6]));
        assert_eq!((z.eval(0.0), z.eval(5.0)), (0.0, 0.0));
        let l = exclusion_line(&freqs([0.5, 0.1, 0.1, 0.01, 0.01, 0.01]));
        assert!((l.slope - 0.03).abs() < 1e-15);
    }

    #[test]
    fn ruled_out_examples() {
        let m = mixing_model(
            OnticSpace::with_labels(3, vec![0, 1, 2]).unwrap(),
            (0..3).map(|i| Density::point_mass(3, i)).collect(),
            &[0.9, 0.05, 0.05],
        )
        .unwrap();
        let f_p = &m.preparation("P").unwrap()[0];
        let curve = support_curve(
            f_p.as_slice(),
            m.eigen_generators("q1").unwrap()[0].as_slice(),
        )
        .unwrap();
        let line = ExclusionLine {
            intercept: 0.2,
            slope: 0.1,
            target: 0.9,
        };
        let v = ruled_out(&curve, &line);
        assert!(v.ruled_out);
        assert!((v.witness_alpha.unwrap() - 0.9).abs() < 1e-12);

        let zero = support_curve(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(
            !ruled_out(
                &zero,
                &ExclusionLine {
                    intercept: 0.0,
                    slope: 0.0,
                    target: 0.5
                }
            )
            .ruled_out
        );

        // too noisy: the line sits above the whole curve
        let noisy = ExclusionLine {
            intercept: 0.5,
            slope: 0.6,
            target: 0.9,
        };
        assert_eq!(
            ruled_out(&curve, &noisy),
            RuledOutVerdict {
                ruled_out: false,
                witness_alpha: None
            }
        );
    }

    #[test]
    fn ruled_out_matches_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.gen_range(1..10);
            let all: Vec<usize> = (0..n).collect();
            let f_p = random_sparse_density(&mut rng, n, &all, 0.6);
            let f_q = random_sparse_density(&mut rng, n, &all, 0.6);
            let curve = support_curve(f_p.as_slice(), f_q.as_slice()).unwrap();
            let line = ExclusionLine {
                intercept: rng.gen_range(0.0..0.5),
                slope: rng.gen_range(0.0..0.5),
                target: 1.0,
            };
            let exact = ruled_out(&curve, &line);
            let hi = 2.0 * curve.last_alpha() + 1.0;
            let grid: Vec<(f64, f64)> = (0..=4000)
                .map(|i| {
                    let a = hi * i as f64 / 4000.0;
                    (a, curve.eval(a).unwrap())
                })
                .collect();
            let sampled = ruled_out_samples(&grid, &line);
            // a grid can only miss a crossing, never invent one
            if sampled.ruled_out {
                assert!(exact.ruled_out);
            }
            if exact.ruled_out && !sampled.ruled_out {
                let a = exact.witness_alpha.unwrap();
                assert!(curve.eval(a).unwrap() - line.eval(a) < 1e-3);
            }
        }
    }

    #[test]
    fn region_examples() {
        let r = excluded_region(&t2_freqs());
        for a in [0.0, 1.0, 50.0] {
            assert!((r.beta_bound(a) - t2_gap()).abs() < 1e-12);
        }
        assert_eq!(r.zero_crossing(), None);
        let r = excluded_region(&freqs([0.6, 0.1, 0.1, 0.1, 0.0, 0.0]));
        assert!((r.zero_crossing().unwrap() - 4.0).abs() < 1e-12);
        assert!(r.beta_bound(1.0) > r.beta_bound(2.0));
        assert_eq!(r.beta_bound(5.0), 0.0);
        let r = excluded_region(&freqs([0.2, 0.2, 0.1, 0.0, 0.0, 0.0]));
        assert_eq!(r.beta_bound(0.0), 0.0);
        let csv = r.to_csv(&[0.0, 1.0]);
        assert_eq!(csv.lines().next(), Some("alpha,beta_bound"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn em_examples() {
        assert!(em_ruled_out(&t2_freqs()));
        assert!(!em_ruled_out(&freqs([1.0 / 3.0; 6])));
        assert!(!em_ruled_out(&freqs([0.4, 0.3, 0.1, 0.0, 0.0, 0.0])));
    }

    #[test]
    fn region_agrees_with_em_criterion_on_mixing_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let w1: f64 = rng.gen_range(0.01..0.99);
            let w2 = rng.gen_range(0.0..(1.0 - w1));
            let m = mixing_model(
                OnticSpace::with_labels(3, vec![0, 1, 2]).unwrap(),
                (0..3).map(|i| Density::point_mass(3, i)).collect(),
                &[w1, w2, 1.0 - w1 - w2],
            )
            .unwrap();
            let f_p = &m.preparation("P").unwrap()[0];
            let curve = support_curve(
                f_p.as_slice(),
                m.eigen_generators("q1").unwrap()[0].as_slice(),
            )
            .unwrap();
            assert!((curve.eval(1.0).unwrap() - w1).abs() < 1e-15);
            let f = freqs([
                w1,
                rng.gen_range(0.0..0.5),
                rng.gen_range(0.0..0.5),
                rng.gen_range(0.0..0.2),
                rng.gen_range(0.0..0.2),
                rng.gen_range(0.0..0.2),
            ]);
            let line = exclusion_line(&f);
            // skip draws within the comparison margin of the boundary
            if (line.target - line.eval(line.target)).abs() < 1e-9 {
                continue;
            }
            assert_eq!(ruled_out(&curve, &line).ruled_out, em_ruled_out(&f));
        }
    }

    #[test]
    fn epsilon_examples() {
        let t2 = fragment_to_ptm(&fragment_t2()).unwrap();
        let eps = worst_case_epsilon(&t2).unwrap();
        assert!((eps - 0.0506).abs() < 5e-4, "{eps}");
        let report = worst_case_epsilon_frequencies(&t2_freqs()).unwrap();
        assert!(report.residual.abs() < 1e-10);
        assert_eq!(
            worst_case_epsilon_frequencies(&freqs([0.3, 0.2, 0.1, 0.0, 0.0, 0.0]))
                .unwrap()
                .epsilon,
            0.0
        );
        // just below the threshold the adversarial data still excludes
        let f = t2_freqs();
        assert!(em_ruled_out(&f.adversarial(eps - 1e-6).unwrap()));
        assert!(!em_ruled_out(&f.adversarial(eps + 1e-6).unwrap()));
        assert!(!em_ruled_out(&f.adversarial(0.06).unwrap()));
    }

    #[test]
    fn epsilon_root_by_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2000 {
            let f = freqs([
                rng.gen_range(0.2..0.9),
                rng.gen_range(0.0..0.2),
                rng.gen_range(0.0..0.2),
                rng.gen_range(0.0..0.05),
                rng.gen_range(0.0..0.05),
                rng.gen_range(0.0..0.05),
            ]);
            let r = worst_case_epsilon_frequencies(&f).unwrap();
            assert!(r.residual.abs() < 1e-10 || r.epsilon == 0.0);
            if r.epsilon > 0.0 {
                let EpsilonCoefficients { a, b, c } = r.coefficients;
                let e = r.epsilon;
                assert!((a * e * e + b * e + c).abs() < 1e-10);
                assert!(worst_case_margin(&f, 0.5 * e) < 0.0);
            }
        }
    }

    #[test]
    fn frequencies_json() {
        let f = t2_freqs();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"fQ1_P\""));
        assert_eq!(ExperimentFrequencies::from_json(&s).unwrap(), f);
        assert!(ExperimentFrequencies::from_json(
            r#"{"fQ1_P":1.5,"fQ2_TP":0,"fA1_TP":0,"fA2_Pq1":0,"fA3_TPq1":0,"fQ3_TPq1":0}"#
        )
        .is_err());
        assert!(ExperimentFrequencies::from_json(r#"{"fQ1_P":0.5}"#).is_err());
    }

    fn mixture_table(rows: &[(&str, [f64; 3], [f64; 3])]) -> PtmTable {
        let mut t = PtmTable::new();
        t.add_measurement("Q", ["q1", "q2", "q3"]);
        t.add_measurement("A", ["a1", "a2", "a3"]);
        for (p, q, a) in rows {
            t.insert("Q", p, q.to_vec()).unwrap();
            t.insert("A", p, a.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn mixture_examples() {
        let e1 = ([1.0, 0.0, 0.0], [0.2, 0.5, 0.3]);
        let e2 = ([0.0, 1.0, 0.0], [0.6, 0.1, 0.3]);
        let mix = |i: usize| 0.4 * [e1.0, e1.1][i / 3][i % 3] + 0.6 * [e2.0, e2.1][i / 3][i % 3];
        let p = ([mix(0), mix(1), mix(2)], [mix(3), mix(4), mix(5)]);
        let t = mixture_table(&[("P", p.0, p.1), ("P_q1", e1.0, e1.1), ("P_q2", e2.0, e2.1)]);
        let v = mixture_feasible(&t, "P", &["P_q1", "P_q2"]).unwrap();
        assert!(v.feasible);
        let w = v.weights.unwrap();
        assert!((w[0] - 0.4).abs() < 1e-9 && (w[1] - 0.6).abs() < 1e-9);
        let v = mixture_feasible(&t, "P_q1", &["P_q1"]).unwrap();
        assert!(v.feasible);
        assert!((v.weights.unwrap()[0] - 1.0).abs() < 1e-12);

        let t2 = fragment_to_ptm(&fragment_t2()).unwrap();
        assert!(
            !mixture_feasible(&t2, "P", &["P_q1", "P_q2", "P_q3"])
                .unwrap()
                .feasible
        );
        assert!(mixture_feasible(&t2, "P", &["P_q9"]).is_err());
        assert!(mixture_feasible(&t2, "X", &["P_q1"]).is_err());
    }

    #[test]
    fn mixture_agrees_with_simplex_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let idx = [0usize, 1, 2];
        for trial in 0..40 {
            let rows: Vec<([f64; 3], [f64; 3])> = (0..3)
                .map(|_| {
                    let q = random_sparse_density(&mut rng, 3, &idx, 0.7);
                    let a = random_sparse_density(&mut rng, 3, &idx, 0.7);
                    (
                        q.as_slice().try_into().unwrap(),
                        a.as_slice().try_into().unwrap(),
                    )
                })
                .collect();
            // even trials: a grid-point mixture; odd trials: a random row
            let p = if trial % 2 == 0 {
                let c = [rng.gen_range(0..=1000) as f64 / 1e3, 0.0, 0.0];
                let c1 = rng.gen_range(0..=(1000 - (c[0] * 1e3) as i32)) as f64 / 1e3;
                let c = [c[0], c1, 1.0 - c[0] - c1];
                let comb = |k: usize, j: usize| -> f64 {
                    (0..3)
                        .map(|i| c[i] * if k == 0 { rows[i].0[j] } else { rows[i].1[j] })
                        .sum()
                };
                (
                    [comb(0, 0), comb(0, 1), comb(0, 2)],
                    [comb(1, 0), comb(1, 1), comb(1, 2)],
                )
            } else {
                let q = random_sparse_density(&mut rng, 3, &idx, 0.7);
                let a = random_sparse_density(&mut rng, 3, &idx, 0.7);
                (
                    q.as_slice().try_into().unwrap(),
                    a.as_slice().try_into().unwrap(),
                )
            };
            let t = mixture_table(&[
                ("P", p.0, p.1),
                ("E1", rows[0].0, rows[0].1),
                ("E2", rows[1].0, rows[1].1),
                ("E3", rows[2].0, rows[2].1),
            ]);
            let v = mixture_feasible(&t, "P", &["E1", "E2", "E3"]).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..=1000 {
                for j in 0..=(1000 - i) {
                    let c = [i as f64 / 1e3, j as f64 / 1e3, (1000 - i - j) as f64 / 1e3];
                    let mut l1 = 0.0;
                    for k in 0..3 {
                        l1 += (p.0[k] - (0..3).map(|e| c[e] * rows[e].0[k]).sum::<f64>()).abs();
                        l1 += (p.1[k] - (0..3).map(|e| c[e] * rows[e].1[k]).sum::<f64>()).abs();
                    }
                    best = best.min(l1);
                }
            }
            // the LP optimum lower-bounds the grid and the grid is within
            // one step of it
            assert!(v.residual <= best + 1e-9);
            assert!(best - v.residual <= 6.0 * 1e-3 * 2.0);
            if trial % 2 == 0 {
                assert!(v.feasible);
            }
            if best > 0.02 {
                assert!(!v.feasible);
            }
        }
    }

    #[test]
    fn lemma1_examples() {
        let m = mixing_model(
            OnticSpace::with_labels(3, vec![0, 1, 2]).unwrap(),
            (0..3).map(|i| Density::point_mass(3, i)).collect(),
            &[0.2, 0.3, 0.5],
        )
        .unwrap();
        assert!(lemma1_check(&m, "P", "q1", &[1.0; 3], 1.0, 0.0).unwrap());
        assert!(lemma1_check(&m, "P", "q1", &[0.0; 3], 1.0, 0.0).unwrap());
        assert!(lemma1_check(&m, "P", "q1", &[1.0; 3], 0.1, 0.0).is_err());
        assert!(lemma1_check(&m, "P", "q1", &[2.0; 3], 1.0, 0.0).is_err());
        assert!(lemma1_check(&m, "P", "q1", &[1.0; 2], 1.0, 0.0).is_err());
    }

    #[test]
    fn lemma1_holds_at_beta_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let cfg = RandomModelConfig {
            eigen_count_per_outcome: 2,
            ..Default::default()
        };
        for seed in 0..300 {
            let m = random_model(seed, &cfg).unwrap();
            let g: Vec<f64> = (0..m.size()).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let alpha = rng.gen_range(0.0..5.0);
            let b = beta_min(&m, "P", "q1", alpha).unwrap();
            assert!(lemma1_check(&m, "P", "q1", &g, alpha, b).unwrap());
        }
    }

    /// Model on three Q-cells in which `P`, `T(P)`, `P_q1` and `T(P_q1)`
    /// are all eigenpreparation-supported and the three premises vanish.
    fn premise_free_model(seed: u64) -> OnticModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(6..12);
        let mut q_value: Vec<usize> = vec![0, 0, 1, 2];
        q_value.extend((4..n).map(|_| rng.gen_range(0..3)));
        let space = OnticSpace::with_labels(3, q_value.clone()).unwrap();
        let cells: Vec<Vec<usize>> = (0..3).map(|i| space.cell(i)).collect();
        // f_q1 lives on part of its cell; the q2 and q3 eigen densities
        // cover theirs
        let f_q1 = random_sparse_density(&mut rng, n, &cells[0], 0.6);
        let s1 = f_q1.support();
        let f_q2 = Density::normalized(
            (0..n)
                .map(|s| {
                    if q_value[s] == 1 {
                        rng.gen_range(0.1..1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap();
        let f_q3 = Density::normalized(
            (0..n)
                .map(|s| {
                    if q_value[s] == 2 {
                        rng.gen_range(0.1..1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap();
        // A never answers a2 on supp f_q1
        let a_rows: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                if s1.contains(&s) {
                    let x = rng.gen_range(0.0..1.0);
                    if rng.gen_bool(0.5) {
                        vec![1.0, 0.0, 0.0]
                    } else {
                        vec![x, 0.0, 1.0 - x]
                    }
                } else {
                    random_sparse_density(&mut rng, 3, &[0, 1, 2], 0.7).into_vec()
                }
            })
            .collect();
        // states where A can answer a3
        let no_a3: Vec<usize> = (0..n).filter(|&s| a_rows[s][2] == 0.0).collect();
        let allowed: Vec<usize> = s1
            .iter()
            .copied()
            .chain(cells[1].iter().copied())
            .filter(|s| no_a3.contains(s))
            .collect();
        let reachable: Vec<usize> = s1
            .iter()
            .copied()
            .chain(cells[1].iter().copied())
            .chain(cells[2].iter().copied())
            .collect();
        let kernel_rows: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                if s1.contains(&s) && !allowed.is_empty() {
                    random_sparse_density(&mut rng, n, &allowed, 0.6).into_vec()
                } else if s1.contains(&s) {
                    // nothing admissible: stay put, which A answers with a1
                    Density::point_mass(n, s).into_vec()
                } else {
                    random_sparse_density(&mut rng, n, &reachable, 0.5).into_vec()
                }
            })
            .collect();
        let p = random_sparse_density(&mut rng, n, &reachable, 0.5);
        let mut responses = BTreeMap::new();
        responses.insert(
            "A".to_string(),
            crate::ontic::ResponseFunction::new(
                vec!["a1".into(), "a2".into(), "a3".into()],
                a_rows,
            )
            .unwrap(),
        );
        let model = OnticModel::new(
            space,
            BTreeMap::from([
                ("q1".to_string(), vec![f_q1]),
                ("q2".to_string(), vec![f_q2]),
                ("q3".to_string(), vec![f_q3]),
            ]),
            BTreeMap::from([("P".to_string(), vec![p])]),
            BTreeMap::from([("T".to_string(), MarkovKernel::new(kernel_rows).unwrap())]),
            responses,
        )
        .unwrap();
        assert!(is_eigenpreparation_supported(&model));
        model
    }

    #[test]
    fn noiseless_bound_on_supported_models() {
        let mut checked = 0;
        for seed in 0..1000 {
            let m = premise_free_model(seed);
            let table = m.induced_table(&BOUND_PREPARATIONS).unwrap();
            if !theorem1_premises_hold(&table, 1e-12).unwrap() {
                continue;
            }
            checked += 1;
            assert!(gap(&table).unwrap() <= 1e-9, "seed {seed}");
        }
        assert!(checked > 800, "{checked}");
    }

    #[test]
    fn transformed_bound_holds_on_random_models() {
        let cfg = RandomModelConfig::default();
        for seed in 0..1000 {
            let m = random_model(seed, &cfg).unwrap();
            for alpha in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0] {
                let e = evaluate_theorem2(&m, alpha).unwrap();
                assert!(e.transformed_holds(1e-9), "seed {seed}: {e:?}");
            }
        }
    }

    #[test]
    fn stated_bound_counterexample() {
        // states: l1 (q1, a1), l1' (q1, a2), l2 (q2, a2), l3 (q3, a1)
        let space = OnticSpace::with_labels(3, vec![0, 0, 1, 2]).unwrap();
        let eig = BTreeMap::from([
            ("q1".to_string(), vec![Density::point_mass(4, 0)]),
            ("q2".to_string(), vec![Density::point_mass(4, 2)]),
            ("q3".to_string(), vec![Density::point_mass(4, 3)]),
        ]);
        let preps = BTreeMap::from([("P".to_string(), vec![Density::point_mass(4, 0)])]);
        let mut rows = vec![vec![0.0; 4]; 4];
        rows[0] = vec![0.0, 0.5, 0.5, 0.0];
        rows[1][1] = 1.0;
        rows[2][2] = 1.0;
        rows[3][3] = 1.0;
        let kernels = BTreeMap::from([("T".to_string(), MarkovKernel::new(rows).unwrap())]);
        let a = crate::ontic::ResponseFunction::new(
            vec!["a1".into(), "a2".into(), "a3".into()],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        let m = OnticModel::new(
            space,
            eig,
            preps,
            kernels,
            BTreeMap::from([("A".to_string(), a)]),
        )
        .unwrap();
        let e = evaluate_theorem2(&m, 1.0).unwrap();
        assert_eq!(e.beta, 0.0);
        assert!((e.gap - 0.5).abs() < 1e-15);
        assert_eq!(e.rhs, 0.0);
        assert!(!e.holds(1e-9));
        assert!(e.transformed_holds(1e-9));
    }
}
