//! Qutrit fragments: two orthonormal bases (the macro-observable `Q` and a
//! second observable `A`), one unitary transformation and one pure
//! preparation, with Born-rule probabilities.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptm::{roles, PtmTable};

/// Tolerance for closed-form checks on fragment invariants.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn real(entries: &[f64]) -> Self {
        Self(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Standard basis vector `e_index` in `dim` dimensions.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[index] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(Complex64::norm_sqr).sum()
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(self.0.iter().map(|z| z * k).collect())
    }
}

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Complex64>>", into = "Vec<Vec<Complex64>>")]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl TryFrom<Vec<Vec<Complex64>>> for ComplexMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ComplexMatrix> for Vec<Vec<Complex64>> {
    fn from(m: ComplexMatrix) -> Self {
        m.entries.chunks(m.dim.max(1)).map(<[_]>::to_vec).collect()
    }
}

impl ComplexMatrix {
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self {
            dim,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[ComplexVector]) -> Result<Self> {
        let dim = cols.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (j, c) in cols.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
            for (i, z) in c.entries().iter().enumerate() {
                entries[i * dim + j] = *z;
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn mul_vec(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        Ok(ComplexVector(
            self.entries
                .chunks(self.dim)
                .map(|row| row.iter().zip(v.entries()).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    /// Largest entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += self.get(k, i).conj() * self.get(k, j);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).norm());
            }
        }
        worst
    }
}

/// `|<basis_vector|state>|^2`, clamped to `[0, 1]`.
pub fn born_probability(state: &ComplexVector, basis_vector: &ComplexVector) -> Result<f64> {
    let amp = basis_vector.inner(state)?;
    Ok(amp.norm_sqr().clamp(0.0, 1.0))
}

pub fn apply_unitary(u: &ComplexMatrix, state: &ComplexVector) -> Result<ComplexVector> {
    u.mul_vec(state)
}

/// Random unitary from Gram-Schmidt orthonormalization of a matrix with
/// independent uniform entries in the unit square.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexMatrix {
    loop {
        let mut cols: Vec<ComplexVector> = Vec::with_capacity(dim);
        let mut degenerate = false;
        for _ in 0..dim {
            let mut v = ComplexVector(
                (0..dim)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect(),
            );
            // two passes keep the columns orthogonal to machine precision
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.inner(&v).expect("same dim");
                    for (x, y) in v.0.iter_mut().zip(&c.0) {
                        *x -= proj * y;
                    }
                }
            }
            let n = v.norm_sqr().sqrt();
            if n < 1e-6 {
                degenerate = true;
                break;
            }
            cols.push(v.scale(1.0 / n));
        }
        if !degenerate {
            return ComplexMatrix::from_columns(&cols).expect("square by construction");
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumFragment {
    pub dim: usize,
    pub q_basis: Vec<ComplexVector>,
    pub a_basis: Vec<ComplexVector>,
    pub unitary: ComplexMatrix,
    pub psi: ComplexVector,
    /// Zero-based index of the Q-outcome whose eigenpreparation is tracked
    /// (the eigenpreparation is the basis vector itself).
    pub eigenprep_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: impl Into<String>, magnitude: f64) {
        self.violations.push(Violation {
            invariant: invariant.into(),
            magnitude,
        });
    }
}

fn orthonormality_defect(basis: &[ComplexVector]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((u.inner(v)? - target).norm());
        }
    }
    Ok(worst)
}

pub fn validate_fragment(frag: &QuantumFragment, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = frag.dim;
    let dims_ok = frag.q_basis.len() == d
        && frag.a_basis.len() == d
        && frag
            .q_basis
            .iter()
            .chain(&frag.a_basis)
            .all(|v| v.dim() == d)
        && frag.unitary.dim() == d
        && frag.psi.dim() == d;
    if !dims_ok {
        report.push("dimensions", f64::INFINITY);
        return report;
    }
    if frag.eigenprep_index >= d {
        report.push("eigenprep_index", frag.eigenprep_index as f64);
    }
    for (name, basis) in [
        ("q_basis orthonormal", &frag.q_basis),
        ("a_basis orthonormal", &frag.a_basis),
    ] {
        let defect = orthonormality_defect(basis).expect("dims checked");
        if defect > tol {
            report.push(name, defect);
        }
    }
    let u = frag.unitary.unitarity_defect();
    if u > tol {
        report.push("unitary", u);
    }
    let n = (frag.psi.norm_sqr() - 1.0).abs();
    if n > tol {
        report.push("psi normalized", n);
    }
    report
}

impl QuantumFragment {
    /// Invariants checked at [`CLOSED_FORM_TOL`].
    pub fn validate(&self) -> ValidationReport {
        validate_fragment(self, CLOSED_FORM_TOL)
    }

    pub fn transformed_psi(&self) -> Result<ComplexVector> {
        apply_unitary(&self.unitary, &self.psi)
    }

    pub fn eigenprep(&self) -> &ComplexVector {
        &self.q_basis[self.eigenprep_index]
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn paper_bases() -> (Vec<ComplexVector>, Vec<ComplexVector>) {
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    let q = (0..3).map(|i| ComplexVector::basis(3, i)).collect();
    let a = vec![
        ComplexVector::real(&[2.0 / s6, 1.0 / s6, -1.0 / s6]),
        ComplexVector::real(&[0.0, 1.0 / s2, 1.0 / s2]),
        ComplexVector::real(&[-1.0 / s3, 1.0 / s3, -1.0 / s3]),
    ];
    (q, a)
}

/// Fragment with exactly vanishing premises and `P(q1|Q,P) = 1/10` while
/// `P(q2|Q,T,P) = P(a1|A,T,P) = 0`.
pub fn fragment_t1() -> QuantumFragment {
    let (q_basis, a_basis) = paper_bases();
    let h = 2f64.sqrt() / 2.0;
    let s10 = 10f64.sqrt();
    QuantumFragment {
        dim: 3,
        q_basis,
        a_basis,
        unitary: ComplexMatrix::from_real_rows(&[
            vec![h, h, 0.0],
            vec![h, -h, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .expect("3x3"),
        psi: ComplexVector::real(&[1.0 / s10, 1.0 / s10, 2.0 * 2f64.sqrt() / s10]),
        eigenprep_index: 0,
    }
}

/// Fragment with gap `(10 sqrt 3 - 7) / 48`, close to the real-amplitude
/// optimum.
pub fn fragment_t2() -> QuantumFragment {
    let (q_basis, a_basis) = paper_bases();
    let h = 2f64.sqrt() / 2.0;
    let s3 = 3f64.sqrt();
    QuantumFragment {
        dim: 3,
        q_basis,
        a_basis,
        unitary: ComplexMatrix::from_real_rows(&[
            vec![h, -h, 0.0],
            vec![h, h, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .expect("3x3"),
        psi: ComplexVector::real(&[(1.0 + s3) / 4.0, (1.0 - s3) / 4.0, 2f64.sqrt() / 2.0]),
        eigenprep_index: 0,
    }
}

/// Born-rule table over measurements `Q` and `A` for the preparations
/// `P`, `T(P)`, every eigenpreparation `P_qi`, and `T(P_q)` for the tracked
/// eigenpreparation.
pub fn fragment_to_ptm(frag: &QuantumFragment) -> Result<PtmTable> {
    let report = frag.validate();
    if !report.is_empty() {
        let msg = report
            .violations
            .iter()
            .map(|v| format!("{} ({:e})", v.invariant, v.magnitude))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::InvalidFragment(msg));
    }
    let d = frag.dim;
    let q_labels: Vec<String> = (1..=d).map(|i| format!("q{i}")).collect();
    let a_labels: Vec<String> = (1..=d).map(|i| format!("a{i}")).collect();
    let mut table = PtmTable::new();
    table.add_measurement(roles::Q, q_labels.iter().map(String::as_str));
    table.add_measurement(roles::A, a_labels.iter().map(String::as_str));

    let tracked = &q_labels[frag.eigenprep_index];
    let mut preps: Vec<(String, ComplexVector)> = vec![
        (roles::P.to_string(), frag.psi.clone()),
        (
            format!("{}({})", roles::T, roles::P),
            frag.transformed_psi()?,
        ),
    ];
    for (i, q) in frag.q_basis.iter().enumerate() {
        preps.push((roles::eigenprep(&q_labels[i]), q.clone()));
    }
    preps.push((
        format!("{}({})", roles::T, roles::eigenprep(tracked)),
        apply_unitary(&frag.unitary, frag.eigenprep())?,
    ));

    for (label, state) in &preps {
        for (m, basis) in [(roles::Q, &frag.q_basis), (roles::A, &frag.a_basis)] {
            let probs = basis
                .iter()
                .map(|b| born_probability(state, b))
                .collect::<Result<Vec<_>>>()?;
            table.insert(m, label, probs)?;
        }
    }
    Ok(table)
}
