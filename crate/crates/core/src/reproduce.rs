//! Recomputes the headline numbers of the two reference fragments and the
//! search, and compares them with expected values.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    em_ruled_out, gap, worst_case_epsilon_frequencies, ExperimentFrequencies, Premises,
};
use crate::error::Result;
use crate::fragment::{fragment_t1, fragment_t2, fragment_to_ptm};
use crate::ptm::roles;
use crate::search::maximize_gap;

/// Expected values; any field may be overridden from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceValues {
    pub t1_q1: f64,
    pub t2_gap: f64,
    /// Entries of `U psi` for the second fragment.
    pub t2_u_psi: [f64; 3],
    pub exact_tol: f64,
    pub search_value: f64,
    pub search_lower: f64,
    pub search_upper: f64,
    pub search_restarts: usize,
    pub epsilon: f64,
    pub epsilon_tol: f64,
    pub epsilon_residual_tol: f64,
    /// Noise level beyond the threshold used for the adversarial check.
    pub adversarial_eps: f64,
}

impl Default for ReferenceValues {
    fn default() -> Self {
        let s3 = 3f64.sqrt();
        let k = 2f64.sqrt() / 4.0;
        Self {
            t1_q1: 0.1,
            t2_gap: (10.0 * s3 - 7.0) / 48.0,
            t2_u_psi: [k * s3, k, 2.0 * k],
            exact_tol: 1e-12,
            search_value: 0.236,
            search_lower: 0.231,
            search_upper: 0.2365,
            search_restarts: 64,
            epsilon: 0.0506,
            epsilon_tol: 5e-4,
            epsilon_residual_tol: 1e-10,
            adversarial_eps: 0.06,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub expected: f64,
    pub computed: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Row {
    fn within(name: &str, expected: f64, computed: f64, tol: f64) -> Self {
        Self::band(name, expected, computed, expected - tol, expected + tol)
    }

    fn band(name: &str, expected: f64, computed: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            expected,
            computed,
            lower,
            upper,
            pass: (lower..=upper).contains(&computed),
        }
    }

    fn flag(name: &str, expected: bool, computed: bool) -> Self {
        let e = f64::from(u8::from(expected));
        Self {
            name: name.to_string(),
            expected: e,
            computed: f64::from(u8::from(computed)),
            lower: e,
            upper: e,
            pass: expected == computed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reproduction {
    pub rows: Vec<Row>,
    pub search_skipped: bool,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&Row> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<28} {:>22} {:>22} {:>6}\n",
            "check", "expected", "computed", "status"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>22.12} {:>22.12} {:>6}\n",
                r.name,
                r.expected,
                r.computed,
                if r.pass { "ok" } else { "FAIL" }
            ));
        }
        if self.search_skipped {
            out.push_str("search skipped\n");
        }
        out
    }
}

/// Runs every check; `fast` skips the search.
pub fn reproduce(reference: &ReferenceValues, fast: bool, seed: u64) -> Result<Reproduction> {
    let tol = reference.exact_tol;
    let mut rows = Vec::new();

    let t1 = fragment_to_ptm(&fragment_t1())?;
    rows.push(Row::within(
        "t1 P(q1|Q,P)",
        reference.t1_q1,
        t1.prob(roles::Q, roles::P, "q1")?,
        tol,
    ));
    rows.push(Row::band(
        "t1 P(q2|Q,T,P)",
        0.0,
        t1.prob(roles::Q, roles::T_P, "q2")?,
        0.0,
        tol,
    ));
    rows.push(Row::band(
        "t1 P(a1|A,T,P)",
        0.0,
        t1.prob(roles::A, roles::T_P, "a1")?,
        0.0,
        tol,
    ));
    rows.push(Row::band(
        "t1 premise max",
        0.0,
        Premises::from_table(&t1)?.max(),
        0.0,
        tol,
    ));

    let frag2 = fragment_t2();
    let t2 = fragment_to_ptm(&frag2)?;
    rows.push(Row::within("t2 gap", reference.t2_gap, gap(&t2)?, tol));
    rows.push(Row::band(
        "t2 premise max",
        0.0,
        Premises::from_table(&t2)?.max(),
        0.0,
        tol,
    ));
    let u_psi = frag2.transformed_psi()?;
    for (i, (z, e)) in u_psi.entries().iter().zip(reference.t2_u_psi).enumerate() {
        // entries are real; any imaginary part counts against the match
        let computed = if z.im.abs() > tol { f64::NAN } else { z.re };
        rows.push(Row::within(&format!("t2 U psi[{i}]"), e, computed, tol));
    }

    let search_skipped = fast;
    if !fast {
        let s = maximize_gap(reference.search_restarts, seed);
        rows.push(Row::band(
            "search best gap",
            reference.search_value,
            s.best_value,
            reference.search_lower,
            reference.search_upper,
        ));
    }

    let freqs = ExperimentFrequencies::from_table(&t2)?;
    let eps = worst_case_epsilon_frequencies(&freqs)?;
    rows.push(Row::within(
        "noise threshold",
        reference.epsilon,
        eps.epsilon,
        reference.epsilon_tol,
    ));
    rows.push(Row::band(
        "noise threshold residual",
        0.0,
        eps.residual.abs(),
        0.0,
        reference.epsilon_residual_tol,
    ));
    rows.push(Row::flag(
        "mixing excluded (exact)",
        true,
        em_ruled_out(&freqs),
    ));
    let noisy = freqs.adversarial(reference.adversarial_eps)?;
    rows.push(Row::flag(
        "mixing excluded (noisy)",
        false,
        em_ruled_out(&noisy),
    ));

    Ok(Reproduction {
        rows,
        search_skipped,
    })
}
