//! (alpha, beta)-support of preparations on Q-cells.
//!
//! A preparation `P` is (alpha, beta)-supported on `Lambda_q` when every
//! density `f_P` of `P` satisfies
//! `sup_{f_q} omega(f_P, alpha f_q) + beta >= P(q | Q, P)`,
//! the supremum running over the convex hull of the eigen densities of `q`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::ontic::{Density, OnticModel};
use crate::overlap::symmetric_overlap;
use crate::ptm::roles;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AbPair {
    pub alpha: f64,
    pub beta: f64,
}

impl AbPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::NegativeAlpha(alpha));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Precondition(format!("beta {beta} outside [0, 1]")));
        }
        Ok(Self { alpha, beta })
    }
}

/// `max over mixtures c of omega(f_P, alpha sum_i c_i f_i)`.
///
/// With several generators this is the linear program
/// `max sum m` s.t. `m <= f_P`, `m <= alpha sum c_i f_i`, `c >= 0`,
/// `sum c = 1`.
pub fn sup_overlap(f_p: &Density, generators: &[Density], alpha: f64) -> Result<f64> {
    if generators.is_empty() {
        return Err(Error::EmptyGenerators);
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::NegativeAlpha(alpha));
    }
    let n = f_p.len();
    if let Some(g) = generators.iter().find(|g| g.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.len(),
        });
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let scaled = |g: &Density| -> Vec<f64> { g.as_slice().iter().map(|x| alpha * x).collect() };
    if generators.len() == 1 {
        return symmetric_overlap(f_p.as_slice(), &scaled(&generators[0]));
    }
    // only states where f_P > 0 can contribute
    let states: Vec<usize> = (0..n).filter(|&s| f_p.as_slice()[s] > 0.0).collect();
    let k = generators.len();
    let width = states.len() + k;
    let mut objective = vec![0.0; width];
    objective[..states.len()].fill(1.0);
    let mut lp = LinearProgram::maximize(objective);
    for (i, &s) in states.iter().enumerate() {
        let mut row = vec![0.0; width];
        row[i] = 1.0;
        lp.constrain(row, Relation::Le, f_p.as_slice()[s]);
        let mut row = vec![0.0; width];
        row[i] = 1.0;
        for (j, g) in generators.iter().enumerate() {
            row[states.len() + j] = -alpha * g.as_slice()[s];
        }
        lp.constrain(row, Relation::Le, 0.0);
    }
    let mut simplex_row = vec![0.0; width];
    simplex_row[states.len()..].fill(1.0);
    lp.constrain(simplex_row, Relation::Eq, 1.0);
    let lp_value = lp.solve()?.optimal()?.value;
    // the hull contains every vertex, so never report less than the best one
    let vertex_best = generators
        .iter()
        .map(|g| symmetric_overlap(f_p.as_slice(), &scaled(g)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(lp_value.max(vertex_best))
}

/// Smallest beta for which preparation `prep` is (alpha, beta)-supported on
/// `Lambda_q`, taking the worst density of the preparation.
pub fn beta_min(model: &OnticModel, prep: &str, q: &str, alpha: f64) -> Result<f64> {
    let cell = model.space().partition_indicator(q)?;
    let gens = model.eigen_generators(q)?;
    let mut worst = 0.0f64;
    for f_p in model.preparation(prep)? {
        let p_q = f_p.mass_on(&cell);
        let slack = p_q - sup_overlap(f_p, gens, alpha)?;
        worst = worst.max(slack);
    }
    Ok(worst.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub prep: String,
    pub q: String,
    pub beta_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportVerdict {
    pub alpha: f64,
    pub beta: f64,
    pub supported: bool,
    /// The preparation/outcome pair with the largest `beta_min`.
    pub witness: Option<Witness>,
}

/// Checks (alpha, beta)-support for every preparation and every Q-outcome.
pub fn support_verdict(model: &OnticModel, alpha: f64, beta: f64) -> Result<SupportVerdict> {
    let pair = AbPair::new(alpha, beta)?;
    let mut witness: Option<Witness> = None;
    for prep in model.prep_densities().keys() {
        for q in &model.space().outcomes {
            let b = beta_min(model, prep, q, pair.alpha)?;
            if witness.as_ref().is_none_or(|w| b > w.beta_min) {
                witness = Some(Witness {
                    prep: prep.clone(),
                    q: q.clone(),
                    beta_min: b,
                });
            }
        }
    }
    let supported = witness.as_ref().is_none_or(|w| pair.beta >= w.beta_min);
    Ok(SupportVerdict {
        alpha: pair.alpha,
        beta: pair.beta,
        supported,
        witness,
    })
}

pub fn is_ab_supported(model: &OnticModel, alpha: f64, beta: f64) -> Result<bool> {
    Ok(support_verdict(model, alpha, beta)?.supported)
}

/// `(alpha, sup_overlap)` samples along a sorted nonnegative grid.
pub fn model_support_curve(
    model: &OnticModel,
    prep: &str,
    q: &str,
    alpha_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if alpha_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("alpha grid must be sorted".into()));
    }
    let gens = model.eigen_generators(q)?;
    let densities = model.preparation(prep)?;
    alpha_grid
        .iter()
        .map(|&alpha| {
            let mut worst = f64::INFINITY;
            for f_p in densities {
                worst = worst.min(sup_overlap(f_p, gens, alpha)?);
            }
            Ok((alpha, worst))
        })
        .collect()
}

/// Every state charged by a preparation density is charged by some eigen
/// density.
pub fn is_eigenpreparation_supported(model: &OnticModel) -> bool {
    let n = model.size();
    let mut covered = vec![false; n];
    for d in model.eigen_densities().values().flatten() {
        for (c, &x) in covered.iter_mut().zip(d.as_slice()) {
            *c |= x > 0.0;
        }
    }
    model.prep_densities().values().flatten().all(|d| {
        d.as_slice()
            .iter()
            .zip(&covered)
            .all(|(&x, &c)| x <= 0.0 || c)
    })
}

/// Same check for the single preparation `P` on `Lambda_q1`, used by the
/// bounds module.
pub fn beta_min_q1(model: &OnticModel, alpha: f64) -> Result<f64> {
    beta_min(model, roles::P, roles::Q_OUTCOMES[0], alpha)
}
