//! Overlap functionals on nonnegative mass vectors and the exact support
//! curve `alpha -> omega(f_P, alpha f_q)`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Ratios closer than this are merged into one breakpoint.
pub const RATIO_DEDUP_TOL: f64 = 1e-14;

fn same_len(f: &[f64], g: &[f64]) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            found: g.len(),
        });
    }
    Ok(())
}

/// `omega(f, g) = sum min(f, g)`; inputs need not be normalized.
pub fn symmetric_overlap(f: &[f64], g: &[f64]) -> Result<f64> {
    same_len(f, g)?;
    Ok(f.iter().zip(g).map(|(a, b)| a.min(*b)).sum())
}

/// `f_mu`-mass of the strict support of `f_nu`.
pub fn asymmetric_overlap(f_nu: &[f64], f_mu: &[f64]) -> Result<f64> {
    same_len(f_nu, f_mu)?;
    Ok(f_nu
        .iter()
        .zip(f_mu)
        .filter(|(nu, _)| **nu > 0.0)
        .map(|(_, mu)| mu)
        .sum())
}

/// Half the L1 distance.
pub fn total_variation(f: &[f64], g: &[f64]) -> Result<f64> {
    same_len(f, g)?;
    Ok(0.5 * f.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// The three finite-space forms of the symmetric overlap of two densities:
/// the pointwise-minimum integral, one minus the largest set-wise excess of
/// `f` over `g` (attained on `{f > g}`), and one minus the total variation.
pub fn total_variation_identity_check(f: &[f64], g: &[f64]) -> Result<(f64, f64, f64)> {
    let omega = symmetric_overlap(f, g)?;
    let sup_excess: f64 = f.iter().zip(g).map(|(a, b)| (a - b).max(0.0)).sum();
    Ok((omega, 1.0 - sup_excess, 1.0 - total_variation(f, g)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Breakpoint {
    pub alpha: f64,
    pub value: f64,
}

/// Concave nondecreasing piecewise-linear curve with breakpoints starting
/// at `(0, 0)`; constant at `asymptote` past the last breakpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportCurve {
    breakpoints: Vec<Breakpoint>,
    asymptote: f64,
    /// Mass of `f_P` on states where `f_q` vanishes; never reached by any
    /// finite scaling.
    unreachable_mass: f64,
}

impl SupportCurve {
    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn asymptote(&self) -> f64 {
        self.asymptote
    }

    pub fn unreachable_mass(&self) -> f64 {
        self.unreachable_mass
    }

    pub fn last_alpha(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.alpha)
    }

    pub fn eval(&self, alpha: f64) -> Result<f64> {
        curve_eval(self, alpha)
    }

    /// Slopes of the linear pieces, in order.
    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].value - w[0].value) / (w[1].alpha - w[0].alpha))
            .collect()
    }

    /// `alpha,omega` rows: the breakpoints, then one row past the last
    /// breakpoint carrying the asymptote (at twice its alpha, or at 1 for a
    /// curve whose only breakpoint is the origin).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,omega\n");
        for b in &self.breakpoints {
            let _ = writeln!(out, "{},{}", fmt_f64(b.alpha), fmt_f64(b.value));
        }
        let tail = if self.last_alpha() > 0.0 {
            2.0 * self.last_alpha()
        } else {
            1.0
        };
        let _ = writeln!(out, "{},{}", fmt_f64(tail), fmt_f64(self.asymptote));
        out
    }
}

/// Round-trip float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Exact support curve of `alpha -> sum min(f_P, alpha f_q)`.
///
/// Each state with `f_q > 0` contributes `alpha f_q` until
/// `alpha = f_P / f_q` and `f_P` afterwards, so the breakpoints are the
/// distinct ratios.
pub fn support_curve(f_p: &[f64], f_q: &[f64]) -> Result<SupportCurve> {
    same_len(f_p, f_q)?;
    let mut ratios: Vec<f64> = f_p
        .iter()
        .zip(f_q)
        .filter(|(_, q)| **q > 0.0)
        .map(|(p, q)| p / q)
        .filter(|r| *r > 0.0)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let mut alphas: Vec<f64> = vec![0.0];
    for r in ratios {
        if r - alphas.last().expect("nonempty") > RATIO_DEDUP_TOL {
            alphas.push(r);
        }
    }
    let breakpoints = alphas
        .iter()
        .map(|&alpha| Breakpoint {
            alpha,
            value: omega_at(f_p, f_q, alpha),
        })
        .collect::<Vec<_>>();
    let asymptote = asymmetric_overlap(f_q, f_p)?;
    let unreachable_mass = f_p
        .iter()
        .zip(f_q)
        .filter(|(_, q)| **q <= 0.0)
        .map(|(p, _)| p)
        .sum();
    let mut curve = SupportCurve {
        breakpoints,
        asymptote,
        unreachable_mass,
    };
    // the last breakpoint saturates every reachable state
    if curve.breakpoints.len() > 1 {
        if let Some(last) = curve.breakpoints.last_mut() {
            last.value = asymptote;
        }
    }
    Ok(curve)
}

fn omega_at(f_p: &[f64], f_q: &[f64], alpha: f64) -> f64 {
    f_p.iter().zip(f_q).map(|(p, q)| p.min(alpha * q)).sum()
}

pub fn curve_eval(curve: &SupportCurve, alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::NegativeAlpha(alpha));
    }
    let bps = &curve.breakpoints;
    if alpha >= curve.last_alpha() {
        return Ok(curve.asymptote);
    }
    let i = bps.partition_point(|b| b.alpha <= alpha);
    let (lo, hi) = (bps[i - 1], bps[i]);
    let t = (alpha - lo.alpha) / (hi.alpha - lo.alpha);
    Ok(lo.value + t * (hi.value - lo.value))
}
