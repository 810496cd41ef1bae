//! Maximization of the gap over real qutrit fragments whose premises vanish
//! by construction.
//!
//! Parameters are six angles `[t, s, u, w, theta, phi]`:
//! `U q1 = (cos t, sin t, 0)`, `s` rotates the second column of `U` about
//! the first, `a2 = (0, cos u, sin u)`, `a3` is the unit vector orthogonal
//! to `U q1` and `a2` (with `w` choosing it when those two coincide),
//! `a1 = a2 x a3`, and `psi` has polar angles `(theta, phi)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fragment::{ComplexMatrix, ComplexVector, QuantumFragment};

pub const REAL_PARAMS: usize = 6;
/// Real parameters plus two relative phases on `psi`.
pub const COMPLEX_PARAMS: usize = 8;

const DEGENERATE_CROSS: f64 = 1e-9;

type V3 = [f64; 3];

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: V3, k: f64) -> V3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

/// Real geometry of a decoded parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealFragment {
    /// Columns of `U`.
    pub u_cols: [V3; 3],
    pub a: [V3; 3],
    pub psi: V3,
}

impl RealFragment {
    fn u_apply(&self, v: V3) -> V3 {
        let [c1, c2, c3] = self.u_cols;
        add(add(scale(c1, v[0]), scale(c2, v[1])), scale(c3, v[2]))
    }
}

pub fn decode_real(p: &[f64]) -> RealFragment {
    assert!(p.len() >= REAL_PARAMS, "need {REAL_PARAMS} angles");
    let (t, s, u, w, theta, phi) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let c1 = [t.cos(), t.sin(), 0.0];
    let c2 = add(
        scale([-t.sin(), t.cos(), 0.0], s.cos()),
        scale([0.0, 0.0, 1.0], s.sin()),
    );
    let c3 = cross(c1, c2);
    let a2 = [0.0, u.cos(), u.sin()];
    let x = cross(c1, a2);
    let nx = norm(x);
    let a3 = if nx > DEGENERATE_CROSS {
        scale(x, 1.0 / nx)
    } else {
        add(
            scale([1.0, 0.0, 0.0], w.cos()),
            scale(cross(a2, [1.0, 0.0, 0.0]), w.sin()),
        )
    };
    let a1 = cross(a2, a3);
    let psi = [
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    ];
    RealFragment {
        u_cols: [c1, c2, c3],
        a: [a1, a2, a3],
        psi,
    }
}

/// Decodes 6 angles to a real fragment, or 8 to one whose `psi` carries
/// phases `exp(i p[6])` and `exp(i p[7])` on its second and third entries.
pub fn decode(params: &[f64]) -> QuantumFragment {
    assert!(
        params.len() == REAL_PARAMS || params.len() == COMPLEX_PARAMS,
        "expected {REAL_PARAMS} or {COMPLEX_PARAMS} angles, got {}",
        params.len()
    );
    let r = decode_real(params);
    let mut psi: Vec<Complex64> = r.psi.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    if params.len() == COMPLEX_PARAMS {
        psi[1] *= Complex64::from_polar(1.0, params[6]);
        psi[2] *= Complex64::from_polar(1.0, params[7]);
    }
    let u_cols: Vec<ComplexVector> = r.u_cols.iter().map(|c| ComplexVector::real(c)).collect();
    QuantumFragment {
        dim: 3,
        q_basis: (0..3).map(|i| ComplexVector::basis(3, i)).collect(),
        a_basis: r.a.iter().map(|a| ComplexVector::real(a)).collect(),
        unitary: ComplexMatrix::from_columns(&u_cols).expect("3x3"),
        psi: ComplexVector::new(psi),
        eigenprep_index: 0,
    }
}

/// Gap of the decoded fragment, evaluated directly on the amplitudes.
pub fn objective(params: &[f64]) -> f64 {
    let r = decode_real(params);
    if params.len() == COMPLEX_PARAMS {
        // U and the bases are real: split U psi into real and imaginary parts
        let ph1 = Complex64::from_polar(1.0, params[6]);
        let ph2 = Complex64::from_polar(1.0, params[7]);
        let re = [r.psi[0], r.psi[1] * ph1.re, r.psi[2] * ph2.re];
        let im = [0.0, r.psi[1] * ph1.im, r.psi[2] * ph2.im];
        let (ur, ui) = (r.u_apply(re), r.u_apply(im));
        let p_a1 = dot(r.a[0], ur).powi(2) + dot(r.a[0], ui).powi(2);
        return r.psi[0].powi(2) - (ur[1].powi(2) + ui[1].powi(2)) - p_a1;
    }
    let up = r.u_apply(r.psi);
    r.psi[0].powi(2) - up[1].powi(2) - dot(r.a[0], up).powi(2)
}

/// Parameters reproducing the fragment with gap `(10 sqrt 3 - 7) / 48`, up
/// to signs of basis vectors.
pub fn reference_t2_params() -> [f64; REAL_PARAMS] {
    use std::f64::consts::PI;
    [
        PI / 4.0,
        0.0,
        PI / 4.0,
        0.0,
        3.0 * PI / 4.0,
        11.0 * PI / 12.0,
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.3,
            max_evals: 4000,
            f_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOptimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Nelder-Mead maximization of `f` from `x0`.
pub fn nelder_mead_max<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> LocalOptimum {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        -f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let centroid = |s: &[(Vec<f64>, f64)]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        for (x, _) in &s[..n] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / n as f64;
            }
        }
        c
    };
    let along = |c: &[f64], x: &[f64], k: f64| -> Vec<f64> {
        c.iter().zip(x).map(|(ci, xi)| ci + k * (xi - ci)).collect()
    };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 <= opts.f_tol || evals.get() >= opts.max_evals {
            break;
        }
        let c = centroid(&simplex);
        let worst = simplex[n].clone();
        let xr = along(&c, &worst.0, -1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(&c, &worst.0, -2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(&c, &xr, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(&c, &worst.0, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x = along(&best, &entry.0, 0.5);
                    let v = eval(&x);
                    *entry = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    LocalOptimum {
        x,
        value: -v,
        evals: evals.get(),
    }
}

const HALTON_BASES: [u64; COMPLEX_PARAMS] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Start points in `[0, pi)^dim`: a Halton sequence under a random shift
/// drawn from `seed`.
pub fn restart_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= HALTON_BASES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    (radical_inverse(i as u64 + 1, HALTON_BASES[d]) + shift[d]).fract()
                        * std::f64::consts::PI
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub per_restart_values: Vec<f64>,
}

/// Runs one local search per start in parallel and keeps the best (first
/// index on ties).
pub fn maximize_gap_from(starts: &[Vec<f64>]) -> SearchResult {
    assert!(!starts.is_empty(), "at least one start");
    let opts = NelderMeadOptions::default();
    let runs: Vec<LocalOptimum> = starts
        .par_iter()
        .map(|x0| {
            // two passes: the second restarts the simplex at the first optimum
            let first = nelder_mead_max(objective, x0, &opts);
            let second = nelder_mead_max(
                objective,
                &first.x,
                &NelderMeadOptions {
                    initial_step: 0.05,
                    ..opts.clone()
                },
            );
            if second.value >= first.value {
                second
            } else {
                first
            }
        })
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value > runs[best].value {
            best = i;
        }
    }
    SearchResult {
        best_params: runs[best].x.clone(),
        best_value: runs[best].value,
        per_restart_values: runs.iter().map(|r| r.value).collect(),
    }
}

pub fn maximize_gap(restarts: usize, seed: u64) -> SearchResult {
    maximize_gap_with(restarts, seed, false)
}

/// With `complex` set, `psi` also carries two free phases.
pub fn maximize_gap_with(restarts: usize, seed: u64, complex: bool) -> SearchResult {
    assert!(restarts >= 1, "at least one restart");
    let dim = if complex { COMPLEX_PARAMS } else { REAL_PARAMS };
    maximize_gap_from(&restart_points(restarts, dim, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub value: f64,
    pub params: Vec<f64>,
    pub points: usize,
}

/// Exhaustive objective on `{k pi / resolution}` for the five generic
/// angles (`w` is fixed at 0; it only matters on a null set).
pub fn grid_floor_check(resolution: usize) -> GridResult {
    assert!(resolution >= 2, "resolution must be at least 2");
    let step = std::f64::consts::PI / resolution as f64;
    let r = resolution;
    let points = r.pow(5);
    let (value, index) = (0..r)
        .into_par_iter()
        .map(|i0| {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            let mut p = [i0 as f64 * step, 0.0, 0.0, 0.0, 0.0, 0.0];
            for i1 in 0..r {
                p[1] = i1 as f64 * step;
                for i2 in 0..r {
                    p[2] = i2 as f64 * step;
                    for i4 in 0..r {
                        p[4] = i4 as f64 * step;
                        for i5 in 0..r {
                            p[5] = i5 as f64 * step;
                            let v = objective(&p);
                            if v > best.0 {
                                best = (v, (((i0 * r + i1) * r + i2) * r + i4) * r + i5);
                            }
                        }
                    }
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let mut digits = [0usize; 5];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = rest % r;
        rest /= r;
    }
    let params = vec![
        digits[0] as f64 * step,
        digits[1] as f64 * step,
        digits[2] as f64 * step,
        0.0,
        digits[3] as f64 * step,
        digits[4] as f64 * step,
    ];
    GridResult {
        value,
        params,
        points,
    }
}
