//! Dense two-phase simplex for small linear programs
//! `maximize c.x  s.t.  A x (<=|>=|=) b,  x >= 0`.
//!
//! Pivoting follows Bland's rule, so degenerate problems terminate. Sizes
//! here are a few hundred columns at most; the tableau is kept dense.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
struct Constraint {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Result<Solution> {
        match self {
            LpOutcome::Optimal(s) => Ok(s),
            LpOutcome::Infeasible => Err(Error::Lp("infeasible".into())),
            LpOutcome::Unbounded => Err(Error::Lp("unbounded".into())),
        }
    }
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::maximize(objective.into_iter().map(|c| -c).collect())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width");
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    /// Solves the program. For a problem built with [`LinearProgram::minimize`]
    /// the reported value is the maximum of the negated objective.
    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    first_art: usize,
    width: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let normalized: Vec<Constraint> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    Constraint {
                        coeffs: c.coeffs.iter().map(|x| -x).collect(),
                        relation: match c.relation {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -c.rhs,
                    }
                } else {
                    c.clone()
                }
            })
            .collect();
        let n_slack = normalized
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let n_art = normalized
            .iter()
            .filter(|c| c.relation != Relation::Le)
            .count();
        let first_art = n + n_slack;
        let width = first_art + n_art;
        let mut rows = Vec::with_capacity(normalized.len());
        let mut basis = Vec::with_capacity(normalized.len());
        let (mut s, mut a) = (n, first_art);
        for c in &normalized {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(&c.coeffs);
            row[width] = c.rhs;
            match c.relation {
                Relation::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -1.0;
                    row[a] = 1.0;
                    basis.push(a);
                    s += 1;
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
            }
            rows.push(row);
        }
        Self {
            rows,
            basis,
            n,
            first_art,
            width,
        }
    }

    fn pivot(&mut self, r: usize, c: usize, cost: &mut [f64]) {
        let p = self.rows[r][c];
        for x in self.rows[r].iter_mut() {
            *x /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let k = row[c];
            if k != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= k * y;
                }
                row[c] = 0.0;
            }
        }
        let k = cost[c];
        if k != 0.0 {
            for (x, y) in cost.iter_mut().zip(&pivot_row) {
                *x -= k * y;
            }
            cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row for objective `c` over all columns; the last entry
    /// holds minus the current objective value.
    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let mut cost = vec![0.0; self.width + 1];
        cost[..c.len()].copy_from_slice(c);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost_of(c, b);
            if cb != 0.0 {
                for (x, y) in cost.iter_mut().zip(row) {
                    *x -= cb * y;
                }
            }
        }
        cost
    }

    /// Runs simplex iterations until optimal; `allowed` bounds the entering
    /// columns. Returns false when unbounded.
    fn iterate(&mut self, cost: &mut [f64], allowed: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..allowed).find(|&j| cost[j] > COST_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((j, best)) => {
                            if ratio < best - 1e-15
                                || ((ratio - best).abs() <= 1e-15 && self.basis[i] < self.basis[j])
                            {
                                Some((i, ratio))
                            } else {
                                Some((j, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter, cost),
            }
        }
        Err(Error::Lp("pivot limit reached".into()))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let scale = self
            .rows
            .iter()
            .map(|r| r[self.width].abs())
            .fold(1.0, f64::max);
        if self.first_art < self.width {
            let phase1: Vec<f64> = (0..self.width)
                .map(|j| if j >= self.first_art { -1.0 } else { 0.0 })
                .collect();
            let mut cost = self.reduced_costs(&phase1);
            self.iterate(&mut cost, self.width)?;
            let infeasibility: f64 = self
                .rows
                .iter()
                .zip(&self.basis)
                .filter(|(_, &b)| b >= self.first_art)
                .map(|(r, _)| r[self.width])
                .sum();
            if infeasibility > 1e-9 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // drive zero-level artificials out; drop rows that are redundant
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.first_art {
                    let col = (0..self.first_art).find(|&j| self.rows[r][j].abs() > 1e-9);
                    match col {
                        Some(j) => self.pivot(r, j, &mut cost),
                        None => {
                            self.rows.remove(r);
                            self.basis.remove(r);
                            continue;
                        }
                    }
                }
                r += 1;
            }
        }
        let mut cost = self.reduced_costs(&lp.objective);
        if !self.iterate(&mut cost, self.first_art)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n {
                x[b] = row[self.width].max(0.0);
            }
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal(Solution { value, x }))
    }
}

fn cost_of(c: &[f64], j: usize) -> f64 {
    c.get(j).copied().unwrap_or(0.0)
}
