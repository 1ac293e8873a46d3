//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min c·x` subject to `A x = b`, `x >= 0`. Sizes here are tiny
//! (tens of rows), so a dense tableau is the simplest exact-enough tool.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Outcome of [`minimize`]. Unbounded programs are reported as errors.
#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Phase 1 ended with the given positive artificial mass.
    Infeasible(f64),
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            self.obj
                .iter_mut()
                .zip(&pivot_row)
                .for_each(|(v, pv)| *v -= f * pv);
        }
        self.basis[r] = col;
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let mut obj = vec![0.0; self.width + 1];
        obj[..cost.len()].copy_from_slice(cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost.get(b).copied().unwrap_or(0.0);
            if cb != 0.0 {
                obj.iter_mut().zip(&self.rows[i]).for_each(|(v, a)| *v -= cb * a);
            }
        }
        self.obj = obj;
    }

    /// Runs Bland-rule pivots over columns `< allowed`. Returns false if
    /// the objective is unbounded below.
    fn optimize(&mut self, allowed: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..allowed).find(|&j| self.obj[j] < -PIVOT_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > PIVOT_EPS {
                    // Round-off can leave basic values slightly below zero.
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - PIVOT_EPS
                                || (ratio <= best + PIVOT_EPS && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
        Err(Error::Numeric(format!(
            "simplex did not terminate in {MAX_PIVOTS} pivots"
        )))
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.width]
    }
}

/// Minimizes `c·x` over `{x >= 0 : A x = b}`.
///
/// `feasibility_tol` bounds the phase-1 artificial mass treated as zero.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64], feasibility_tol: f64) -> Result<LpOutcome> {
    let m = a.len();
    let n = c.len();
    if b.len() != m {
        return Err(Error::ShapeMismatch {
            what: "right-hand side".into(),
            expected: m,
            found: b.len(),
        });
    }
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::ShapeMismatch {
            what: "constraint row".into(),
            expected: n,
            found: row.len(),
        });
    }
    let width = n + m;
    let rows: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (r, &bi))| {
            let sign = if bi < 0.0 { -1.0 } else { 1.0 };
            let mut row = Vec::with_capacity(width + 1);
            row.extend(r.iter().map(|v| sign * v));
            row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            row.push(sign * bi);
            row
        })
        .collect();
    let mut t = Tableau {
        rows,
        obj: Vec::new(),
        basis: (n..width).collect(),
        width,
    };

    let mut phase1 = vec![0.0; width];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    t.set_objective(&phase1);
    t.optimize(width)?;
    let infeasibility = t.objective_value();
    if infeasibility > feasibility_tol {
        return Ok(LpOutcome::Infeasible(infeasibility));
    }

    // Drive zero-level artificials out of the basis; rows with no
    // structural entry are redundant and keep their artificial at zero.
    for r in 0..m {
        if t.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(r, col);
            }
        }
    }

    t.set_objective(c);
    if !t.optimize(n)? {
        return Err(Error::Numeric("linear program is unbounded".into()));
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rhs(i).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpOutcome::Optimal(LpSolution { x, objective }))
}
