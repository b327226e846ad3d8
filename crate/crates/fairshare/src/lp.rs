//! Small dense-simplex linear programming.
//!
//! Solves `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0`, which is the only
//! form the crate needs (capacity polytopes): the all-slack basis is feasible
//! so no phase-1 is required. Bland's rule guarantees termination. Instances
//! are tiny by construction (a handful of paths, a few dozen links), so a
//! dense tableau is the right tool.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Maximize `c.x` over `{A x <= b, x >= 0}`, `b >= 0` required.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = b.len();
    if a.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Lp("constraint matrix shape mismatch".into()));
    }
    if b.iter().any(|&bi| bi < 0.0) {
        return Err(Error::Lp("right-hand side must be nonnegative".into()));
    }

    // Tableau: m rows of [structural | slack | rhs], plus the objective row
    // holding reduced costs of the maximization.
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][n + m] = b[i];
    }
    t[m][..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 10_000 * (n + m + 1);
    for _ in 0..max_pivots {
        // Bland: entering variable = lowest index with positive reduced cost.
        let Some(enter) = (0..n + m).find(|&j| t[m][j] > EPS) else {
            let mut x = vec![0.0; n];
            for (i, &bi) in basis.iter().enumerate() {
                if bi < n {
                    x[bi] = t[i][n + m];
                }
            }
            let objective = -t[m][n + m];
            return Ok(LpSolution { objective, x });
        };
        // Ratio test, ties broken by lowest basis index (Bland).
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > EPS {
                let ratio = t[i][n + m] / t[i][enter];
                let better = ratio < best - EPS
                    || (ratio < best + EPS && leave.map_or(true, |l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Lp("objective unbounded above".into()));
        };
        // Pivot.
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..=m {
            if i != leave && t[i][enter].abs() > 0.0 {
                let factor = t[i][enter];
                for j in 0..width {
                    t[i][j] -= factor * t[leave][j];
                }
            }
        }
        basis[leave] = enter;
    }
    Err(Error::Lp("pivot limit exceeded".into()))
}
