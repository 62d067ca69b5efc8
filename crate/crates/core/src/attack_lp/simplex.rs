//! Dense two-phase primal simplex with Bland's rule. The acceptance
//! programs are small ((m+2) x m) and heavily degenerate, so deterministic
//! anti-cycling matters more than speed. Rows are equilibrated internally;
//! primal, dual and residuals are reported against the original data.

use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal/dual pair for `max c'x, Ax <= b, x >= 0`.
#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub optimal_value: f64,
    pub dual: Vec<f64>,
    /// Duality gap `|c'x - b'y|`.
    pub duality_gap: f64,
    /// Largest complementary-slackness violation across both products.
    pub complementarity_residual: f64,
}

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial + rhs
    data: Vec<f64>,
    obj: Vec<f64>, // reduced-cost row, length cols
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let piv = self.at(row, col);
        for c in 0..cols {
            self.data[row * cols + c] /= piv;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor != 0.0 {
                for c in 0..cols {
                    self.data[r * cols + c] -= factor * self.data[row * cols + c];
                }
            }
        }
        let factor = self.obj[col];
        if factor != 0.0 {
            for c in 0..cols {
                self.obj[c] -= factor * self.data[row * cols + c];
            }
        }
        self.basis[row] = col;
    }

    /// Maximize with Bland's rule: enter the lowest-index column with a
    /// positive reduced cost, leave on the minimum ratio with the
    /// lowest-index basic variable breaking ties. Columns at or beyond
    /// `col_limit` are never entered.
    fn run(&mut self, col_limit: usize) -> Result<()> {
        loop {
            let Some(entering) = (0..col_limit).find(|&j| self.obj[j] > COST_TOL) else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, entering);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, self.cols - 1) / a;
                    leaving = match leaving {
                        None => Some((r, ratio)),
                        Some((best_r, best)) => {
                            if ratio < best - 1e-15
                                || ((ratio - best).abs() <= 1e-15
                                    && self.basis[r] < self.basis[best_r])
                            {
                                Some((r, ratio))
                            } else {
                                Some((best_r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leaving else {
                return Err(Error::LpNotOptimal("unbounded"));
            };
            self.pivot(row, entering);
        }
    }
}

/// Solve `max c'x` subject to `A x <= b`, `x >= 0`.
pub fn solve(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let nv = c.len();
    let nc = a.len();
    assert_eq!(b.len(), nc);
    for row in a {
        assert_eq!(row.len(), nv);
    }

    // Row equilibration keeps the binomial-scale rows pivotable.
    let scales: Vec<f64> = a
        .iter()
        .map(|row| {
            let m = row.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect();

    // Negate rows with negative rhs so every right-hand side is
    // nonnegative; those rows get a -1 slack and an artificial variable.
    let negated: Vec<bool> = b.iter().map(|&bi| bi < 0.0).collect();
    let artificial_rows: Vec<usize> = (0..nc).filter(|&i| negated[i]).collect();
    let na = artificial_rows.len();
    let cols = nv + nc + na + 1;

    let mut t = Tableau {
        rows: nc,
        cols,
        data: vec![0.0; nc * cols],
        obj: vec![0.0; cols],
        basis: vec![0; nc],
    };

    let mut art_index = 0usize;
    for i in 0..nc {
        let sign = if negated[i] { -1.0 } else { 1.0 };
        for j in 0..nv {
            t.data[i * cols + j] = sign * a[i][j] / scales[i];
        }
        t.data[i * cols + nv + i] = sign;
        t.data[i * cols + cols - 1] = sign * b[i] / scales[i];
        if negated[i] {
            let ac = nv + nc + art_index;
            t.data[i * cols + ac] = 1.0;
            t.basis[i] = ac;
            art_index += 1;
        } else {
            t.basis[i] = nv + i;
        }
    }

    if na > 0 {
        // Phase 1: maximize minus the artificial sum.
        for k in 0..na {
            t.obj[nv + nc + k] = -1.0;
        }
        for i in 0..nc {
            if t.basis[i] >= nv + nc {
                let factor = t.obj[t.basis[i]];
                for cidx in 0..cols {
                    t.obj[cidx] -= factor * t.data[i * cols + cidx];
                }
            }
        }
        t.run(cols - 1)?;
        let phase1 = -t.obj[cols - 1];
        if phase1.abs() > 1e-8 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: vec![0.0; nv],
                optimal_value: f64::NAN,
                dual: vec![0.0; nc],
                duality_gap: f64::NAN,
                complementarity_residual: f64::NAN,
            });
        }
        // Pivot any residual artificial out of the basis.
        for i in 0..nc {
            if t.basis[i] >= nv + nc {
                if let Some(col) = (0..nv + nc).find(|&jc| t.at(i, jc).abs() > PIVOT_TOL) {
                    t.pivot(i, col);
                }
            }
        }
    }

    // Phase 2 objective.
    t.obj.fill(0.0);
    t.obj[..nv].copy_from_slice(c);
    for i in 0..nc {
        if t.basis[i] < nv + nc {
            let factor = t.obj[t.basis[i]];
            if factor != 0.0 {
                for cidx in 0..cols {
                    t.obj[cidx] -= factor * t.data[i * cols + cidx];
                }
            }
        }
    }
    match t.run(nv + nc) {
        Ok(()) => {}
        Err(Error::LpNotOptimal(kind)) => {
            return Ok(LpSolution {
                status: if kind == "unbounded" {
                    LpStatus::Unbounded
                } else {
                    LpStatus::Infeasible
                },
                primal: vec![0.0; nv],
                optimal_value: f64::NAN,
                dual: vec![0.0; nc],
                duality_gap: f64::NAN,
                complementarity_residual: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    }

    let mut primal = vec![0.0; nv];
    for i in 0..nc {
        if t.basis[i] < nv {
            primal[t.basis[i]] = t.at(i, cols - 1);
        }
    }
    // Dual of the original rows: negated reduced cost of each slack,
    // unscaled by the row equilibration factor.
    let mut dual = vec![0.0; nc];
    for i in 0..nc {
        dual[i] = (-t.obj[nv + i]).max(0.0) / scales[i];
    }

    let optimal_value: f64 = c.iter().zip(&primal).map(|(ci, xi)| ci * xi).sum();
    let dual_value: f64 = b.iter().zip(&dual).map(|(bi, yi)| bi * yi).sum();

    let mut comp = 0.0f64;
    for i in 0..nc {
        let slack = b[i]
            - a[i]
                .iter()
                .zip(&primal)
                .map(|(aij, xj)| aij * xj)
                .sum::<f64>();
        comp = comp.max((dual[i] * slack).abs());
    }
    for j in 0..nv {
        let reduced: f64 = (0..nc).map(|i| a[i][j] * dual[i]).sum::<f64>() - c[j];
        comp = comp.max((primal[j] * reduced).abs());
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        optimal_value,
        dual,
        duality_gap: (optimal_value - dual_value).abs(),
        complementarity_residual: comp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let sol = solve(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal[0] - 2.0).abs() < 1e-9);
        assert!((sol.primal[1] - 6.0).abs() < 1e-9);
        assert!((sol.optimal_value - 36.0).abs() < 1e-9);
        assert!(sol.duality_gap < 1e-9);
        assert!(sol.complementarity_residual < 1e-9);
    }

    #[test]
    fn equality_encoded_as_two_inequalities() {
        // max x + 2y s.t. x + y = 1 (as <= 1 and >= 1) -> (0, 1), value 2.
        let sol = solve(
            &[1.0, 2.0],
            &[vec![1.0, 1.0], vec![-1.0, -1.0]],
            &[1.0, -1.0],
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal[1] - 1.0).abs() < 1e-9);
        assert!((sol.optimal_value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x <= 1 and x >= 2.
        let sol = solve(&[1.0], &[vec![1.0], vec![-1.0]], &[1.0, -2.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let sol = solve(&[1.0], &[vec![-1.0]], &[0.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn duals_satisfy_strong_duality_on_degenerate_program() {
        // Degenerate zero-rhs rows mimic the acceptance program shape.
        let sol = solve(
            &[0.9, 0.81],
            &[
                vec![0.4, -0.1],
                vec![0.0, -0.1],
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
            ],
            &[0.0, 0.0, 1.0, -1.0],
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // Hand solution: P = (0.2, 0.8).
        assert!((sol.primal[0] - 0.2).abs() < 1e-9);
        assert!((sol.primal[1] - 0.8).abs() < 1e-9);
        assert!(sol.duality_gap < 1e-9);
        assert!(sol.complementarity_residual < 1e-9);
    }
}
