//! Dense two-phase primal simplex for small equality-form linear programs
//! (`min c.x` s.t. `A x = b`, `x >= 0`). Bland's rule throughout, so the
//! method terminates even on the degenerate instances the bicausal oracle
//! produces. Intended for a few hundred variables at most; the dynamic
//! program never routes through this code.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const REDUCED_TOL: f64 = 1e-10;

pub(crate) struct LinearProgram {
    /// Objective coefficients, length `n`.
    pub objective: Vec<f64>,
    /// Constraint rows, each of length `n`.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

pub(crate) struct LpSolution {
    pub value: f64,
    #[allow(dead_code)]
    pub x: Vec<f64>,
}

/// Solves the program; errors if the simplex stalls or the instance is
/// infeasible beyond float noise.
pub(crate) fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    debug_assert!(lp.rows.iter().all(|r| r.len() == n));
    debug_assert_eq!(lp.rhs.len(), m);

    // Tableau columns: n structural + m artificial + rhs.
    let cols = n + m + 1;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        let flip = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; cols];
        for (j, &a) in row.iter().enumerate() {
            r[j] = flip * a;
        }
        r[n + i] = 1.0;
        r[cols - 1] = flip * lp.rhs[i];
        tab.push(r);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase-1 objective: sum of artificials, expressed through the rows.
    let mut phase1 = vec![0.0; cols];
    for r in &tab {
        for (j, v) in phase1.iter_mut().enumerate() {
            *v += r[j];
        }
    }
    for j in n..n + m {
        phase1[j] = 0.0;
    }
    run_phase(&mut tab, &mut basis, &mut phase1, n + m)?;
    let infeasibility = phase1[cols - 1];
    if infeasibility.abs() > 1e-7 {
        return Err(Error::IterationLimit);
    }

    // Drive zero-level artificials out of the basis; a row with no structural
    // pivot left is redundant and gets dropped.
    let mut i = 0;
    while i < tab.len() {
        if basis[i] >= n {
            let mut pivot_col = None;
            for j in 0..n {
                if tab[i][j].abs() > PIVOT_TOL {
                    pivot_col = Some(j);
                    break;
                }
            }
            match pivot_col {
                Some(j) => {
                    pivot(&mut tab, &mut basis, i, j, &mut phase1);
                }
                None => {
                    tab.remove(i);
                    basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    // Phase 2: reduced costs of the real objective under the current basis.
    let mut phase2 = vec![0.0; cols];
    for (j, &c) in lp.objective.iter().enumerate() {
        phase2[j] = -c;
    }
    for (i, &b) in basis.iter().enumerate() {
        let coef = phase2[b];
        if coef != 0.0 {
            for j in 0..cols {
                phase2[j] -= coef * tab[i][j];
            }
            phase2[b] = 0.0;
        }
    }
    run_phase(&mut tab, &mut basis, &mut phase2, n)?;

    let mut x = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[i][cols - 1];
        }
    }
    let value: f64 = lp
        .objective
        .iter()
        .zip(x.iter())
        .map(|(c, v)| c * v)
        .sum();
    Ok(LpSolution { value, x })
}

/// Bland's rule: entering column is the lowest index with a positive row
/// coefficient in the (negated) objective, leaving row breaks ratio ties by
/// the smallest basis index.
fn run_phase(
    tab: &mut Vec<Vec<f64>>,
    basis: &mut [usize],
    objective: &mut [f64],
    searchable: usize,
) -> Result<()> {
    let cols = objective.len();
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        if iterations > 100_000 {
            return Err(Error::IterationLimit);
        }
        let mut entering = None;
        for (j, &c) in objective.iter().enumerate().take(searchable) {
            if c > REDUCED_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else {
            return Ok(());
        };
        let mut leaving: Option<(usize, f64)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[col] > PIVOT_TOL {
                let ratio = row[cols - 1] / row[col];
                let better = match leaving {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - PIVOT_TOL
                            || (ratio < lr + PIVOT_TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leaving else {
            // Unbounded; cannot happen for couplings over a simplex.
            return Err(Error::IterationLimit);
        };
        pivot(tab, basis, row, col, objective);
    }
}

fn pivot(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    row: usize,
    col: usize,
    objective: &mut [f64],
) {
    let cols = tab[row].len();
    let p = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= p;
    }
    tab[row][col] = 1.0;
    for i in 0..tab.len() {
        if i != row {
            let factor = tab[i][col];
            if factor != 0.0 {
                for j in 0..cols {
                    let delta = factor * tab[row][j];
                    tab[i][j] -= delta;
                }
                tab[i][col] = 0.0;
            }
        }
    }
    let factor = objective[col];
    if factor != 0.0 {
        for j in 0..cols {
            objective[j] -= factor * tab[row][j];
        }
        objective[col] = 0.0;
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_tiny_transport_as_equalities() {
        // min x00 + 2 x01 + 3 x10 + 0 x11 with uniform marginals.
        let lp = LinearProgram {
            objective: vec![1.0, 2.0, 3.0, 0.0],
            rows: vec![
                vec![1.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 1.0],
                vec![1.0, 0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0, 1.0],
            ],
            rhs: vec![0.5, 0.5, 0.5, 0.5],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-10);
        assert!((sol.x[0] - 0.5).abs() < 1e-10);
        assert!((sol.x[3] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn handles_redundant_rows() {
        // Third row is the sum of the first two.
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            rows: vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
            rhs: vec![0.3, 0.7, 1.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_instances_terminate() {
        let lp = LinearProgram {
            objective: vec![-1.0, 2.0, 0.0],
            rows: vec![
                vec![1.0, 1.0, 1.0],
                vec![1.0, 1.0, 1.0],
                vec![0.0, 1.0, 0.0],
            ],
            rhs: vec![1.0, 1.0, 0.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.value + 1.0).abs() < 1e-10);
    }
}
