//! Exact Gaussian elimination over the rationals.

use num_traits::Zero;

use crate::rational::Q;

/// Solves `A u = b`; `None` when inconsistent. Free variables are set to 0.
pub fn solve(mut a: Vec<Vec<Q>>, mut b: Vec<Q>, n_vars: usize) -> Option<Vec<Q>> {
    let rows = a.len();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    for col in 0..n_vars {
        let Some(p) = (row..rows).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        b.swap(row, p);
        let inv = a[row][col].recip();
        for j in col..n_vars {
            a[row][j] = &a[row][j] * &inv;
        }
        b[row] = &b[row] * &inv;
        for i in 0..rows {
            if i != row && !a[i][col].is_zero() {
                let f = a[i][col].clone();
                for j in col..n_vars {
                    let delta = &f * &a[row][j];
                    a[i][j] -= delta;
                }
                let delta = &f * &b[row];
                b[i] -= delta;
            }
        }
        pivots.push((row, col));
        row += 1;
        if row == rows {
            break;
        }
    }
    if b[row..].iter().any(|v| !v.is_zero()) {
        return None;
    }
    let mut u = vec![Q::zero(); n_vars];
    for (r, c) in pivots {
        u[c] = b[r].clone();
    }
    Some(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    #[test]
    fn unique_solution() {
        // x + y = 3, x − y = 1
        let a = vec![vec![qi(1), qi(1)], vec![qi(1), qi(-1)]];
        assert_eq!(solve(a, vec![qi(3), qi(1)], 2), Some(vec![qi(2), qi(1)]));
    }

    #[test]
    fn inconsistent_and_underdetermined() {
        let a = vec![vec![qi(1), qi(1)], vec![qi(2), qi(2)]];
        assert_eq!(solve(a, vec![qi(1), qi(3)], 2), None);
        let a = vec![vec![qi(0), qi(2)]];
        assert_eq!(solve(a, vec![qi(1)], 2), Some(vec![qi(0), q(1, 2)]));
        assert_eq!(solve(Vec::new(), Vec::new(), 1), Some(vec![qi(0)]));
    }
}
