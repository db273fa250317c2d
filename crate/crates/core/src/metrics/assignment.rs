//! Minimum-cost linear assignment (Hungarian algorithm with potentials).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(row, column)` pairs sorted by row.
    pub mapping: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn column_for(&self, row: usize) -> Option<usize> {
        self.mapping.iter().find(|p| p.0 == row).map(|p| p.1)
    }

    pub fn row_for(&self, column: usize) -> Option<usize> {
        self.mapping.iter().find(|p| p.1 == column).map(|p| p.0)
    }
}

/// Solves the assignment problem for an `m x n` cost matrix, pairing
/// `min(m, n)` rows and columns at minimum total cost.
///
/// Rectangular inputs are handled by running the `O(k^2 * K)` shortest
/// augmenting path variant over the shorter side.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Assignment {
            mapping: Vec::new(),
            total_cost: 0.0,
        };
    }
    assert!(
        cost.iter().all(|r| r.len() == cols),
        "cost matrix rows differ in length"
    );
    assert!(
        cost.iter().flatten().all(|c| c.is_finite()),
        "cost matrix has non-finite entries"
    );

    let mut mapping = if rows <= cols {
        hungarian(rows, cols, |i, j| cost[i][j])
    } else {
        hungarian(cols, rows, |i, j| cost[j][i])
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect()
    };
    mapping.sort_unstable();
    let total_cost = mapping.iter().map(|&(r, c)| cost[r][c]).sum();
    Assignment {
        mapping,
        total_cost,
    }
}

// Requires n <= m. Returns (row, col) pairs for every row.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) matched to column j; p[0] is the row being inserted
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injections of the shorter side into the longer.
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        fn rec(
            cost: &[Vec<f64>],
            row: usize,
            used: &mut Vec<bool>,
            acc: f64,
            best: &mut f64,
            transpose: bool,
        ) {
            let (n, m) = if transpose {
                (cost[0].len(), cost.len())
            } else {
                (cost.len(), cost[0].len())
            };
            if row == n {
                *best = best.min(acc);
                return;
            }
            for col in 0..m {
                if !used[col] {
                    used[col] = true;
                    let c = if transpose { cost[col][row] } else { cost[row][col] };
                    rec(cost, row + 1, used, acc + c, best, transpose);
                    used[col] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        let transpose = rows > cols;
        let m = rows.max(cols);
        rec(cost, 0, &mut vec![false; m], 0.0, &mut best, transpose);
        best
    }

    #[test]
    fn two_by_two_example() {
        let a = solve_assignment(&[vec![1.0, 2.0], vec![3.0, 0.0]]);
        assert_eq!(a.mapping, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 1.0);
    }

    #[test]
    fn diagonal_dominant_gives_identity() {
        let cost: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { 0.0 } else { 10.0 + (i * j) as f64 }).collect())
            .collect();
        let a = solve_assignment(&cost);
        assert_eq!(a.mapping, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn empty_matrix() {
        let a = solve_assignment(&[]);
        assert!(a.mapping.is_empty());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn rectangular_uses_each_index_once() {
        let a = solve_assignment(&[vec![5.0, 1.0, 3.0], vec![2.0, 0.5, 9.0]]);
        assert_eq!(a.mapping.len(), 2);
        assert_eq!(a.total_cost, 3.0);
        let b = solve_assignment(&[vec![5.0, 1.0], vec![1.0, 3.0], vec![0.0, 0.0]]);
        assert_eq!(b.mapping.len(), 2);
        assert_eq!(b.total_cost, 1.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            rows in 1usize..=6,
            cols in 1usize..=6,
            seed in proptest::collection::vec(-50i32..50, 36),
        ) {
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|i| (0..cols).map(|j| f64::from(seed[i * 6 + j])).collect())
                .collect();
            let a = solve_assignment(&cost);
            prop_assert_eq!(a.mapping.len(), rows.min(cols));
            prop_assert_eq!(a.total_cost, brute_force(&cost));
            let mut rs: Vec<_> = a.mapping.iter().map(|p| p.0).collect();
            let mut cs: Vec<_> = a.mapping.iter().map(|p| p.1).collect();
            rs.dedup();
            cs.sort_unstable();
            cs.dedup();
            prop_assert_eq!(rs.len(), rows.min(cols));
            prop_assert_eq!(cs.len(), rows.min(cols));
        }
    }
}
