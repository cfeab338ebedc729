//! Gated linear assignment.
//!
//! Solves the thresholded rectangular assignment problem shared by the
//! per-drone tracker and the cross-drone ID alignment: among matchings that
//! only use pairs with cost at or below the gate, first maximize the number
//! of matched pairs, then minimize total cost. Pairs over the gate are never
//! matched, no matter how it affects cardinality elsewhere.
//!
//! The solver is the classical Hungarian method with potentials on a padded
//! square matrix, O(n^3). Infeasible pairs and padding cells carry a single
//! large cost exceeding the sum of all feasible costs, which makes
//! "maximize cardinality, then minimize cost" fall out of plain cost
//! minimization. The algorithm is fully deterministic for a given input.

/// Result of a gated assignment over an `rows x cols` cost matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentResult {
    /// Matched `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl AssignmentResult {
    fn empty(rows: usize, cols: usize) -> Self {
        Self {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        }
    }

    /// Total cost of the matched pairs, summed in row order.
    pub fn total_cost(&self, costs: &[Vec<f64>]) -> f64 {
        self.pairs.iter().map(|&(r, c)| costs[r][c]).sum()
    }
}

/// Solves the gated assignment problem.
///
/// `costs` must be rectangular. Entries that are non-finite or strictly
/// greater than `gate` are infeasible. An empty matrix yields an empty
/// result.
///
/// # Panics
///
/// Panics if the rows of `costs` have unequal lengths.
pub fn linear_assignment(costs: &[Vec<f64>], gate: f64) -> AssignmentResult {
    let rows = costs.len();
    if rows == 0 {
        return AssignmentResult::empty(0, 0);
    }
    let cols = costs[0].len();
    assert!(
        costs.iter().all(|r| r.len() == cols),
        "cost matrix must be rectangular"
    );
    if cols == 0 {
        return AssignmentResult::empty(rows, 0);
    }

    let feasible = |r: usize, c: usize| costs[r][c].is_finite() && costs[r][c] <= gate;

    // One padding cost larger than any feasible total keeps cardinality
    // maximization ahead of cost minimization.
    let feasible_sum: f64 = costs
        .iter()
        .flatten()
        .filter(|v| v.is_finite() && **v <= gate)
        .map(|v| v.abs())
        .sum();
    let big = feasible_sum + 1.0;

    let n = rows.max(cols);
    let cell = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols && feasible(r, c) {
            costs[r][c]
        } else {
            big
        }
    };

    // Hungarian method with row/column potentials, 1-indexed scratch arrays.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut assigned_row = vec![0_usize; n + 1]; // column -> row (1-indexed)
    let mut way = vec![0_usize; n + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0_usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cell(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut matched_rows = vec![false; rows];
    let mut matched_cols = vec![false; cols];
    for j in 1..=n {
        let i = assigned_row[j];
        if i == 0 {
            continue;
        }
        let (r, c) = (i - 1, j - 1);
        if r < rows && c < cols && feasible(r, c) {
            pairs.push((r, c));
            matched_rows[r] = true;
            matched_cols[c] = true;
        }
    }
    pairs.sort_unstable();

    AssignmentResult {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !matched_rows[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !matched_cols[c]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: enumerate every injective row-to-column mapping
    /// restricted to in-gate pairs and keep the best by (cardinality desc,
    /// cost asc). Independent of the solver.
    fn brute_force(costs: &[Vec<f64>], gate: f64) -> (usize, f64) {
        fn recurse(
            costs: &[Vec<f64>],
            gate: f64,
            row: usize,
            used: &mut Vec<bool>,
            count: usize,
            cost: f64,
            best: &mut (usize, f64),
        ) {
            if row == costs.len() {
                if count > best.0 || (count == best.0 && cost < best.1) {
                    *best = (count, cost);
                }
                return;
            }
            recurse(costs, gate, row + 1, used, count, cost, best);
            for c in 0..costs[row].len() {
                if !used[c] && costs[row][c].is_finite() && costs[row][c] <= gate {
                    used[c] = true;
                    recurse(costs, gate, row + 1, used, count + 1, cost + costs[row][c], best);
                    used[c] = false;
                }
            }
        }
        let cols = costs.first().map_or(0, |r| r.len());
        let mut best = (0_usize, f64::INFINITY);
        let mut used = vec![false; cols];
        recurse(costs, gate, 0, &mut used, 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        (best.0, best.1)
    }

    #[test]
    fn single_feasible_pair_is_matched() {
        let res = linear_assignment(&[vec![5.0]], 30.0);
        assert_eq!(res.pairs, vec![(0, 0)]);
        assert!(res.unmatched_rows.is_empty());
    }

    #[test]
    fn over_gate_pair_stays_unmatched() {
        let res = linear_assignment(&[vec![45.0]], 30.0);
        assert!(res.pairs.is_empty());
        assert_eq!(res.unmatched_rows, vec![0]);
        assert_eq!(res.unmatched_cols, vec![0]);
    }

    #[test]
    fn empty_matrix_gives_empty_result() {
        let res = linear_assignment(&[], 1.0);
        assert!(res.pairs.is_empty());
        let res = linear_assignment(&[vec![], vec![]], 1.0);
        assert!(res.pairs.is_empty());
        assert_eq!(res.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn prefers_cardinality_over_cost() {
        // Cheapest single pair is (0,0)=1, but two pairs are possible.
        let costs = vec![vec![1.0, 2.0], vec![f64::INFINITY, 3.0]];
        let res = linear_assignment(&costs, 10.0);
        assert_eq!(res.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn rectangular_matrices() {
        let costs = vec![vec![9.0, 1.0, 4.0]];
        let res = linear_assignment(&costs, 10.0);
        assert_eq!(res.pairs, vec![(0, 1)]);
        assert_eq!(res.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(1..=5);
            let gate = rng.random_range(10.0..60.0);
            let costs: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0.0..100.0)).collect())
                .collect();
            let res = linear_assignment(&costs, gate);
            let (cardinality, cost) = brute_force(&costs, gate);
            assert_eq!(res.pairs.len(), cardinality, "cardinality mismatch on {costs:?}");
            let total = res.total_cost(&costs);
            assert!(
                (total - cost).abs() < 1e-9,
                "cost {total} vs oracle {cost} on {costs:?}"
            );
            for &(r, c) in &res.pairs {
                assert!(costs[r][c] <= gate);
            }
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let costs = vec![
            vec![4.0, 4.0, 7.0],
            vec![4.0, 4.0, 2.0],
            vec![5.0, 6.0, 4.0],
        ];
        let first = linear_assignment(&costs, 100.0);
        for _ in 0..10 {
            assert_eq!(linear_assignment(&costs, 100.0), first);
        }
    }
}
