//! Dense linear assignment by the Hungarian method with row/column potentials.

/// Minimum-cost perfect matching on an `n x n` row-major cost matrix.
///
/// Returns the optimal total cost and `assign[row] = col`. Runs in `O(n^3)`.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> (f64, Vec<usize>) {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based shortest augmenting path formulation; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[col_owner[j] - 1] = j - 1;
    }
    // Re-sum from the matching itself rather than trusting the potentials.
    let total = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (total, assign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_matrix() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (total, assign) = min_cost_assignment(3, &cost);
        assert_eq!(total, 5.0);
        assert_eq!(assign, vec![1, 0, 2]);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(min_cost_assignment(1, &[2.5]), (2.5, vec![0]));
        assert_eq!(min_cost_assignment(0, &[]).0, 0.0);
    }

    #[test]
    fn assignment_is_a_permutation() {
        let n = 7;
        let cost: Vec<f64> = (0..n * n).map(|k| ((k * 37 % 11) as f64).sin()).collect();
        let (_, assign) = min_cost_assignment(n, &cost);
        let mut seen = assign.clone();
        seen.sort();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }
}
