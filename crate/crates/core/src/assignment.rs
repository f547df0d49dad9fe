//! Exact max-weight bipartite assignment (Hungarian algorithm with
//! potentials, O(n^3)), used for the optimal reference-to-hypothesis
//! speaker mapping.

/// Solve the max-weight assignment for a (possibly rectangular) weight
/// matrix `w[r][c]`. Returns `assigned[r] = Some(c)` for matched rows; rows
/// matched to padding columns come back as `None`. Weights may be any
/// finite reals; missing pairs should carry weight 0.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let dim = rows.max(cols);

    // pad to square and negate: minimize cost = -weight
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            -weights[r][c]
        } else {
            0.0
        }
    };

    // potentials over rows (u) and columns (v); p[j] = row matched to
    // column j (1-based bookkeeping, index 0 is the virtual root)
    let mut u = vec![0.0f64; dim + 1];
    let mut v = vec![0.0f64; dim + 1];
    let mut p = vec![0usize; dim + 1];
    let mut way = vec![0usize; dim + 1];

    for i in 1..=dim {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; dim + 1];
        let mut used = vec![false; dim + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=dim {
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
            for j in 0..=dim {
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

    let mut assigned = vec![None; rows];
    for j in 1..=dim {
        let r = p[j];
        if r >= 1 && r - 1 < rows && j - 1 < cols {
            assigned[r - 1] = Some(j - 1);
        }
    }
    assigned
}

/// Total weight of an assignment.
pub fn assignment_weight(weights: &[Vec<f64>], assigned: &[Option<usize>]) -> f64 {
    assigned
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| weights[r][c]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute_force_best(weights: &[Vec<f64>]) -> f64 {
        let rows = weights.len();
        let cols = weights[0].len();
        fn recurse(weights: &[Vec<f64>], r: usize, used: &mut [bool], cols: usize) -> f64 {
            if r == weights.len() {
                return 0.0;
            }
            // row r unassigned
            let mut best = recurse(weights, r + 1, used, cols);
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    best = best.max(weights[r][c] + recurse(weights, r + 1, used, cols));
                    used[c] = false;
                }
            }
            best
        }
        let _ = rows;
        let mut used = vec![false; cols];
        recurse(weights, 0, &mut used, cols)
    }

    #[test]
    fn simple_square_case() {
        let w = vec![vec![3.0, 1.0], vec![1.0, 2.0]];
        let assigned = max_weight_assignment(&w);
        assert_eq!(assigned, vec![Some(0), Some(1)]);
        assert_eq!(assignment_weight(&w, &assigned), 5.0);
    }

    #[test]
    fn rectangular_cases() {
        let w = vec![vec![1.0, 5.0, 2.0]];
        let assigned = max_weight_assignment(&w);
        assert_eq!(assigned, vec![Some(1)]);

        let w = vec![vec![1.0], vec![5.0], vec![2.0]];
        let assigned = max_weight_assignment(&w);
        assert_eq!(assignment_weight(&w, &assigned), 5.0);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = crate::rng::derive_rng(3, 95, 0);
        for _ in 0..200 {
            let rows = rng.random_range(1..=5usize);
            let cols = rng.random_range(1..=5usize);
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            let assigned = max_weight_assignment(&w);
            let got = assignment_weight(&w, &assigned);
            let want = brute_force_best(&w);
            assert!(
                (got - want).abs() < 1e-9,
                "hungarian {got} vs brute force {want} on {w:?}"
            );
        }
    }
}
