//! Maximum-weight perfect assignment on a square matrix.
//!
//! A shortest-augmenting-path Hungarian solve gives an optimal matching and a
//! feasible dual. Every optimal matching lives on the tight (zero reduced
//! cost) edges of that dual, so the lexicographically smallest optimum is
//! found by walking rows in order and moving each row to the lowest tight
//! column that still leaves the remaining rows perfectly matchable.

/// Returns `perm` maximizing `sum_i w[i * n + perm[i]]`. Among optimal
/// assignments (up to a relative tolerance) the lexicographically smallest
/// `perm` wins, so ties prefer the lowest column index.
pub fn max_weight_assignment(weights: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(weights.len(), n * n, "assignment needs an n x n matrix");
    if n == 0 {
        return Vec::new();
    }
    let scale = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let cost: Vec<f64> = weights.iter().map(|w| -w).collect();
    let (mut perm, u, v) = hungarian_min(&cost, n);

    let tol = 1e-9 * (1.0 + scale);
    let tight: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| cost[i * n + j] - u[i] - v[j] <= tol).collect()).collect();
    let mut owner = vec![0usize; n];
    for (i, &j) in perm.iter().enumerate() {
        owner[j] = i;
    }

    for i in 0..n {
        for &j in &tight[i] {
            if j >= perm[i] {
                break;
            }
            let r = owner[j];
            if r < i {
                continue;
            }
            if let Some(path) = alternating_path(&tight, &perm, &owner, r, j, perm[i], i) {
                // `path` lists (row, new column) reassignments for the displaced rows.
                let freed = perm[i];
                perm[i] = j;
                owner[j] = i;
                for (row, col) in path {
                    perm[row] = col;
                    owner[col] = row;
                }
                debug_assert!(perm.contains(&freed));
                break;
            }
        }
    }
    perm
}

/// Finds a way to re-seat row `start` (evicted from column `taken`) using tight
/// edges among rows `> fixed`, ending on the freed column `target`.
fn alternating_path(
    tight: &[Vec<usize>],
    perm: &[usize],
    owner: &[usize],
    start: usize,
    taken: usize,
    target: usize,
    fixed: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = perm.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n]; // per row: (previous row, column it takes)
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(row) = queue.pop_front() {
        for &c in &tight[row] {
            if c == taken || c == perm[row] {
                continue;
            }
            if c == target {
                let mut path = vec![(row, c)];
                let mut cur = row;
                while let Some((p, col)) = prev[cur] {
                    path.push((p, col));
                    cur = p;
                }
                return Some(path);
            }
            let next = owner[c];
            if next > fixed && !visited[next] {
                visited[next] = true;
                // `row` would take `c`, evicting `next`.
                prev[next] = Some((row, c));
                queue.push_back(next);
            }
        }
    }
    None
}

/// Min-cost assignment with row/column potentials (O(n^3)).
fn hungarian_min(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
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
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    (perm, u[1..].to_vec(), v[1..].to_vec())
}
