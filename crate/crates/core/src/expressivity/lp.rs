//! Dense simplex for the tiny feasibility problems of the region oracle.

const PIVOT_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

/// Largest margin `t <= cap` such that some `x` in `[-radius, radius]^d`
/// satisfies `a·x + b >= t` for every half-space `(a, b)`.
///
/// Rows should be normalized (`|a| = 1`) so `t` is a Euclidean distance.
/// Variables are shifted (`y = x + radius`, `s = t + t0`) so the origin is a
/// feasible vertex and a single phase suffices.
pub(crate) fn max_margin(halfspaces: &[(Vec<f64>, f64)], d: usize, radius: f64, cap: f64) -> f64 {
    let shifted: Vec<f64> = halfspaces.iter().map(|(a, b)| b - radius * a.iter().sum::<f64>()).collect();
    let t0 = 1.0 + shifted.iter().fold(0.0f64, |m, &r| m.max(-r));

    // Columns: y_0..y_{d-1}, s.
    let mut rows = Vec::with_capacity(halfspaces.len() + d + 1);
    let mut rhs = Vec::with_capacity(rows.capacity());
    for ((a, _), r) in halfspaces.iter().zip(&shifted) {
        let mut row: Vec<f64> = a.iter().map(|v| -v).collect();
        row.push(1.0);
        rows.push(row);
        rhs.push(r + t0);
    }
    for i in 0..d {
        let mut row = vec![0.0; d + 1];
        row[i] = 1.0;
        rows.push(row);
        rhs.push(2.0 * radius);
    }
    let mut row = vec![0.0; d + 1];
    row[d] = 1.0;
    rows.push(row);
    rhs.push(t0 + cap);

    let mut c = vec![0.0; d + 1];
    c[d] = 1.0;
    simplex_max(&c, &rows, &rhs) - t0
}

/// Maximizes `c·z` subject to `A z <= b`, `z >= 0`, with `b >= 0` and a
/// bounded optimum. Bland's rule keeps it from cycling on degenerate vertices.
fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), c.len());
    let width = n + m;
    let mut tab: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.resize(width, 0.0);
            r[n + i] = 1.0;
            r.push(b[i]);
            r
        })
        .collect();
    // Reduced-cost row: z_j - c_j; negative entries can still improve.
    let mut obj: Vec<f64> = c.iter().map(|v| -v).collect();
    obj.resize(width + 1, 0.0);
    let mut basis: Vec<usize> = (n..width).collect();

    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..width).find(|&j| obj[j] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[enter] > PIVOT_EPS {
                let ratio = row[width] / row[enter];
                let better = match leave {
                    None => true,
                    Some((l, best)) => ratio < best - PIVOT_EPS || (ratio <= best + PIVOT_EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((p, _)) = leave else {
            return f64::INFINITY;
        };
        let pivot = tab[p][enter];
        tab[p].iter_mut().for_each(|v| *v /= pivot);
        let prow = tab[p].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i != p && row[enter] != 0.0 {
                let f = row[enter];
                row.iter_mut().zip(&prow).for_each(|(v, &pv)| *v -= f * pv);
            }
        }
        let f = obj[enter];
        obj.iter_mut().zip(&prow).for_each(|(v, &pv)| *v -= f * pv);
        basis[p] = enter;
    }
    obj[width]
}
