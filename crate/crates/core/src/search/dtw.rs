use crate::geom::Point;
use crate::{Error, Result};

/// Full-window DTW over an `n x m` cost matrix given by `cost(i, j)`.
pub fn dtw_by<F: Fn(usize, usize) -> f64>(n: usize, m: usize, cost: F) -> Result<f64> {
    dtw_by_within(n, m, f64::INFINITY, cost)
}

/// [`dtw_by`] that gives up once every alignment exceeds `cutoff`, returning
/// infinity. Costs must be non-negative.
pub fn dtw_by_within<F: Fn(usize, usize) -> f64>(
    n: usize,
    m: usize,
    cutoff: f64,
    cost: F,
) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(Error::contract("DTW needs non-empty sequences"));
    }
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        let mut row_min = f64::INFINITY;
        for j in 1..=m {
            let v = cost(i - 1, j - 1) + prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > cutoff {
            return Ok(f64::INFINITY);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// DTW with L1 ground distance between 2-D points.
pub fn dtw_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    dtw_by(a.len(), b.len(), |i, j| a[i].l1(b[j]))
}

/// [`dtw_distance`], or infinity when it exceeds `cutoff`.
pub fn dtw_distance_within(a: &[Point], b: &[Point], cutoff: f64) -> Result<f64> {
    dtw_by_within(a.len(), b.len(), cutoff, |i, j| a[i].l1(b[j]))
}

pub fn dtw_scalar(a: &[f64], b: &[f64]) -> Result<f64> {
    dtw_by(a.len(), b.len(), |i, j| (a[i] - b[j]).abs())
}

/// DTW distance and one optimal warping path from (0, 0) to (n-1, m-1).
/// Backtracking prefers the diagonal, then up, then left.
pub fn dtw_path(a: &[Point], b: &[Point]) -> Result<(f64, Vec<(usize, usize)>)> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::contract("DTW needs non-empty sequences"));
    }
    let w = m + 1;
    let mut d = vec![f64::INFINITY; (n + 1) * w];
    d[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = d[(i - 1) * w + j]
                .min(d[i * w + j - 1])
                .min(d[(i - 1) * w + j - 1]);
            d[i * w + j] = a[i - 1].l1(b[j - 1]) + best;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n, m);
    while (i, j) != (1, 1) {
        let diag = d[(i - 1) * w + j - 1];
        let up = d[(i - 1) * w + j];
        let left = d[i * w + j - 1];
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i - 1, j - 1));
    }
    path.reverse();
    Ok((d[n * w + m], path))
}
