use super::{cmp_points, dist, Point};
use crate::error::{Error, Result};

/// Indices of `points` in lexicographic order of their coordinates. Density
/// methods walk points in this order so labels depend only on the values.
fn sorted_order(points: &[Point]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| cmp_points(&points[a], &points[b]).then(a.cmp(&b)));
    order
}

/// DBSCAN with Euclidean distance. Noise points get `None`.
pub fn dbscan(points: &[Point], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::domain(format!(
            "dbscan eps must be positive, got {eps}"
        )));
    }
    if min_pts == 0 {
        return Err(Error::domain("dbscan min_pts must be positive"));
    }
    if points.is_empty() {
        return Err(Error::domain("dbscan needs at least one point"));
    }
    let order = sorted_order(points);
    let sorted: Vec<Point> = order.iter().map(|&i| points[i]).collect();
    let n = sorted.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| dist(&sorted[i], &sorted[j]) <= eps)
            .collect()
    };

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            continue;
        }
        let c = next;
        next += 1;
        labels[i] = Some(c);
        let mut queue = seeds;
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j].is_none() {
                labels[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let more = neighbors(j);
            if more.len() >= min_pts {
                queue.extend(more);
            }
        }
    }

    let mut out = vec![None; n];
    for (pos, &orig) in order.iter().enumerate() {
        out[orig] = labels[pos];
    }
    Ok(out)
}

/// Distance from each point to its `k`-th nearest other point.
fn kth_neighbor_distances(points: &[Point], k: usize) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist(p, q))
                .collect();
            let k = k.clamp(1, d.len().max(1));
            if d.is_empty() {
                return 0.0;
            }
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

/// Flat-kernel bandwidth: mean distance to the `quantile * n`-th nearest
/// neighbor.
pub fn estimate_bandwidth(points: &[Point], quantile: f64) -> Result<f64> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::domain(format!(
            "quantile must be in (0, 1], got {quantile}"
        )));
    }
    if points.len() < 2 {
        return Err(Error::domain(
            "bandwidth estimation needs at least two points",
        ));
    }
    let k = ((points.len() as f64 * quantile) as usize).max(1);
    let order = sorted_order(points);
    let sorted: Vec<Point> = order.iter().map(|&i| points[i]).collect();
    let d = kth_neighbor_distances(&sorted, k);
    let bw = d.iter().sum::<f64>() / d.len() as f64;
    if bw > 0.0 {
        Ok(bw)
    } else {
        Err(Error::domain("all points coincide; bandwidth is zero"))
    }
}

/// DBSCAN radius: the 95th percentile of the `min_pts`-nearest-neighbor
/// distances, so nearly every point is a core point while sparse outliers
/// stay out.
pub fn estimate_eps(points: &[Point], min_pts: usize) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::domain("eps estimation needs at least three points"));
    }
    let order = sorted_order(points);
    let sorted: Vec<Point> = order.iter().map(|&i| points[i]).collect();
    let mut d = kth_neighbor_distances(&sorted, min_pts.max(1));
    d.sort_by(f64::total_cmp);
    let idx = ((d.len() - 1) as f64 * 0.95).round() as usize;
    let eps = d[idx];
    if eps > 0.0 {
        Ok(eps)
    } else {
        Err(Error::domain("points are too concentrated to estimate eps"))
    }
}

/// Mean shift with a flat kernel, seeded from every point. Converged modes
/// closer than `bandwidth` are merged, keeping the one with more support, and
/// each point joins its nearest mode.
pub fn mean_shift(points: &[Point], bandwidth: f64) -> Result<Vec<usize>> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::domain(format!(
            "mean shift bandwidth must be positive, got {bandwidth}"
        )));
    }
    if points.is_empty() {
        return Err(Error::domain("mean shift needs at least one point"));
    }
    let order = sorted_order(points);
    let sorted: Vec<Point> = order.iter().map(|&i| points[i]).collect();
    let tol = 1e-3 * bandwidth;

    let mut modes: Vec<(Point, usize)> = Vec::new();
    for seed in &sorted {
        let mut m = *seed;
        let mut support = 0;
        for _ in 0..300 {
            let mut s = [0.0, 0.0];
            let mut c = 0usize;
            for p in &sorted {
                if dist(p, &m) <= bandwidth {
                    s[0] += p[0];
                    s[1] += p[1];
                    c += 1;
                }
            }
            support = c;
            if c == 0 {
                break;
            }
            let next = [s[0] / c as f64, s[1] / c as f64];
            let shift = dist(&next, &m);
            m = next;
            if shift < tol {
                break;
            }
        }
        if support > 0 {
            modes.push((m, support));
        }
    }
    modes.sort_by(|a, b| b.1.cmp(&a.1).then(cmp_points(&a.0, &b.0)));
    let mut centers: Vec<Point> = Vec::new();
    for (m, _) in modes {
        if centers.iter().all(|c| dist(c, &m) >= bandwidth) {
            centers.push(m);
        }
    }

    Ok(points
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .map(|(i, c)| (i, dist(p, c)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                )
                .0
        })
        .collect())
}
