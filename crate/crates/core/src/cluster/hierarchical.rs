use super::{dist, Point};
use crate::error::{Error, Result};

/// Average-linkage agglomerative clustering cut at `k` clusters.
///
/// Uses the nearest-neighbor chain algorithm on a full distance matrix, so
/// memory is O(n²). Labels are representative indices, not yet compacted.
pub fn average_linkage(points: &[Point], k: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if n < k {
        return Err(Error::domain(format!(
            "agglomerative clustering needs at least k={k} points, got {n}"
        )));
    }
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(&points[i], &points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges: Vec<(usize, usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("a cluster is active"));
        }
        let a = *chain.last().expect("chain non-empty");
        let prev = chain.len().checked_sub(2).map(|i| chain[i]);
        // Nearest active neighbor; prefer the chain predecessor on ties so
        // reciprocal pairs are detected.
        let mut best = prev;
        let mut best_d = prev.map_or(f64::INFINITY, |p| d[a * n + p]);
        for c in 0..n {
            if c != a && active[c] && d[a * n + c] < best_d {
                best = Some(c);
                best_d = d[a * n + c];
            }
        }
        let b = best.expect("another cluster is active");
        if Some(b) == prev {
            chain.pop();
            chain.pop();
            let (keep, drop) = (a.min(b), a.max(b));
            let (sk, sd) = (size[keep] as f64, size[drop] as f64);
            for c in 0..n {
                if active[c] && c != keep && c != drop {
                    let v = (sk * d[keep * n + c] + sd * d[drop * n + c]) / (sk + sd);
                    d[keep * n + c] = v;
                    d[c * n + keep] = v;
                }
            }
            size[keep] += size[drop];
            active[drop] = false;
            merges.push((keep, drop, best_d));
            remaining -= 1;
        } else {
            chain.push(b);
        }
    }

    // Average linkage is reducible, so sorting merges by height yields the
    // same hierarchy as the classic greedy order.
    merges.sort_by(|x, y| x.2.total_cmp(&y.2));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b, _) in merges.iter().take(n - k) {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    Ok((0..n).map(|i| find(&mut parent, i)).collect())
}
