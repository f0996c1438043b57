use serde::Serialize;

use super::{dist, sq_dist, Point};

/// Internal validity indices of a labelled point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Indices {
    pub sse: f64,
    /// `None` with fewer than two clusters.
    pub silhouette: Option<f64>,
    /// `None` with fewer than two clusters, `n <= k`, or zero total dispersion.
    /// Infinite when clusters are perfectly tight but apart.
    pub calinski_harabasz: Option<f64>,
}

/// SSE, mean silhouette and Calinski-Harabasz of a labelling. Unlabelled
/// (noise) points are ignored. Singleton clusters score a silhouette of 0.
pub fn internal_indices(points: &[Point], assignment: &[Option<usize>]) -> Indices {
    debug_assert_eq!(points.len(), assignment.len());
    let n_labels = assignment.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut sums = vec![[0.0f64; 2]; n_labels];
    let mut counts = vec![0usize; n_labels];
    let mut members = Vec::new();
    for (p, l) in points.iter().zip(assignment) {
        if let Some(l) = *l {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
            members.push((*p, l));
        }
    }
    let centroids: Vec<Point> = (0..n_labels)
        .map(|l| {
            if counts[l] == 0 {
                [f64::NAN; 2]
            } else {
                [sums[l][0] / counts[l] as f64, sums[l][1] / counts[l] as f64]
            }
        })
        .collect();
    let sse: f64 = members
        .iter()
        .map(|(p, l)| sq_dist(p, &centroids[*l]))
        .sum();

    let k = counts.iter().filter(|&&c| c > 0).count();
    let n = members.len();
    if k < 2 {
        return Indices {
            sse,
            silhouette: None,
            calinski_harabasz: None,
        };
    }

    let mean = {
        let s = members
            .iter()
            .fold([0.0, 0.0], |acc, (p, _)| [acc[0] + p[0], acc[1] + p[1]]);
        [s[0] / n as f64, s[1] / n as f64]
    };
    let between: f64 = (0..n_labels)
        .filter(|&l| counts[l] > 0)
        .map(|l| counts[l] as f64 * sq_dist(&centroids[l], &mean))
        .sum();
    let calinski_harabasz = if n <= k || (between == 0.0 && sse == 0.0) {
        None
    } else if sse == 0.0 {
        Some(f64::INFINITY)
    } else {
        Some((between / (k - 1) as f64) / (sse / (n - k) as f64))
    };

    let mut total = 0.0;
    let mut per_label = vec![0.0f64; n_labels];
    for (i, (p, l)) in members.iter().enumerate() {
        per_label.iter_mut().for_each(|v| *v = 0.0);
        for (j, (q, m)) in members.iter().enumerate() {
            if i != j {
                per_label[*m] += dist(p, q);
            }
        }
        if counts[*l] == 1 {
            continue;
        }
        let a = per_label[*l] / (counts[*l] - 1) as f64;
        let b = (0..n_labels)
            .filter(|&m| m != *l && counts[m] > 0)
            .map(|m| per_label[m] / counts[m] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }

    Indices {
        sse,
        silhouette: Some(total / n as f64),
        calinski_harabasz,
    }
}
