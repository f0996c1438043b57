use serde::Serialize;

use super::{cmp_points, sq_dist, Distance, Point};
use crate::error::{Error, Result};

/// `1 - IoU` of two sizes placed as concentric boxes.
pub fn one_minus_iou(a: &Point, b: &Point) -> f64 {
    let inter = a[0].min(b[0]) * a[1].min(b[1]);
    let union = a[0] * a[1] + b[0] * b[1] - inter;
    if union <= 0.0 {
        return 0.0;
    }
    1.0 - inter / union
}

fn distance(d: Distance, a: &Point, b: &Point) -> f64 {
    match d {
        Distance::Euclidean => sq_dist(a, b),
        Distance::OneMinusIou => one_minus_iou(a, b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansRun {
    pub centers: Vec<Point>,
    pub assignment: Vec<usize>,
    /// Objective after initialization and after every Lloyd iteration: SSE
    /// for Euclidean distance, summed `1 - IoU` otherwise. Only the SSE trace
    /// is guaranteed non-increasing; the mean update does not minimize
    /// `1 - IoU`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// splitmix64 finalizer over the seed and the point's bit pattern.
fn seeded_rank(seed: u64, p: &Point) -> u64 {
    let mut z =
        seed ^ p[0].to_bits().rotate_left(17) ^ p[1].to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Farthest-point initialization. The first center is the point with the
/// smallest seeded hash; each next center is the point farthest from the
/// chosen ones, ties broken by coordinates. Only point values are consulted,
/// so the result does not depend on input order.
fn init_centers(points: &[Point], k: usize, d: Distance, seed: u64) -> Vec<Point> {
    let first = points
        .iter()
        .min_by(|a, b| {
            seeded_rank(seed, a)
                .cmp(&seeded_rank(seed, b))
                .then(cmp_points(a, b))
        })
        .copied()
        .expect("points non-empty");
    let mut centers = vec![first];
    let mut nearest: Vec<f64> = points.iter().map(|p| distance(d, p, &first)).collect();
    while centers.len() < k {
        let (idx, _) = nearest
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                a.total_cmp(b)
                    .then_with(|| cmp_points(&points[*j], &points[*i]))
            })
            .expect("points non-empty");
        let c = points[idx];
        centers.push(c);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(distance(d, p, &c));
        }
    }
    centers
}

fn assign(points: &[Point], centers: &[Point], d: Distance) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (best, dist) = centers
                .iter()
                .enumerate()
                .map(|(i, c)| (i, distance(d, p, c)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                );
            total += dist;
            best
        })
        .collect();
    (labels, total)
}

fn objective(points: &[Point], centers: &[Point], labels: &[usize], d: Distance) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| distance(d, p, &centers[l]))
        .sum()
}

/// Lloyd's algorithm with mean updates. Empty clusters keep their center.
pub fn kmeans(
    points: &[Point],
    k: usize,
    d: Distance,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansRun> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::domain(format!(
            "k-means needs at least k={k} points, got {}",
            points.len()
        )));
    }
    let mut centers = init_centers(points, k, d, seed);
    let (mut labels, obj) = assign(points, &centers, d);
    let mut trace = vec![obj];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        let (next, _) = assign(points, &centers, d);
        let changed = next != labels;
        labels = next;
        trace.push(objective(points, &centers, &labels, d));
        if !changed {
            break;
        }
    }
    Ok(KMeansRun {
        centers,
        assignment: labels,
        objective_trace: trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn six() -> Vec<Point> {
        vec![
            [1.0, 1.0],
            [10.0, 10.0],
            [1.0, 1.0],
            [10.0, 10.0],
            [1.0, 1.0],
            [10.0, 10.0],
        ]
    }

    /// Minimum SSE over every 2-partition of the points.
    fn best_two_partition_sse(points: &[Point]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut sse = 0.0;
            for side in [true, false] {
                let members: Vec<&Point> = (0..n)
                    .filter(|i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| &points[i])
                    .collect();
                let m = members.len() as f64;
                let c = [
                    members.iter().map(|p| p[0]).sum::<f64>() / m,
                    members.iter().map(|p| p[1]).sum::<f64>() / m,
                ];
                sse += members.iter().map(|p| sq_dist(p, &c)).sum::<f64>();
            }
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn recovers_duplicated_points_exactly() {
        let pts = six();
        assert_eq!(best_two_partition_sse(&pts), 0.0);
        let run = kmeans(&pts, 2, Distance::Euclidean, 1, 100).unwrap();
        let mut centers = run.centers.clone();
        centers.sort_by(cmp_points);
        assert_eq!(centers, vec![[1.0, 1.0], [10.0, 10.0]]);
        assert_eq!(*run.objective_trace.last().unwrap(), 0.0);
    }

    #[test]
    fn lloyd_never_increases_sse() {
        let pts: Vec<Point> = (0..300)
            .map(|i| {
                let t = i as f64;
                [
                    (t * 0.37).sin() * 20.0 + 30.0,
                    (t * 0.91).cos() * 15.0 + 25.0,
                ]
            })
            .collect();
        for k in 2..7 {
            let run = kmeans(&pts, k, Distance::Euclidean, 9, 300).unwrap();
            for w in run.objective_trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12),
                    "k={k}: {:?}",
                    run.objective_trace
                );
            }
        }
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans(&[[1.0, 1.0]], 2, Distance::Euclidean, 0, 10).is_err());
        assert!(kmeans(&six(), 0, Distance::Euclidean, 0, 10).is_err());
    }

    #[test]
    fn iou_distance_properties() {
        let a = [2.0, 4.0];
        let b = [4.0, 2.0];
        assert_eq!(one_minus_iou(&a, &a), 0.0);
        assert_eq!(one_minus_iou(&a, &b), one_minus_iou(&b, &a));
        assert!((one_minus_iou(&a, &b) - (1.0 - 4.0 / 12.0)).abs() < 1e-15);
        assert!(one_minus_iou(&[1.0, 1.0], &[1000.0, 1000.0]) < 1.0);
    }

    #[test]
    fn iou_distance_clusters_by_shape() {
        let pts = vec![[10.0, 40.0], [11.0, 41.0], [40.0, 10.0], [41.0, 11.0]];
        let run = kmeans(&pts, 2, Distance::OneMinusIou, 3, 50).unwrap();
        assert_eq!(run.assignment[0], run.assignment[1]);
        assert_eq!(run.assignment[2], run.assignment[3]);
        assert_ne!(run.assignment[0], run.assignment[2]);
    }
}
