use rayon::prelude::*;
use serde::Serialize;

use super::{
    cluster_points, cmp_points, estimate_bandwidth, estimate_eps, AnnotationSet, ClusterScheme,
    Distance, Method, Point,
};
use crate::error::{Error, Result};

/// Minimum number of points `recommend` accepts.
pub const MIN_POINTS: usize = 10;

/// Candidate grid for `recommend`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub distance: Distance,
    /// Methods to try, by name: any of kmeans, agglomerative, dbscan, meanshift.
    pub methods: Vec<String>,
    /// Larger inputs are subsampled to this many points before clustering.
    pub sample_cap: usize,
    pub dbscan_min_pts: usize,
    pub bandwidth_quantile: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            k_min: 2,
            k_max: 8,
            seed: 42,
            distance: Distance::Euclidean,
            methods: ["kmeans", "agglomerative", "dbscan", "meanshift"]
                .map(String::from)
                .to_vec(),
            sample_cap: 2000,
            dbscan_min_pts: 4,
            bandwidth_quantile: 0.3,
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        if self.k_min < 1 || self.k_max < self.k_min {
            return Err(Error::domain(format!(
                "invalid k range {}..{}",
                self.k_min, self.k_max
            )));
        }
        if self.sample_cap < MIN_POINTS {
            return Err(Error::domain(format!(
                "sample cap must be at least {MIN_POINTS}"
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::domain("no clustering methods selected"));
        }
        for m in &self.methods {
            if !matches!(
                m.as_str(),
                "kmeans" | "agglomerative" | "dbscan" | "meanshift"
            ) {
                return Err(Error::UnknownName {
                    what: "clustering method",
                    name: m.clone(),
                });
            }
        }
        Ok(())
    }

    fn wants(&self, name: &str) -> bool {
        self.methods.iter().any(|m| m == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub rank: usize,
    /// Index into `ClusterReport::candidates`.
    pub candidate: usize,
    pub scheme: ClusterScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub n_points: usize,
    /// Positions (in input order) of the clustered points when the input was
    /// subsampled; empty otherwise. Candidate assignments follow this order.
    pub sample: Vec<usize>,
    pub candidates: Vec<ClusterScheme>,
    /// Candidates that could not be built, or were degenerate.
    pub failures: Vec<String>,
    pub recommendations: Vec<Recommendation>,
}

fn mix(seed: u64, p: &Point, ordinal: u64) -> u64 {
    let mut z = seed ^ p[0].to_bits() ^ p[1].to_bits().rotate_left(29) ^ ordinal.rotate_left(47);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns points in canonical (sorted) order with their input positions,
/// keeping at most `cap` of them. The kept subset depends only on the seed
/// and the point values.
fn canonical_sample(points: &[Point], cap: usize, seed: u64) -> Vec<(usize, Point)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| cmp_points(&points[a], &points[b]).then(a.cmp(&b)));
    if points.len() <= cap {
        return order.into_iter().map(|i| (i, points[i])).collect();
    }
    let mut keyed: Vec<(u64, usize)> = Vec::with_capacity(order.len());
    let mut ordinal = 0u64;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && points[order[pos - 1]] == points[i] {
            ordinal += 1;
        } else {
            ordinal = 0;
        }
        keyed.push((mix(seed, &points[i], ordinal), pos));
    }
    keyed.sort();
    let mut kept: Vec<usize> = keyed[..cap].iter().map(|&(_, pos)| pos).collect();
    kept.sort();
    kept.into_iter()
        .map(|pos| (order[pos], points[order[pos]]))
        .collect()
}

fn candidate_methods(points: &[Point], space: &SearchSpace) -> (Vec<Method>, Vec<String>) {
    let mut methods = Vec::new();
    let mut failures = Vec::new();
    let ks = space.k_min.max(2)..=space.k_max;
    if space.wants("kmeans") {
        methods.extend(ks.clone().map(|k| Method::Kmeans {
            k,
            distance: space.distance,
            seed: space.seed,
        }));
    }
    if space.wants("agglomerative") {
        methods.extend(ks.map(|k| Method::Agglomerative { k }));
    }
    if space.wants("dbscan") {
        match estimate_eps(points, space.dbscan_min_pts) {
            Ok(eps) => methods.push(Method::Dbscan {
                eps,
                min_pts: space.dbscan_min_pts,
            }),
            Err(e) => failures.push(format!("dbscan: {e}")),
        }
    }
    if space.wants("meanshift") {
        match estimate_bandwidth(points, space.bandwidth_quantile) {
            Ok(bandwidth) => methods.push(Method::MeanShift { bandwidth }),
            Err(e) => failures.push(format!("meanshift: {e}")),
        }
    }
    (methods, failures)
}

fn describe(m: &Method) -> String {
    match m {
        Method::Kmeans { k, .. } => format!("kmeans k={k}"),
        Method::Agglomerative { k } => format!("agglomerative k={k}"),
        Method::Dbscan { eps, min_pts } => format!("dbscan eps={eps} min_pts={min_pts}"),
        Method::MeanShift { bandwidth } => format!("meanshift bandwidth={bandwidth}"),
    }
}

/// Clusters the sizes with every method in the search space and returns all
/// candidates plus the two best valid ones, ranked by silhouette, then
/// Calinski-Harabasz, then candidate order.
pub fn recommend(set: &AnnotationSet, space: &SearchSpace) -> Result<ClusterReport> {
    recommend_points(&set.points, space)
}

pub fn recommend_points(points: &[Point], space: &SearchSpace) -> Result<ClusterReport> {
    space.validate()?;
    if points.len() < MIN_POINTS {
        return Err(Error::domain(format!(
            "recommendation needs at least {MIN_POINTS} points, got {}",
            points.len()
        )));
    }
    let sample = canonical_sample(points, space.sample_cap, space.seed);
    let canon: Vec<Point> = sample.iter().map(|&(_, p)| p).collect();
    let (methods, mut failures) = candidate_methods(&canon, space);

    let results: Vec<Result<ClusterScheme>> = methods
        .par_iter()
        .map(|&m| cluster_points(&canon, m))
        .collect();

    // Map labels from canonical order back to input (or sample) order.
    let subsampled = sample.len() < points.len();
    let mut target_pos = vec![0usize; sample.len()];
    if subsampled {
        let mut by_input: Vec<usize> = (0..sample.len()).collect();
        by_input.sort_by_key(|&c| sample[c].0);
        for (out, &c) in by_input.iter().enumerate() {
            target_pos[c] = out;
        }
    } else {
        for (c, &(orig, _)) in sample.iter().enumerate() {
            target_pos[c] = orig;
        }
    }

    let mut candidates = Vec::new();
    for (m, r) in methods.iter().zip(results) {
        match r {
            Ok(mut scheme) => {
                let mut assignment = vec![None; scheme.assignment.len()];
                for (c, l) in scheme.assignment.iter().enumerate() {
                    assignment[target_pos[c]] = *l;
                }
                scheme.assignment = assignment;
                if !scheme.is_valid() {
                    failures.push(format!(
                        "{}: degenerate scheme with {} cluster(s)",
                        describe(m),
                        scheme.k
                    ));
                }
                candidates.push(scheme);
            }
            Err(e) => failures.push(format!("{}: {e}", describe(m))),
        }
    }

    let mut ranked: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].is_valid())
        .collect();
    ranked.sort_by(|&a, &b| {
        let (sa, sb) = (&candidates[a], &candidates[b]);
        let sil = |s: &ClusterScheme| s.silhouette.unwrap_or(f64::NEG_INFINITY);
        let ch = |s: &ClusterScheme| s.calinski_harabasz.unwrap_or(f64::NEG_INFINITY);
        sil(sb)
            .total_cmp(&sil(sa))
            .then(ch(sb).total_cmp(&ch(sa)))
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = Vec::new();
    for i in ranked {
        let c = &candidates[i];
        if picked
            .iter()
            .all(|&j| candidates[j].method.name() != c.method.name() || candidates[j].k != c.k)
        {
            picked.push(i);
        }
        if picked.len() == 2 {
            break;
        }
    }
    if picked.len() < 2 {
        return Err(Error::domain(format!(
            "fewer than two valid multi-cluster schemes; failures: [{}]",
            failures.join("; ")
        )));
    }

    let recommendations = picked
        .iter()
        .enumerate()
        .map(|(rank, &i)| Recommendation {
            rank: rank + 1,
            candidate: i,
            scheme: candidates[i].clone(),
        })
        .collect();
    Ok(ClusterReport {
        n_points: points.len(),
        sample: if subsampled {
            let mut s: Vec<usize> = sample.iter().map(|&(i, _)| i).collect();
            s.sort();
            s
        } else {
            Vec::new()
        },
        candidates,
        failures,
        recommendations,
    })
}
