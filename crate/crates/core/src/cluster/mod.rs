//! Ground-truth box clustering for anchor design.
//!
//! Boxes are reduced to their `(width, height)`; positions play no role.
//! Several clustering methods produce candidate schemes, which are scored by
//! SSE, silhouette and Calinski-Harabasz and ranked into two recommendations.

mod annotations;
mod density;
mod hierarchical;
mod indices;
mod kmeans;
mod recommend;

use serde::{Deserialize, Serialize};

pub use annotations::{load_annotations, AnnotationFormat, AnnotationSet, SourceMeta};
pub use density::{dbscan, estimate_bandwidth, estimate_eps, mean_shift};
pub use hierarchical::average_linkage;
pub use indices::{internal_indices, Indices};
pub use kmeans::{kmeans, one_minus_iou, KMeansRun};
pub use recommend::{
    recommend, recommend_points, ClusterReport, Recommendation, SearchSpace, MIN_POINTS,
};

use crate::error::{Error, Result};

/// A `(width, height)` pair.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 - IoU` of the two sizes placed as concentric boxes.
    OneMinusIou,
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Distance::Euclidean),
            "one_minus_iou" | "iou" => Ok(Distance::OneMinusIou),
            _ => Err(Error::UnknownName {
                what: "distance",
                name: s.to_string(),
            }),
        }
    }
}

/// Clustering method with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Kmeans {
        k: usize,
        distance: Distance,
        seed: u64,
    },
    Agglomerative {
        k: usize,
    },
    Dbscan {
        eps: f64,
        min_pts: usize,
    },
    MeanShift {
        bandwidth: f64,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Kmeans { .. } => "kmeans",
            Method::Agglomerative { .. } => "agglomerative",
            Method::Dbscan { .. } => "dbscan",
            Method::MeanShift { .. } => "meanshift",
        }
    }
}

/// A cluster's central box and the anchor parameters derived from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralBox {
    pub width: f64,
    pub height: f64,
    /// `sqrt(width * height)`
    pub anchor_size: f64,
    /// `width / height`
    pub aspect_ratio: f64,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterScheme {
    pub method: Method,
    pub k: usize,
    pub centers: Vec<CentralBox>,
    pub sse: f64,
    pub silhouette: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub noise: usize,
    /// Cluster label per input point; `None` marks density-method noise.
    pub assignment: Vec<Option<usize>>,
}

impl ClusterScheme {
    /// Builds a scheme from raw labels. Labels are renumbered so clusters are
    /// ordered by their centroid `(width, height)`, which makes the output
    /// independent of input order.
    pub fn from_labels(method: Method, points: &[Point], labels: &[Option<usize>]) -> Self {
        let n_raw = labels.iter().flatten().max().map_or(0, |&m| m + 1);
        let mut sums = vec![[0.0f64; 2]; n_raw];
        let mut counts = vec![0usize; n_raw];
        for (p, l) in points.iter().zip(labels) {
            if let Some(l) = *l {
                sums[l][0] += p[0];
                sums[l][1] += p[1];
                counts[l] += 1;
            }
        }
        let mut present: Vec<usize> = (0..n_raw).filter(|&l| counts[l] > 0).collect();
        let centroid = |l: usize| [sums[l][0] / counts[l] as f64, sums[l][1] / counts[l] as f64];
        present.sort_by(|&a, &b| {
            let (ca, cb) = (centroid(a), centroid(b));
            ca[0].total_cmp(&cb[0]).then(ca[1].total_cmp(&cb[1]))
        });
        let mut remap = vec![None; n_raw];
        for (new, &old) in present.iter().enumerate() {
            remap[old] = Some(new);
        }
        let assignment: Vec<Option<usize>> =
            labels.iter().map(|l| l.and_then(|l| remap[l])).collect();
        let centers = present
            .iter()
            .map(|&l| {
                let [w, h] = centroid(l);
                CentralBox {
                    width: w,
                    height: h,
                    anchor_size: (w * h).sqrt(),
                    aspect_ratio: w / h,
                    members: counts[l],
                }
            })
            .collect::<Vec<_>>();
        let idx = internal_indices(points, &assignment);
        ClusterScheme {
            method,
            k: centers.len(),
            centers,
            sse: idx.sse,
            silhouette: idx.silhouette,
            calinski_harabasz: idx.calinski_harabasz,
            noise: assignment.iter().filter(|l| l.is_none()).count(),
            assignment,
        }
    }

    /// At least two clusters that are actually apart, with every index defined.
    pub fn is_valid(&self) -> bool {
        self.k >= 2
            && self.silhouette.is_some()
            && self.calinski_harabasz.is_some_and(|ch| ch > 0.0)
    }
}

/// Runs one clustering method.
pub fn cluster(points: &AnnotationSet, method: Method) -> Result<ClusterScheme> {
    cluster_points(&points.points, method)
}

pub fn cluster_points(points: &[Point], method: Method) -> Result<ClusterScheme> {
    let labels: Vec<Option<usize>> = match method {
        Method::Kmeans { k, distance, seed } => kmeans(points, k, distance, seed, 300)?
            .assignment
            .into_iter()
            .map(Some)
            .collect(),
        Method::Agglomerative { k } => average_linkage(points, k)?.into_iter().map(Some).collect(),
        Method::Dbscan { eps, min_pts } => dbscan(points, eps, min_pts)?,
        Method::MeanShift { bandwidth } => mean_shift(points, bandwidth)?
            .into_iter()
            .map(Some)
            .collect(),
    };
    Ok(ClusterScheme::from_labels(method, points, &labels))
}

pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Lexicographic order on coordinates.
pub(crate) fn cmp_points(a: &Point, b: &Point) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}
